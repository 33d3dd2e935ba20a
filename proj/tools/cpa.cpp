// Copyright 2026 The CPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cpa: command-line front end for the privacy audit pipeline.
//
//   cpa split  --config c.toml --out run/     writes run/split.json
//   cpa train  --config c.toml --out run/     adds run/models/{target,shadow}
//   cpa attack --config c.toml --out run/     attacks the stored models
//   cpa defend --config c.toml --out run/     attacks, then each defense
//   cpa audit  --config c.toml --out run/     everything above in one go
//   cpa sweep  --config c.toml --out run/ --param lambda --values 0,1,2
//   cpa report --in run/report.json --out plots/ --format json,csv,png

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/harness/config.hpp"
#include "cpa/harness/pipeline.hpp"
#include "cpa/harness/plot.hpp"
#include "cpa/harness/report.hpp"
#include "cpa/harness/sweep.hpp"
#include "cpa/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using cpa::harness::AuditReport;
using cpa::harness::ExperimentConfig;

namespace {

struct Options {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
  std::string format = "json,csv";
  std::string in;
  std::string param;
  std::vector<double> values;
  std::vector<std::string> defenses;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c = o.config.empty()
                           ? ExperimentConfig()
                           : cpa::harness::load_config(o.config,
                                                       cpa::harness::environment_variables());
  if (o.seed) {
    if (*o.seed < 0) throw cpa::InvalidInput("--seed must be non-negative");
    // One integer fans out to the data/model/attack triple.
    const auto s = static_cast<std::uint64_t>(*o.seed);
    c.seeds = {s, s + 1, s + 2};
  }
  if (!o.out.empty()) c.output_dir = o.out;
  c.validate();
  return c;
}

cpa::DatasetBundle load_split(const ExperimentConfig& c) {
  cpa::DatasetBundle bundle = cpa::harness::load_dataset(c);
  const fs::path split = fs::path(c.output_dir) / "split.json";
  if (fs::exists(split)) {
    std::ifstream in(split);
    cpa::apply_split_json(bundle, nlohmann::json::parse(in));
  }
  return bundle;
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw cpa::IoError("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

cpa::harness::PreparedRun load_prepared(const ExperimentConfig& c) {
  const fs::path root(c.output_dir);
  if (!fs::exists(root / "models/target/model.json")) {
    throw cpa::InvalidInput("no trained models under " + root.string() + "; run `cpa train` first");
  }
  cpa::harness::PreparedRun run;
  run.bundle = load_split(c);
  run.target.model = cpa::nn::load_classifier(root / "models/target");
  run.shadow.model = cpa::nn::load_classifier(root / "models/shadow");
  run.target.history = read_json_file(root / "models/target_history.json");
  run.shadow.history = read_json_file(root / "models/shadow_history.json");
  return run;
}

void print_summary(const AuditReport& r) {
  std::cout << r.name << " (" << r.regime << ")  train " << r.undefended.task_train_accuracy
            << "  test " << r.undefended.task_test_accuracy << "  overfit "
            << r.undefended.overfitting_level << "\n";
  for (const auto& [attack, acc] : r.undefended.attacks) {
    std::cout << "  " << attack << " " << acc;
    for (const auto& [defense, m] : r.defenses) {
      auto it = m.attacks.find(attack);
      if (it != m.attacks.end()) std::cout << "  " << defense << " " << it->second;
    }
    std::cout << "\n";
  }
}

void emit(const AuditReport& r, const fs::path& dir, const std::string& format) {
  const auto formats = cpa::harness::parse_formats(format);
  for (const fs::path& p : cpa::harness::emit_report(r, dir, formats)) {
    std::cerr << "wrote " << p.string() << "\n";
  }
  print_summary(r);
}

void cmd_split(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const cpa::harness::ArtifactStore store(c.output_dir);
  const cpa::DatasetBundle bundle = cpa::harness::load_dataset(c);
  store.json("split.json", cpa::split_to_json(bundle));
  for (cpa::Partition p : cpa::kAllPartitions) {
    std::cout << cpa::partition_name(p) << " " << bundle.size(p) << "\n";
  }
}

void cmd_train(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const cpa::harness::ArtifactStore store(c.output_dir);
  std::string stage;
  try {
    cpa::harness::prepare_run(c, store, stage);
  } catch (const std::exception& e) {
    throw cpa::StageError(stage, e.what());
  }
  std::cout << "models written to " << (fs::path(c.output_dir) / "models").string() << "\n";
}

// attack and defend share this: the models come from a previous `train`.
void cmd_assess(const Options& o, bool with_defenses) {
  ExperimentConfig c = resolve_config(o);
  if (!with_defenses) {
    c.defenses.clear();
  } else if (!o.defenses.empty()) {
    c.defenses = o.defenses;
  }
  c.validate();
  std::string stage = "load";
  cpa::harness::PreparedRun run;
  try {
    run = load_prepared(c);
  } catch (const std::exception& e) {
    throw cpa::StageError(stage, e.what());
  }
  const cpa::harness::ArtifactStore store(c.output_dir);
  AuditReport report = cpa::harness::begin_report(c);
  try {
    report = cpa::harness::assess_run(c, run, store, report, stage);
  } catch (const std::exception& e) {
    cpa::harness::abort_run(store, report, stage, e);
  }
  emit(report, c.output_dir, o.format);
}

void cmd_audit(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  emit(cpa::harness::run_audit(c), c.output_dir, o.format);
}

void cmd_sweep(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const auto rows = cpa::harness::sweep(c, o.param, o.values);
  const auto formats = cpa::harness::parse_formats(o.format);
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : rows) {
    table.push_back(row);
    const fs::path dir =
        fs::path(c.output_dir) / (o.param + "=" + cpa::harness::value_label(row.value));
    cpa::harness::emit_report(row.report, dir, formats);
    std::cout << o.param << "=" << row.value;
    for (const auto& [attack, acc] : row.report.undefended.attacks) {
      std::cout << "  " << attack << " " << acc;
    }
    std::cout << "\n";
  }
  cpa::harness::write_json(table, fs::path(c.output_dir) / "sweep.json");
}

void cmd_report(const Options& o) {
  const fs::path in = o.in.empty() ? fs::path(o.out) / "report.json" : fs::path(o.in);
  const AuditReport r = cpa::harness::read_report(in);
  emit(r, o.out.empty() ? in.parent_path() : fs::path(o.out), o.format);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy audits of supervised and contrastive image models"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub, bool needs_config) {
    auto* cfg = sub->add_option("--config", o.config, "JSON or TOML experiment config");
    if (needs_config) cfg->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "base seed; expands to the data/model/attack triple");
    sub->add_option("--out", o.out, "run directory (overrides output_dir)");
    sub->add_option("--format", o.format, "comma-separated subset of json,csv,png");
  };

  auto* split = app.add_subcommand("split", "four-way split of the configured dataset");
  auto* train = app.add_subcommand("train", "train target and shadow models");
  auto* attack = app.add_subcommand("attack", "attack previously trained models");
  auto* defend = app.add_subcommand("defend", "apply defenses to trained models and re-attack");
  auto* audit = app.add_subcommand("audit", "split, train, attack and defend end to end");
  auto* sweep = app.add_subcommand("sweep", "one audit per parameter value");
  auto* report = app.add_subcommand("report", "re-emit a stored report");
  for (CLI::App* sub : {split, train, attack, defend, audit, sweep}) common(sub, true);
  common(report, false);
  defend->add_option("--defense", o.defenses, "defenses to apply (default: from config)")
      ->check(CLI::IsMember(cpa::harness::known_defenses()));
  sweep->add_option("--param", o.param, "sweep parameter")
      ->required()
      ->check(CLI::IsMember(cpa::harness::sweep_parameters()));
  sweep->add_option("--values", o.values, "values to try")->required()->delimiter(',');
  report->add_option("--in", o.in, "report.json to read (default: <out>/report.json)");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "split") cmd_split(o);
    if (command == "train") cmd_train(o);
    if (command == "attack") cmd_assess(o, false);
    if (command == "defend") cmd_assess(o, true);
    if (command == "audit") cmd_audit(o);
    if (command == "sweep") cmd_sweep(o);
    if (command == "report") cmd_report(o);
  } catch (const cpa::StageError& e) {
    std::cerr << "cpa " << command << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cpa " << command << ": [" << command << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}

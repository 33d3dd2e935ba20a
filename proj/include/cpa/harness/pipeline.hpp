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

#ifndef CPA_HARNESS_PIPELINE_HPP_
#define CPA_HARNESS_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/aia/attack.hpp"
#include "cpa/aia/records.hpp"
#include "cpa/defenses/attriguard.hpp"
#include "cpa/defenses/memguard.hpp"
#include "cpa/defenses/olympus.hpp"
#include "cpa/harness/config.hpp"
#include "cpa/harness/report.hpp"
#include "cpa/mia/label_only.hpp"
#include "cpa/mia/records.hpp"
#include "cpa/mia/suite.hpp"
#include "cpa/nn/checkpoint.hpp"
#include "cpa/training/contrastive.hpp"
#include "cpa/training/supervised.hpp"
#include "cpa/training/talos.hpp"

namespace cpa::harness {

using training::SampleRefs;

// Seeds handed to each consumer. Everything is derived from the triple so
// that the seed fields inside sub-configs never leak into a run.
namespace seeds {

inline std::uint64_t target_model(const SeedTriple& s) { return s.model; }
inline std::uint64_t shadow_model(const SeedTriple& s) {
  return derive_seed(s.model, {stream::kShadow});
}
inline std::uint64_t nn_attack(const SeedTriple& s) { return derive_seed(s.attack, {1}); }
inline std::uint64_t attribute(const SeedTriple& s) { return derive_seed(s.attack, {2}); }
inline std::uint64_t label_only(const SeedTriple& s) { return derive_seed(s.attack, {3}); }
inline std::uint64_t balance(const SeedTriple& s) { return derive_seed(s.attack, {4}); }
inline std::uint64_t defense(std::uint64_t model_seed, const std::string& name) {
  const auto& names = known_defenses();
  const auto index = static_cast<std::uint64_t>(
      std::find(names.begin(), names.end(), name) - names.begin());
  return derive_seed(model_seed, {stream::kDefense, index});
}

}  // namespace seeds

struct TrainedModel {
  nn::Classifier model;
  nlohmann::json history = nlohmann::json::object();
};

// Trains one encoder + classification layer under `regime`. Weight init,
// shuffling and augmentation all derive from `model_seed`; the adversary of
// the talos regime draws from its own stream so the encoder init and
// batches match the contrastive regime exactly.
inline TrainedModel train_model(const ExperimentConfig& cfg, const SampleRefs& train,
                                int num_classes, int num_attributes, const std::string& regime,
                                std::uint64_t model_seed) {
  const nn::ArchSpec arch = cfg.arch.resolved();
  Rng init(derive_seed(model_seed, {stream::kInit}));
  TrainedModel out;
  out.model.encoder = nn::build_encoder(arch, init);
  const int d = out.model.encoder.output_dim();
  out.model.head = nn::build_linear_head(d, num_classes, init);

  if (regime == "supervised") {
    training::TrainConfig tc = cfg.supervised;
    tc.seed = derive_seed(model_seed, {stream::kShuffle});
    out.history["supervised"] = training::train_supervised(out.model, train, tc);
    return out;
  }

  nn::ProjectionHead projection = nn::build_projection(arch.projection_dims, init);
  training::ContrastiveConfig cc = cfg.contrastive;
  cc.augmentation.output_size = arch.image_size;
  training::TrainConfig pre = cfg.pretrain;
  pre.seed = derive_seed(model_seed, {stream::kAugment});
  training::TrainConfig head = cfg.head;
  head.seed = derive_seed(model_seed, {stream::kHead});
  if (regime == "contrastive") {
    out.history["pretrain"] =
        training::pretrain_encoder(out.model.encoder, projection, train, pre, cc);
  } else if (regime == "talos") {
    Rng adv_init(derive_seed(model_seed, {stream::kAdversary, stream::kInit}));
    training::AdversarialClassifier adversary =
        training::build_adversary(d, num_attributes, cfg.talos, adv_init);
    // Odd epochs only train the adversary: twice the epochs gives the
    // encoder as many updates as plain pretraining.
    pre.epochs *= 2;
    out.history["talos"] = training::train_talos({out.model.encoder, projection, adversary},
                                                 train, pre, cc, cfg.talos);
  } else {
    throw InvalidInput("unknown regime: " + regime);
  }
  out.model.encoder.freeze();
  out.history["linear_head"] =
      training::finetune_linear_head(out.model.encoder, out.model.head, train, head);
  out.model.trained = true;
  return out;
}

// What the adversary observes for one (possibly defended) deployment.
struct AttackSurface {
  std::vector<mia::PosteriorRecord> target;
  std::vector<mia::PosteriorRecord> shadow;
  std::optional<aia::AttrDataset> attr;
  // Label oracles for the label-only attack; null skips it.
  nn::Classifier* target_model = nullptr;
  nn::Classifier* shadow_model = nullptr;
};

inline bool wants(const ExperimentConfig& cfg, const std::string& attack) {
  return std::find(cfg.attacks.begin(), cfg.attacks.end(), attack) != cfg.attacks.end();
}

inline double record_loss(const mia::PosteriorRecord& r) {
  return -std::log(std::max(r.p_true(), kLogClamp));
}

namespace detail {

inline SampleRefs pick(SampleRefs refs, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(refs);
  refs.resize(std::min(n, refs.size()));
  return refs;
}

inline std::vector<double> distances_of(nn::Classifier& model, const SampleRefs& refs,
                                        const mia::LabelOnlyConfig& cfg) {
  std::vector<double> out;
  for (const auto& d : mia::label_only_distances(mia::label_oracle(model), to_batch(refs),
                                                 training::task_labels(refs), cfg)) {
    out.push_back(d.distance);
  }
  return out;
}

inline double label_only_accuracy(const ExperimentConfig& cfg, const DatasetBundle& bundle,
                                  nn::Classifier& target, nn::Classifier& shadow) {
  const std::size_t n =
      std::min({cfg.label_only_records, bundle.size(Partition::kTargetTrain),
                bundle.size(Partition::kTargetTest), bundle.size(Partition::kShadowTrain),
                bundle.size(Partition::kShadowTest)});
  require(n >= 1, "label-only: empty partitions");
  const std::uint64_t seed = seeds::label_only(cfg.seeds);
  mia::LabelOnlyConfig lo = cfg.label_only;
  auto side = [&](nn::Classifier& model, Partition in, Partition out, std::uint64_t tag,
                  std::vector<double>& distances, std::vector<bool>& members) {
    const SampleRefs a = pick(bundle.partition(in), n, derive_seed(seed, {stream::kSubsample, tag}));
    const SampleRefs b =
        pick(bundle.partition(out), n, derive_seed(seed, {stream::kSubsample, tag + 1}));
    lo.seed = derive_seed(seed, {tag});
    distances = distances_of(model, a, lo);
    lo.seed = derive_seed(seed, {tag + 1});
    for (double v : distances_of(model, b, lo)) distances.push_back(v);
    members.assign(a.size(), true);
    members.resize(a.size() + b.size(), false);
  };
  std::vector<double> shadow_d, target_d;
  std::vector<bool> shadow_m, target_m;
  side(shadow, Partition::kShadowTrain, Partition::kShadowTest, 10, shadow_d, shadow_m);
  side(target, Partition::kTargetTrain, Partition::kTargetTest, 20, target_d, target_m);
  const mia::ThresholdFit fit = mia::calibrate_label_only(shadow_d, shadow_m);
  return mia::evaluate_attack(mia::label_only_attack(target_d, fit.threshold), target_m);
}

}  // namespace detail

// Task metrics, membership attacks and the attribute attack on one surface.
inline ModelResult evaluate_surface(const AttackSurface& s, const ExperimentConfig& cfg,
                                    const DatasetBundle& bundle) {
  ModelResult r;
  std::size_t in = 0, out = 0, in_correct = 0, out_correct = 0;
  std::vector<double> member_losses, nonmember_losses;
  for (const auto& rec : s.target) {
    const bool correct = rec.predicted_label == rec.true_label;
    if (rec.is_member) {
      ++in;
      in_correct += correct;
      member_losses.push_back(record_loss(rec));
    } else {
      ++out;
      out_correct += correct;
      nonmember_losses.push_back(record_loss(rec));
    }
  }
  require(in > 0 && out > 0, "evaluation needs members and non-members");
  r.task_train_accuracy = static_cast<double>(in_correct) / static_cast<double>(in);
  r.task_test_accuracy = static_cast<double>(out_correct) / static_cast<double>(out);
  r.overfitting_level = training::overfitting_level(r.task_train_accuracy, r.task_test_accuracy);
  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return t / static_cast<double>(v.size());
  };
  r.loss_divergence = std::abs(mean(member_losses) - mean(nonmember_losses));
  r.loss_histogram = make_loss_histogram(member_losses, nonmember_losses);

  std::vector<std::string> posterior_attacks;
  for (const auto& name : mia::posterior_attack_names()) {
    if (wants(cfg, name)) posterior_attacks.push_back(name);
  }
  if (!posterior_attacks.empty()) {
    std::vector<mia::PosteriorRecord> shadow = s.shadow, target = s.target;
    if (cfg.num_posteriors > 0) {
      for (auto& rec : shadow) rec = mia::truncate_posteriors(rec, cfg.num_posteriors);
      for (auto& rec : target) rec = mia::truncate_posteriors(rec, cfg.num_posteriors);
    }
    mia::NnAttackConfig nn_cfg = cfg.nn_attack;
    nn_cfg.seed = seeds::nn_attack(cfg.seeds);
    const mia::MiaResults m = mia::run_posterior_attacks(shadow, target, bundle.num_classes,
                                                         posterior_attacks, nn_cfg,
                                                         seeds::balance(cfg.seeds));
    r.attacks = m.accuracy;
    r.eval_members = m.eval_members;
    r.eval_nonmembers = m.eval_nonmembers;
  }
  if (wants(cfg, "label_only") && s.target_model != nullptr && s.shadow_model != nullptr) {
    r.attacks["label_only"] =
        detail::label_only_accuracy(cfg, bundle, *s.target_model, *s.shadow_model);
  }
  if (wants(cfg, "attribute")) {
    if (!s.attr) throw InvalidInput("attribute attack requested without representations");
    aia::AttrAttackConfig ac = cfg.attribute;
    ac.seed = seeds::attribute(cfg.seeds);
    const aia::AttrResult a = aia::run_attr_attack(*s.attr, ac);
    r.attacks["attribute"] = a.accuracy;
    r.attribute_baseline = a.majority_baseline;
    r.diagnostics["attribute_train_records"] = static_cast<double>(a.train_records);
    r.diagnostics["attribute_test_records"] = static_cast<double>(a.test_records);
  }
  return r;
}

// Writes intermediate artifacts under one directory; an empty path keeps
// everything in memory.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
    if (!root_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(root_, ec);
      if (ec) throw IoError("cannot create " + root_.string() + ": " + ec.message());
    }
  }

  bool enabled() const { return !root_.empty(); }
  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path(const std::filesystem::path& rel) const {
    const std::filesystem::path p = root_ / rel;
    std::filesystem::create_directories(p.parent_path());
    return p;
  }

  void json(const std::filesystem::path& rel, const nlohmann::json& j) const {
    if (enabled()) write_json(j, path(rel));
  }
  void model(const std::filesystem::path& rel, nn::Classifier& m) const {
    if (enabled()) nn::save_classifier(m, path(rel));
  }
  void records(const std::filesystem::path& rel, const std::vector<mia::PosteriorRecord>& r,
               const std::string& defense = "") const {
    if (enabled()) mia::write_records_csv(r, path(rel), defense);
  }
  void representations(const std::filesystem::path& rel,
                       const std::vector<aia::RepresentationRecord>& r,
                       const std::string& defense = "") const {
    if (enabled()) aia::write_representation_csv(r, path(rel), defense);
  }

 private:
  std::filesystem::path root_;
};

// Dataset plus the undefended target and shadow models: everything the
// attack-only sweep parameters can reuse.
struct PreparedRun {
  DatasetBundle bundle;
  TrainedModel target;
  TrainedModel shadow;
};

inline void require_sensitive_labels(const DatasetBundle& bundle) {
  for (Partition p : kAllPartitions) {
    if (!bundle.has_sensitive_labels(p)) {
      throw InvalidInput("configuration needs sensitive labels on every sample");
    }
  }
  if (bundle.num_attributes < 2) {
    throw InvalidInput("configuration needs at least two sensitive attribute values");
  }
}

inline AttackSurface plain_surface(const ExperimentConfig& cfg, const DatasetBundle& bundle,
                                   nn::Classifier& target, nn::Classifier& shadow) {
  AttackSurface s;
  s.target = mia::query_records(target, bundle, Partition::kTargetTrain, Partition::kTargetTest);
  s.shadow = mia::query_records(shadow, bundle, Partition::kShadowTrain, Partition::kShadowTest);
  if (wants(cfg, "attribute") || !cfg.defenses.empty()) {
    if (bundle.has_sensitive_labels(Partition::kTargetTrain) &&
        bundle.has_sensitive_labels(Partition::kTargetTest)) {
      s.attr = aia::build_attr_dataset(target, bundle);
    }
  }
  s.target_model = &target;
  s.shadow_model = &shadow;
  return s;
}

inline void persist_surface(const ArtifactStore& store, const std::string& prefix,
                            const AttackSurface& s, const std::string& defense = "") {
  store.records(prefix + "/target_records.csv", s.target, defense);
  store.records(prefix + "/shadow_records.csv", s.shadow, defense);
  if (s.attr) {
    store.representations(prefix + "/representations_train.csv", s.attr->train, defense);
    store.representations(prefix + "/representations_test.csv", s.attr->test, defense);
  }
}

inline PreparedRun prepare_run(const ExperimentConfig& cfg, const ArtifactStore& store,
                               std::string& stage) {
  PreparedRun run;
  stage = "split";
  run.bundle = load_dataset(cfg);
  if (cfg.uses_sensitive_labels()) require_sensitive_labels(run.bundle);
  store.json("split.json", split_to_json(run.bundle));

  stage = "train_target";
  run.target = train_model(cfg, run.bundle.partition(Partition::kTargetTrain),
                           run.bundle.num_classes, run.bundle.num_attributes, cfg.regime,
                           seeds::target_model(cfg.seeds));
  store.model("models/target", run.target.model);
  store.json("models/target_history.json", run.target.history);

  stage = "train_shadow";
  run.shadow = train_model(cfg, run.bundle.partition(Partition::kShadowTrain),
                           run.bundle.num_classes, run.bundle.num_attributes, cfg.regime,
                           seeds::shadow_model(cfg.seeds));
  store.model("models/shadow", run.shadow.model);
  store.json("models/shadow_history.json", run.shadow.history);
  return run;
}

namespace detail {

inline ModelResult defend_memguard(const ExperimentConfig& cfg, const DatasetBundle& bundle,
                                   const AttackSurface& base, const ArtifactStore& store) {
  defenses::MemGuardConfig mg = cfg.memguard;
  mg.seed = seeds::defense(seeds::target_model(cfg.seeds), "memguard");
  mia::NnAttack surrogate = defenses::train_memguard_surrogate(base.target, mg.seed);
  const std::vector<defenses::DefendedOutput> outs =
      defenses::memguard_defend(base.target, surrogate, mg);
  AttackSurface s = base;
  s.target = defenses::defended_records(base.target, outs);
  persist_surface(store, "defenses/memguard", s, "memguard");

  ModelResult r = evaluate_surface(s, cfg, bundle);
  std::size_t preserved = 0, flagged = 0, closer = 0;
  double l1 = 0.0;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    preserved += s.target[i].predicted_label == base.target[i].predicted_label;
    flagged += outs[i].flagged;
    const double before = outs[i].metadata.at("score_before");
    const double after = outs[i].metadata.at("score_after");
    closer += std::abs(after - 0.5) <= std::abs(before - 0.5);
    l1 = std::max(l1, outs[i].metadata.at("l1"));
  }
  const auto n = static_cast<double>(outs.size());
  r.diagnostics["argmax_preserved"] = static_cast<double>(preserved) / n;
  r.diagnostics["flagged_fraction"] = static_cast<double>(flagged) / n;
  r.diagnostics["score_not_further"] = static_cast<double>(closer) / n;
  r.diagnostics["max_l1"] = l1;
  return r;
}

inline ModelResult defend_attriguard(const ExperimentConfig& cfg, const DatasetBundle& bundle,
                                     const AttackSurface& base, nn::Classifier& target,
                                     const ArtifactStore& store) {
  if (!base.attr) throw InvalidInput("attriguard needs sensitive labels");
  defenses::AttriGuardConfig ag = cfg.attriguard;
  ag.seed = seeds::defense(seeds::target_model(cfg.seeds), "attriguard");
  aia::AttrAttackModel surrogate = defenses::train_attriguard_surrogate(base.attr->train, ag.seed);
  const auto outs_train = defenses::attriguard_defend(base.attr->train, surrogate, ag);
  defenses::AttriGuardConfig ag_test = ag;
  ag_test.seed = derive_seed(ag.seed, {1});
  const auto outs_test = defenses::attriguard_defend(base.attr->test, surrogate, ag_test);

  AttackSurface s = base;
  s.attr = aia::AttrDataset{defenses::defended_representations(base.attr->train, outs_train),
                            defenses::defended_representations(base.attr->test, outs_test)};
  // The served posteriors come from the classification layer applied to the
  // defended representation.
  std::vector<int> labels;
  std::vector<bool> members;
  for (const ImageSample* x : bundle.partition(Partition::kTargetTrain)) {
    labels.push_back(x->task_label);
    members.push_back(true);
  }
  for (const ImageSample* x : bundle.partition(Partition::kTargetTest)) {
    labels.push_back(x->task_label);
    members.push_back(false);
  }
  Matrix h(static_cast<Eigen::Index>(labels.size()), target.head.input_dim());
  h << aia::representation_matrix(s.attr->train), aia::representation_matrix(s.attr->test);
  s.target = mia::records_from_posteriors(nn::softmax(target.head.forward(h)), labels, members);
  // Label-only queries arbitrary inputs, each of which would need its own
  // defended representation; it is not mounted against this defense.
  s.target_model = nullptr;
  persist_surface(store, "defenses/attriguard", s, "attriguard");

  ModelResult r = evaluate_surface(s, cfg, bundle);
  std::size_t within = 0, flagged = 0, total = 0;
  double worst = 0.0;
  auto tally = [&](const std::vector<aia::RepresentationRecord>& orig,
                   const std::vector<defenses::DefendedOutput>& outs) {
    for (std::size_t i = 0; i < outs.size(); ++i) {
      double linf = 0.0;
      for (std::size_t c = 0; c < outs[i].payload.size(); ++c) {
        linf = std::max(linf, std::abs(outs[i].payload[c] - orig[i].representation[c]));
      }
      worst = std::max(worst, linf);
      within += linf <= ag.bound;
      flagged += outs[i].flagged;
      ++total;
    }
  };
  tally(base.attr->train, outs_train);
  tally(base.attr->test, outs_test);
  r.diagnostics["within_bound"] = static_cast<double>(within) / static_cast<double>(total);
  r.diagnostics["max_linf"] = worst;
  r.diagnostics["flagged_fraction"] = static_cast<double>(flagged) / static_cast<double>(total);
  return r;
}

}  // namespace detail

inline ModelResult run_defense(const std::string& name, const ExperimentConfig& cfg,
                               PreparedRun& run, const AttackSurface& base,
                               const ArtifactStore& store) {
  const DatasetBundle& bundle = run.bundle;
  const std::string dir = "defenses/" + name;
  if (name == "memguard") return detail::defend_memguard(cfg, bundle, base, store);
  if (name == "attriguard") {
    return detail::defend_attriguard(cfg, bundle, base, run.target.model, store);
  }
  nn::Classifier target, shadow;
  if (name == "talos") {
    TrainedModel t = train_model(cfg, bundle.partition(Partition::kTargetTrain), bundle.num_classes,
                                 bundle.num_attributes, "talos", seeds::target_model(cfg.seeds));
    TrainedModel sh = train_model(cfg, bundle.partition(Partition::kShadowTrain),
                                  bundle.num_classes, bundle.num_attributes, "talos",
                                  seeds::shadow_model(cfg.seeds));
    store.json(dir + "/target_history.json", t.history);
    store.json(dir + "/shadow_history.json", sh.history);
    target = std::move(t.model);
    shadow = std::move(sh.model);
  } else if (name == "olympus") {
    defenses::OlympusConfig oc = cfg.olympus;
    oc.seed = seeds::defense(seeds::target_model(cfg.seeds), name);
    defenses::OlympusResult t =
        defenses::olympus_finetune(run.target.model, bundle.partition(Partition::kTargetTrain), oc);
    oc.seed = seeds::defense(seeds::shadow_model(cfg.seeds), name);
    defenses::OlympusResult sh =
        defenses::olympus_finetune(run.shadow.model, bundle.partition(Partition::kShadowTrain), oc);
    store.json(dir + "/target_history.json", t.history);
    store.json(dir + "/shadow_history.json", sh.history);
    target = std::move(t.model);
    shadow = std::move(sh.model);
  } else {
    throw InvalidInput("unknown defense: " + name);
  }
  store.model(dir + "/target", target);
  store.model(dir + "/shadow", shadow);
  AttackSurface s = plain_surface(cfg, bundle, target, shadow);
  persist_surface(store, dir, s, name);
  return evaluate_surface(s, cfg, bundle);
}

inline std::map<std::string, double> result_deltas(const ModelResult& defended,
                                                   const ModelResult& base) {
  std::map<std::string, double> d = {
      {"task_train_accuracy", defended.task_train_accuracy - base.task_train_accuracy},
      {"task_test_accuracy", defended.task_test_accuracy - base.task_test_accuracy},
      {"overfitting_level", defended.overfitting_level - base.overfitting_level}};
  for (const auto& [name, acc] : defended.attacks) {
    auto it = base.attacks.find(name);
    if (it != base.attacks.end()) d[name] = acc - it->second;
  }
  return d;
}

// Attacks and defenses against an already prepared run.
inline AuditReport assess_run(const ExperimentConfig& cfg, PreparedRun& run,
                              const ArtifactStore& store, AuditReport report,
                              std::string& stage) {
  stage = "attack";
  const AttackSurface base = plain_surface(cfg, run.bundle, run.target.model, run.shadow.model);
  persist_surface(store, "undefended", base);
  report.undefended = evaluate_surface(base, cfg, run.bundle);
  store.json("undefended/result.json", report.undefended);

  for (const std::string& name : cfg.defenses) {
    stage = "defense:" + name;
    report.defenses[name] = run_defense(name, cfg, run, base, store);
    report.deltas[name] = result_deltas(report.defenses[name], report.undefended);
    store.json("defenses/" + name + "/result.json", report.defenses[name]);
  }

  stage = "report";
  report.provenance.finished_at = utc_timestamp();
  check_integrity(report);
  store.json("report.json", report);
  return report;
}

inline AuditReport begin_report(const ExperimentConfig& cfg) {
  AuditReport report;
  report.name = cfg.name;
  report.regime = cfg.regime;
  report.config = cfg;
  report.provenance.seeds = cfg.seeds;
  report.provenance.config_hash = config_hash(report.config);
  report.provenance.started_at = utc_timestamp();
  return report;
}

// Records the failure next to the artifacts and rethrows it stage-tagged.
[[noreturn]] inline void abort_run(const ArtifactStore& store, AuditReport report,
                                   const std::string& stage, const std::exception& e) {
  report.partial = true;
  report.failed_stage = stage;
  report.error = e.what();
  report.provenance.finished_at = utc_timestamp();
  if (store.enabled()) {
    try {
      write_json(report, store.root() / "report.partial.json");
      std::ofstream(store.root() / "PARTIAL") << stage << "\n";
    } catch (const std::exception&) {
      // The original failure is the one worth reporting.
    }
  }
  throw StageError(stage, e.what());
}

// split -> train target -> train shadow -> attacks -> defenses -> re-attacks.
inline AuditReport run_audit(const ExperimentConfig& cfg) {
  std::string stage = "config";
  AuditReport report;
  try {
    cfg.validate();
    report = begin_report(cfg);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  std::optional<ArtifactStore> store;
  try {
    store.emplace(cfg.output_dir);
    PreparedRun run = prepare_run(cfg, *store, stage);
    return assess_run(cfg, run, *store, report, stage);
  } catch (const std::exception& e) {
    abort_run(store ? *store : ArtifactStore(""), report, stage, e);
  }
}

}  // namespace cpa::harness

#endif  // CPA_HARNESS_PIPELINE_HPP_

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

#ifndef CPA_MIA_LABEL_ONLY_HPP_
#define CPA_MIA_LABEL_ONLY_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/core/types.hpp"
#include "cpa/mia/metrics.hpp"
#include "cpa/nn/models.hpp"

namespace cpa::mia {

// Predicted labels for each row of a batch. This is all the label-only
// adversary gets to see.
using LabelOracle = std::function<std::vector<int>(const Matrix&)>;

inline LabelOracle label_oracle(nn::Classifier& model) {
  return [&model](const Matrix& x) { return model.predict(x); };
}

struct LabelOnlyConfig {
  int num_directions = 32;
  // Ceiling on the searched perturbation norm.
  double max_radius = 8.0;
  // Fixed outward step; the grid does not depend on max_radius, so raising
  // the ceiling never changes a distance found below the old ceiling.
  double march_step = 0.25;
  double tolerance = 1e-3;
  // Boundary-normal refinement rounds and sign probes per round.
  int refine_iterations = 4;
  int refine_probes = 64;
  std::uint64_t seed = 0;

  void validate() const {
    require(num_directions >= 1, "label-only: need at least one direction");
    require(max_radius > 0.0 && march_step > 0.0 && tolerance > 0.0,
            "label-only: radius, step and tolerance must be positive");
    require(refine_iterations >= 0 && refine_probes >= 1,
            "label-only: invalid refinement settings");
  }
};

inline void to_json(nlohmann::json& j, const LabelOnlyConfig& c) {
  j = {{"num_directions", c.num_directions}, {"max_radius", c.max_radius},
       {"march_step", c.march_step},         {"tolerance", c.tolerance},
       {"refine_iterations", c.refine_iterations}, {"refine_probes", c.refine_probes},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LabelOnlyConfig& c) {
  LabelOnlyConfig d;
  c.num_directions = j.value("num_directions", d.num_directions);
  c.max_radius = j.value("max_radius", d.max_radius);
  c.march_step = j.value("march_step", d.march_step);
  c.tolerance = j.value("tolerance", d.tolerance);
  c.refine_iterations = j.value("refine_iterations", d.refine_iterations);
  c.refine_probes = j.value("refine_probes", d.refine_probes);
  c.seed = j.value("seed", d.seed);
}

struct BoundaryDistance {
  double distance = 0.0;
  // True when no direction flipped the label within max_radius.
  bool at_ceiling = false;
  std::size_t queries = 0;
};

namespace detail {

inline RowVector random_unit(Eigen::Index dim, Rng& rng) {
  RowVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
  const double n = v.norm();
  return n > 0.0 ? RowVector(v / n) : random_unit(dim, rng);
}

class DirectionSearch {
 public:
  DirectionSearch(const LabelOracle& oracle, const RowVector& x, int label,
                  const LabelOnlyConfig& cfg)
      : oracle_(oracle), x_(x), label_(label), cfg_(cfg) {}

  // Smallest radius along each unit direction where the label changes,
  // +inf when none within the ceiling. All directions share one batch per
  // stage.
  std::vector<double> radii(const std::vector<RowVector>& dirs) {
    const int steps = static_cast<int>(std::ceil(cfg_.max_radius / cfg_.march_step - 1e-12));
    std::vector<double> hi(dirs.size(), std::numeric_limits<double>::infinity());
    std::vector<double> lo(dirs.size(), 0.0);
    Matrix grid(static_cast<Eigen::Index>(dirs.size()) * steps, x_.cols());
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      for (int s = 0; s < steps; ++s) {
        grid.row(static_cast<Eigen::Index>(d) * steps + s) = x_ + radius_at(s) * dirs[d];
      }
    }
    const std::vector<int> labels = query(grid);
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      for (int s = 0; s < steps; ++s) {
        if (labels[d * steps + s] != label_) {
          hi[d] = radius_at(s);
          lo[d] = s == 0 ? 0.0 : radius_at(s - 1);
          break;
        }
      }
    }
    // Bisect every bracketed direction together.
    while (true) {
      std::vector<std::size_t> open;
      for (std::size_t d = 0; d < dirs.size(); ++d) {
        if (std::isfinite(hi[d]) && hi[d] - lo[d] > cfg_.tolerance) open.push_back(d);
      }
      if (open.empty()) break;
      Matrix mid(static_cast<Eigen::Index>(open.size()), x_.cols());
      for (std::size_t k = 0; k < open.size(); ++k) {
        const std::size_t d = open[k];
        mid.row(static_cast<Eigen::Index>(k)) = x_ + 0.5 * (lo[d] + hi[d]) * dirs[d];
      }
      const std::vector<int> out = query(mid);
      for (std::size_t k = 0; k < open.size(); ++k) {
        const std::size_t d = open[k];
        const double m = 0.5 * (lo[d] + hi[d]);
        (out[k] != label_ ? hi[d] : lo[d]) = m;
      }
    }
    return hi;
  }

  bool flipped(const RowVector& point) {
    Matrix m = point;
    return query(m).front() != label_;
  }

  std::vector<int> query(const Matrix& batch) {
    queries_ += static_cast<std::size_t>(batch.rows());
    std::vector<int> out = oracle_(batch);
    if (out.size() != static_cast<std::size_t>(batch.rows())) {
      throw ContractViolation("label oracle returned the wrong number of labels");
    }
    return out;
  }

  std::size_t queries() const { return queries_; }

 private:
  double radius_at(int s) const {
    return std::min(cfg_.max_radius, cfg_.march_step * (s + 1));
  }

  const LabelOracle& oracle_;
  RowVector x_;
  int label_;
  const LabelOnlyConfig& cfg_;
  std::size_t queries_ = 0;
};

}  // namespace detail

// Input-space distance from x to the nearest label change found by the
// search. Random unit directions are bracketed and bisected; the best one
// is then refined by estimating the boundary normal from sign probes at
// the boundary point and searching along it. Already misclassified inputs
// are at distance 0.
inline BoundaryDistance label_only_distance(const LabelOracle& oracle, const RowVector& x,
                                            int true_label, const LabelOnlyConfig& cfg) {
  cfg.validate();
  detail::DirectionSearch search(oracle, x, true_label, cfg);
  BoundaryDistance result;
  if (search.flipped(x)) {
    result.queries = search.queries();
    return result;
  }
  Rng rng(derive_seed(cfg.seed, {stream::kAttack}));
  std::vector<RowVector> dirs;
  for (int d = 0; d < cfg.num_directions; ++d) dirs.push_back(detail::random_unit(x.cols(), rng));
  const std::vector<double> radii = search.radii(dirs);
  std::size_t best_dir = 0;
  for (std::size_t d = 1; d < radii.size(); ++d) {
    if (radii[d] < radii[best_dir]) best_dir = d;
  }
  double best = radii[best_dir];
  RowVector direction = dirs[best_dir];

  if (std::isfinite(best)) {
    // Sign estimates are averaged across rounds (baseline-corrected as in
    // HopSkipJump), so a locally flat boundary is estimated ever better.
    RowVector normal_sum = RowVector::Zero(x.cols());
    for (int it = 0; it < cfg.refine_iterations; ++it) {
      const RowVector boundary = x + best * direction;
      const double delta = std::max(cfg.tolerance * 4.0, 0.05 * best);
      Matrix probes(cfg.refine_probes, x.cols());
      std::vector<RowVector> offsets;
      for (int p = 0; p < cfg.refine_probes; ++p) {
        offsets.push_back(detail::random_unit(x.cols(), rng));
        probes.row(p) = boundary + delta * offsets.back();
      }
      const std::vector<int> labels = search.query(probes);
      double mean_sign = 0.0;
      for (int label : labels) mean_sign += label != true_label ? 1.0 : -1.0;
      mean_sign /= cfg.refine_probes;
      RowVector normal = RowVector::Zero(x.cols());
      for (int p = 0; p < cfg.refine_probes; ++p) {
        const double sign = labels[static_cast<std::size_t>(p)] != true_label ? 1.0 : -1.0;
        normal += (sign - mean_sign) * offsets[static_cast<std::size_t>(p)];
      }
      if (normal.norm() == 0.0) continue;
      normal_sum += normal / normal.norm();
      if (normal_sum.norm() == 0.0) continue;
      const RowVector candidate = normal_sum / normal_sum.norm();
      const double r = search.radii({candidate}).front();
      if (r < best) {
        best = r;
        direction = candidate;
      }
    }
  }
  result.queries = search.queries();
  if (!std::isfinite(best)) {
    result.distance = cfg.max_radius;
    result.at_ceiling = true;
  } else {
    result.distance = best;
  }
  return result;
}

inline std::vector<BoundaryDistance> label_only_distances(const LabelOracle& oracle,
                                                          const Matrix& x,
                                                          const std::vector<int>& labels,
                                                          const LabelOnlyConfig& cfg) {
  require(static_cast<std::size_t>(x.rows()) == labels.size(),
          "label-only: one label per input row");
  std::vector<BoundaryDistance> out;
  out.reserve(labels.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    LabelOnlyConfig per = cfg;
    per.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(r)});
    out.push_back(label_only_distance(oracle, x.row(r), labels[static_cast<std::size_t>(r)], per));
  }
  return out;
}

// Members sit further from the boundary: member iff distance >= threshold.
inline std::vector<bool> label_only_attack(const std::vector<double>& distances,
                                           double threshold) {
  std::vector<bool> out;
  out.reserve(distances.size());
  for (double d : distances) out.push_back(d >= threshold);
  return out;
}

inline ThresholdFit calibrate_label_only(const std::vector<double>& shadow_distances,
                                         const std::vector<bool>& shadow_members) {
  return calibrate_threshold(shadow_distances, shadow_members, true);
}

}  // namespace cpa::mia

#endif  // CPA_MIA_LABEL_ONLY_HPP_

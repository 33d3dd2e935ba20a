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

#ifndef CPA_NN_OPTIM_HPP_
#define CPA_NN_OPTIM_HPP_

#include <cmath>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/nn/layers.hpp"

namespace cpa::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed parameter set. Parameter pointers must outlive it.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {})
      : params_(std::move(params)), opt_(options) {
    require(opt_.learning_rate > 0.0, "Adam: learning rate must be positive");
    for (Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_);
    const double c2 = 1.0 - std::pow(opt_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * p.grad;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= opt_.learning_rate * (m_[i].array() / c1) /
                         ((v_[i].array() / c2).sqrt() + opt_.epsilon);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, double learning_rate)
      : params_(std::move(params)), lr_(learning_rate) {
    require(lr_ > 0.0, "Sgd: learning rate must be positive");
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    for (Parameter* p : params_) p->value -= lr_ * p->grad;
  }

 private:
  std::vector<Parameter*> params_;
  double lr_;
};

}  // namespace cpa::nn

#endif  // CPA_NN_OPTIM_HPP_

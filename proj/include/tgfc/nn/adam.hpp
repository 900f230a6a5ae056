#pragma once

#include <cmath>
#include <vector>

#include "tgfc/nn/layers.hpp"

namespace tgfc::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(ParamList<Scalar> params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt) {
    for (auto* p : params_) {
      m_.push_back(MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Applies one update from the accumulated gradients, scaled by `grad_scale`, then clears them.
  void step(Scalar grad_scale = Scalar(1)) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(opt_.beta1), b2 = static_cast<Scalar>(opt_.beta2);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      const MatrixX<Scalar> g = p.grad * grad_scale;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      const auto step = static_cast<Scalar>(opt_.lr / c1);
      p.value.array() -= step * m_[i].array() /
                         ((v_[i].array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(opt_.eps));
      p.zero_grad();
    }
  }

  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  ParamList<Scalar> params_;
  AdamOptions opt_;
  std::vector<MatrixX<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace tgfc::nn

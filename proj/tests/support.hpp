#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "tgfc/backbone.hpp"
#include "tgfc/dataset.hpp"
#include "tgfc/tensor.hpp"
#include "tgfc/training.hpp"

namespace tgfc::testing {

inline FeatureTensor random_tensor(Index c, Index h, Index w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  FeatureTensor t(c, h, w);
  for (Index i = 0; i < t.data().size(); ++i) t.data().data()[i] = u(rng);
  return t;
}

inline ChannelMask random_mask(Index c, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  ChannelMask m(c);
  for (Index i = 0; i < c; ++i) m.set(i, b(rng));
  return m;
}

/// Relative error with an absolute floor so near-zero gradients do not blow up.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-5, std::max(std::abs(a), std::abs(b))); }

/// Central difference of f at x[i].
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double keep = x;
  x = keep + h;
  const double fp = f();
  x = keep - h;
  const double fm = f();
  x = keep;
  return (fp - fm) / (2 * h);
}

/// Toy backbone trained once per process on a small toy set.
struct ToyWorld {
  Dataset train, val;
  SplitBackbone backbone;
};

inline ToyWorld& toy_world() {
  static ToyWorld w = [] {
    Dataset all = make_toy_dataset(700, 32, 11);
    BackboneConfig bc;
    auto bb = SplitBackbone::build(bc);
    Dataset tr = all.subset(0, 500), va = all.subset(500, 700);
    BackboneTrainOptions o;
    o.epochs = 5;
    train_backbone(bb, tr, va, o);
    return ToyWorld{tr, va, std::move(bb)};
  }();
  return w;
}

}  // namespace tgfc::testing

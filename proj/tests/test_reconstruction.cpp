#include <doctest.h>

#include "support.hpp"
#include "tgfc/feature_reconstruction.hpp"

using namespace tgfc;
using tgfc::testing::central_diff;
using tgfc::testing::random_mask;
using tgfc::testing::random_tensor;
using tgfc::testing::rel_err;

namespace {

FeatureTensor sigmoid_gate(const FeatureTensor& x, FeatureReconstructor<double>& frm) {
  return frm.attention_gate(x);
}

// Randomizes the near-identity initialization so every branch carries signal.
void scramble(FeatureReconstructor<double>& frm, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto* p : frm.params())
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += u(rng);
}

}  // namespace

TEST_CASE("fill_missing picks channels by mask bit") {
  std::mt19937_64 rng(1);
  const FeatureTensor hq = random_tensor(4, 2, 3, rng), lq = random_tensor(4, 2, 3, rng);
  const FeatureTensor fm = apply_mask(hq, ChannelMask::from_string("1010"));
  const FeatureTensor out = fill_missing(fm, lq, ChannelMask::from_string("1010"));
  CHECK(out.data().row(0) == hq.data().row(0));
  CHECK(out.data().row(1) == lq.data().row(1));
  CHECK(out.data().row(2) == hq.data().row(2));
  CHECK(out.data().row(3) == lq.data().row(3));
  CHECK(fill_missing(fm, lq, ChannelMask(4, true)) == fm);
  CHECK(fill_missing(fm, lq, ChannelMask(4, false)) == lq);
}

TEST_CASE("fill_missing partition and self-fill identity") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Index C = 1 + static_cast<Index>(rng() % 40);
    const FeatureTensor f = random_tensor(C, 3, 3, rng), lq = random_tensor(C, 3, 3, rng);
    const ChannelMask m = random_mask(C, rng);
    const FeatureTensor out = fill_missing(apply_mask(f, m), lq, m);
    for (Index c = 0; c < C; ++c) CHECK(out.data().row(c) == (m[c] ? f : lq).data().row(c));
    CHECK(fill_missing(apply_mask(f, m), f, m) == f);
  }
  CHECK_THROWS_AS(fill_missing(FeatureTensor(2, 2, 2), FeatureTensor(2, 3, 2), ChannelMask(2)), DimensionError);
}

TEST_CASE("SFT with forced gamma and beta") {
  std::mt19937_64 rng(3);
  FeatureReconstructor<double> frm(6, rng);
  const FeatureTensor x = random_tensor(6, 4, 4, rng), lq = random_tensor(6, 4, 4, rng);
  CHECK(frm.sft_fuse(x, lq) == x);  // initial condition net: γ=1, β=0
  frm.sft_output().bias().value.setZero();
  CHECK(frm.sft_fuse(x, lq) == FeatureTensor(6, 4, 4));
}

TEST_CASE("SFT equals gamma*x + beta elementwise") {
  std::mt19937_64 rng(4);
  for (bool literal : {false, true}) {
    FeatureReconstructor<double> frm(5, rng, FrmOptions{.sft_modulate_lq = literal});
    scramble(frm, rng);
    const FeatureTensor x = random_tensor(5, 3, 4, rng), lq = random_tensor(5, 3, 4, rng);
    const auto [gamma, beta] = frm.sft_params(lq);
    const FeatureTensor& mod = literal ? lq : x;
    const FeatureTensor out = frm.sft_fuse(x, lq);
    for (Index c = 0; c < 5; ++c)
      for (Index y = 0; y < 3; ++y)
        for (Index z = 0; z < 4; ++z) CHECK(out(c, y, z) == doctest::Approx(gamma[c] * mod(c, y, z) + beta[c]).epsilon(1e-15));
  }
}

TEST_CASE("enhance with zero residual and identity post conv is the attention-gated input") {
  std::mt19937_64 rng(5);
  FeatureReconstructor<double> frm(8, rng);
  const FeatureTensor x = random_tensor(8, 4, 4, rng, 0.0, 2.0);
  const FeatureTensor gate = sigmoid_gate(x, frm);
  const FeatureTensor out = frm.enhance(x);
  for (Index c = 0; c < 8; ++c) CHECK((out.data().row(c) - x.data().row(c) * gate.data()(c, 0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention gate forced to one leaves the pre-attention tensor") {
  std::mt19937_64 rng(6);
  FeatureReconstructor<double> frm(8, rng);
  frm.attention_output().bias().value.setConstant(60.0);
  const FeatureTensor x = random_tensor(8, 4, 4, rng, 0.0, 2.0);
  CHECK(frm.enhance(x) == x);
}

TEST_CASE("identity-configured reconstruction with a full mask returns f_m") {
  std::mt19937_64 rng(7);
  FeatureReconstructor<double> frm(8, rng);
  frm.attention_output().bias().value.setConstant(60.0);
  const FeatureTensor fm = random_tensor(8, 4, 4, rng, 0.0, 3.0), lq = random_tensor(8, 4, 4, rng, 0.0, 3.0);
  const FeatureTensor out = frm.reconstruct(fm, lq, ChannelMask(8, true));
  CHECK((out.data() - fm.data()).squaredNorm() / static_cast<double>(fm.size()) < 1e-10);
}

TEST_CASE("an empty mask reconstructs from texture features alone") {
  std::mt19937_64 rng(8);
  FeatureReconstructor<double> frm(4, rng);
  scramble(frm, rng);
  const FeatureTensor fm = random_tensor(4, 3, 3, rng), lq = random_tensor(4, 3, 3, rng);
  const FeatureTensor out = frm.reconstruct(fm, lq, ChannelMask(4, false));
  CHECK(out == frm.enhance(frm.sft_fuse(lq, lq)));
}

TEST_CASE("enhance preserves shape and stays finite") {
  std::mt19937_64 rng(9);
  for (Index C : {1, 3, 16}) {
    FeatureReconstructor<double> frm(C, rng);
    scramble(frm, rng);
    for (Index hw : {1, 2, 5}) {
      const FeatureTensor out = frm.enhance(random_tensor(C, hw, hw + 1, rng));
      CHECK(out.shape_string() == FeatureTensor(C, hw, hw + 1).shape_string());
      CHECK(out.all_finite());
    }
  }
  FeatureReconstructor<double> frm(4, rng);
  CHECK_THROWS_AS(frm.enhance(FeatureTensor(5, 2, 2)), DimensionError);
}

TEST_CASE("forward matches the inference path") {
  std::mt19937_64 rng(10);
  FeatureReconstructor<double> frm(6, rng);
  scramble(frm, rng);
  const FeatureTensor x = random_tensor(6, 3, 3, rng), lq = random_tensor(6, 3, 3, rng);
  CHECK((frm.forward(x, lq).data() - frm.enhance(frm.sft_fuse(x, lq)).data()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradients reach both the kept path and the fill path") {
  for (bool literal : {false, true}) {
    std::mt19937_64 rng(11);
    FeatureReconstructor<double> frm(4, rng, FrmOptions{.sft_modulate_lq = literal});
    scramble(frm, rng);
    FeatureTensor x = random_tensor(4, 3, 3, rng), lq = random_tensor(4, 3, 3, rng);
    const FeatureTensor w = random_tensor(4, 3, 3, rng);
    auto loss = [&] { return frm.enhance(frm.sft_fuse(x, lq)).data().cwiseProduct(w.data()).sum(); };
    frm.forward(x, lq);
    const auto [dx, dlq] = frm.backward(w);
    for (Index i = 0; i < x.size(); ++i) {
      CHECK(rel_err(central_diff(loss, x.data().data()[i]), dx.data().data()[i]) < 1e-4);
      CHECK(rel_err(central_diff(loss, lq.data().data()[i]), dlq.data().data()[i]) < 1e-4);
    }
    CHECK(dlq.data().cwiseAbs().maxCoeff() > 0);
    if (!literal) CHECK(dx.data().cwiseAbs().maxCoeff() > 0);
    for (auto* p : frm.params()) {
      for (Index i = 0; i < p->value.size(); i += 3) CHECK(rel_err(central_diff(loss, p->value.data()[i]), p->grad.data()[i]) < 1e-4);
    }
  }
}

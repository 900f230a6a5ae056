#include <doctest.h>

#include "support.hpp"
#include "tgfc/channel_selection.hpp"

using namespace tgfc;
using tgfc::testing::central_diff;
using tgfc::testing::random_tensor;
using tgfc::testing::rel_err;

namespace {

ImportanceLogits<double> logits_of(std::initializer_list<double> s, std::initializer_list<double> r) {
  ImportanceLogits<double> l;
  l.select = Eigen::Map<const Eigen::VectorXd>(s.begin(), static_cast<Index>(s.size()));
  l.reject = Eigen::Map<const Eigen::VectorXd>(r.begin(), static_cast<Index>(r.size()));
  return l;
}

}  // namespace

TEST_CASE("a +20 margin at tau 0.1 is kept in at least 999 of 1000 draws") {
  const auto l = logits_of({20.0}, {0.0});
  int kept = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) kept += gumbel_sample(l, GumbelConfig{0.1, true, true, seed}).mask[0];
  CHECK(kept >= 999);
}

TEST_CASE("symmetric logits keep half the channels") {
  ImportanceLogits<double> l{Eigen::VectorXd::Zero(10000), Eigen::VectorXd::Zero(10000)};
  const auto s = gumbel_sample(l, GumbelConfig{1.0, true, true, 42});
  CHECK(mask_mean(s.mask) == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(mask_mean(s.mask) - 0.5) <= 0.05);
}

TEST_CASE("fixed seed and logits give the same mask") {
  std::mt19937_64 rng(5);
  ImportanceLogits<double> l{Eigen::VectorXd::Random(64), Eigen::VectorXd::Random(64)};
  const GumbelConfig g{0.7, true, true, 99};
  CHECK(gumbel_sample(l, g).mask == gumbel_sample(l, g).mask);
  CHECK(gumbel_sample(l, g).soft == gumbel_sample(l, g).soft);
}

TEST_CASE("hard forward values are exactly 0 or 1") {
  ImportanceLogits<double> l{Eigen::VectorXd::Random(200), Eigen::VectorXd::Random(200)};
  const auto s = gumbel_sample(l, GumbelConfig{0.5, true, true, 3});
  const Eigen::VectorXd v = s.forward_value(true);
  for (Index i = 0; i < v.size(); ++i) {
    CHECK((v[i] == 0.0 || v[i] == 1.0));
    CHECK(v[i] == (s.mask[i] ? 1.0 : 0.0));
  }
  CHECK(s.forward_value(false) == s.soft);
}

TEST_CASE("non-positive temperature is a configuration error") {
  const auto l = logits_of({1.0}, {0.0});
  CHECK_THROWS_AS(gumbel_sample(l, GumbelConfig{0.0, true, true, 0}), ConfigError);
  CHECK_THROWS_AS(gumbel_sample(l, GumbelConfig{-1.0, true, true, 0}), ConfigError);
}

TEST_CASE("soft selection gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const double tau = 0.5 + 0.25 * static_cast<double>(seed % 4);
    ImportanceLogits<double> l{Eigen::VectorXd::Random(6) * 2, Eigen::VectorXd::Random(6) * 2};
    const Eigen::VectorXd w = Eigen::VectorXd::Random(6);
    const GumbelConfig g{tau, false, true, seed};
    auto loss = [&] { return gumbel_sample(l, g).soft.dot(w); };
    const auto grad = soft_select_backward(gumbel_sample(l, g), w, tau);
    for (Index i = 0; i < 6; ++i) {
      CHECK(rel_err(central_diff(loss, l.select[i]), grad.select[i]) < 1e-4);
      CHECK(rel_err(central_diff(loss, l.reject[i]), grad.reject[i]) < 1e-4);
    }
  }
}

TEST_CASE("select_channels with forced logits") {
  std::mt19937_64 rng(6);
  ChannelSelector<double> csm(4, rng);
  const FeatureTensor f = random_tensor(4, 3, 3, rng);
  csm.conv2_weight().value.setZero();
  csm.conv2_bias().value << 5, -5, 5, -5, 0, 0, 0, 0;
  const auto [m, fm] = select_channels(csm, GumbelConfig{1.0, true, false, 0}, f);
  CHECK(m.to_string() == "1010");
  CHECK(fm == apply_mask(f, ChannelMask::from_string("1010")));

  csm.conv2_bias().value << 50, 50, 50, 50, 0, 0, 0, 0;
  CHECK(select_channels(csm, GumbelConfig{}, f).second == f);
}

TEST_CASE("importance depends only on the pooled vector") {
  std::mt19937_64 rng(7);
  ChannelSelector<double> csm(8, rng);
  FeatureTensor a = random_tensor(8, 4, 4, rng);
  FeatureTensor b = a;
  // Same per-channel mean, different spatial layout.
  for (Index c = 0; c < 8; ++c) b.data().row(c).reverseInPlace();
  const auto la = csm.importance(a), lb = csm.importance(b);
  CHECK((la.select - lb.select).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((la.reject - lb.reject).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(la.select.allFinite());
  CHECK(la.length() == 8);
}

TEST_CASE("all-zero features give the bias path") {
  std::mt19937_64 rng(8);
  ChannelSelector<double> csm(4, rng);
  const auto l = csm.importance(FeatureTensor(4, 2, 2));
  // Zero input: conv1 output is its bias (0); eval batch-norm with unit running var and zero mean
  // leaves 0 up to eps; ReLU keeps 0; conv2 returns its bias.
  CHECK((l.select.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((l.reject.array() + 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(csm.importance(FeatureTensor(5, 2, 2)), DimensionError);
}

TEST_CASE("selector backward matches central differences") {
  std::mt19937_64 rng(9);
  ChannelSelector<double> csm(5, 4, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(10, 3);
  auto loss = [&] {
    ChannelSelector<double> copy = csm;
    return copy.forward_train(x).cwiseProduct(w).sum();
  };
  ChannelSelector<double> work = csm;
  work.forward_train(x);
  const Eigen::MatrixXd dx = work.backward(w);
  for (Index i = 0; i < x.size(); ++i) CHECK(rel_err(central_diff(loss, x.data()[i]), dx.data()[i]) < 1e-4);
  auto ps = csm.params();
  auto wps = work.params();
  for (size_t k = 0; k < ps.size(); ++k) {
    for (Index i = 0; i < ps[k]->value.size(); ++i) {
      CHECK(rel_err(central_diff(loss, ps[k]->value.data()[i]), wps[k]->grad.data()[i]) < 1e-4);
    }
  }
}

TEST_CASE("top-k mask keeps the largest margins") {
  const auto l = logits_of({0.1, 3.0, -2.0, 1.0}, {0.0, 0.0, 0.0, 0.0});
  CHECK(top_k_mask(l, 2).to_string() == "0101");
  CHECK(top_k_mask(l, 0).to_string() == "0000");
  CHECK(top_k_mask(l, 9).to_string() == "1111");
  CHECK(argmax_mask(l).to_string() == "1101");
}

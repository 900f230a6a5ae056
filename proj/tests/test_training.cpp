#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "tgfc/training.hpp"

using namespace tgfc;
using tgfc::testing::random_tensor;
using tgfc::testing::toy_world;

namespace {

struct Prepared {
  std::vector<FeatureSample> train, val;
  Dataset train_images, val_images;
};

const Prepared& prepared() {
  static Prepared p = [] {
    auto& w = toy_world();
    Prepared out;
    out.train_images = w.train.subset(0, 80);
    out.val_images = w.val.subset(0, 40);
    const LossyBackend tex(8);
    out.train = prepare_features(w.backbone, out.train_images, tex, 2);
    out.val = prepare_features(w.backbone, out.val_images, tex, 2);
    return out;
  }();
  return p;
}

TrainConfig quick(std::uint64_t seed = 1) {
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 2;
  c.batch = 16;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("cross-entropy oracle") {
  Eigen::VectorXd z(3);
  z << 1, 2, 3;
  const auto ce = cross_entropy(z, 0);
  CHECK(ce.loss == doctest::Approx(2.40760596444438).epsilon(1e-13));
  CHECK(ce.grad.sum() == doctest::Approx(0.0).scale(1.0));
  CHECK(ce.grad[0] == doctest::Approx(0.09003057317038046 - 1.0).epsilon(1e-13));
  Eigen::VectorXd big(2);
  big << 1000, 0;
  CHECK(cross_entropy(big, 0).loss == doctest::Approx(0.0).scale(1.0));
  CHECK(std::isfinite(cross_entropy(big, 1).loss));
}

TEST_CASE("loss arithmetic") {
  CHECK(loss_task(2.0, ChannelMask::from_string("1010"), 3.0) == 3.5);
  CHECK(loss_task(2.0, ChannelMask::from_string("1010"), 0.0) == 2.0);
  CHECK(loss_total(3.5, 0.2, 0.5) == doctest::Approx(3.6).epsilon(1e-15));
  CHECK(loss_total(3.5, 0.2, 0.0) == 3.5);
}

TEST_CASE("feature distortion loss") {
  std::mt19937_64 rng(1);
  const FeatureTensor a = random_tensor(3, 4, 5, rng), b = random_tensor(3, 4, 5, rng);
  CHECK(loss_dist(a, a) == 0.0);
  FeatureTensor shifted = a;
  shifted.data().array() += 1.0;
  CHECK(loss_dist(a, shifted) == doctest::Approx(1.0).epsilon(1e-14));
  double oracle = 0;
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 5; ++x) oracle += (a(c, y, x) - b(c, y, x)) * (a(c, y, x) - b(c, y, x));
  oracle /= 60.0;
  CHECK(loss_dist(a, b) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK_THROWS_AS(loss_dist(a, FeatureTensor(3, 4, 4)), DimensionError);
  const FeatureTensor g = loss_dist_grad(a, b);
  CHECK(g.data().isApprox((b.data() - a.data()) * (2.0 / 60.0), 1e-14));
}

TEST_CASE("total loss decomposes into its terms") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const FeatureTensor a = random_tensor(4, 2, 2, rng), b = random_tensor(4, 2, 2, rng);
    const ChannelMask m = tgfc::testing::random_mask(4, rng);
    const double T = 0.1 * (t + 1), lambda = 0.2 * t, alpha = 0.05 * t;
    const double direct = T + lambda * mask_mean(m) + alpha * (a.data() - b.data()).squaredNorm() / 16.0;
    CHECK(loss_total(loss_task(T, m, lambda), loss_dist(a, b), alpha) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("default hyperparameters") {
  const TrainConfig c;
  CHECK(c.lambda == 3.0);
  CHECK(c.alpha == 0.5);
  CHECK(c.lr == 1e-4);
  CHECK(c.epochs == 300);
  CHECK(c.batch == 32);
}

TEST_CASE("config validation and hashing") {
  TrainConfig c;
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig a, b;
  CHECK(a.hash() == b.hash());
  b.lambda = 3.0000000001;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("ablation variants map to methods 1 to 4") {
  CHECK(ablation_variant(false, false).method() == 1);
  CHECK(ablation_variant(true, false).method() == 2);
  CHECK(ablation_variant(false, true).method() == 3);
  CHECK(ablation_variant(true, true).method() == 4);
  CHECK(ablation_variant(true, true).label() == "4. FCNN");
  CHECK(ablation_variant(false, false).label() == "1. FCNN w/o texture and FRM");
}

TEST_CASE("method 1 is method 2 with zero texture features") {
  std::mt19937_64 rng(3);
  const FcnnModel m1(8, 5, ablation_variant(false, false)), m2(8, 5, ablation_variant(true, false));
  for (int t = 0; t < 20; ++t) {
    const FeatureTensor hq = random_tensor(8, 3, 3, rng), lq = random_tensor(8, 3, 3, rng);
    const ChannelMask m = tgfc::testing::random_mask(8, rng);
    const FeatureTensor fm = apply_mask(hq, m);
    CHECK(m1.reconstruct(fm, lq, m) == m2.reconstruct(fm, FeatureTensor(8, 3, 3), m));
    CHECK(m2.reconstruct(fm, lq, m) == fill_missing(fm, lq, m));
  }
  const auto& p = prepared();
  const auto& bb = toy_world().backbone;
  const FcnnModel w1(32, 5, ablation_variant(false, false)), w2(32, 5, ablation_variant(true, false));
  std::vector<FeatureSample> zeroed = p.val;
  for (auto& s : zeroed) s.f_lq = FeatureTensor(s.f_lq.channels(), s.f_lq.height(), s.f_lq.width());
  CHECK(evaluate_fcnn(w1, bb, p.val, 8).accuracy == evaluate_fcnn(w2, bb, zeroed, 8).accuracy);
}

TEST_CASE("prepared features match the backbone head") {
  const auto& p = prepared();
  const auto& bb = toy_world().backbone;
  REQUIRE(p.train.size() == 80);
  CHECK(p.train[0].f_hq == bb.extract_hq(p.train_images.images[0]));
  CHECK(p.train[0].texture.shape_string() == "3x16x16");
  CHECK(p.train[0].f_lq.same_shape(p.train[0].f_hq));
  CHECK(p.train[3].label == p.train_images.labels[3]);
}

TEST_CASE("FCNN training is seeded, keeps the backbone frozen and reports each epoch") {
  const auto& p = prepared();
  SplitBackbone bb = toy_world().backbone;
  const auto head_sum = nn::checksum(bb.head_params());
  const auto tail_sum = nn::checksum(bb.tail_params());
  auto a = train_fcnn(quick(), bb, p.train, p.val);
  auto b = train_fcnn(quick(), bb, p.train, p.val);
  CHECK(a.report.backbone_checksum_before == a.report.backbone_checksum_after);
  CHECK(nn::checksum(bb.head_params()) == head_sum);
  CHECK(nn::checksum(bb.tail_params()) == tail_sum);
  REQUIRE(a.report.epochs.size() == 2);
  for (size_t e = 0; e < 2; ++e) {
    const auto &ra = a.report.epochs[e], &rb = b.report.epochs[e];
    CHECK(ra.epoch == static_cast<int>(e) + 1);
    CHECK(ra.task_loss == rb.task_loss);
    CHECK(ra.total_loss == rb.total_loss);
    CHECK(ra.density == rb.density);
    CHECK(ra.val_metric == rb.val_metric);
    CHECK(ra.density >= 0.0);
    CHECK(ra.density <= 1.0);
  }
  CHECK(nn::checksum(a.model.trainable()) == nn::checksum(b.model.trainable()));
  auto c = train_fcnn(quick(2), bb, p.train, p.val);
  CHECK(nn::checksum(c.model.trainable()) != nn::checksum(a.model.trainable()));
}

TEST_CASE("FCNN training changes only selector and reconstructor parameters") {
  const auto& p = prepared();
  SplitBackbone bb = toy_world().backbone;
  const FcnnModel init(bb.feature_shape()[0], 1);
  auto r = train_fcnn(quick(), bb, p.train, p.val);
  FcnnModel fresh = init;
  CHECK(nn::checksum(fresh.trainable()) != nn::checksum(r.model.trainable()));
  CHECK(r.report.backbone_checksum_before == nn::checksum(bb.all_params()));
}

TEST_CASE("train reports serialize") {
  const auto& p = prepared();
  SplitBackbone bb = toy_world().backbone;
  auto r = train_fcnn(quick(), bb, p.train, p.val);
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "tgfc_report.csv").string(), txt = (dir / "tgfc_report.txt").string();
  r.report.write_csv(csv);
  r.report.write_summary(txt, "fcnn");
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  std::ifstream s(txt);
  std::stringstream ss;
  ss << s.rdbuf();
  CHECK(ss.str().find("fcnn") != std::string::npos);
  std::filesystem::remove(csv);
  std::filesystem::remove(txt);
}

TEST_CASE("fcnn checkpoints round trip") {
  FcnnModel a(8, 3), b(8, 4);
  const auto path = (std::filesystem::temp_directory_path() / "tgfc_fcnn.tgfw").string();
  a.save(path);
  b.load(path);
  CHECK(nn::checksum(a.state()) == nn::checksum(b.state()));
  std::filesystem::remove(path);
}

TEST_CASE("zero-epoch IRNN run returns the initialization") {
  const auto& p = prepared();
  const auto samples = prepare_irnn_samples(p.val_images, p.val, nullptr, false);
  REQUIRE(samples.size() == p.val.size());
  CHECK(samples[0].features == FeatureTensor(32, 8, 8));
  CHECK(samples[0].target == p.val_images.images[0]);
  IrnnConfig ic;
  ic.depth = 2;
  ic.base_width = 4;
  ic.feature_channels = 32;
  ic.inject_level = 1;
  TrainConfig c = quick();
  c.epochs = 0;
  auto r = train_irnn(c, ic, samples, samples);
  CHECK(r.report.epochs.empty());
  std::mt19937_64 rng(c.seed);
  ImageReconstructor<Real> init(ic, rng);
  CHECK(nn::checksum(r.model.params()) == nn::checksum(init.params()));
}

TEST_CASE("IRNN training lowers validation error") {
  const auto& p = prepared();
  const FcnnModel fcnn(32, 1);
  const auto tr = prepare_irnn_samples(p.train_images, p.train, &fcnn, true);
  const auto va = prepare_irnn_samples(p.val_images, p.val, &fcnn, true);
  CHECK(tr[0].features == fcnn.reconstruct(apply_mask(p.train[0].f_hq, fcnn.mask(p.train[0].f_hq)), p.train[0].f_lq,
                                           fcnn.mask(p.train[0].f_hq)));
  IrnnConfig ic;
  ic.depth = 2;
  ic.base_width = 4;
  ic.feature_channels = 32;
  ic.inject_level = 1;
  TrainConfig c = quick();
  c.epochs = 4;
  c.batch = 8;
  auto r = train_irnn(c, ic, tr, va);
  REQUIRE(r.report.epochs.size() == 4);
  CHECK(r.report.epochs.back().val_metric < r.report.initial_val_metric);
  CHECK(mean_irnn_loss(r.model, va) == doctest::Approx(r.report.epochs.back().val_metric));
}

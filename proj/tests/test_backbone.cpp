#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "support.hpp"
#include "tgfc/backbone.hpp"
#include "tgfc/resample.hpp"

using namespace tgfc;

namespace {

SplitBackbone fresh(const std::string& split = "pool2", Index input = 32) {
  BackboneConfig c;
  c.split_layer = split;
  c.input_size = input;
  return SplitBackbone::build(c);
}

}  // namespace

TEST_CASE("toy backbone split at pool2 yields 32x8x8 features") {
  const auto bb = fresh();
  const auto img = make_toy_dataset(1, 32, 1).images[0];
  const FeatureTensor f = bb.extract_hq(img);
  CHECK(f.shape_string() == "32x8x8");
  CHECK(bb.feature_shape() == std::array<Index, 3>{32, 8, 8});
}

TEST_CASE("split at the first pool gives block-1 width") {
  const auto bb = fresh("pool1");
  CHECK(bb.feature_shape() == std::array<Index, 3>{16, 16, 16});
}

TEST_CASE("vgg16 split at pool4 puts 10 conv and 4 pool layers in the head") {
  const ModelSpec spec = model_spec("vgg16", 224, 1000);
  const auto [head, tail] = spec.split("pool4");
  auto count = [](const std::vector<LayerSpec>& ls, const char* kind) {
    return std::count_if(ls.begin(), ls.end(), [&](const LayerSpec& l) { return l.kind == kind; });
  };
  CHECK(count(head, "conv") == 10);
  CHECK(count(head, "maxpool") == 4);
  CHECK(count(tail, "conv") == 3);
  CHECK(count(tail, "linear") == 3);
}

TEST_CASE("unknown layer or model is a configuration error") {
  CHECK_THROWS_AS(fresh("pool9"), ConfigError);
  BackboneConfig c;
  c.model_id = "resnet";
  CHECK_THROWS_AS(SplitBackbone::build(c), ConfigError);
}

TEST_CASE("split equivalence is bitwise for every split point") {
  const auto data = make_toy_dataset(6, 32, 2);
  for (const char* split : {"normalize", "conv1", "pool1", "relu2", "pool2", "pool3", "fc"}) {
    const auto bb = fresh(split);
    for (const auto& img : data.images) {
      const auto a = bb.infer_tail(bb.extract_hq(img));
      const auto b = bb.full_infer(img);
      REQUIRE(a.logits.size() == b.logits.size());
      CHECK(a.logits == b.logits);
      CHECK(a.predicted_class == b.predicted_class);
    }
  }
}

TEST_CASE("batch of identical images gives identical results") {
  const auto bb = fresh();
  const auto img = make_toy_dataset(1, 32, 3).images[0];
  const auto rs = bb.full_infer(std::vector<SourceImage>{img, img});
  CHECK(rs[0].logits == rs[1].logits);
}

TEST_CASE("extract_lq at scale 1 equals extract_hq") {
  const auto bb = fresh();
  const auto img = make_toy_dataset(1, 32, 4).images[0];
  CHECK(bb.extract_lq(img, 1) == bb.extract_hq(img));
}

TEST_CASE("extract_lq of a half-size texture matches the hq shape") {
  const auto bb = fresh();
  const auto img = make_toy_dataset(1, 32, 5).images[0];
  const auto lq = bb.extract_lq(box_downsample(img, 2), 2);
  CHECK(lq.same_shape(bb.extract_hq(img)));
  CHECK(lq.all_finite());
  CHECK_THROWS_AS(bb.extract_lq(box_downsample(img, 2), 4), DimensionError);
}

TEST_CASE("a 128 texture at scale 2 feeds a 256 backbone") {
  const auto bb = fresh("pool2", 256);
  const SourceImage tex = SourceImage::Constant(3, 128, 128, 0.4);
  CHECK(bb.extract_lq(tex, 2).shape_string() == "32x64x64");
}

TEST_CASE("degraded texture still gives finite features") {
  const auto bb = fresh();
  SourceImage tex = SourceImage::Constant(3, 16, 16, 0.0);
  for (Index i = 0; i < tex.size(); i += 7) tex.data().data()[i] = 1.0;
  CHECK(bb.extract_lq(tex, 2).all_finite());
}

TEST_CASE("determinism anchors") {
  const auto a = fresh(), b = fresh();
  const SourceImage zero(3, 32, 32);
  CHECK(a.extract_hq(zero) == b.extract_hq(zero));
  const FeatureTensor fz(32, 8, 8);
  CHECK(a.infer_tail(fz).logits == b.infer_tail(fz).logits);
}

TEST_CASE("shape mismatches are dimension errors") {
  const auto bb = fresh();
  CHECK_THROWS_AS(bb.extract_hq(SourceImage(3, 16, 16)), DimensionError);
  CHECK_THROWS_AS(bb.infer_tail(FeatureTensor(16, 8, 8)), DimensionError);
}

TEST_CASE("head and tail parameters partition the full set") {
  auto bb = fresh();
  CHECK(bb.head_params().size() + bb.tail_params().size() == bb.all_params().size());
}

TEST_CASE("backbone checkpoints round trip") {
  auto a = fresh();
  const auto path = (std::filesystem::temp_directory_path() / "tgfc_bb_test.tgfw").string();
  a.all_params()[0]->value(0, 0) += 0.25;
  a.save(path);
  auto b = fresh();
  b.load(path);
  CHECK(a.checksum() == b.checksum());
  auto other = fresh("pool1", 40);
  CHECK_THROWS(other.load(path));
  std::filesystem::remove(path);
}

TEST_CASE("trained toy backbone classifies the validation split") {
  auto& w = tgfc::testing::toy_world();
  CHECK(backbone_accuracy(w.backbone, w.val) > 80.0);
}

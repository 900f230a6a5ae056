#include "tgfc/backbone.hpp"

#include <mutex>

#include "tgfc/resample.hpp"

namespace tgfc {

namespace {

ModelSpec toy_vgg(Index input, Index classes) {
  if (input % 8) throw ConfigError("toy_vgg input size must be a multiple of 8");
  const Index s = input / 8;
  return ModelSpec{"toy_vgg",
                   input,
                   {{"normalize", "normalize", 3, 3},
                    {"conv1", "conv", 3, 16},
                    {"relu1", "relu"},
                    {"pool1", "maxpool"},
                    {"conv2", "conv", 16, 32},
                    {"relu2", "relu"},
                    {"pool2", "maxpool"},
                    {"conv3", "conv", 32, 64},
                    {"relu3", "relu"},
                    {"pool3", "maxpool"},
                    {"fc", "linear", 64 * s * s, classes}}};
}

ModelSpec vgg16(Index input, Index classes) {
  if (input % 32) throw ConfigError("vgg16 input size must be a multiple of 32");
  ModelSpec m{"vgg16", input, {{"normalize", "normalize", 3, 3}}};
  const Index widths[5] = {64, 128, 256, 512, 512};
  const int convs[5] = {2, 2, 3, 3, 3};
  Index in = 3;
  for (int b = 0; b < 5; ++b) {
    for (int c = 0; c < convs[b]; ++c) {
      const std::string id = std::to_string(b + 1) + "_" + std::to_string(c + 1);
      m.layers.push_back({"conv" + id, "conv", in, widths[b]});
      m.layers.push_back({"relu" + id, "relu"});
      in = widths[b];
    }
    m.layers.push_back({"pool" + std::to_string(b + 1), "maxpool"});
  }
  const Index s = input / 32;
  m.layers.push_back({"fc6", "linear", 512 * s * s, 4096});
  m.layers.push_back({"relu6", "relu"});
  m.layers.push_back({"fc7", "linear", 4096, 4096});
  m.layers.push_back({"relu7", "relu"});
  m.layers.push_back({"fc8", "linear", 4096, classes});
  return m;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ModelFactory>& registry() {
  static std::map<std::string, ModelFactory> r{{"toy_vgg", toy_vgg}, {"vgg16", vgg16}};
  return r;
}

}  // namespace

Index ModelSpec::find(const std::string& layer) const {
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == layer) return static_cast<Index>(i);
  throw ConfigError("model '" + id + "' has no layer '" + layer + "'");
}

std::pair<std::vector<LayerSpec>, std::vector<LayerSpec>> ModelSpec::split(const std::string& layer) const {
  const auto at = layers.begin() + find(layer) + 1;
  return {std::vector<LayerSpec>(layers.begin(), at), std::vector<LayerSpec>(at, layers.end())};
}

void register_model(const std::string& id, ModelFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[id] = std::move(factory);
}

ModelSpec model_spec(const std::string& id, Index input_size, Index num_classes) {
  ModelFactory f;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(id);
    if (it == registry().end()) throw ConfigError("unknown model id '" + id + "'");
    f = it->second;
  }
  return f(input_size, num_classes);
}

std::vector<std::string> registered_models() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> ids;
  for (const auto& [k, v] : registry()) ids.push_back(k);
  return ids;
}

SplitBackbone SplitBackbone::build(const BackboneConfig& cfg) {
  SplitBackbone b;
  b.cfg_ = cfg;
  b.spec_ = model_spec(cfg.model_id, cfg.input_size, cfg.num_classes);
  const Index split = b.spec_.find(cfg.split_layer);

  std::mt19937_64 rng(cfg.init_seed);
  Index c = 3, h = cfg.input_size, w = cfg.input_size;
  for (size_t i = 0; i < b.spec_.layers.size(); ++i) {
    const auto& ls = b.spec_.layers[i];
    std::shared_ptr<nn::Layer<Real>> layer;
    if (ls.kind == "normalize") {
      layer = std::make_shared<nn::Normalize<Real>>(cfg.mean, cfg.stddev);
    } else if (ls.kind == "conv") {
      layer = std::make_shared<nn::Conv2d<Real>>(ls.in, ls.out, 3, rng, ls.name);
      c = ls.out;
    } else if (ls.kind == "relu") {
      layer = std::make_shared<nn::ReLU<Real>>();
    } else if (ls.kind == "maxpool") {
      layer = std::make_shared<nn::MaxPool2<Real>>();
      h /= 2;
      w /= 2;
    } else if (ls.kind == "linear") {
      layer = std::make_shared<nn::Linear<Real>>(ls.in, ls.out, rng, ls.name);
      c = ls.out;
      h = w = 1;
    } else {
      throw ConfigError("unknown layer kind '" + ls.kind + "'");
    }
    b.full_.add(ls.name, layer);
    (static_cast<Index>(i) <= split ? b.head_ : b.tail_).add(ls.name, layer);
    if (static_cast<Index>(i) == split) b.feature_shape_ = {c, h, w};
  }
  if (!cfg.weights.empty()) b.load(cfg.weights);
  return b;
}

void SplitBackbone::check_image(const SourceImage& img) const {
  if (img.channels() != 3 || img.height() != cfg_.input_size || img.width() != cfg_.input_size) {
    throw DimensionError("backbone expects 3x" + std::to_string(cfg_.input_size) + "x" +
                         std::to_string(cfg_.input_size) + " input, got " + img.shape_string());
  }
}

FeatureTensor SplitBackbone::extract_hq(const SourceImage& img) const {
  check_image(img);
  return head_.apply(img);
}

FeatureTensor SplitBackbone::extract_lq(const SourceImage& lr_img, Index scale) const {
  if (scale < 1) throw ConfigError("extract_lq scale must be >= 1");
  SourceImage up = bilinear_upsample(lr_img, scale);
  check_image(up);
  return head_.apply(up);
}

TaskResult SplitBackbone::infer_tail(const FeatureTensor& f) const {
  if (f.channels() != feature_shape_[0] || f.height() != feature_shape_[1] || f.width() != feature_shape_[2]) {
    throw DimensionError("tail expects " + std::to_string(feature_shape_[0]) + "x" + std::to_string(feature_shape_[1]) +
                         "x" + std::to_string(feature_shape_[2]) + " features, got " + f.shape_string());
  }
  const FeatureTensor out = tail_.apply(f);
  return TaskResult::from_logits(Eigen::Map<const Eigen::VectorXd>(out.data().data(), out.size()));
}

TaskResult SplitBackbone::full_infer(const SourceImage& img) const {
  check_image(img);
  const FeatureTensor out = full_.apply(img);
  return TaskResult::from_logits(Eigen::Map<const Eigen::VectorXd>(out.data().data(), out.size()));
}

std::vector<TaskResult> SplitBackbone::full_infer(const std::vector<SourceImage>& imgs) const {
  std::vector<TaskResult> out;
  out.reserve(imgs.size());
  for (const auto& img : imgs) out.push_back(full_infer(img));
  return out;
}

}  // namespace tgfc

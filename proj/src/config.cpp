#include "tgfc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace tgfc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void get(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

void read_codec(const json& j, CodecChoice& c) {
  get(j, "codec", c.codec);
  get(j, "step", c.step);
  get(j, "encode_command", c.external.encode_command);
  get(j, "decode_command", c.external.decode_command);
}

json write_codec(const CodecChoice& c) {
  return {{"codec", c.codec}, {"step", c.step}, {"encode_command", c.external.encode_command},
          {"decode_command", c.external.decode_command}};
}

void read_train(const json& j, TrainConfig& t) {
  get(j, "lambda", t.lambda);
  get(j, "alpha", t.alpha);
  get(j, "lr", t.lr);
  get(j, "epochs", t.epochs);
  get(j, "batch", t.batch);
  get(j, "seed", t.seed);
  get(j, "tau", t.tau);
  get(j, "texture_on", t.texture_on);
  get(j, "frm_on", t.frm_on);
}

json write_train(const TrainConfig& t) {
  return {{"lambda", t.lambda}, {"alpha", t.alpha},           {"lr", t.lr},
          {"epochs", t.epochs}, {"batch", t.batch},           {"seed", t.seed},
          {"tau", t.tau},       {"texture_on", t.texture_on}, {"frm_on", t.frm_on}};
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;

  const json& b = section(j, "backbone");
  get(b, "model", c.backbone.model_id);
  get(b, "split_layer", c.backbone.split_layer);
  get(b, "input_size", c.backbone.input_size);
  get(b, "num_classes", c.backbone.num_classes);
  get(b, "weights", c.backbone.weights);
  get(b, "init_seed", c.backbone.init_seed);
  get(b, "train_epochs", c.backbone_train.epochs);
  get(b, "train_lr", c.backbone_train.lr);
  get(b, "train_batch", c.backbone_train.batch);
  get(b, "train_seed", c.backbone_train.seed);

  const json& d = section(j, "dataset");
  get(d, "source", c.dataset.source);
  get(d, "train", c.dataset.train);
  get(d, "val", c.dataset.val);
  get(d, "size", c.dataset.size);
  get(d, "seed", c.dataset.seed);

  const json& t = section(j, "texture");
  read_codec(t, c.texture);
  get(t, "downsample", c.downsample);
  read_codec(section(j, "feature_codec"), c.feature_codec);

  read_train(section(j, "fcnn"), c.fcnn);
  const json& ir = section(j, "irnn");
  read_train(ir, c.irnn_train);
  get(ir, "depth", c.irnn.depth);
  get(ir, "base_width", c.irnn.base_width);
  get(ir, "use_skips", c.irnn.use_skips);

  const json& s = section(j, "sweep");
  get(s, "arms", c.sweep.arms);
  get(s, "proposed", c.sweep.proposed);
  get(s, "feature_anchor", c.sweep.feature_anchor);
  get(s, "image_anchor", c.sweep.image_anchor);
  get(s, "texture_only", c.sweep.texture_only);
  get(s, "image_encode_command", c.sweep.image_codec.encode_command);
  get(s, "image_decode_command", c.sweep.image_codec.decode_command);
  get(s, "targets", c.sweep.targets);
  get(s, "layer_label", c.sweep.layer_label);

  get(j, "checkpoint_dir", c.checkpoint_dir);
  get(j, "workers", c.workers);

  if (c.downsample < 1) throw ConfigError("texture downsample must be >= 1");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  c.fcnn.dataset_id = c.irnn_train.dataset_id = c.dataset.source;
  c.fcnn.backbone_id = c.irnn_train.backbone_id = c.backbone.model_id + ":" + c.backbone.split_layer;
  c.fcnn.texture_quality = c.irnn_train.texture_quality = c.texture.step;
  c.fcnn.validate();
  c.irnn_train.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
  json t = write_codec(texture);
  t["downsample"] = downsample;
  json ir = write_train(irnn_train);
  ir["depth"] = irnn.depth;
  ir["base_width"] = irnn.base_width;
  ir["use_skips"] = irnn.use_skips;
  json j = {
      {"backbone",
       {{"model", backbone.model_id},
        {"split_layer", backbone.split_layer},
        {"input_size", backbone.input_size},
        {"num_classes", backbone.num_classes},
        {"weights", backbone.weights},
        {"init_seed", backbone.init_seed},
        {"train_epochs", backbone_train.epochs},
        {"train_lr", backbone_train.lr},
        {"train_batch", backbone_train.batch},
        {"train_seed", backbone_train.seed}}},
      {"dataset",
       {{"source", dataset.source}, {"train", dataset.train}, {"val", dataset.val}, {"size", dataset.size}, {"seed", dataset.seed}}},
      {"texture", t},
      {"feature_codec", write_codec(feature_codec)},
      {"fcnn", write_train(fcnn)},
      {"irnn", ir},
      {"sweep",
       {{"arms", sweep.arms},
        {"proposed", sweep.proposed},
        {"feature_anchor", sweep.feature_anchor},
        {"image_anchor", sweep.image_anchor},
        {"texture_only", sweep.texture_only},
        {"image_encode_command", sweep.image_codec.encode_command},
        {"image_decode_command", sweep.image_codec.decode_command},
        {"targets", sweep.targets},
        {"layer_label", sweep.layer_label}}},
      {"checkpoint_dir", checkpoint_dir},
      {"workers", workers},
  };
  return j.dump(2);
}

IrnnConfig ExperimentConfig::irnn_for(const SplitBackbone& backbone) const {
  IrnnConfig ic = irnn;
  const auto fs = backbone.feature_shape();
  ic.upscale = downsample;
  ic.feature_channels = fs[0];
  ic.inject_level = IrnnConfig::level_for(backbone.config().input_size / downsample, fs[1]);
  ic.validate();
  return ic;
}

std::string ExperimentConfig::backbone_checkpoint() const {
  if (!backbone.weights.empty()) return backbone.weights;
  std::ostringstream key;
  key << backbone.model_id << '|' << backbone.split_layer << '|' << backbone.input_size << '|' << backbone.num_classes
      << '|' << backbone.init_seed << '|' << backbone_train.epochs << '|' << backbone_train.lr << '|'
      << backbone_train.batch << '|' << backbone_train.seed << '|' << dataset.source << '|' << dataset.train << '|'
      << dataset.seed;
  return (fs::path(checkpoint_dir) / ("backbone-" + hex(fnv(key.str())) + ".tgfw")).string();
}

std::string ExperimentConfig::fcnn_checkpoint() const {
  return (fs::path(checkpoint_dir) / ("fcnn-" + hex(fcnn.hash() ^ fnv(backbone_checkpoint())) + ".tgfw")).string();
}

std::string ExperimentConfig::irnn_checkpoint(bool use_features) const {
  TrainConfig t = irnn_train;
  t.use_features = use_features;
  std::ostringstream key;
  key << t.hash() << '|' << irnn.depth << '|' << irnn.base_width << '|' << irnn.use_skips << '|' << downsample << '|'
      << (use_features ? fcnn_checkpoint() : backbone_checkpoint());
  return (fs::path(checkpoint_dir) / ("irnn-" + hex(fnv(key.str())) + ".tgfw")).string();
}

std::pair<Dataset, Dataset> ExperimentConfig::load_dataset() const {
  Dataset all;
  if (dataset.source == "toy") {
    all = make_toy_dataset(dataset.train + dataset.val, dataset.size, dataset.seed);
  } else {
    all = load_image_directory(dataset.source);
    std::vector<size_t> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(dataset.seed);
    std::shuffle(order.begin(), order.end(), rng);
    Dataset shuffled;
    shuffled.class_names = all.class_names;
    for (size_t i : order) {
      shuffled.images.push_back(std::move(all.images[i]));
      shuffled.labels.push_back(all.labels[i]);
    }
    all = std::move(shuffled);
  }
  const size_t n_train = std::min(dataset.train, all.size());
  return {all.subset(0, n_train), all.subset(n_train, n_train + dataset.val)};
}

SplitBackbone load_backbone(const ExperimentConfig& cfg) {
  const std::string path = cfg.backbone_checkpoint();
  if (!fs::exists(path)) throw ConfigError("missing backbone checkpoint " + path + " (run train-backbone)");
  BackboneConfig bc = cfg.backbone;
  bc.weights = path;
  return SplitBackbone::build(bc);
}

FcnnModel load_fcnn(const ExperimentConfig& cfg, const SplitBackbone& backbone) {
  const std::string path = cfg.fcnn_checkpoint();
  if (!fs::exists(path)) throw ConfigError("missing FCNN checkpoint " + path + " (run train-fcnn)");
  FcnnModel m(backbone.feature_shape()[0], cfg.fcnn.seed, ablation_variant(cfg.fcnn.texture_on, cfg.fcnn.frm_on));
  m.load(path);
  return m;
}

ImageReconstructor<Real> load_irnn(const ExperimentConfig& cfg, const SplitBackbone& backbone, bool use_features) {
  const std::string path = cfg.irnn_checkpoint(use_features);
  if (!fs::exists(path)) throw ConfigError("missing IRNN checkpoint " + path + " (run train-irnn)");
  std::mt19937_64 rng(cfg.irnn_train.seed);
  ImageReconstructor<Real> net(cfg.irnn_for(backbone), rng);
  nn::load_params(path, net.params());
  return net;
}

}  // namespace tgfc

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgfc/backbone.hpp"
#include "tgfc/codec.hpp"
#include "tgfc/dataset.hpp"
#include "tgfc/irnn.hpp"
#include "tgfc/training.hpp"

namespace tgfc {

struct DatasetConfig {
  std::string source = "toy";  // "toy" or a directory of class subdirectories
  size_t train = 1000;
  size_t val = 500;
  Index size = 32;
  std::uint64_t seed = 7;
};

struct CodecChoice {
  std::string codec = "lossy";  // lossless | lossy | external
  int step = 8;
  ExternalCodecConfig external;

  std::shared_ptr<const CodecBackend> backend() const { return make_backend(codec, step, external); }
};

struct SweepSettings {
  std::vector<std::string> arms = {"proposed", "feature-anchor", "image-anchor", "texture-only", "uncompressed"};
  std::vector<int> proposed = {1, 8, 16, 32, 64};
  std::vector<int> feature_anchor = {8, 16, 32, 64, 128};
  std::vector<int> image_anchor = {16, 32, 64, 96, 128};
  std::vector<int> texture_only = {4, 8, 16, 32, 64};
  /// External image codec for the image anchor; empty commands use the built-in lossy backend.
  ExternalCodecConfig image_codec;
  std::vector<double> targets = {62, 65};
  std::string layer_label = "Pool2";
};

/// Everything an experiment needs, read from one JSON file. Missing keys keep their defaults.
struct ExperimentConfig {
  BackboneConfig backbone;
  BackboneTrainOptions backbone_train;
  DatasetConfig dataset;
  CodecChoice texture{"lossy", 8, {}};
  Index downsample = 2;
  CodecChoice feature_codec{"lossless", 1, {}};
  // Desk-scale defaults; the network-size and schedule fields are all overridable.
  TrainConfig fcnn{.lr = 1e-3, .epochs = 20};
  TrainConfig irnn_train{.lr = 1e-3, .epochs = 20, .batch = 16};
  IrnnConfig irnn{.depth = 2, .base_width = 16};
  SweepSettings sweep;
  std::string checkpoint_dir = "checkpoints";
  int workers = 1;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_json_text() const;

  /// IRNN configuration completed with the backbone's feature geometry.
  IrnnConfig irnn_for(const SplitBackbone& backbone) const;

  std::string backbone_checkpoint() const;
  std::string fcnn_checkpoint() const;
  std::string irnn_checkpoint(bool use_features) const;

  /// (train, val) split. Directory datasets are shuffled with the dataset seed before splitting.
  std::pair<Dataset, Dataset> load_dataset() const;
};

/// Builds the backbone and loads its checkpoint; a missing file is a ConfigError.
SplitBackbone load_backbone(const ExperimentConfig& cfg);
FcnnModel load_fcnn(const ExperimentConfig& cfg, const SplitBackbone& backbone);
ImageReconstructor<Real> load_irnn(const ExperimentConfig& cfg, const SplitBackbone& backbone, bool use_features);

}  // namespace tgfc

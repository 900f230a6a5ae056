#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tgfc/nn/layers.hpp"
#include "tgfc/nn/serialize.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc {

struct TaskResult {
  Eigen::VectorXd logits;
  Index predicted_class = -1;

  static TaskResult from_logits(Eigen::VectorXd l) {
    TaskResult r{std::move(l), -1};
    r.logits.maxCoeff(&r.predicted_class);
    return r;
  }
};

/// One row of a model's layer table.
struct LayerSpec {
  std::string name;
  std::string kind;  // normalize | conv | relu | maxpool | linear
  Index in = 0;
  Index out = 0;
};

struct ModelSpec {
  std::string id;
  Index input_size = 0;
  std::vector<LayerSpec> layers;

  /// Position of `layer` in the table; throws ConfigError when absent.
  Index find(const std::string& layer) const;
  /// Layer tables on either side of a split; the named layer belongs to the head.
  std::pair<std::vector<LayerSpec>, std::vector<LayerSpec>> split(const std::string& layer) const;
};

struct BackboneConfig {
  std::string model_id = "toy_vgg";
  std::string split_layer = "pool2";
  Index input_size = 32;
  Index num_classes = 10;
  std::vector<double> mean{0.5, 0.5, 0.5};
  std::vector<double> stddev{0.25, 0.25, 0.25};
  std::string weights;  // empty: random init from `init_seed`
  std::uint64_t init_seed = 1;
};

using ModelFactory = std::function<ModelSpec(Index input_size, Index num_classes)>;

/// Model registry keyed by model_id. "toy_vgg" and "vgg16" are built in.
void register_model(const std::string& id, ModelFactory factory);
ModelSpec model_spec(const std::string& id, Index input_size, Index num_classes);
std::vector<std::string> registered_models();

/// A frozen classifier cut into a feature extractor (head) and task network (tail).
/// Head and tail share layer objects with the full network, so their parameter
/// sets partition the full set.
class SplitBackbone {
 public:
  using Net = nn::Sequential<Real>;

  static SplitBackbone build(const BackboneConfig& cfg);

  const BackboneConfig& config() const { return cfg_; }
  const ModelSpec& spec() const { return spec_; }

  FeatureTensor extract_hq(const SourceImage& img) const;
  /// Bilinearly upsamples `lr_img` by `scale` and runs the head.
  FeatureTensor extract_lq(const SourceImage& lr_img, Index scale) const;
  TaskResult infer_tail(const FeatureTensor& f) const;
  TaskResult full_infer(const SourceImage& img) const;
  std::vector<TaskResult> full_infer(const std::vector<SourceImage>& imgs) const;

  /// Shape the head produces for a contract-sized image.
  std::array<Index, 3> feature_shape() const { return feature_shape_; }

  Net& head() { return head_; }
  Net& tail() { return tail_; }
  Net& full() { return full_; }

  nn::ParamList<Real> head_params() { return head_.params(); }
  nn::ParamList<Real> tail_params() { return tail_.params(); }
  nn::ParamList<Real> all_params() { return full_.params(); }
  std::uint64_t checksum() { return nn::checksum(full_.params()); }

  void save(const std::string& path) { nn::save_params(path, full_.params()); }
  void load(const std::string& path) { nn::load_params(path, full_.params()); }

 private:
  void check_image(const SourceImage& img) const;

  BackboneConfig cfg_;
  ModelSpec spec_;
  Net full_, head_, tail_;
  std::array<Index, 3> feature_shape_{};
};

}  // namespace tgfc

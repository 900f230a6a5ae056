#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgfc/backbone.hpp"
#include "tgfc/channel_selection.hpp"
#include "tgfc/codec.hpp"
#include "tgfc/dataset.hpp"
#include "tgfc/feature_reconstruction.hpp"
#include "tgfc/irnn.hpp"

namespace tgfc {

// ---------------------------------------------------------------------------
// Losses

struct CrossEntropy {
  double loss;
  Eigen::VectorXd grad;  // d loss / d logits
};

CrossEntropy cross_entropy(const Eigen::VectorXd& logits, int label);

/// Task loss plus rate term: T + λ·density.
inline double loss_task(double task_loss, double density, double lambda) { return task_loss + lambda * density; }
inline double loss_task(double task_loss, const ChannelMask& m, double lambda) {
  return loss_task(task_loss, mask_mean(m), lambda);
}

/// Mean squared error over all C×H×W entries.
double loss_dist(const FeatureTensor& f_hq, const FeatureTensor& f_hat);
FeatureTensor loss_dist_grad(const FeatureTensor& f_hq, const FeatureTensor& f_hat);

inline double loss_total(double lt, double ldist, double alpha) { return lt + alpha * ldist; }

// ---------------------------------------------------------------------------
// Configuration and reports

struct TrainConfig {
  double lambda = 3.0;
  double alpha = 0.5;
  double lr = 1e-4;
  int epochs = 300;
  int batch = 32;
  std::uint64_t seed = 0;
  double tau = 1.0;
  std::string dataset_id = "toy";
  std::string backbone_id = "toy_vgg";
  int texture_quality = 8;  // lossy step of the texture backend
  bool texture_on = true;
  bool frm_on = true;
  /// IRNN only: false trains the texture-only variant (features zeroed).
  bool use_features = true;

  void validate() const;
  /// Stable hash of every field, used to key checkpoints.
  std::uint64_t hash() const;
};

struct EpochRecord {
  int epoch = 0;
  double task_loss = 0;     // FCNN: cross-entropy; IRNN: training MSE
  double density = 0;       // mean hard mask density (FCNN)
  double perceptual_loss = 0;
  double total_loss = 0;
  double val_metric = 0;    // FCNN: top-1 accuracy in %; IRNN: validation MSE
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double initial_val_metric = 0;
  std::uint64_t backbone_checksum_before = 0;
  std::uint64_t backbone_checksum_after = 0;
  std::string checkpoint;

  void write_csv(const std::string& path) const;
  void write_summary(const std::string& path, const std::string& title) const;
};

// ---------------------------------------------------------------------------
// Prepared per-image tensors

struct FeatureSample {
  FeatureTensor f_hq;
  FeatureTensor f_lq;
  SourceImage texture;  // decoded low-resolution texture
  int label = 0;
};

/// Runs the frozen head on every image and on its coded, downsampled texture.
std::vector<FeatureSample> prepare_features(const SplitBackbone& backbone, const Dataset& data,
                                            const CodecBackend& texture_codec, Index downsample);

// ---------------------------------------------------------------------------
// Feature compression network (channel selection + reconstruction)

struct FcnnVariant {
  bool texture_on = true;
  bool frm_on = true;
  int method() const { return texture_on ? (frm_on ? 4 : 2) : (frm_on ? 3 : 1); }
  std::string label() const;
};

/// Ablation rows: (texture, FRM) → methods 1..4.
FcnnVariant ablation_variant(bool texture_on, bool frm_on);

class FcnnModel {
 public:
  FcnnModel(Index channels, std::uint64_t seed, FcnnVariant variant = {}, FrmOptions frm_options = {});

  const FcnnVariant& variant() const { return variant_; }
  Index channels() const { return csm_.channels(); }
  ChannelSelector<Real>& selector() { return csm_; }
  const ChannelSelector<Real>& selector() const { return csm_; }
  FeatureReconstructor<Real>& reconstructor() { return frm_; }
  const FeatureReconstructor<Real>& reconstructor() const { return frm_; }

  ImportanceLogits<Real> importance(const FeatureTensor& f_hq) const { return csm_.importance(f_hq); }
  /// Deterministic inference mask (argmax, no noise).
  ChannelMask mask(const FeatureTensor& f_hq) const { return argmax_mask(importance(f_hq)); }

  /// The tensor that replaces dropped channels: texture features, or zeros when texture is off.
  FeatureTensor fill_source(const FeatureTensor& f_lq) const;
  /// Decoder side: fill dropped channels, then enhance when the FRM is on.
  FeatureTensor reconstruct(const FeatureTensor& f_m, const FeatureTensor& f_lq, const ChannelMask& m) const;

  nn::ParamList<Real> trainable();
  nn::ParamList<Real> state();  // trainable + batch-norm statistics
  void save(const std::string& path) { nn::save_params(path, state()); }
  void load(const std::string& path) { nn::load_params(path, state()); }

 private:
  FcnnVariant variant_;
  std::mt19937_64 rng_;
  ChannelSelector<Real> csm_;
  FeatureReconstructor<Real> frm_;
};

struct FcnnTrainResult {
  FcnnModel model;
  TrainReport report;
};

/// Optimises the selector and reconstructor against task + rate + feature-distortion
/// loss, with the feature codec replaced by identity. The backbone stays frozen.
FcnnTrainResult train_fcnn(const TrainConfig& cfg, SplitBackbone& backbone, const std::vector<FeatureSample>& train,
                           const std::vector<FeatureSample>& val);

struct FcnnEval {
  double accuracy = 0;  // top-1 %
  double density = 0;   // mean mask density
};

/// Identity-codec evaluation. `keep` forces exactly that many channels (top-k by margin).
FcnnEval evaluate_fcnn(const FcnnModel& model, const SplitBackbone& backbone, const std::vector<FeatureSample>& data,
                       std::optional<Index> keep = std::nullopt);

// ---------------------------------------------------------------------------
// Image reconstruction network

struct IrnnSample {
  SourceImage target;
  SourceImage texture;
  FeatureTensor features;
};

/// Pairs each image with its decoded texture and the features the IRNN sees:
/// the FCNN's reconstruction, or zeros when `use_features` is false.
std::vector<IrnnSample> prepare_irnn_samples(const Dataset& data, const std::vector<FeatureSample>& feats,
                                             const FcnnModel* fcnn, bool use_features);

struct IrnnTrainResult {
  ImageReconstructor<Real> model;
  TrainReport report;
};

IrnnTrainResult train_irnn(const TrainConfig& cfg, const IrnnConfig& icfg, const std::vector<IrnnSample>& train,
                           const std::vector<IrnnSample>& val);

double mean_irnn_loss(const ImageReconstructor<Real>& model, const std::vector<IrnnSample>& data);

// ---------------------------------------------------------------------------
// Backbone pre-training (produces the frozen classifier)

struct BackboneTrainOptions {
  int epochs = 8;
  int batch = 32;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

/// Returns validation top-1 accuracy in %.
double train_backbone(SplitBackbone& backbone, const Dataset& train, const Dataset& val, const BackboneTrainOptions& opt);
double backbone_accuracy(const SplitBackbone& backbone, const Dataset& data);

}  // namespace tgfc

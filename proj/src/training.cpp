#include "tgfc/training.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tgfc/nn/adam.hpp"

namespace tgfc {

CrossEntropy cross_entropy(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) throw DimensionError("label outside logit range");
  const double mx = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - mx).exp();
  const double z = e.sum();
  CrossEntropy ce;
  ce.loss = std::log(z) - (logits[label] - mx);
  ce.grad = e / z;
  ce.grad[label] -= 1.0;
  return ce;
}

double loss_dist(const FeatureTensor& f_hq, const FeatureTensor& f_hat) {
  require_same_shape(f_hq, f_hat, "loss_dist");
  return (f_hq.data() - f_hat.data()).squaredNorm() / static_cast<double>(f_hq.size());
}

FeatureTensor loss_dist_grad(const FeatureTensor& f_hq, const FeatureTensor& f_hat) {
  require_same_shape(f_hq, f_hat, "loss_dist_grad");
  FeatureTensor g = f_hat;
  g.data() = (f_hat.data() - f_hq.data()) * (2.0 / static_cast<double>(f_hq.size()));
  return g;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(tau > 0)) throw ConfigError("tau must be > 0");
}

std::uint64_t TrainConfig::hash() const {
  std::ostringstream s;
  s << std::setprecision(17) << lambda << '|' << alpha << '|' << lr << '|' << epochs << '|' << batch << '|' << seed
    << '|' << tau << '|' << dataset_id << '|' << backbone_id << '|' << texture_quality << '|' << texture_on << '|'
    << frm_on << '|' << use_features;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void TrainReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "epoch,task_loss,density,perceptual_loss,total_loss,val_metric\n" << std::setprecision(10);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.task_loss << ',' << e.density << ',' << e.perceptual_loss << ',' << e.total_loss << ','
        << e.val_metric << '\n';
  }
}

void TrainReport::write_summary(const std::string& path, const std::string& title) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << title << "\n";
  out << "epochs: " << epochs.size() << "\n";
  out << "initial_val_metric: " << initial_val_metric << "\n";
  if (!epochs.empty()) {
    const auto& e = epochs.back();
    out << "final_task_loss: " << e.task_loss << "\nfinal_density: " << e.density
        << "\nfinal_perceptual_loss: " << e.perceptual_loss << "\nfinal_val_metric: " << e.val_metric << "\n";
  }
  out << "backbone_checksum_before: " << std::hex << backbone_checksum_before << "\nbackbone_checksum_after: "
      << backbone_checksum_after << std::dec << "\ncheckpoint: " << checkpoint << "\n";
}

// ---------------------------------------------------------------------------

std::vector<FeatureSample> prepare_features(const SplitBackbone& backbone, const Dataset& data,
                                            const CodecBackend& texture_codec, Index downsample) {
  CodecRegistry reg;
  // Decode with the same backend instance so external codecs round-trip.
  struct Borrowed : CodecBackend {
    const CodecBackend& b;
    explicit Borrowed(const CodecBackend& x) : b(x) {}
    std::uint8_t id() const override { return b.id(); }
    std::string name() const override { return b.name(); }
    Bytes encode_frame(const GrayFrame& f) const override { return b.encode_frame(f); }
    GrayFrame decode_frame(std::span<const std::uint8_t> d, Index h, Index w) const override { return b.decode_frame(d, h, w); }
  };
  reg.add(std::make_shared<Borrowed>(texture_codec));
  std::vector<FeatureSample> out;
  out.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    FeatureSample s;
    s.f_hq = backbone.extract_hq(data.images[i]);
    s.texture = decode_texture(encode_texture(box_downsample(data.images[i], downsample), texture_codec), reg);
    s.f_lq = backbone.extract_lq(s.texture, downsample);
    s.label = data.labels[i];
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string FcnnVariant::label() const {
  switch (method()) {
    case 1: return "1. FCNN w/o texture and FRM";
    case 2: return "2. FCNN w/o FRM";
    case 3: return "3. FCNN w/o Texture";
    default: return "4. FCNN";
  }
}

FcnnVariant ablation_variant(bool texture_on, bool frm_on) { return FcnnVariant{texture_on, frm_on}; }

FcnnModel::FcnnModel(Index channels, std::uint64_t seed, FcnnVariant variant, FrmOptions frm_options)
    : variant_(variant), rng_(seed), csm_(channels, rng_), frm_(channels, rng_, frm_options) {}

FeatureTensor FcnnModel::fill_source(const FeatureTensor& f_lq) const {
  if (variant_.texture_on) return f_lq;
  return FeatureTensor(f_lq.channels(), f_lq.height(), f_lq.width());
}

FeatureTensor FcnnModel::reconstruct(const FeatureTensor& f_m, const FeatureTensor& f_lq, const ChannelMask& m) const {
  const FeatureTensor lq = fill_source(f_lq);
  FeatureTensor filled = fill_missing(f_m, lq, m);
  if (!variant_.frm_on) return filled;
  return frm_.enhance(frm_.sft_fuse(filled, lq));
}

nn::ParamList<Real> FcnnModel::trainable() {
  auto ps = csm_.params();
  if (variant_.frm_on)
    for (auto* p : frm_.params()) ps.push_back(p);
  return ps;
}

nn::ParamList<Real> FcnnModel::state() {
  auto ps = csm_.params();
  for (auto* p : csm_.buffers()) ps.push_back(p);
  for (auto* p : frm_.params()) ps.push_back(p);
  return ps;
}

namespace {

std::vector<size_t> shuffled(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

FcnnEval evaluate_fcnn(const FcnnModel& model, const SplitBackbone& backbone, const std::vector<FeatureSample>& data,
                       std::optional<Index> keep) {
  FcnnEval ev;
  if (data.empty()) return ev;
  size_t correct = 0;
  double density = 0;
  for (const auto& s : data) {
    const auto logits = model.importance(s.f_hq);
    const ChannelMask m = keep ? top_k_mask(logits, *keep) : argmax_mask(logits);
    const FeatureTensor f_hat = model.reconstruct(apply_mask(s.f_hq, m), s.f_lq, m);
    correct += backbone.infer_tail(f_hat).predicted_class == s.label;
    density += mask_mean(m);
  }
  ev.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  ev.density = density / static_cast<double>(data.size());
  return ev;
}

FcnnTrainResult train_fcnn(const TrainConfig& cfg, SplitBackbone& backbone, const std::vector<FeatureSample>& train,
                           const std::vector<FeatureSample>& val) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train_fcnn: empty training set");
  const Index C = train.front().f_hq.channels();
  FcnnTrainResult res{FcnnModel(C, cfg.seed, ablation_variant(cfg.texture_on, cfg.frm_on)), {}};
  FcnnModel& model = res.model;
  TrainReport& report = res.report;
  report.backbone_checksum_before = backbone.checksum();
  report.initial_val_metric = evaluate_fcnn(model, backbone, val).accuracy;

  nn::Adam<Real> opt(model.trainable(), {.lr = cfg.lr});
  auto& tail = backbone.tail();
  auto tail_params = tail.params();
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedull);
  std::mt19937_64 gumbel_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const GumbelConfig gcfg{cfg.tau, true, true, cfg.seed};
  auto& csm = model.selector();
  auto& frm = model.reconstructor();
  const bool frm_on = cfg.frm_on;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto order = shuffled(train.size(), order_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      const Index B = static_cast<Index>(end - start);
      const double inv_b = 1.0 / static_cast<double>(B);

      nn::MatrixX<Real> pooled(C, B);
      for (Index b = 0; b < B; ++b) pooled.col(b) = ChannelSelector<Real>::pool(train[order[start + b]].f_hq);
      const nn::MatrixX<Real> logits = csm.forward_train(pooled);
      nn::MatrixX<Real> dlogits = nn::MatrixX<Real>::Zero(2 * C, B);

      for (Index b = 0; b < B; ++b) {
        const auto& s = train[order[start + b]];
        const ImportanceLogits<Real> l{logits.col(b).head(C), logits.col(b).tail(C)};
        const auto sample = gumbel_sample(l, gcfg, gumbel_rng);
        const Eigen::VectorXd mvals = sample.forward_value(gcfg.hard_forward);
        const FeatureTensor lq = model.fill_source(s.f_lq);
        const FeatureTensor filled = blend_channels(s.f_hq, lq, mvals);
        const FeatureTensor out = frm_on ? frm.forward(filled, lq) : filled;

        const FeatureTensor t_out = tail.forward(out);
        const auto ce = cross_entropy(Eigen::Map<const Eigen::VectorXd>(t_out.data().data(), t_out.size()), s.label);
        const double dist = loss_dist(s.f_hq, out);
        rec.task_loss += ce.loss;
        rec.perceptual_loss += dist;
        rec.density += mask_mean(sample.mask);
        rec.total_loss += loss_total(loss_task(ce.loss, sample.soft.mean(), cfg.lambda), dist, cfg.alpha);

        FeatureTensor g_t(t_out.channels(), 1, 1);
        g_t.data().col(0) = ce.grad * inv_b;
        FeatureTensor g_out = tail.backward(g_t);
        g_out.data() += loss_dist_grad(s.f_hq, out).data() * (cfg.alpha * inv_b);
        const FeatureTensor g_filled = frm_on ? frm.backward(g_out).first : g_out;

        // Straight-through: the hard mask's gradient is applied to the soft probability.
        Eigen::VectorXd dsoft = g_filled.data().cwiseProduct(s.f_hq.data() - lq.data()).rowwise().sum();
        dsoft.array() += cfg.lambda * inv_b / static_cast<double>(C);
        const auto dl = soft_select_backward(sample, dsoft, cfg.tau);
        dlogits.col(b) << dl.select, dl.reject;
      }
      csm.backward(dlogits);
      opt.step();
      nn::zero_grads(tail_params);
    }
    const double n = static_cast<double>(train.size());
    rec.task_loss /= n;
    rec.perceptual_loss /= n;
    rec.density /= n;
    rec.total_loss /= n;
    rec.val_metric = evaluate_fcnn(model, backbone, val).accuracy;
    report.epochs.push_back(rec);
  }

  report.backbone_checksum_after = backbone.checksum();
  if (report.backbone_checksum_after != report.backbone_checksum_before) {
    throw InvariantError("backbone parameters changed during FCNN training");
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<IrnnSample> prepare_irnn_samples(const Dataset& data, const std::vector<FeatureSample>& feats,
                                             const FcnnModel* fcnn, bool use_features) {
  if (data.size() != feats.size()) throw DimensionError("dataset and feature bank sizes differ");
  std::vector<IrnnSample> out;
  out.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& s = feats[i];
    IrnnSample smp{data.images[i], s.texture, {}};
    if (!use_features) {
      smp.features = FeatureTensor(s.f_hq.channels(), s.f_hq.height(), s.f_hq.width());
    } else if (fcnn) {
      const ChannelMask m = fcnn->mask(s.f_hq);
      smp.features = fcnn->reconstruct(apply_mask(s.f_hq, m), s.f_lq, m);
    } else {
      smp.features = s.f_hq;
    }
    out.push_back(std::move(smp));
  }
  return out;
}

double mean_irnn_loss(const ImageReconstructor<Real>& model, const std::vector<IrnnSample>& data) {
  if (data.empty()) return 0.0;
  double acc = 0;
  for (const auto& s : data) acc += irnn_loss(s.target, model.apply_unclamped(s.texture, s.features));
  return acc / static_cast<double>(data.size());
}

IrnnTrainResult train_irnn(const TrainConfig& cfg, const IrnnConfig& icfg, const std::vector<IrnnSample>& train,
                           const std::vector<IrnnSample>& val) {
  cfg.validate();
  std::mt19937_64 init_rng(cfg.seed);
  IrnnTrainResult res{ImageReconstructor<Real>(icfg, init_rng), {}};
  auto& model = res.model;
  res.report.initial_val_metric = mean_irnn_loss(model, val);
  if (cfg.epochs == 0 || train.empty()) return res;

  nn::Adam<Real> opt(model.params(), {.lr = cfg.lr});
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedull);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto order = shuffled(train.size(), order_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        const SourceImage recon = model.forward(s.texture, s.features);
        rec.task_loss += irnn_loss(s.target, recon);
        SourceImage g = irnn_loss_grad(s.target, recon);
        g.data() *= inv_b;
        model.backward(g);
      }
      opt.step();
    }
    rec.task_loss /= static_cast<double>(train.size());
    rec.total_loss = rec.task_loss;
    rec.val_metric = mean_irnn_loss(model, val);
    res.report.epochs.push_back(rec);
  }
  return res;
}

// ---------------------------------------------------------------------------

double backbone_accuracy(const SplitBackbone& backbone, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < data.size(); ++i) correct += backbone.full_infer(data.images[i]).predicted_class == data.labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

double train_backbone(SplitBackbone& backbone, const Dataset& train, const Dataset& val, const BackboneTrainOptions& o) {
  auto& net = backbone.full();
  nn::Adam<Real> opt(net.params(), {.lr = o.lr});
  std::mt19937_64 rng(o.seed);
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    const auto order = shuffled(train.size(), rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(o.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(o.batch));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (size_t k = start; k < end; ++k) {
        const FeatureTensor out = net.forward(train.images[order[k]]);
        const auto ce = cross_entropy(Eigen::Map<const Eigen::VectorXd>(out.data().data(), out.size()), train.labels[order[k]]);
        FeatureTensor g(out.channels(), 1, 1);
        g.data().col(0) = ce.grad * inv_b;
        net.backward(g);
      }
      opt.step();
    }
  }
  return backbone_accuracy(backbone, val);
}

}  // namespace tgfc

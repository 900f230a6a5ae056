#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tgfc/config.hpp"
#include "tgfc/eval.hpp"
#include "tgfc/metrics.hpp"

namespace fs = std::filesystem;
using namespace tgfc;

namespace {

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

PipelineOptions pipeline_of(const ExperimentConfig& cfg) {
  PipelineOptions p;
  p.downsample = cfg.downsample;
  p.texture_codec = cfg.texture.backend();
  p.feature_codec = cfg.feature_codec.backend();
  return p;
}

CodecRegistry registry_of(const ExperimentConfig& cfg) {
  CodecRegistry r = CodecRegistry::with_builtins();
  r.add(cfg.texture.backend());
  r.add(cfg.feature_codec.backend());
  return r;
}

std::vector<FeatureSample> features_for(const ExperimentConfig& cfg, const SplitBackbone& bb, const Dataset& d) {
  return prepare_features(bb, d, *cfg.texture.backend(), cfg.downsample);
}

int cmd_make_dataset(const ExperimentConfig& cfg, const std::string& out) {
  auto [train, val] = cfg.load_dataset();
  save_image_directory(train, (fs::path(out) / "train").string());
  save_image_directory(val, (fs::path(out) / "val").string());
  std::cout << "wrote " << train.size() << " train and " << val.size() << " val images to " << out << "\n";
  return 0;
}

int cmd_train_backbone(const ExperimentConfig& cfg) {
  auto [train, val] = cfg.load_dataset();
  auto bb = SplitBackbone::build(cfg.backbone);
  const double acc = train_backbone(bb, train, val, cfg.backbone_train);
  const std::string path = cfg.backbone_checkpoint();
  ensure_dir(fs::path(path).parent_path().string());
  bb.save(path);
  std::cout << "backbone val top-1 " << acc << "%\ncheckpoint " << path << "\n";
  return 0;
}

int cmd_train_fcnn(const ExperimentConfig& cfg, const std::string& out) {
  auto bb = load_backbone(cfg);
  auto [train, val] = cfg.load_dataset();
  auto res = train_fcnn(cfg.fcnn, bb, features_for(cfg, bb, train), features_for(cfg, bb, val));
  const std::string path = cfg.fcnn_checkpoint();
  ensure_dir(cfg.checkpoint_dir);
  res.model.save(path);
  res.report.checkpoint = path;
  ensure_dir(out);
  res.report.write_csv((fs::path(out) / "fcnn_train.csv").string());
  res.report.write_summary((fs::path(out) / "fcnn_summary.txt").string(), res.model.variant().label());
  for (const auto& e : res.report.epochs) {
    std::printf("epoch %3d  task %.4f  density %.3f  dist %.5f  total %.4f  val %.2f%%\n", e.epoch, e.task_loss,
                e.density, e.perceptual_loss, e.total_loss, e.val_metric);
  }
  std::cout << "checkpoint " << path << "\n";
  return 0;
}

int cmd_train_irnn(const ExperimentConfig& cfg, bool texture_only, const std::string& out) {
  auto bb = load_backbone(cfg);
  std::optional<FcnnModel> fcnn;
  if (!texture_only) fcnn.emplace(load_fcnn(cfg, bb));
  auto [train, val] = cfg.load_dataset();
  const auto ftr = features_for(cfg, bb, train), fva = features_for(cfg, bb, val);
  const FcnnModel* fp = fcnn ? &*fcnn : nullptr;
  TrainConfig tc = cfg.irnn_train;
  tc.use_features = !texture_only;
  auto res = train_irnn(tc, cfg.irnn_for(bb), prepare_irnn_samples(train, ftr, fp, !texture_only),
                        prepare_irnn_samples(val, fva, fp, !texture_only));
  const std::string path = cfg.irnn_checkpoint(!texture_only);
  ensure_dir(cfg.checkpoint_dir);
  nn::save_params(path, res.model.params());
  res.report.checkpoint = path;
  ensure_dir(out);
  const std::string stem = texture_only ? "irnn_texture" : "irnn_feature";
  res.report.write_csv((fs::path(out) / (stem + "_train.csv")).string());
  res.report.write_summary((fs::path(out) / (stem + "_summary.txt")).string(), texture_only ? "Texture-SR" : "Texture-Feature-SR");
  std::printf("epoch   0  val mse %.6f\n", res.report.initial_val_metric);
  for (const auto& e : res.report.epochs) std::printf("epoch %3d  train mse %.6f  val mse %.6f\n", e.epoch, e.task_loss, e.val_metric);
  std::cout << "checkpoint " << path << "\n";
  return 0;
}

int cmd_encode(const ExperimentConfig& cfg, const std::string& image, const std::string& prefix) {
  auto bb = load_backbone(cfg);
  const FcnnModel fcnn = load_fcnn(cfg, bb);
  const SourceImage img = read_ppm(image);
  const EncodedStreams enc = encode_image(bb, fcnn, img, pipeline_of(cfg));
  write_file(prefix + ".tgfc", enc.features);
  write_file(prefix + ".tgtx", enc.texture);
  std::cout << "kept " << enc.mask.count() << "/" << enc.mask.length() << " channels\n" << enc.bits.describe() << "\n";
  std::cout << "wrote " << prefix << ".tgfc (" << enc.features.size() << " bytes) and " << prefix << ".tgtx ("
            << enc.texture.size() << " bytes)\n";
  return 0;
}

int cmd_decode(const ExperimentConfig& cfg, const std::string& features, const std::string& texture,
               const std::string& preview, const std::string& reference) {
  auto bb = load_backbone(cfg);
  const FcnnModel fcnn = load_fcnn(cfg, bb);
  std::optional<ImageReconstructor<Real>> irnn;
  if (fs::exists(cfg.irnn_checkpoint(true))) {
    irnn.emplace(load_irnn(cfg, bb, true));
  } else {
    std::cerr << "no IRNN checkpoint; preview uses bilinear upsampling\n";
  }
  const Bytes f = read_file(features), t = read_file(texture);
  const DecodedStreams dec = decode_streams(bb, fcnn, irnn ? &*irnn : nullptr, f, t, registry_of(cfg), cfg.downsample);
  std::cout << "class " << dec.task.predicted_class << "\n";
  if (!preview.empty()) {
    write_ppm(preview, dec.preview);
    std::cout << "preview " << preview << "\n";
  }
  if (!reference.empty()) std::cout << "preview PSNR " << format_psnr(psnr(read_ppm(reference), quantize_8bit(dec.preview))) << " dB\n";
  return 0;
}

std::vector<SweepArm> arms_of(const ExperimentConfig& cfg) {
  std::vector<SweepArm> arms;
  for (const auto& a : cfg.sweep.arms) {
    if (a == kArmProposed) arms.push_back({a, cfg.sweep.proposed});
    else if (a == kArmFeatureAnchor) arms.push_back({a, cfg.sweep.feature_anchor});
    else if (a == kArmImageAnchor) arms.push_back({a, cfg.sweep.image_anchor});
    else if (a == kArmTextureOnly) arms.push_back({a, cfg.sweep.texture_only});
    else if (a == kArmUncompressed) arms.push_back({a, {}});
    else throw ConfigError("unknown sweep arm '" + a + "'");
  }
  return arms;
}

void print_bd(const std::vector<RatePoint>& pts, const std::string& anchor, const std::string& test) {
  try {
    const auto a = curve_of(pts, anchor), b = curve_of(pts, test);
    const auto q = bd_metric(a, b, BdMode::Quality);
    std::printf("BD-accuracy %s vs %s: %+.3f\n", test.c_str(), anchor.c_str(), q.value);
    const auto r = bd_metric(a, b, BdMode::Rate);
    std::printf("BD-rate     %s vs %s: %+.3f%%\n", test.c_str(), anchor.c_str(), r.value);
  } catch (const MetricError& e) {
    std::printf("BD %s vs %s: %s\n", test.c_str(), anchor.c_str(), e.what());
  }
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out) {
  auto bb = load_backbone(cfg);
  std::optional<FcnnModel> fcnn;
  const auto arms = arms_of(cfg);
  for (const auto& a : arms)
    if (a.name == kArmProposed) fcnn.emplace(load_fcnn(cfg, bb));
  auto [train, val] = cfg.load_dataset();
  SweepContext ctx;
  ctx.backbone = &bb;
  ctx.fcnn = fcnn ? &*fcnn : nullptr;
  ctx.data = &val;
  ctx.pipeline = pipeline_of(cfg);
  if (!cfg.sweep.image_codec.encode_command.empty()) ctx.image_codec = cfg.sweep.image_codec;
  ctx.workers = cfg.workers;
  const auto pts = run_rate_accuracy(ctx, arms);
  ensure_dir(out);
  write_rate_csv((fs::path(out) / "rate_points.csv").string(), pts);
  write_text((fs::path(out) / "rate_accuracy.svg").string(), render_svg_plot(pts, "Rate-accuracy", "top-1 accuracy [%]"));
  for (const auto& p : pts) std::printf("%-15s %-6s bpp %.4f  acc %.2f%%\n", p.arm.c_str(), p.setting.c_str(), p.bpp, p.accuracy);
  if (fcnn) {
    for (const char* anchor : {kArmFeatureAnchor, kArmImageAnchor})
      if (!curve_of(pts, anchor).empty()) print_bd(pts, anchor, kArmProposed);
  }
  return 0;
}

int cmd_psnr_eval(const ExperimentConfig& cfg, const std::string& out) {
  auto bb = load_backbone(cfg);
  const FcnnModel fcnn = load_fcnn(cfg, bb);
  const auto irnn_t = load_irnn(cfg, bb, false);
  const auto irnn_f = load_irnn(cfg, bb, true);
  auto [train, val] = cfg.load_dataset();
  PsnrContext ctx;
  ctx.backbone = &bb;
  ctx.fcnn = &fcnn;
  ctx.irnn_texture = &irnn_t;
  ctx.irnn_feature = &irnn_f;
  ctx.data = &val;
  ctx.pipeline = pipeline_of(cfg);
  ctx.workers = cfg.workers;
  const PsnrSummary s = run_psnr_eval(ctx);
  ensure_dir(out);
  write_psnr_csv((fs::path(out) / "psnr.csv").string(), s);
  for (const char* a : {kArmBicubic, kArmTextureSr, kArmTextureFeatureSr}) std::printf("%-20s %s dB\n", a, format_psnr(s.mean.at(a)).c_str());
  std::printf("texture-feature-sr minus texture-sr: %+.3f dB\n", s.feature_gain());
  return 0;
}

int cmd_bd(const std::string& csv, const std::string& anchor, const std::string& test, const std::string& mode) {
  const auto pts = read_rate_csv(csv);
  if (mode != "rate" && mode != "quality") throw ConfigError("mode must be rate or quality");
  const auto r = bd_metric(curve_of(pts, anchor), curve_of(pts, test), mode == "rate" ? BdMode::Rate : BdMode::Quality);
  if (mode == "rate") std::printf("BD-rate %s vs %s: %+.4f%% (log delta %+.6f)\n", test.c_str(), anchor.c_str(), r.value, r.delta);
  else std::printf("BD-quality %s vs %s: %+.4f\n", test.c_str(), anchor.c_str(), r.value);
  return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& csv, const std::string& ablation_csv,
               const std::vector<std::pair<std::string, std::string>>& methods) {
  if (!csv.empty()) {
    const auto pts = read_rate_csv(csv);
    std::vector<TableOneRow> rows;
    for (double t : cfg.sweep.targets) {
      for (const auto& [arm, label] : methods) {
        TableOneRow row{cfg.sweep.layer_label, t, label, std::nullopt, std::nullopt};
        if (const auto p = select_operating_point(pts, arm, t)) {
          row.bpp = p->bpp;
          row.compression_rate = p->compression_rate;
        }
        rows.push_back(row);
      }
    }
    std::cout << render_table_one(rows) << "\n";
  }
  if (!ablation_csv.empty()) {
    std::ifstream in(ablation_csv);
    if (!in) throw ConfigError("cannot read " + ablation_csv);
    std::string line;
    std::getline(in, line);
    std::vector<TableTwoRow> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string tex, frm, acc, dens;
      std::getline(ss, tex, ',');
      std::getline(ss, frm, ',');
      std::getline(ss, acc, ',');
      std::getline(ss, dens, ',');
      rows.push_back({ablation_variant(tex == "1", frm == "1"), std::stod(acc), std::stod(dens)});
    }
    std::cout << render_table_two(rows);
  }
  return 0;
}

int cmd_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, double density,
                 const std::string& out) {
  auto bb = load_backbone(cfg);
  auto [train, val] = cfg.load_dataset();
  const auto ftr = features_for(cfg, bb, train), fva = features_for(cfg, bb, val);
  const Index C = bb.feature_shape()[0];
  const Index keep = std::max<Index>(1, static_cast<Index>(std::llround(density * static_cast<double>(C))));
  std::vector<TableTwoRow> rows;
  ensure_dir(out);
  std::ofstream csv((fs::path(out) / "ablation.csv").string());
  csv << "texture,frm,accuracy,density\n";
  for (auto [tex, frm] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    double acc = 0;
    for (auto seed : seeds) {
      TrainConfig tc = cfg.fcnn;
      tc.seed = seed;
      tc.texture_on = tex;
      tc.frm_on = frm;
      const auto res = train_fcnn(tc, bb, ftr, fva);
      acc += evaluate_fcnn(res.model, bb, fva, keep).accuracy;
    }
    acc /= static_cast<double>(seeds.size());
    const double dens = static_cast<double>(keep) / static_cast<double>(C);
    rows.push_back({ablation_variant(tex, frm), acc, dens});
    csv << tex << ',' << frm << ',' << acc << ',' << dens << '\n';
  }
  std::cout << render_table_two(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture-guided feature compression toolkit"};
  app.require_subcommand(1);
  std::string config_path, out = "out";
  auto add_common = [&](CLI::App* s) {
    s->add_option("-c,--config", config_path, "experiment config (JSON)");
    s->add_option("-o,--out", out, "output directory");
  };

  auto* mk = app.add_subcommand("make-dataset", "write the configured dataset as PPM files");
  add_common(mk);
  auto* tb = app.add_subcommand("train-backbone", "train the classifier that is later frozen");
  add_common(tb);
  auto* tf = app.add_subcommand("train-fcnn", "train channel selection and feature reconstruction");
  add_common(tf);
  auto* ti = app.add_subcommand("train-irnn", "train the image reconstruction network");
  add_common(ti);
  bool texture_only = false;
  ti->add_flag("--texture-only", texture_only, "zero the features (Texture-SR)");

  auto* enc = app.add_subcommand("encode", "encode an image into feature and texture streams");
  std::string image, prefix = "out/stream";
  enc->add_option("-c,--config", config_path);
  enc->add_option("-i,--image", image, "input PPM")->required();
  enc->add_option("-p,--prefix", prefix, "output prefix; writes <prefix>.tgfc and <prefix>.tgtx");

  auto* dec = app.add_subcommand("decode", "decode streams: class prediction and preview image");
  std::string feat_path, tex_path, preview, reference;
  dec->add_option("-c,--config", config_path);
  dec->add_option("--features", feat_path)->required();
  dec->add_option("--texture", tex_path)->required();
  dec->add_option("--preview", preview, "write the preview PPM here");
  dec->add_option("--reference", reference, "original image for a preview PSNR");

  auto* sw = app.add_subcommand("sweep", "rate-accuracy sweep over the validation split");
  add_common(sw);
  auto* pe = app.add_subcommand("psnr-eval", "bicubic vs Texture-SR vs Texture-Feature-SR");
  add_common(pe);

  auto* bd = app.add_subcommand("bd", "Bjontegaard delta between two arms of a rate_points.csv");
  std::string csv, anchor = kArmFeatureAnchor, test = kArmProposed, mode = "rate";
  bd->add_option("--csv", csv)->required();
  bd->add_option("--anchor", anchor);
  bd->add_option("--test", test);
  bd->add_option("--mode", mode)->check(CLI::IsMember({"rate", "quality"}));

  auto* rp = app.add_subcommand("report", "render rate and ablation tables");
  std::string rates_csv, ablation_csv;
  std::vector<std::string> method_specs = {"feature-anchor=Feature Anchor", "proposed=Proposed"};
  rp->add_option("-c,--config", config_path);
  rp->add_option("--rates", rates_csv, "rate_points.csv");
  rp->add_option("--ablation", ablation_csv, "ablation.csv");
  rp->add_option("--method", method_specs, "arm=label pairs for the rate table");

  auto* ab = app.add_subcommand("ablation", "train the four ablation variants and compare at matched density");
  add_common(ab);
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  double density = 0.25;
  ab->add_option("--seeds", seeds);
  ab->add_option("--density", density)->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);
  try {
    const ExperimentConfig cfg = load_config(config_path);
    if (*mk) return cmd_make_dataset(cfg, out);
    if (*tb) return cmd_train_backbone(cfg);
    if (*tf) return cmd_train_fcnn(cfg, out);
    if (*ti) return cmd_train_irnn(cfg, texture_only, out);
    if (*enc) {
      ensure_dir(fs::path(prefix).parent_path().string());
      return cmd_encode(cfg, image, prefix);
    }
    if (*dec) return cmd_decode(cfg, feat_path, tex_path, preview, reference);
    if (*sw) return cmd_sweep(cfg, out);
    if (*pe) return cmd_psnr_eval(cfg, out);
    if (*bd) return cmd_bd(csv, anchor, test, mode);
    if (*rp) {
      std::vector<std::pair<std::string, std::string>> methods;
      for (const auto& m : method_specs) {
        const auto eq = m.find('=');
        methods.emplace_back(m.substr(0, eq), eq == std::string::npos ? m : m.substr(eq + 1));
      }
      return cmd_report(cfg, rates_csv, ablation_csv, methods);
    }
    if (*ab) return cmd_ablation(cfg, seeds, density, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

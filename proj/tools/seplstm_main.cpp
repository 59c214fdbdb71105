#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seplstm/seplstm.hpp"

namespace fs = std::filesystem;
using namespace seplstm;

namespace {

// SEPLSTM_LOG=quiet|info|debug (default info). Progress and resolved-config
// lines go to stderr so stdout stays machine-parseable under --csv.
int log_level() {
  const char* env = std::getenv("SEPLSTM_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

const int g_log = log_level();

void info(const std::string& msg) {
  if (g_log >= 1) std::cerr << msg << "\n";
}

void debug(const std::string& msg) {
  if (g_log >= 2) std::cerr << msg << "\n";
}

std::string seq_tag(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03d", i);
  return buf;
}

std::string frame_tag(int f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%02d", f);
  return buf;
}

CellVariant require_variant(const std::string& s) {
  const auto v = parse_variant(s);
  if (!v)
    throw CLI::ValidationError("--variant",
                               "unknown variant '" + s + "' (standard|spatial|depth|sep)");
  return *v;
}

std::vector<SeqSample> load_dir(const std::string& dir) {
  std::vector<SeqSample> out;
  for (int i = 0;; ++i) {
    const fs::path labels = fs::path(dir) / (seq_tag(i) + ".labels.segq");
    if (!fs::exists(labels)) break;
    SeqSample s;
    s.labels = load_segq(labels.string());
    for (int f = 0;; ++f) {
      const fs::path frame = fs::path(dir) / (seq_tag(i) + "." + frame_tag(f) + ".tnsr");
      if (!fs::exists(frame)) break;
      s.images.push_back(load_tensor(frame.string()));
    }
    if (s.images.size() != s.labels.frames.size())
      throw std::runtime_error(seq_tag(i) + ": " + std::to_string(s.images.size()) +
                               " frame tensors but " + std::to_string(s.labels.frames.size()) +
                               " label maps");
    out.push_back(std::move(s));
  }
  if (out.empty())
    throw std::runtime_error("no sequences found in " + dir + " (expected seq_000.labels.segq)");
  return out;
}

struct FlopsOpts {
  std::string variant;
  int kx = 3, ky = 3, in = 1, out = 1, dx = 1, dy = 1;
  bool csv = false;
};

int cmd_flops(const FlopsOpts& o) {
  const CellConfig cfg{require_variant(o.variant), o.in, o.out, o.kx, o.ky};
  cfg.validate();
  info("resolved: flops variant=" + std::string(variant_name(cfg.variant)) +
       " kx=" + std::to_string(o.kx) + " ky=" + std::to_string(o.ky) +
       " in=" + std::to_string(o.in) + " out=" + std::to_string(o.out) +
       " dx=" + std::to_string(o.dx) + " dy=" + std::to_string(o.dy));
  const FlopReport r = analytic_flops(cfg, o.dx, o.dy);
  if (o.csv) {
    std::cout << flops_csv_header() << "\n" << flops_csv_row(cfg, r) << "\n";
    return 0;
  }
  std::printf("variant   %s\n", variant_name(cfg.variant));
  std::printf("conv      %lld\n", static_cast<long long>(r.convolutions));
  std::printf("hadamard  %lld\n", static_cast<long long>(r.hadamard));
  std::printf("sigmoid   %lld\n", static_cast<long long>(r.sigmoid));
  std::printf("tanh      %lld\n", static_cast<long long>(r.tanh));
  std::printf("add       %lld\n", static_cast<long long>(r.additions));
  std::printf("total     %lld\n", static_cast<long long>(r.total()));
  std::printf("params    %lld\n", static_cast<long long>(param_count(cfg)));
  std::printf("ratio_vs_standard  %.4f\n", ratio_vs_standard(cfg, o.dx, o.dy));
  return 0;
}

struct GradcheckOpts {
  std::string variant;
  std::uint64_t seed = 0;
  double eps = 1e-5, tol = 1e-4;
  int in = 3, out = 3, kx = 3, ky = 3, dx = 5, dy = 4;
  bool csv = false;
};

int cmd_gradcheck(const GradcheckOpts& o) {
  const CellConfig cfg{require_variant(o.variant), o.in, o.out, o.kx, o.ky};
  cfg.validate();
  info("resolved: gradcheck variant=" + std::string(variant_name(cfg.variant)) +
       " in=" + std::to_string(o.in) + " out=" + std::to_string(o.out) +
       " kx=" + std::to_string(o.kx) + " ky=" + std::to_string(o.ky) +
       " dx=" + std::to_string(o.dx) + " dy=" + std::to_string(o.dy) +
       " seed=" + std::to_string(o.seed) + " eps=" + std::to_string(o.eps) +
       " tol=" + std::to_string(o.tol));
  const GradCheckReport rep = check_cell_gradients(cfg, o.seed, o.eps, o.tol, o.dx, o.dy);
  if (o.csv) {
    std::cout << "group,max_rel_err,checked,pass\n";
    for (const auto& g : rep.groups)
      std::printf("%s,%.3e,%d,%d\n", g.group.c_str(), g.max_rel_err, g.checked,
                  g.max_rel_err < rep.tol ? 1 : 0);
  } else {
    for (const auto& g : rep.groups)
      std::printf("%-28s max_rel_err %.3e  [%s]\n", g.group.c_str(), g.max_rel_err,
                  g.max_rel_err < rep.tol ? "pass" : "FAIL");
  }
  if (!rep.pass) {
    std::cerr << "gradcheck FAILED: worst group " << rep.worst_group << " rel err "
              << rep.worst_err << " (tol " << rep.tol << ")\n";
    return 2;
  }
  return 0;
}

struct BenchOpts {
  std::string variant;
  int repeat = 11, warmup = 2;
  int in = 64, out = 64, kx = 3, ky = 3, dx = 64, dy = 64;
  bool csv = false;
};

int cmd_bench(const BenchOpts& o) {
  const CellConfig cfg{require_variant(o.variant), o.in, o.out, o.kx, o.ky};
  cfg.validate();
  info("resolved: bench variant=" + std::string(variant_name(cfg.variant)) +
       " in=" + std::to_string(o.in) + " out=" + std::to_string(o.out) +
       " kx=" + std::to_string(o.kx) + " ky=" + std::to_string(o.ky) +
       " dx=" + std::to_string(o.dx) + " dy=" + std::to_string(o.dy) +
       " repeat=" + std::to_string(o.repeat) + " warmup=" + std::to_string(o.warmup));
  const CellWeights w = init_weights(cfg, 42);
  Rng rng(43);
  Tensor x(cfg.in_channels, o.dx, o.dy);
  for (double& v : x.data) v = rng.normal();
  CellState state = zero_state(cfg, o.dx, o.dy);
  const BenchStats s = run_bench([&] { forward(cfg, w, x, state); }, o.repeat, o.warmup);
  const long long flops = analytic_flops(cfg, o.dx, o.dy).total();
  if (o.csv) {
    std::cout << "variant,kx,ky,in,out,dx,dy,repeats,median_ms,p10_ms,p90_ms,flops\n";
    std::printf("%s,%d,%d,%d,%d,%d,%d,%d,%.4f,%.4f,%.4f,%lld\n", variant_name(cfg.variant), o.kx,
                o.ky, o.in, o.out, o.dx, o.dy, s.repeats, s.median_ms, s.p10_ms, s.p90_ms, flops);
  } else {
    std::printf("median_ms %.4f\np10_ms    %.4f\np90_ms    %.4f\nflops     %lld\ngflops_s  %.3f\n",
                s.median_ms, s.p10_ms, s.p90_ms, flops,
                s.median_ms > 0 ? flops / (s.median_ms * 1e6) : 0.0);
  }
  return 0;
}

struct MetricsOpts {
  std::string pred, gt;
  bool csv = false;
};

void print_metric(bool csv, bool& header_done, const std::string& name, double value) {
  if (csv) {
    if (!header_done) {
      std::cout << "metric,value\n";
      header_done = true;
    }
    std::printf("%s,%.10g\n", name.c_str(), value);
  } else {
    std::printf("%-14s %.6f\n", name.c_str(), value);
  }
}

int cmd_metrics(const std::string& sub, const MetricsOpts& o) {
  info("resolved: metrics " + sub + " pred=" + o.pred + (o.gt.empty() ? "" : " gt=" + o.gt));
  if (sub != "mfip" && o.gt.empty())
    throw CLI::ValidationError("--gt", sub + " compares against ground truth; --gt is required");
  const SegSequence pred = load_segq(o.pred);
  std::optional<SegSequence> gt;
  if (!o.gt.empty()) gt = load_segq(o.gt);
  bool header = false;
  if (sub == "mfip") {
    print_metric(o.csv, header, "mfip_raw", mfip(pred));
    print_metric(o.csv, header, "mfip_per_pair", mfip_per_pair(pred));
    return 0;
  }
  if (sub == "mfp") {
    print_metric(o.csv, header, "mfp_raw", mfp(pred, *gt));
    print_metric(o.csv, header, "mfp_per_pair", mfp_per_pair(pred, *gt));
  } else if (sub == "acc") {
    detail::check_aligned(pred, *gt);
    double acc = 0.0;
    for (std::size_t t = 0; t < pred.frames.size(); ++t)
      acc += pixel_accuracy(pred.frames[t], gt->frames[t]);
    print_metric(o.csv, header, "accuracy", acc / static_cast<double>(pred.frames.size()));
  } else {  // miou
    detail::check_aligned(pred, *gt);
    print_metric(o.csv, header, "miou",
                 miou(pred.frames, gt->frames, gt->frames.front().num_classes));
  }
  return 0;
}

struct GenOpts {
  std::string out_dir;
  int seqs = 8, frames = 8, height = 16, width = 16;
  double noise = 0.15;
  std::uint64_t seed = 0;
  bool noisy_images = false;
};

int cmd_gen(const GenOpts& o) {
  info("resolved: gen out=" + o.out_dir + " seqs=" + std::to_string(o.seqs) +
       " frames=" + std::to_string(o.frames) + " h=" + std::to_string(o.height) +
       " w=" + std::to_string(o.width) + " noise=" + std::to_string(o.noise) +
       " seed=" + std::to_string(o.seed) +
       " noisy_images=" + std::to_string(o.noisy_images ? 1 : 0));
  fs::create_directories(o.out_dir);
  Rng master(o.seed);
  for (int i = 0; i < o.seqs; ++i) {
    const SceneSpec spec = random_scene_spec(o.height, o.width, o.frames, o.noise,
                                             master.split(100 + i).next_u64(), o.noisy_images);
    const Scene scene = generate(spec);
    const fs::path base = fs::path(o.out_dir) / seq_tag(i);
    save_segq(base.string() + ".labels.segq", scene.labels);
    save_segq(base.string() + ".noisy.segq", scene.noisy_labels);
    for (int f = 0; f < static_cast<int>(scene.images.size()); ++f)
      save_tensor(base.string() + "." + frame_tag(f) + ".tnsr", scene.images[f]);
    debug("wrote " + base.string() + ".* (" + std::to_string(scene.images.size()) + " frames)");
  }
  info("generated " + std::to_string(o.seqs) + " sequences in " + o.out_dir);
  return 0;
}

struct TrainOpts {
  std::string data, model, variant = "none";
  int features = 8, steps = 300, seq_len = 4, cell_kernel = 3;
  double lr = 0.05;
  std::uint64_t seed = 0;
  bool csv = false;
};

int cmd_train(const TrainOpts& o) {
  info("resolved: train data=" + o.data + " model=" + o.model + " variant=" + o.variant +
       " features=" + std::to_string(o.features) + " steps=" + std::to_string(o.steps) +
       " lr=" + std::to_string(o.lr) + " seq_len=" + std::to_string(o.seq_len) +
       " seed=" + std::to_string(o.seed));
  const std::vector<SeqSample> data = load_dir(o.data);
  ToyModelConfig mc;
  mc.in_channels = data.front().images.front().channels;
  mc.features = o.features;
  mc.num_classes = data.front().labels.frames.front().num_classes;
  mc.cell_kernel = o.cell_kernel;
  if (o.variant != "none" && !o.variant.empty()) mc.cell = require_variant(o.variant);
  ToyModel model = init_model(mc, o.seed);

  TrainConfig tc;
  tc.steps = o.steps;
  tc.base_lr = o.lr;
  tc.sequence_length = o.seq_len;
  tc.seed = o.seed;
  const TrainResult result = train(model, data, tc);

  if (o.csv) {
    std::cout << "step,loss,lr\n";
    for (const LossPoint& p : result.curve)
      std::printf("%d,%.8f,%.8f\n", p.step, p.loss, p.lr);
  } else {
    const int stride = std::max(1, o.steps / 10);
    for (const LossPoint& p : result.curve)
      if (p.step % stride == 0 || p.step + 1 == o.steps)
        std::printf("step %4d  loss %.5f  lr %.5f\n", p.step, p.loss, p.lr);
  }
  if (!o.model.empty()) {
    save_model(o.model, model);
    info("saved model to " + o.model);
  }
  return 0;
}

struct EvalOpts {
  std::string data, model;
  bool csv = false;
};

int cmd_eval(const EvalOpts& o) {
  info("resolved: eval data=" + o.data + " model=" + o.model);
  const std::vector<SeqSample> data = load_dir(o.data);
  const ToyModel model = load_model(o.model);
  const EvalResult r = evaluate(model, data);
  if (o.csv) {
    std::cout << "accuracy,miou,mfip,mfp\n";
    std::printf("%.10g,%.10g,%.10g,%.10g\n", r.accuracy, r.miou, r.mfip, r.mfp);
  } else {
    std::printf("accuracy  %.6f\nmiou      %.6f\nmfip      %.6f\nmfp       %.6f\n", r.accuracy,
                r.miou, r.mfip, r.mfp);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convLSTM cell cost model, temporal-flicker metrics and toy trainer"};
  app.require_subcommand(1);

  FlopsOpts fo;
  CLI::App* flops = app.add_subcommand("flops", "analytic FLOP and parameter report for one cell");
  flops->add_option("--variant", fo.variant, "standard|spatial|depth|sep")->required();
  flops->add_option("--kx", fo.kx, "kernel extent, first axis");
  flops->add_option("--ky", fo.ky, "kernel extent, second axis");
  flops->add_option("--in", fo.in, "input channels")->required();
  flops->add_option("--out", fo.out, "output channels")->required();
  flops->add_option("--dx", fo.dx, "map extent, first axis")->required();
  flops->add_option("--dy", fo.dy, "map extent, second axis")->required();
  flops->add_flag("--csv", fo.csv, "machine-readable output");

  GradcheckOpts go;
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  grad->add_option("--variant", go.variant, "standard|spatial|depth|sep")->required();
  grad->add_option("--seed", go.seed, "rng seed");
  grad->add_option("--eps", go.eps, "finite-difference step");
  grad->add_option("--tol", go.tol, "max relative error");
  grad->add_option("--in", go.in, "input channels");
  grad->add_option("--out", go.out, "output channels");
  grad->add_option("--kx", go.kx, "kernel extent, first axis");
  grad->add_option("--ky", go.ky, "kernel extent, second axis");
  grad->add_option("--dx", go.dx, "map extent, first axis");
  grad->add_option("--dy", go.dy, "map extent, second axis");
  grad->add_flag("--csv", go.csv, "machine-readable output");

  BenchOpts bo;
  CLI::App* bench = app.add_subcommand("bench", "wall-clock forward-pass timings");
  bench->add_option("--variant", bo.variant, "standard|spatial|depth|sep")->required();
  bench->add_option("--repeat", bo.repeat, "measured repetitions");
  bench->add_option("--warmup", bo.warmup, "unmeasured warmup runs");
  bench->add_option("--in", bo.in, "input channels");
  bench->add_option("--out", bo.out, "output channels");
  bench->add_option("--kx", bo.kx, "kernel extent, first axis");
  bench->add_option("--ky", bo.ky, "kernel extent, second axis");
  bench->add_option("--dx", bo.dx, "map extent, first axis");
  bench->add_option("--dy", bo.dy, "map extent, second axis");
  bench->add_flag("--csv", bo.csv, "machine-readable output");

  MetricsOpts mo;
  CLI::App* metrics = app.add_subcommand("metrics", "segmentation-sequence metrics");
  metrics->require_subcommand(1);
  std::vector<CLI::App*> metric_subs;
  const std::map<std::string, std::string> metric_desc = {
      {"mfp", "flicker rate of prediction errors (needs --gt)"},
      {"mfip", "flicker rate of the prediction itself"},
      {"acc", "mean per-frame pixel accuracy (needs --gt)"},
      {"miou", "mean intersection over union (needs --gt)"}};
  for (const char* name : {"mfp", "mfip", "acc", "miou"}) {
    CLI::App* sub = metrics->add_subcommand(name, metric_desc.at(name));
    sub->add_option("--pred", mo.pred, "predicted sequence (SEGQ)")->required();
    sub->add_option("--gt", mo.gt, "ground-truth sequence (SEGQ)");
    sub->add_flag("--csv", mo.csv, "machine-readable output");
    metric_subs.push_back(sub);
  }

  GenOpts geno;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic moving-shapes dataset");
  gen->add_option("--out", geno.out_dir, "output directory")->required();
  gen->add_option("--seqs", geno.seqs, "number of sequences");
  gen->add_option("--frames", geno.frames, "frames per sequence");
  gen->add_option("--height", geno.height, "map height");
  gen->add_option("--width", geno.width, "map width");
  gen->add_option("--noise", geno.noise, "label flip probability");
  gen->add_option("--seed", geno.seed, "rng seed");
  gen->add_flag("--noisy-images", geno.noisy_images,
                "render input frames from the noisy label stream");

  TrainOpts to;
  CLI::App* trainc = app.add_subcommand("train", "train the toy segmenter");
  trainc->add_option("--data", to.data, "dataset directory from gen")->required();
  trainc->add_option("--model", to.model, "output checkpoint path (TOYM)");
  trainc->add_option("--variant", to.variant, "none|standard|spatial|depth|sep");
  trainc->add_option("--features", to.features, "stem feature channels");
  trainc->add_option("--steps", to.steps, "training steps");
  trainc->add_option("--lr", to.lr, "base learning rate");
  trainc->add_option("--seq-len", to.seq_len, "frames per training clip");
  trainc->add_option("--cell-kernel", to.cell_kernel, "cell kernel extent");
  trainc->add_option("--seed", to.seed, "rng seed");
  trainc->add_flag("--csv", to.csv, "emit the loss curve as step,loss,lr");

  EvalOpts eo;
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  evalc->add_option("--data", eo.data, "dataset directory from gen")->required();
  evalc->add_option("--model", eo.model, "checkpoint path (TOYM)")->required();
  evalc->add_flag("--csv", eo.csv, "machine-readable output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*flops) return cmd_flops(fo);
    if (*grad) return cmd_gradcheck(go);
    if (*bench) return cmd_bench(bo);
    if (*metrics)
      for (CLI::App* sub : metric_subs)
        if (*sub) return cmd_metrics(sub->get_name(), mo);
    if (*gen) return cmd_gen(geno);
    if (*trainc) return cmd_train(to);
    if (*evalc) return cmd_eval(eo);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return static_cast<int>(CLI::ExitCodes::ValidationError);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

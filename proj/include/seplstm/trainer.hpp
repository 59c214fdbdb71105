#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seplstm/cell.hpp"
#include "seplstm/dataset.hpp"
#include "seplstm/metrics.hpp"
#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"

namespace seplstm {

// Per-pixel video segmenter at desk scale: a 3x3 conv stem with tanh, an
// optional convLSTM cell between stem and head, and a 1x1 conv head feeding
// a per-pixel softmax. Without a cell the model is a stateless per-frame
// baseline; with one, the recurrent layer sits directly before the softmax.
struct ToyModelConfig {
  int in_channels = 3;
  int features = 8;
  int num_classes = 3;
  std::optional<CellVariant> cell;  // nullopt = stateless baseline
  int cell_kernel = 3;

  void validate() const {
    if (in_channels < 1 || features < 1 || num_classes < 2)
      throw std::invalid_argument("toy model: bad channel configuration");
    if (cell_kernel < 1 || cell_kernel % 2 == 0)
      throw std::invalid_argument("toy model: cell kernel must be odd");
  }
};

struct ToyModel {
  ToyModelConfig config;
  Kernel stem;
  std::vector<double> stem_bias;
  CellConfig cell_config;  // meaningful only when config.cell is set
  CellWeights cell;
  Kernel head;
  std::vector<double> head_bias;
};

inline ToyModel init_model(const ToyModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ToyModel m;
  m.config = cfg;
  Rng rng = Rng(seed).split(7);

  m.stem = Kernel(cfg.features, cfg.in_channels, 3, 3);
  const double s_stem = 1.0 / std::sqrt(static_cast<double>(cfg.in_channels * 9));
  for (double& v : m.stem.data) v = rng.uniform(-s_stem, s_stem);
  m.stem_bias.assign(cfg.features, 0.0);

  if (cfg.cell) {
    m.cell_config = {*cfg.cell, cfg.features, cfg.features, cfg.cell_kernel, cfg.cell_kernel};
    m.cell = init_weights(m.cell_config, rng.next_u64());
  }

  m.head = Kernel(cfg.num_classes, cfg.features, 1, 1);
  const double s_head = 1.0 / std::sqrt(static_cast<double>(cfg.features));
  for (double& v : m.head.data) v = rng.uniform(-s_head, s_head);
  m.head_bias.assign(cfg.num_classes, 0.0);
  return m;
}

// One labeled video clip.
struct SeqSample {
  std::vector<Tensor> images;
  SegSequence labels;
};

struct TrainConfig {
  int steps = 300;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int sequence_length = 4;  // frames per training clip; loss on the last one
  std::uint64_t seed = 0;
};

inline double poly_lr(const TrainConfig& cfg, int step) {
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(step) / cfg.steps, cfg.poly_power);
}

namespace detail {

struct StepCache {
  Tensor input;
  Tensor stem_act;  // tanh(conv(x))
  ForwardCache cell_cache;
};

struct SeqForward {
  std::vector<StepCache> steps;
  Tensor last_features;  // input to the head at the last frame
  Tensor last_logits;
};

inline SeqForward forward_sequence(const ToyModel& m, const std::vector<Tensor>& frames,
                                   bool with_cache) {
  if (frames.empty()) throw std::invalid_argument("forward_sequence: empty clip");
  SeqForward fwd;
  CellState state;
  if (m.config.cell) state = zero_state(m.cell_config, frames[0].height, frames[0].width);

  for (std::size_t t = 0; t < frames.size(); ++t) {
    StepCache sc;
    sc.input = frames[t];
    sc.stem_act = tanh(conv2d(frames[t], m.stem, &m.stem_bias));
    if (m.config.cell) {
      state = forward(m.cell_config, m.cell, sc.stem_act, state, nullptr,
                      with_cache ? &sc.cell_cache : nullptr);
      if (t + 1 == frames.size()) fwd.last_features = state.h;
    } else if (t + 1 == frames.size()) {
      fwd.last_features = sc.stem_act;
    }
    if (with_cache) fwd.steps.push_back(std::move(sc));
  }
  fwd.last_logits = conv2d(fwd.last_features, m.head, &m.head_bias);
  return fwd;
}

}  // namespace detail

// Per-pixel softmax over the channel axis.
inline Tensor softmax_channels(const Tensor& logits) {
  Tensor p = logits;
  for (int y = 0; y < logits.height; ++y)
    for (int x = 0; x < logits.width; ++x) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < logits.channels; ++c) mx = std::max(mx, logits.at(c, y, x));
      double z = 0.0;
      for (int c = 0; c < logits.channels; ++c) z += std::exp(logits.at(c, y, x) - mx);
      for (int c = 0; c < logits.channels; ++c)
        p.at(c, y, x) = std::exp(logits.at(c, y, x) - mx) / z;
    }
  return p;
}

// Mean per-pixel cross entropy against integer labels.
inline double cross_entropy(const Tensor& logits, const SegMap& labels) {
  if (logits.height != labels.h || logits.width != labels.w)
    shape_error("cross_entropy: logits and labels disagree");
  const Tensor p = softmax_channels(logits);
  double loss = 0.0;
  for (int y = 0; y < labels.h; ++y)
    for (int x = 0; x < labels.w; ++x)
      loss -= std::log(std::max(p.at(labels.at(y, x), y, x), 1e-300));
  return loss / (static_cast<double>(labels.h) * labels.w);
}

struct ModelGrads {
  Kernel stem;
  std::vector<double> stem_bias;
  CellWeights cell;
  Kernel head;
  std::vector<double> head_bias;
};

inline ModelGrads zero_grads(const ToyModel& m) {
  ModelGrads g;
  g.stem = Kernel(m.stem.out_channels, m.stem.in_channels, m.stem.kh, m.stem.kw);
  g.stem_bias.assign(m.stem_bias.size(), 0.0);
  if (m.config.cell) g.cell = zero_weights(m.cell_config);
  g.head = Kernel(m.head.out_channels, m.head.in_channels, m.head.kh, m.head.kw);
  g.head_bias.assign(m.head_bias.size(), 0.0);
  return g;
}

struct SequenceGrads {
  ModelGrads params;
  std::vector<Tensor> inputs;  // gradient of the loss w.r.t. every input frame
  double loss = 0.0;
};

// Full backward pass of the last-frame cross-entropy loss through head,
// cell rollout (when present) and stem. Gradients flow to every frame via
// the recurrent state; without a cell only the last frame has any path.
inline SequenceGrads backward_sequence(const ToyModel& m, const std::vector<Tensor>& frames,
                                       const SegMap& target) {
  detail::SeqForward fwd = detail::forward_sequence(m, frames, true);
  const int T = static_cast<int>(frames.size());
  const int hw = frames[0].height * frames[0].width;

  SequenceGrads out;
  out.params = zero_grads(m);
  out.loss = cross_entropy(fwd.last_logits, target);

  // d loss / d logits = (softmax - onehot) / pixel count
  Tensor dlogits = softmax_channels(fwd.last_logits);
  for (int y = 0; y < target.h; ++y)
    for (int x = 0; x < target.w; ++x) dlogits.at(target.at(y, x), y, x) -= 1.0;
  for (double& v : dlogits.data) v /= hw;

  Kernel dhead = conv2d_kernel_grad(fwd.last_features, m.head, dlogits);
  for (std::size_t i = 0; i < dhead.data.size(); ++i) out.params.head.data[i] += dhead.data[i];
  auto dhb = bias_grad(dlogits);
  for (std::size_t i = 0; i < dhb.size(); ++i) out.params.head_bias[i] += dhb[i];
  Tensor dfeat = conv2d_input_grad(m.head, dlogits);

  // gradient reaching each frame's stem activation
  std::vector<Tensor> dstem_act(T, Tensor(m.config.features, frames[0].height, frames[0].width));
  if (m.config.cell) {
    Tensor dh = dfeat;
    Tensor dc(m.config.features, frames[0].height, frames[0].width);
    for (int t = T - 1; t >= 0; --t) {
      CellGrads cg = backward(m.cell_config, m.cell, fwd.steps[t].cell_cache, dh, dc);
      for_each_param_pair(out.params.cell, cg.dweights, [](double& a, const double& b) { a += b; });
      dstem_act[t] = std::move(cg.dx);
      dh = std::move(cg.dstate.h);
      dc = std::move(cg.dstate.c);
    }
  } else {
    dstem_act[T - 1] = dfeat;
  }

  out.inputs.assign(T, Tensor(m.config.in_channels, frames[0].height, frames[0].width));
  for (int t = 0; t < T; ++t) {
    Tensor dpre = dstem_act[t];
    const Tensor& act = fwd.steps[t].stem_act;
    for (std::size_t i = 0; i < dpre.data.size(); ++i)
      dpre.data[i] *= 1.0 - act.data[i] * act.data[i];
    Kernel dk = conv2d_kernel_grad(frames[t], m.stem, dpre);
    for (std::size_t i = 0; i < dk.data.size(); ++i) out.params.stem.data[i] += dk.data[i];
    auto db = bias_grad(dpre);
    for (std::size_t i = 0; i < db.size(); ++i) out.params.stem_bias[i] += db[i];
    out.inputs[t] = conv2d_input_grad(m.stem, dpre);
  }
  return out;
}

struct LossPoint {
  int step;
  double loss;
  double lr;
};

struct TrainResult {
  std::vector<LossPoint> curve;
};

namespace detail {

// v = momentum*v + (g + wd*w); w -= lr*v
inline void sgd_update(double& w, double g, double& v, double lr, double momentum, double wd) {
  v = momentum * v + (g + wd * w);
  w -= lr * v;
}

}  // namespace detail

// SGD with momentum, L2 weight decay and the poly learning-rate schedule.
// Cell state is zeroed at every sequence start; the loss is computed on the
// last frame only while gradients flow through the whole rollout. Sequences
// are visited in a seeded random order, one clip per step.
inline TrainResult train(ToyModel& m, const std::vector<SeqSample>& data, const TrainConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("train: negative step count");
  TrainResult result;
  if (cfg.steps == 0) return result;
  if (data.empty()) throw std::invalid_argument("train: no training sequences");
  for (const SeqSample& s : data)
    if (static_cast<int>(s.images.size()) < cfg.sequence_length)
      throw std::invalid_argument("train: sequence shorter than the configured clip length");

  ModelGrads vel = zero_grads(m);
  Rng order_rng = Rng(cfg.seed).split(11);

  for (int step = 0; step < cfg.steps; ++step) {
    const double lr = poly_lr(cfg, step);
    const SeqSample& sample = data[order_rng.uniform_int(data.size())];
    std::vector<Tensor> clip(sample.images.begin(), sample.images.begin() + cfg.sequence_length);
    const SegMap& target = sample.labels.frames[cfg.sequence_length - 1];

    SequenceGrads g = backward_sequence(m, clip, target);
    if (!std::isfinite(g.loss))
      throw std::runtime_error("train: loss is not finite at step " + std::to_string(step) +
                               " (lr " + std::to_string(lr) + ")");

    for (std::size_t i = 0; i < m.stem.data.size(); ++i)
      detail::sgd_update(m.stem.data[i], g.params.stem.data[i], vel.stem.data[i], lr, cfg.momentum,
                         cfg.weight_decay);
    for (std::size_t i = 0; i < m.stem_bias.size(); ++i)
      detail::sgd_update(m.stem_bias[i], g.params.stem_bias[i], vel.stem_bias[i], lr, cfg.momentum,
                         0.0);
    if (m.config.cell) {
      const double mom = cfg.momentum, wd = cfg.weight_decay;
      for (int gi = 0; gi < 4; ++gi) {
        for (int p = 0; p < 2; ++p) {
          auto& wpath = p ? m.cell.gates[gi].h_path : m.cell.gates[gi].x_path;
          auto& gpath = p ? g.params.cell.gates[gi].h_path : g.params.cell.gates[gi].x_path;
          auto& vpath = p ? vel.cell.gates[gi].h_path : vel.cell.gates[gi].x_path;
          for (std::size_t s = 0; s < wpath.size(); ++s)
            for (std::size_t i = 0; i < wpath[s].kernel.data.size(); ++i)
              detail::sgd_update(wpath[s].kernel.data[i], gpath[s].kernel.data[i],
                                 vpath[s].kernel.data[i], lr, mom, wd);
        }
        for (std::size_t i = 0; i < m.cell.gates[gi].bias.size(); ++i)
          detail::sgd_update(m.cell.gates[gi].bias[i], g.params.cell.gates[gi].bias[i],
                             vel.cell.gates[gi].bias[i], lr, mom, 0.0);
      }
    }
    for (std::size_t i = 0; i < m.head.data.size(); ++i)
      detail::sgd_update(m.head.data[i], g.params.head.data[i], vel.head.data[i], lr, cfg.momentum,
                         cfg.weight_decay);
    for (std::size_t i = 0; i < m.head_bias.size(); ++i)
      detail::sgd_update(m.head_bias[i], g.params.head_bias[i], vel.head_bias[i], lr, cfg.momentum,
                         0.0);

    result.curve.push_back({step, g.loss, lr});
  }
  return result;
}

// Argmax segmentation for every frame of a clip, threading cell state.
inline SegSequence predict_sequence(const ToyModel& m, const std::vector<Tensor>& frames) {
  SegSequence pred;
  CellState state;
  if (m.config.cell) state = zero_state(m.cell_config, frames[0].height, frames[0].width);
  for (const Tensor& frame : frames) {
    Tensor feat = tanh(conv2d(frame, m.stem, &m.stem_bias));
    if (m.config.cell) {
      state = forward(m.cell_config, m.cell, feat, state);
      feat = state.h;
    }
    const Tensor logits = conv2d(feat, m.head, &m.head_bias);
    SegMap map(logits.height, logits.width, m.config.num_classes);
    for (int y = 0; y < logits.height; ++y)
      for (int x = 0; x < logits.width; ++x) {
        int best = 0;
        for (int c = 1; c < logits.channels; ++c)
          if (logits.at(c, y, x) > logits.at(best, y, x)) best = c;
        map.at(y, x) = static_cast<std::uint16_t>(best);
      }
    pred.frames.push_back(std::move(map));
  }
  return pred;
}

struct EvalResult {
  double accuracy = 0.0;
  double miou = 0.0;
  double mfip = 0.0;  // per frame pair, per-mille
  double mfp = 0.0;   // per frame pair, per-mille
};

inline EvalResult evaluate(const ToyModel& m, const std::vector<SeqSample>& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: no sequences");
  std::vector<SegMap> all_preds, all_gts;
  double acc_sum = 0.0, mfip_sum = 0.0, mfp_sum = 0.0;
  std::size_t acc_n = 0;
  for (const SeqSample& s : data) {
    SegSequence pred = predict_sequence(m, s.images);
    for (std::size_t t = 0; t < pred.frames.size(); ++t) {
      acc_sum += pixel_accuracy(pred.frames[t], s.labels.frames[t]);
      ++acc_n;
      all_preds.push_back(pred.frames[t]);
      all_gts.push_back(s.labels.frames[t]);
    }
    mfip_sum += mfip_per_pair(pred);
    mfp_sum += mfp_per_pair(pred, s.labels);
  }
  EvalResult r;
  r.accuracy = acc_sum / static_cast<double>(acc_n);
  r.miou = miou(all_preds, all_gts, data.front().labels.frames.front().num_classes);
  r.mfip = mfip_sum / static_cast<double>(data.size());
  r.mfp = mfp_sum / static_cast<double>(data.size());
  return r;
}

// --- model checkpoint, magic "TOYM" ------------------------------------------
// magic, version u8=1, u8 cell flag, u32le in_channels/features/num_classes,
// stem kernel + bias and head kernel + bias as TNSR records, then the cell
// checkpoint (CLSW) when the flag is set.

inline void save_model(const std::string& path, const ToyModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("TOYM", 4);
  os.put(1);
  os.put(m.config.cell ? 1 : 0);
  detail::put_u32(os, static_cast<std::uint32_t>(m.config.in_channels));
  detail::put_u32(os, static_cast<std::uint32_t>(m.config.features));
  detail::put_u32(os, static_cast<std::uint32_t>(m.config.num_classes));
  write_tensor(os, detail::pack_kernel(m.stem));
  Tensor sb(static_cast<int>(m.stem_bias.size()), 1, 1);
  sb.data = m.stem_bias;
  write_tensor(os, sb);
  write_tensor(os, detail::pack_kernel(m.head));
  Tensor hb(static_cast<int>(m.head_bias.size()), 1, 1);
  hb.data = m.head_bias;
  write_tensor(os, hb);
  if (m.config.cell) write_cell(os, m.cell_config, m.cell);
}

inline ToyModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TOYM", 4) != 0)
    throw std::runtime_error("not a TOYM checkpoint (bad magic)");
  const int version = is.get();
  if (version != 1) throw std::runtime_error("unsupported TOYM version");
  const bool has_cell = is.get() != 0;

  ToyModel m;
  m.config.in_channels = static_cast<int>(detail::get_u32(is));
  m.config.features = static_cast<int>(detail::get_u32(is));
  m.config.num_classes = static_cast<int>(detail::get_u32(is));
  m.stem = detail::unpack_kernel(read_tensor(is), m.config.features, m.config.in_channels);
  // stem kernel record is features*in_channels x 3 x 3
  Tensor sb = read_tensor(is);
  m.stem_bias = sb.data;
  m.head = detail::unpack_kernel(read_tensor(is), m.config.num_classes, m.config.features);
  Tensor hb = read_tensor(is);
  m.head_bias = hb.data;
  if (has_cell) {
    auto [ccfg, cw] = read_cell(is);
    m.cell_config = ccfg;
    m.cell = std::move(cw);
    m.config.cell = ccfg.variant;
    m.config.cell_kernel = ccfg.kernel_h;
  }
  m.config.validate();
  return m;
}

}  // namespace seplstm

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"

namespace seplstm {

// Four convolutional LSTM flavours. All share the gate wiring
//
//   input_gate  = sigmoid(conv_x(x) + conv_h(h_prev) + bias)
//   forget_gate = sigmoid(...)
//   candidate   = tanh(...)
//   output_gate = sigmoid(...)
//   c = forget_gate . c_prev + input_gate . candidate
//   h = output_gate . tanh(c)
//
// and differ only in what "conv" is:
//   Standard   one full KhxKw convolution per path
//   Spatial    Khx1 followed by 1xKw (height factor first)
//   Depthwise  one per-channel KhxKw filter per path (requires O == I)
//   Separable  per-channel KhxKw followed by a 1x1 channel mix
enum class CellVariant { Standard, Spatial, Depthwise, Separable };

inline const char* variant_name(CellVariant v) {
  switch (v) {
    case CellVariant::Standard: return "standard";
    case CellVariant::Spatial: return "spatial";
    case CellVariant::Depthwise: return "depth";
    case CellVariant::Separable: return "sep";
  }
  return "?";
}

inline std::optional<CellVariant> parse_variant(const std::string& s) {
  if (s == "standard" || s == "std") return CellVariant::Standard;
  if (s == "spatial") return CellVariant::Spatial;
  if (s == "depth" || s == "depthwise") return CellVariant::Depthwise;
  if (s == "sep" || s == "separable") return CellVariant::Separable;
  return std::nullopt;
}

struct CellConfig {
  CellVariant variant = CellVariant::Standard;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 3;  // Kx in the cost model
  int kernel_w = 3;  // Ky

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw std::invalid_argument("cell config: channel counts must be >= 1");
    if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0)
      throw std::invalid_argument("cell config: kernel dims must be odd and >= 1");
    if (variant == CellVariant::Depthwise && in_channels != out_channels)
      throw std::invalid_argument(
          "depthwise cell defines no channel mixing; it requires out_channels == in_channels");
  }
};

// One convolution stage of a gate path. Two-stage paths (spatial, separable)
// chain stages in application order.
struct ConvStage {
  Kernel kernel;
  bool depthwise = false;
};

struct GateWeights {
  std::vector<ConvStage> x_path;  // input-to-state
  std::vector<ConvStage> h_path;  // state-to-state
  std::vector<double> bias;       // one per output channel
};

// Gate order is fixed: input, forget, candidate, output.
struct CellWeights {
  std::array<GateWeights, 4> gates;
};

inline constexpr const char* kGateNames[4] = {"input", "forget", "candidate", "output"};

struct CellState {
  Tensor h;
  Tensor c;
};

inline CellState zero_state(const CellConfig& cfg, int height, int width) {
  return {Tensor(cfg.out_channels, height, width), Tensor(cfg.out_channels, height, width)};
}

namespace detail {

struct StageShape {
  int oc, ic, kh, kw;
  bool depthwise;
};

// Stage shapes for one gate path. The two-stage variants keep the path's
// output channel count after the first stage.
inline std::vector<StageShape> path_shapes(const CellConfig& cfg, bool state_path) {
  const int cin = state_path ? cfg.out_channels : cfg.in_channels;
  const int cout = cfg.out_channels;
  switch (cfg.variant) {
    case CellVariant::Standard:
      return {{cout, cin, cfg.kernel_h, cfg.kernel_w, false}};
    case CellVariant::Spatial:
      return {{cout, cin, cfg.kernel_h, 1, false}, {cout, cout, 1, cfg.kernel_w, false}};
    case CellVariant::Depthwise:
      return {{cin, 1, cfg.kernel_h, cfg.kernel_w, true}};
    case CellVariant::Separable:
      return {{cin, 1, cfg.kernel_h, cfg.kernel_w, true}, {cout, cin, 1, 1, false}};
  }
  throw std::logic_error("unreachable variant");
}

}  // namespace detail

inline CellWeights zero_weights(const CellConfig& cfg) {
  cfg.validate();
  CellWeights w;
  for (auto& gate : w.gates) {
    for (bool state_path : {false, true}) {
      auto& path = state_path ? gate.h_path : gate.x_path;
      for (const auto& s : detail::path_shapes(cfg, state_path))
        path.push_back({Kernel(s.oc, s.ic, s.kh, s.kw), s.depthwise});
    }
    gate.bias.assign(cfg.out_channels, 0.0);
  }
  return w;
}

// Number of weight and bias elements the cell allocates. For the spatial and
// separable variants this matches the usual closed forms whenever I == O.
inline std::uint64_t param_count(const CellConfig& cfg) {
  cfg.validate();
  std::uint64_t n = 0;
  for (bool state_path : {false, true})
    for (const auto& s : detail::path_shapes(cfg, state_path))
      n += static_cast<std::uint64_t>(s.oc) * s.ic * s.kh * s.kw;
  n *= 4;                                           // four gates
  n += 4ULL * static_cast<std::uint64_t>(cfg.out_channels);  // biases
  return n;
}

// Uniform [-s, s] with s = 1/sqrt(fan_in) per stage; forget-gate bias 1.0,
// other biases 0. Stand-in for the pretrained initialization the full-scale
// networks use.
inline CellWeights init_weights(const CellConfig& cfg, std::uint64_t seed) {
  CellWeights w = zero_weights(cfg);
  Rng rng(seed);
  for (int g = 0; g < 4; ++g) {
    for (auto* path : {&w.gates[g].x_path, &w.gates[g].h_path})
      for (auto& stage : *path) {
        const int fan_in = (stage.depthwise ? 1 : stage.kernel.in_channels) * stage.kernel.kh *
                           stage.kernel.kw;
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : stage.kernel.data) v = rng.uniform(-s, s);
      }
    if (g == 1)
      for (double& b : w.gates[g].bias) b = 1.0;
  }
  return w;
}

// Everything backward needs from a forward pass.
struct PathCache {
  std::vector<Tensor> stage_inputs;  // input to each stage, in order
};

struct ForwardCache {
  Tensor x;
  CellState prev;
  std::array<Tensor, 4> gate_act;  // post-activation I, F, J, O
  Tensor c_t;
  Tensor tanh_c;
  std::array<PathCache, 4> x_paths;
  std::array<PathCache, 4> h_paths;
  bool valid = false;
};

namespace detail {

inline Tensor path_forward(const std::vector<ConvStage>& path, const Tensor& in, FlopCounter* fc,
                           PathCache* cache) {
  Tensor cur = in;
  for (const auto& stage : path) {
    if (cache) cache->stage_inputs.push_back(cur);
    cur = stage.depthwise ? depthwise_conv2d(cur, stage.kernel, nullptr, fc)
                          : conv2d(cur, stage.kernel, nullptr, fc);
  }
  return cur;
}

// Reverse of path_forward; accumulates kernel grads into dpath, returns dIn.
inline Tensor path_backward(const std::vector<ConvStage>& path, const PathCache& cache,
                            const Tensor& dout, std::vector<ConvStage>& dpath) {
  Tensor cur = dout;
  for (int s = static_cast<int>(path.size()) - 1; s >= 0; --s) {
    const auto& stage = path[s];
    const Tensor& staged_in = cache.stage_inputs[s];
    if (stage.depthwise) {
      Kernel dk = depthwise_kernel_grad(staged_in, stage.kernel, cur);
      for (std::size_t i = 0; i < dk.data.size(); ++i) dpath[s].kernel.data[i] += dk.data[i];
      cur = depthwise_input_grad(stage.kernel, cur);
    } else {
      Kernel dk = conv2d_kernel_grad(staged_in, stage.kernel, cur);
      for (std::size_t i = 0; i < dk.data.size(); ++i) dpath[s].kernel.data[i] += dk.data[i];
      cur = conv2d_input_grad(stage.kernel, cur);
    }
  }
  return cur;
}

}  // namespace detail

// Single step: (x, state) -> next state. The returned state's h field is the
// cell's emitted feature map. Pass a counter to meter FLOPs and a cache to
// enable backward().
inline CellState forward(const CellConfig& cfg, const CellWeights& w, const Tensor& x,
                         const CellState& state, FlopCounter* fc = nullptr,
                         ForwardCache* cache = nullptr) {
  cfg.validate();
  if (x.channels != cfg.in_channels)
    shape_error("cell forward: input has " + std::to_string(x.channels) + " channels, config says " +
                std::to_string(cfg.in_channels));
  if (state.h.channels != cfg.out_channels || !state.h.same_shape(state.c) ||
      state.h.height != x.height || state.h.width != x.width)
    shape_error("cell forward: state " + state.h.shape_str() + " does not match input " +
                x.shape_str() + " with " + std::to_string(cfg.out_channels) + " output channels");

  if (cache) {
    *cache = ForwardCache{};
    cache->x = x;
    cache->prev = state;
  }

  std::array<Tensor, 4> act;
  for (int g = 0; g < 4; ++g) {
    Tensor pre = detail::path_forward(w.gates[g].x_path, x, fc, cache ? &cache->x_paths[g] : nullptr);
    Tensor hp =
        detail::path_forward(w.gates[g].h_path, state.h, fc, cache ? &cache->h_paths[g] : nullptr);
    pre = add(pre, hp, fc);
    add_bias_inplace(pre, w.gates[g].bias, fc);
    act[g] = (g == 2) ? tanh(pre, fc) : sigmoid(pre, fc);
  }

  Tensor c_t = add(hadamard(act[1], state.c, fc), hadamard(act[0], act[2], fc), fc);
  Tensor tc = tanh(c_t, fc);
  Tensor h_t = hadamard(act[3], tc, fc);

  if (cache) {
    cache->gate_act = act;
    cache->c_t = c_t;
    cache->tanh_c = tc;
    cache->valid = true;
  }
  return {std::move(h_t), std::move(c_t)};
}

struct CellGrads {
  Tensor dx;
  CellState dstate;      // gradients w.r.t. the previous (h, c)
  CellWeights dweights;  // same layout as the weights
};

// Exact reverse-mode gradients of one forward step. dh and dc are the
// upstream gradients w.r.t. the step's emitted h and c.
inline CellGrads backward(const CellConfig& cfg, const CellWeights& w, const ForwardCache& cache,
                          const Tensor& dh, const Tensor& dc) {
  if (!cache.valid)
    throw std::logic_error("cell backward: forward was not run with caching enabled");

  CellGrads g;
  g.dweights = zero_weights(cfg);
  g.dx = Tensor(cfg.in_channels, cache.x.height, cache.x.width);
  g.dstate.h = Tensor(cfg.out_channels, cache.x.height, cache.x.width);
  g.dstate.c = Tensor(cfg.out_channels, cache.x.height, cache.x.width);

  const Tensor& gate_i = cache.gate_act[0];
  const Tensor& gate_f = cache.gate_act[1];
  const Tensor& gate_j = cache.gate_act[2];
  const Tensor& gate_o = cache.gate_act[3];

  const std::size_t n = dh.data.size();
  Tensor d_c = dc;  // total gradient into c_t
  Tensor dpre[4];
  for (int k = 0; k < 4; ++k) dpre[k] = Tensor(cfg.out_channels, dh.height, dh.width);

  for (std::size_t i = 0; i < n; ++i) {
    const double tc = cache.tanh_c.data[i];
    const double doo = dh.data[i] * tc;                      // into output gate
    d_c.data[i] += dh.data[i] * gate_o.data[i] * (1.0 - tc * tc);

    const double di = d_c.data[i] * gate_j.data[i];
    const double df = d_c.data[i] * cache.prev.c.data[i];
    const double dj = d_c.data[i] * gate_i.data[i];
    g.dstate.c.data[i] = d_c.data[i] * gate_f.data[i];

    dpre[0].data[i] = di * gate_i.data[i] * (1.0 - gate_i.data[i]);
    dpre[1].data[i] = df * gate_f.data[i] * (1.0 - gate_f.data[i]);
    dpre[2].data[i] = dj * (1.0 - gate_j.data[i] * gate_j.data[i]);
    dpre[3].data[i] = doo * gate_o.data[i] * (1.0 - gate_o.data[i]);
  }

  for (int k = 0; k < 4; ++k) {
    auto db = bias_grad(dpre[k]);
    for (int c = 0; c < cfg.out_channels; ++c) g.dweights.gates[k].bias[c] += db[c];

    Tensor dxk = detail::path_backward(w.gates[k].x_path, cache.x_paths[k], dpre[k],
                                       g.dweights.gates[k].x_path);
    for (std::size_t i = 0; i < g.dx.data.size(); ++i) g.dx.data[i] += dxk.data[i];

    Tensor dhk = detail::path_backward(w.gates[k].h_path, cache.h_paths[k], dpre[k],
                                       g.dweights.gates[k].h_path);
    for (std::size_t i = 0; i < g.dstate.h.data.size(); ++i) g.dstate.h.data[i] += dhk.data[i];
  }
  return g;
}

// Applies forward over a frame sequence, threading state. Returns every
// per-step output and the final state.
inline std::pair<std::vector<Tensor>, CellState> rollout(const CellConfig& cfg,
                                                         const CellWeights& w,
                                                         const std::vector<Tensor>& frames,
                                                         const CellState& initial,
                                                         FlopCounter* fc = nullptr) {
  if (frames.empty()) throw std::invalid_argument("rollout: empty frame sequence");
  for (const Tensor& f : frames)
    if (!f.same_shape(frames.front())) shape_error("rollout: frames must share one shape");

  std::vector<Tensor> outputs;
  outputs.reserve(frames.size());
  CellState state = initial;
  for (const Tensor& f : frames) {
    state = forward(cfg, w, f, state, fc);
    outputs.push_back(state.h);
  }
  return {std::move(outputs), std::move(state)};
}

// --- in-place weight arithmetic (used by the trainer) -----------------------

template <typename Fn>
inline void for_each_param(CellWeights& w, Fn&& fn) {
  for (auto& gate : w.gates) {
    for (auto* path : {&gate.x_path, &gate.h_path})
      for (auto& stage : *path)
        for (double& v : stage.kernel.data) fn(v);
    for (double& b : gate.bias) fn(b);
  }
}

template <typename Fn>
inline void for_each_param_pair(CellWeights& a, const CellWeights& b, Fn&& fn) {
  for (int g = 0; g < 4; ++g) {
    for (int p = 0; p < 2; ++p) {
      auto& pa = p ? a.gates[g].h_path : a.gates[g].x_path;
      const auto& pb = p ? b.gates[g].h_path : b.gates[g].x_path;
      for (std::size_t s = 0; s < pa.size(); ++s)
        for (std::size_t i = 0; i < pa[s].kernel.data.size(); ++i)
          fn(pa[s].kernel.data[i], pb[s].kernel.data[i]);
    }
    for (std::size_t i = 0; i < a.gates[g].bias.size(); ++i)
      fn(a.gates[g].bias[i], b.gates[g].bias[i]);
  }
}

// --- checkpoint file, magic "CLSW" ------------------------------------------
// magic, version u8=1, variant u8, u32le I/O/Kh/Kw, then per gate (i, f, c, o)
// the input-path stages followed by the state-path stages (depthwise before
// pointwise), each packed as a TNSR record with channels = oc*ic, then the
// four gate biases last as Ox1x1 records.

namespace detail {

inline Tensor pack_kernel(const Kernel& k) {
  Tensor t(k.out_channels * k.in_channels, k.kh, k.kw);
  t.data = k.data;
  return t;
}

inline Kernel unpack_kernel(const Tensor& t, int oc, int ic) {
  if (t.channels != oc * ic || static_cast<std::size_t>(t.channels) * t.height * t.width != t.size())
    throw std::runtime_error("checkpoint kernel record does not match the config");
  Kernel k(oc, ic, t.height, t.width);
  k.data = t.data;
  return k;
}

}  // namespace detail

inline void write_cell(std::ostream& os, const CellConfig& cfg, const CellWeights& w) {
  os.write("CLSW", 4);
  os.put(1);
  os.put(static_cast<char>(cfg.variant));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.in_channels));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.out_channels));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.kernel_h));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.kernel_w));
  for (const auto& gate : w.gates)
    for (const auto* path : {&gate.x_path, &gate.h_path})
      for (const auto& stage : *path) write_tensor(os, detail::pack_kernel(stage.kernel));
  for (const auto& gate : w.gates) {
    Tensor b(static_cast<int>(gate.bias.size()), 1, 1);
    b.data = gate.bias;
    write_tensor(os, b);
  }
}

inline std::pair<CellConfig, CellWeights> read_cell(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CLSW", 4) != 0)
    throw std::runtime_error("not a CLSW checkpoint (bad magic)");
  const int version = is.get();
  if (version != 1)
    throw std::runtime_error("unsupported CLSW version " + std::to_string(version));
  const int variant_tag = is.get();
  if (variant_tag < 0 || variant_tag > 3)
    throw std::runtime_error("corrupt CLSW variant tag");
  CellConfig cfg;
  cfg.variant = static_cast<CellVariant>(variant_tag);
  cfg.in_channels = static_cast<int>(detail::get_u32(is));
  cfg.out_channels = static_cast<int>(detail::get_u32(is));
  cfg.kernel_h = static_cast<int>(detail::get_u32(is));
  cfg.kernel_w = static_cast<int>(detail::get_u32(is));
  cfg.validate();

  CellWeights w = zero_weights(cfg);
  for (auto& gate : w.gates)
    for (auto* path : {&gate.x_path, &gate.h_path})
      for (auto& stage : *path)
        stage.kernel = detail::unpack_kernel(read_tensor(is), stage.kernel.out_channels,
                                             stage.kernel.in_channels);
  for (auto& gate : w.gates) {
    Tensor b = read_tensor(is);
    if (b.channels != cfg.out_channels || b.height != 1 || b.width != 1)
      throw std::runtime_error("corrupt CLSW bias record");
    gate.bias = b.data;
  }
  return {cfg, w};
}

inline void save_cell(const std::string& path, const CellConfig& cfg, const CellWeights& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_cell(os, cfg, w);
}

inline std::pair<CellConfig, CellWeights> load_cell(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_cell(is);
}

}  // namespace seplstm

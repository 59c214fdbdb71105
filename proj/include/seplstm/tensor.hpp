#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seplstm {

// Tally of floating point work done by the tensor kernels. A counter is
// owned by whoever wants the measurement and passed down explicitly; there
// is no global instrumentation state. Convolutions are charged 2 FLOPs per
// nominal multiply-accumulate over the full zero-padded kernel window, the
// same convention as the closed-form cost model. Activations are charged
// at the fixed 5-FLOP rate used by that model.
struct FlopCounter {
  std::uint64_t conv = 0;
  std::uint64_t hadamard = 0;
  std::uint64_t additions = 0;
  std::uint64_t sigmoid = 0;
  std::uint64_t tanh = 0;

  std::uint64_t total() const { return conv + hadamard + additions + sigmoid + tanh; }

  void reset() { *this = FlopCounter{}; }
};

inline constexpr int kActivationFlopCost = 5;

[[noreturn]] inline void shape_error(const std::string& what) {
  throw std::invalid_argument("shape mismatch: " + what);
}

// Dense channels x height x width array, row-major, 64-bit.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w) {
    if (c < 1 || h < 1 || w < 1)
      shape_error("tensor dims must be >= 1, got " + std::to_string(c) + "x" +
                  std::to_string(h) + "x" + std::to_string(w));
    data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  }

  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
};

// Convolution filter bank, out_channels x in_channels x kh x kw.
// Depthwise filters use in_channels == 1 and apply filter c to input channel c.
struct Kernel {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<double> data;

  Kernel() = default;
  Kernel(int oc, int ic, int kh_, int kw_) : out_channels(oc), in_channels(ic), kh(kh_), kw(kw_) {
    if (oc < 1 || ic < 1 || kh_ < 1 || kw_ < 1)
      shape_error("kernel dims must be >= 1");
    data.assign(static_cast<std::size_t>(oc) * ic * kh_ * kw_, 0.0);
  }

  std::size_t size() const { return data.size(); }

  double& at(int o, int i, int y, int x) {
    return data[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) * kw + x];
  }
  double at(int o, int i, int y, int x) const {
    return data[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) * kw + x];
  }
};

namespace detail {

inline void require_odd_kernel(const Kernel& k) {
  if (k.kh % 2 == 0 || k.kw % 2 == 0)
    shape_error("kernel size must be odd, got " + std::to_string(k.kh) + "x" +
                std::to_string(k.kw));
}

// out[co] += filter (co,ci) applied to in[ci], SAME zero padding, stride 1.
inline void accumulate_channel_conv(const Tensor& in, int ci, const Kernel& k, int co, int ki,
                                    Tensor& out) {
  const int ph = k.kh / 2;
  const int pw = k.kw / 2;
  const int h = in.height;
  const int w = in.width;
  for (int ky = 0; ky < k.kh; ++ky) {
    for (int kx = 0; kx < k.kw; ++kx) {
      const double kv = k.at(co, ki, ky, kx);
      if (kv == 0.0) continue;
      const int dy = ky - ph;
      const int dx = kx - pw;
      const int y0 = std::max(0, -dy);
      const int y1 = std::min(h, h - dy);
      const int x0 = std::max(0, -dx);
      const int x1 = std::min(w, w - dx);
      for (int y = y0; y < y1; ++y) {
        const double* src = &in.data[(static_cast<std::size_t>(ci) * h + y + dy) * w + x0 + dx];
        double* dst = &out.data[(static_cast<std::size_t>(co) * h + y) * w + x0];
        for (int x = x0; x < x1; ++x) *dst++ += kv * *src++;
      }
    }
  }
}

}  // namespace detail

// Cross-correlation (no kernel flip), SAME zero padding, stride 1.
// Output keeps the input's spatial size and has kernel.out_channels channels.
inline Tensor conv2d(const Tensor& in, const Kernel& k, const std::vector<double>* bias = nullptr,
                     FlopCounter* fc = nullptr) {
  if (k.in_channels != in.channels)
    shape_error("conv2d: kernel expects " + std::to_string(k.in_channels) +
                " input channels, tensor has " + std::to_string(in.channels));
  detail::require_odd_kernel(k);
  if (bias && static_cast<int>(bias->size()) != k.out_channels)
    shape_error("conv2d: bias size " + std::to_string(bias->size()) + " != out channels " +
                std::to_string(k.out_channels));

  Tensor out(k.out_channels, in.height, in.width);
  for (int co = 0; co < k.out_channels; ++co)
    for (int ci = 0; ci < in.channels; ++ci)
      detail::accumulate_channel_conv(in, ci, k, co, ci, out);

  if (bias)
    for (int co = 0; co < k.out_channels; ++co) {
      const double b = (*bias)[co];
      double* dst = &out.data[static_cast<std::size_t>(co) * in.height * in.width];
      for (std::size_t i = 0, n = static_cast<std::size_t>(in.height) * in.width; i < n; ++i)
        dst[i] += b;
    }

  if (fc) {
    fc->conv += 2ULL * k.out_channels * k.in_channels * k.kh * k.kw * in.height * in.width;
    if (bias) fc->additions += static_cast<std::uint64_t>(k.out_channels) * in.height * in.width;
  }
  return out;
}

// Per-channel convolution: output channel c depends only on input channel c.
// Kernel shape is channels x 1 x kh x kw.
inline Tensor depthwise_conv2d(const Tensor& in, const Kernel& k,
                               const std::vector<double>* bias = nullptr,
                               FlopCounter* fc = nullptr) {
  if (k.out_channels != in.channels)
    shape_error("depthwise_conv2d: kernel has " + std::to_string(k.out_channels) +
                " filters, tensor has " + std::to_string(in.channels) + " channels");
  if (k.in_channels != 1)
    shape_error("depthwise_conv2d: kernel in_channels must be 1, got " +
                std::to_string(k.in_channels));
  detail::require_odd_kernel(k);
  if (bias && static_cast<int>(bias->size()) != k.out_channels)
    shape_error("depthwise_conv2d: bias size mismatch");

  Tensor out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c) detail::accumulate_channel_conv(in, c, k, c, 0, out);

  if (bias)
    for (int c = 0; c < in.channels; ++c) {
      const double b = (*bias)[c];
      double* dst = &out.data[static_cast<std::size_t>(c) * in.height * in.width];
      for (std::size_t i = 0, n = static_cast<std::size_t>(in.height) * in.width; i < n; ++i)
        dst[i] += b;
    }

  if (fc) {
    fc->conv += 2ULL * in.channels * k.kh * k.kw * in.height * in.width;
    if (bias) fc->additions += static_cast<std::uint64_t>(in.channels) * in.height * in.width;
  }
  return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b, FlopCounter* fc = nullptr) {
  if (!a.same_shape(b)) shape_error("hadamard: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  if (fc) fc->hadamard += out.data.size();
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b, FlopCounter* fc = nullptr) {
  if (!a.same_shape(b)) shape_error("add: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  if (fc) fc->additions += out.data.size();
  return out;
}

// per-channel bias, broadcast over the spatial plane
inline void add_bias_inplace(Tensor& t, const std::vector<double>& bias, FlopCounter* fc = nullptr) {
  if (static_cast<int>(bias.size()) != t.channels)
    shape_error("add_bias: bias size " + std::to_string(bias.size()) + " != channels " +
                std::to_string(t.channels));
  for (int c = 0; c < t.channels; ++c) {
    const double b = bias[c];
    double* dst = &t.data[static_cast<std::size_t>(c) * t.height * t.width];
    for (std::size_t i = 0, n = static_cast<std::size_t>(t.height) * t.width; i < n; ++i)
      dst[i] += b;
  }
  if (fc) fc->additions += t.data.size();
}

inline Tensor sigmoid(const Tensor& a, FlopCounter* fc = nullptr) {
  Tensor out = a;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  if (fc) fc->sigmoid += out.data.size() * kActivationFlopCost;
  return out;
}

inline Tensor tanh(const Tensor& a, FlopCounter* fc = nullptr) {
  Tensor out = a;
  for (double& v : out.data) v = std::tanh(v);
  if (fc) fc->tanh += out.data.size() * kActivationFlopCost;
  return out;
}

// --- gradients of the convolution primitives ------------------------------
//
// With out[o,y,x] = sum_{i,u,v} in[i, y+u-ph, x+v-pw] * k[o,i,u,v]:
//   dk[o,i,u,v] = sum_{y,x} dout[o,y,x] * in[i, y+u-ph, x+v-pw]
//   din[i,y,x]  = sum_{o,u,v} dout[o, y-u+ph, x-v+pw] * k[o,i,u,v]

inline Kernel conv2d_kernel_grad(const Tensor& in, const Kernel& k, const Tensor& dout) {
  Kernel dk(k.out_channels, k.in_channels, k.kh, k.kw);
  const int ph = k.kh / 2;
  const int pw = k.kw / 2;
  const int h = in.height;
  const int w = in.width;
  for (int o = 0; o < k.out_channels; ++o)
    for (int i = 0; i < k.in_channels; ++i)
      for (int u = 0; u < k.kh; ++u)
        for (int v = 0; v < k.kw; ++v) {
          const int dy = u - ph;
          const int dx = v - pw;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* g = &dout.data[(static_cast<std::size_t>(o) * h + y) * w + x0];
            const double* s = &in.data[(static_cast<std::size_t>(i) * h + y + dy) * w + x0 + dx];
            for (int x = x0; x < x1; ++x) acc += *g++ * *s++;
          }
          dk.at(o, i, u, v) = acc;
        }
  return dk;
}

inline Tensor conv2d_input_grad(const Kernel& k, const Tensor& dout) {
  Tensor din(k.in_channels, dout.height, dout.width);
  const int ph = k.kh / 2;
  const int pw = k.kw / 2;
  const int h = dout.height;
  const int w = dout.width;
  // same accumulation pattern as forward, with the kernel transposed and flipped
  for (int o = 0; o < k.out_channels; ++o)
    for (int i = 0; i < k.in_channels; ++i)
      for (int u = 0; u < k.kh; ++u)
        for (int v = 0; v < k.kw; ++v) {
          const double kv = k.at(o, i, u, v);
          if (kv == 0.0) continue;
          const int dy = ph - u;
          const int dx = pw - v;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y) {
            const double* g = &dout.data[(static_cast<std::size_t>(o) * h + y + dy) * w + x0 + dx];
            double* d = &din.data[(static_cast<std::size_t>(i) * h + y) * w + x0];
            for (int x = x0; x < x1; ++x) *d++ += kv * *g++;
          }
        }
  return din;
}

inline Kernel depthwise_kernel_grad(const Tensor& in, const Kernel& k, const Tensor& dout) {
  Kernel dk(k.out_channels, 1, k.kh, k.kw);
  const int ph = k.kh / 2;
  const int pw = k.kw / 2;
  const int h = in.height;
  const int w = in.width;
  for (int c = 0; c < k.out_channels; ++c)
    for (int u = 0; u < k.kh; ++u)
      for (int v = 0; v < k.kw; ++v) {
        const int dy = u - ph;
        const int dx = v - pw;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y) {
          const double* g = &dout.data[(static_cast<std::size_t>(c) * h + y) * w + x0];
          const double* s = &in.data[(static_cast<std::size_t>(c) * h + y + dy) * w + x0 + dx];
          for (int x = x0; x < x1; ++x) acc += *g++ * *s++;
        }
        dk.at(c, 0, u, v) = acc;
      }
  return dk;
}

inline Tensor depthwise_input_grad(const Kernel& k, const Tensor& dout) {
  Tensor din(k.out_channels, dout.height, dout.width);
  const int ph = k.kh / 2;
  const int pw = k.kw / 2;
  const int h = dout.height;
  const int w = dout.width;
  for (int c = 0; c < k.out_channels; ++c)
    for (int u = 0; u < k.kh; ++u)
      for (int v = 0; v < k.kw; ++v) {
        const double kv = k.at(c, 0, u, v);
        if (kv == 0.0) continue;
        const int dy = ph - u;
        const int dx = pw - v;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const double* g = &dout.data[(static_cast<std::size_t>(c) * h + y + dy) * w + x0 + dx];
          double* d = &din.data[(static_cast<std::size_t>(c) * h + y) * w + x0];
          for (int x = x0; x < x1; ++x) *d++ += kv * *g++;
        }
      }
  return din;
}

inline std::vector<double> bias_grad(const Tensor& dout) {
  std::vector<double> db(dout.channels, 0.0);
  for (int c = 0; c < dout.channels; ++c) {
    const double* g = &dout.data[static_cast<std::size_t>(c) * dout.height * dout.width];
    double acc = 0.0;
    for (std::size_t i = 0, n = static_cast<std::size_t>(dout.height) * dout.width; i < n; ++i)
      acc += g[i];
    db[c] = acc;
  }
  return db;
}

// --- binary tensor file, magic "TNSR" --------------------------------------
// magic, version u8=1, u32le channels/height/width, f64le row-major data.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("TNSR", 4);
  os.put(1);
  detail::put_u32(os, static_cast<std::uint32_t>(t.channels));
  detail::put_u32(os, static_cast<std::uint32_t>(t.height));
  detail::put_u32(os, static_cast<std::uint32_t>(t.width));
  for (double v : t.data) detail::put_f64(os, v);
}

inline Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0)
    throw std::runtime_error("not a TNSR file (bad magic)");
  const int version = is.get();
  if (version != 1)
    throw std::runtime_error("unsupported TNSR version " + std::to_string(version));
  const std::uint32_t c = detail::get_u32(is);
  const std::uint32_t h = detail::get_u32(is);
  const std::uint32_t w = detail::get_u32(is);
  if (!is || c < 1 || h < 1 || w < 1) throw std::runtime_error("corrupt TNSR header");
  Tensor t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  for (double& v : t.data) v = detail::get_f64(is);
  if (!is) throw std::runtime_error("truncated TNSR data");
  return t;
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_tensor(is);
}

}  // namespace seplstm

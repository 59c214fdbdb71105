#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written as plain nested loops against the published
// definitions, sharing only container types with the code under test.

#include <cmath>
#include <cstdint>
#include <vector>

#include "seplstm/cell.hpp"
#include "seplstm/metrics.hpp"
#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"

namespace oracle {

using seplstm::Kernel;
using seplstm::SegMap;
using seplstm::SegSequence;
using seplstm::Tensor;

inline Tensor conv2d(const Tensor& in, const Kernel& k, const std::vector<double>* bias) {
  Tensor out(k.out_channels, in.height, in.width);
  const int py = (k.kh - 1) / 2, px = (k.kw - 1) / 2;
  for (int o = 0; o < k.out_channels; ++o)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = bias ? (*bias)[o] : 0.0;
        for (int i = 0; i < k.in_channels; ++i)
          for (int ky = 0; ky < k.kh; ++ky)
            for (int kx = 0; kx < k.kw; ++kx) {
              const int yy = y + ky - py, xx = x + kx - px;
              if (yy < 0 || yy >= in.height || xx < 0 || xx >= in.width) continue;
              acc += in.at(i, yy, xx) * k.at(o, i, ky, kx);
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

inline Tensor depthwise_conv2d(const Tensor& in, const Kernel& k, const std::vector<double>* bias) {
  Tensor out(in.channels, in.height, in.width);
  const int py = (k.kh - 1) / 2, px = (k.kw - 1) / 2;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = bias ? (*bias)[c] : 0.0;
        for (int ky = 0; ky < k.kh; ++ky)
          for (int kx = 0; kx < k.kw; ++kx) {
            const int yy = y + ky - py, xx = x + kx - px;
            if (yy < 0 || yy >= in.height || xx < 0 || xx >= in.width) continue;
            acc += in.at(c, yy, xx) * k.at(c, 0, ky, kx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Standard-variant cell step transcribed directly from the gate equations:
// I = sig(Wxi*X + Whi*H + bi), F = sig(Wxf*X + Whf*H + bf),
// J = tanh(Wxc*X + Whc*H + bc), O = sig(Wxo*X + Who*H + bo),
// C' = F.C + I.J, H' = O.tanh(C').
struct CellStep {
  Tensor h, c;
};

inline CellStep standard_cell_step(const seplstm::CellWeights& w, const Tensor& x, const Tensor& h,
                                   const Tensor& c) {
  Tensor gates[4];
  for (int g = 0; g < 4; ++g) {
    const Tensor gx = oracle::conv2d(x, w.gates[g].x_path[0].kernel, nullptr);
    const Tensor gh = oracle::conv2d(h, w.gates[g].h_path[0].kernel, nullptr);
    Tensor pre = gx;
    for (std::size_t i = 0; i < pre.data.size(); ++i) pre.data[i] += gh.data[i];
    for (int ch = 0; ch < pre.channels; ++ch)
      for (int y = 0; y < pre.height; ++y)
        for (int xx = 0; xx < pre.width; ++xx) pre.at(ch, y, xx) += w.gates[g].bias[ch];
    for (double& v : pre.data) v = (g == 2) ? std::tanh(v) : sigmoid(v);
    gates[g] = pre;
  }
  CellStep out;
  out.c = c;
  for (std::size_t i = 0; i < c.data.size(); ++i)
    out.c.data[i] = gates[1].data[i] * c.data[i] + gates[0].data[i] * gates[2].data[i];
  out.h = out.c;
  for (std::size_t i = 0; i < out.h.data.size(); ++i)
    out.h.data[i] = gates[3].data[i] * std::tanh(out.c.data[i]);
  return out;
}

// Same gate equations with each full convolution replaced by the variant's
// stage sequence, applied left to right with its own zero padding.
inline Tensor path_apply(const std::vector<seplstm::ConvStage>& path, const Tensor& in) {
  Tensor cur = in;
  for (const seplstm::ConvStage& stage : path)
    cur = stage.depthwise ? oracle::depthwise_conv2d(cur, stage.kernel, nullptr)
                          : oracle::conv2d(cur, stage.kernel, nullptr);
  return cur;
}

inline CellStep variant_cell_step(const seplstm::CellWeights& w, const Tensor& x, const Tensor& h,
                                  const Tensor& c) {
  Tensor gates[4];
  for (int g = 0; g < 4; ++g) {
    const Tensor gx = path_apply(w.gates[g].x_path, x);
    const Tensor gh = path_apply(w.gates[g].h_path, h);
    Tensor pre = gx;
    for (std::size_t i = 0; i < pre.data.size(); ++i) pre.data[i] += gh.data[i];
    for (int ch = 0; ch < pre.channels; ++ch)
      for (int y = 0; y < pre.height; ++y)
        for (int xx = 0; xx < pre.width; ++xx) pre.at(ch, y, xx) += w.gates[g].bias[ch];
    for (double& v : pre.data) v = (g == 2) ? std::tanh(v) : sigmoid(v);
    gates[g] = pre;
  }
  CellStep out;
  out.c = c;
  for (std::size_t i = 0; i < c.data.size(); ++i)
    out.c.data[i] = gates[1].data[i] * c.data[i] + gates[0].data[i] * gates[2].data[i];
  out.h = out.c;
  for (std::size_t i = 0; i < out.h.data.size(); ++i)
    out.h.data[i] = gates[3].data[i] * std::tanh(out.c.data[i]);
  return out;
}

// Flicker metrics by brute force, straight from their definitions: count
// pixelwise changes between consecutive maps, then scale the integer total
// by 1000/(h*w) in one step so the result is a single rounding away from
// the exact rational value.
inline double mfp(const SegSequence& pred, const SegSequence& gt) {
  long long total = 0;
  const int h = pred.frames[0].h, w = pred.frames[0].w;
  for (std::size_t t = 1; t < pred.frames.size(); ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool err_now = pred.frames[t].at(y, x) != gt.frames[t].at(y, x);
        const bool err_prev = pred.frames[t - 1].at(y, x) != gt.frames[t - 1].at(y, x);
        const int d_now = err_now ? pred.frames[t].at(y, x) + 1 : 0;
        const int d_prev = err_prev ? pred.frames[t - 1].at(y, x) + 1 : 0;
        if (d_now != d_prev) ++total;
      }
  return 1000.0 * static_cast<double>(total) / (static_cast<double>(h) * w);
}

inline double mfip(const SegSequence& pred) {
  long long total = 0;
  const int h = pred.frames[0].h, w = pred.frames[0].w;
  for (std::size_t t = 1; t < pred.frames.size(); ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (pred.frames[t].at(y, x) != pred.frames[t - 1].at(y, x)) ++total;
  return 1000.0 * static_cast<double>(total) / (static_cast<double>(h) * w);
}

// Confusion-matrix mIoU: intersection and union per class over all maps,
// classes that never occur in either prediction or truth are skipped.
inline double miou(const std::vector<SegMap>& preds, const std::vector<SegMap>& gts, int classes) {
  std::vector<long long> inter(classes, 0), uni(classes, 0);
  for (std::size_t m = 0; m < preds.size(); ++m)
    for (int y = 0; y < preds[m].h; ++y)
      for (int x = 0; x < preds[m].w; ++x) {
        const int p = preds[m].at(y, x), g = gts[m].at(y, x);
        if (p == g) {
          ++inter[p];
          ++uni[p];
        } else {
          ++uni[p];
          ++uni[g];
        }
      }
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < classes; ++c)
    if (uni[c] > 0) {
      sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
      ++n;
    }
  return n == 0 ? 1.0 : sum / n;
}

inline Tensor random_tensor(int c, int h, int w, seplstm::Rng& rng, double scale = 1.0) {
  Tensor t(c, h, w);
  for (double& v : t.data) v = rng.normal() * scale;
  return t;
}

inline SegMap random_map(int h, int w, int classes, seplstm::Rng& rng) {
  SegMap m(h, w, classes);
  for (auto& v : m.ids)
    v = static_cast<std::uint16_t>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
  return m;
}

inline SegSequence random_sequence(int h, int w, int frames, int classes, seplstm::Rng& rng) {
  SegSequence s;
  for (int t = 0; t < frames; ++t) s.frames.push_back(random_map(h, w, classes, rng));
  return s;
}

}  // namespace oracle

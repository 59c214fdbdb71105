#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seplstm/tensor.hpp"

namespace seplstm {

// Integer class map, h x w, values in 0..num_classes-1.
struct SegMap {
  int h = 0;
  int w = 0;
  int num_classes = 0;
  std::vector<std::uint16_t> ids;

  SegMap() = default;
  SegMap(int h_, int w_, int n) : h(h_), w(w_), num_classes(n) {
    if (h_ < 1 || w_ < 1) shape_error("seg map dims must be >= 1");
    if (n < 1) throw std::invalid_argument("seg map needs at least one class");
    ids.assign(static_cast<std::size_t>(h_) * w_, 0);
  }

  std::uint16_t& at(int y, int x) { return ids[static_cast<std::size_t>(y) * w + x]; }
  std::uint16_t at(int y, int x) const { return ids[static_cast<std::size_t>(y) * w + x]; }

  bool same_shape(const SegMap& o) const { return h == o.h && w == o.w; }

  void validate() const {
    for (std::uint16_t v : ids)
      if (v >= num_classes)
        throw std::invalid_argument("seg map: class id " + std::to_string(v) + " >= class count " +
                                    std::to_string(num_classes));
  }
};

// Time-indexed frame stack; metric sums run over consecutive frame pairs, so
// evaluating T pairs needs T+1 frames.
struct SegSequence {
  std::vector<SegMap> frames;

  int pair_count() const { return static_cast<int>(frames.size()) - 1; }

  void validate() const {
    if (frames.size() < 2)
      throw std::invalid_argument("seg sequence needs at least two frames for metric evaluation");
    for (const SegMap& f : frames) {
      if (!f.same_shape(frames.front()) || f.num_classes != frames.front().num_classes)
        shape_error("seg sequence frames must share shape and class count");
      f.validate();
    }
  }
};

// Per-pixel error image: 0 marks agreement, otherwise the predicted class
// shifted to 1..N so that class 0 cannot be mistaken for "no error".
struct DiffMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint32_t> v;
};

// 1 where a and b classify differently, 0 where they agree.
inline std::vector<std::uint8_t> neq(const SegMap& a, const SegMap& b) {
  if (!a.same_shape(b)) shape_error("neq: " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                                    " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
  std::vector<std::uint8_t> out(a.ids.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ids[i] != b.ids[i] ? 1 : 0;
  return out;
}

inline DiffMap diff_image(const SegMap& pred, const SegMap& gt) {
  if (!pred.same_shape(gt)) shape_error("diff_image: prediction and ground truth shapes differ");
  if (pred.num_classes != gt.num_classes)
    shape_error("diff_image: prediction and ground truth class counts differ");
  DiffMap d;
  d.h = pred.h;
  d.w = pred.w;
  d.v.resize(pred.ids.size());
  for (std::size_t i = 0; i < d.v.size(); ++i)
    d.v[i] = pred.ids[i] != gt.ids[i] ? static_cast<std::uint32_t>(pred.ids[i]) + 1 : 0;
  return d;
}

namespace detail {

inline void check_aligned(const SegSequence& a, const SegSequence& b) {
  a.validate();
  b.validate();
  if (a.frames.size() != b.frames.size()) shape_error("sequences have different frame counts");
  if (!a.frames.front().same_shape(b.frames.front()) ||
      a.frames.front().num_classes != b.frames.front().num_classes)
    shape_error("sequences have different frame shapes or class counts");
}

}  // namespace detail

// Ground-truth-compensated flicker: counts pixels whose error image changes
// between consecutive frames, normalized by image area. Reported in
// per-mille; this is the raw sum over all T pairs.
inline double mfp(const SegSequence& pred, const SegSequence& gt) {
  detail::check_aligned(pred, gt);
  const int hw = pred.frames.front().h * pred.frames.front().w;
  std::uint64_t flicker = 0;
  DiffMap prev = diff_image(pred.frames[0], gt.frames[0]);
  for (std::size_t t = 1; t < pred.frames.size(); ++t) {
    DiffMap cur = diff_image(pred.frames[t], gt.frames[t]);
    for (std::size_t i = 0; i < cur.v.size(); ++i)
      if (cur.v[i] != prev.v[i]) ++flicker;
    prev = std::move(cur);
  }
  return 1000.0 * static_cast<double>(flicker) / static_cast<double>(hw);
}

// mfp averaged over the T frame pairs; comparable across sequence lengths.
inline double mfp_per_pair(const SegSequence& pred, const SegSequence& gt) {
  return mfp(pred, gt) / static_cast<double>(pred.pair_count());
}

// Ground-truth-free flicker: counts pixels whose predicted class changes
// between consecutive frames. Raw per-mille sum over all pairs.
inline double mfip(const SegSequence& pred) {
  pred.validate();
  const int hw = pred.frames.front().h * pred.frames.front().w;
  std::uint64_t flicker = 0;
  for (std::size_t t = 1; t < pred.frames.size(); ++t) {
    const auto mask = neq(pred.frames[t], pred.frames[t - 1]);
    for (std::uint8_t m : mask) flicker += m;
  }
  return 1000.0 * static_cast<double>(flicker) / static_cast<double>(hw);
}

inline double mfip_per_pair(const SegSequence& pred) {
  return mfip(pred) / static_cast<double>(pred.pair_count());
}

inline double pixel_accuracy(const SegMap& pred, const SegMap& gt) {
  if (!pred.same_shape(gt)) shape_error("pixel_accuracy: shapes differ");
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < pred.ids.size(); ++i)
    if (pred.ids[i] == gt.ids[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.ids.size());
}

// Mean over classes of TP/(TP+FP+FN). Classes absent from both prediction
// and ground truth across the whole set are excluded from the mean.
inline double miou(const std::vector<SegMap>& preds, const std::vector<SegMap>& gts,
                   int num_classes) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::invalid_argument("miou: need equally many prediction and ground-truth maps");
  std::vector<std::uint64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (!preds[m].same_shape(gts[m])) shape_error("miou: shapes differ at map " + std::to_string(m));
    for (std::size_t i = 0; i < preds[m].ids.size(); ++i) {
      const int p = preds[m].ids[i];
      const int g = gts[m].ids[i];
      if (p >= num_classes || g >= num_classes)
        throw std::invalid_argument("miou: class id out of range");
      if (p == g) {
        ++tp[p];
      } else {
        ++fp[p];
        ++fn[g];
      }
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::uint64_t u = tp[c] + fp[c] + fn[c];
    if (u == 0) continue;
    sum += static_cast<double>(tp[c]) / static_cast<double>(u);
    ++counted;
  }
  return counted ? sum / counted : 1.0;
}

// --- sequence container, magic "SEGQ" ---------------------------------------
// magic, version u8=1, u32le h, w, frame count, class count, then the frames
// as row-major u16le class ids.

inline void write_segq(std::ostream& os, const SegSequence& seq) {
  if (seq.frames.empty()) throw std::invalid_argument("write_segq: empty sequence");
  const SegMap& f0 = seq.frames.front();
  os.write("SEGQ", 4);
  os.put(1);
  detail::put_u32(os, static_cast<std::uint32_t>(f0.h));
  detail::put_u32(os, static_cast<std::uint32_t>(f0.w));
  detail::put_u32(os, static_cast<std::uint32_t>(seq.frames.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(f0.num_classes));
  for (const SegMap& f : seq.frames) {
    if (!f.same_shape(f0) || f.num_classes != f0.num_classes)
      shape_error("write_segq: inconsistent frames");
    for (std::uint16_t v : f.ids) {
      os.put(static_cast<char>(v & 0xff));
      os.put(static_cast<char>(v >> 8));
    }
  }
}

inline SegSequence read_segq(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEGQ", 4) != 0)
    throw std::runtime_error("not a SEGQ file (bad magic)");
  const int version = is.get();
  if (version != 1)
    throw std::runtime_error("unsupported SEGQ version " + std::to_string(version));
  const std::uint32_t h = detail::get_u32(is);
  const std::uint32_t w = detail::get_u32(is);
  const std::uint32_t frames = detail::get_u32(is);
  const std::uint32_t classes = detail::get_u32(is);
  if (!is || h < 1 || w < 1 || frames < 1 || classes < 1)
    throw std::runtime_error("corrupt SEGQ header");
  SegSequence seq;
  for (std::uint32_t t = 0; t < frames; ++t) {
    SegMap f(static_cast<int>(h), static_cast<int>(w), static_cast<int>(classes));
    for (std::uint16_t& v : f.ids) {
      const int lo = is.get();
      const int hi = is.get();
      if (hi < 0) throw std::runtime_error("truncated SEGQ data");
      v = static_cast<std::uint16_t>(lo | (hi << 8));
    }
    f.validate();
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

inline void save_segq(const std::string& path, const SegSequence& seq) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_segq(os, seq);
}

inline SegSequence load_segq(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_segq(is);
}

}  // namespace seplstm

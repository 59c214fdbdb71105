#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seplstm/metrics.hpp"
#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"

namespace seplstm {

enum class ShapeKind { Rectangle, Disk };

// One moving object. Rectangles are size_h x size_w with (y0, x0) the
// top-left corner; disks use size_h as the radius around center (y0, x0).
// Velocity is in pixels per frame.
struct MovingShape {
  int class_id = 1;
  ShapeKind kind = ShapeKind::Rectangle;
  int size_h = 3;
  int size_w = 3;
  double y0 = 0.0;
  double x0 = 0.0;
  double vy = 0.0;
  double vx = 0.0;
};

struct SceneSpec {
  int h = 16;
  int w = 16;
  int frames = 4;
  int num_classes = 2;  // background plus at least one object class
  std::vector<MovingShape> shapes;
  double noise = 0.0;  // per-pixel label-flip probability for the noisy stream
  std::uint64_t seed = 0;
  // When set, images render from the noisy label stream instead of the clean
  // one, so label flips show up in the model's input (the flicker task).
  // Returned labels stay clean either way.
  bool render_from_noisy = false;

  void validate() const {
    if (h < 1 || w < 1 || frames < 1) throw std::invalid_argument("scene: dims and frames must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("scene: need background plus at least one class");
    if (noise < 0.0 || noise >= 1.0) throw std::invalid_argument("scene: noise must be in [0, 1)");
    for (const MovingShape& s : shapes) {
      if (s.class_id < 1 || s.class_id >= num_classes)
        throw std::invalid_argument("scene: shape class id out of range");
      if (s.size_h < 1 || s.size_w < 1) throw std::invalid_argument("scene: shape size must be >= 1");
      // the shape must fit the frame at t = 0; later frames clip at borders
      if (s.kind == ShapeKind::Rectangle) {
        if (s.y0 < 0 || s.x0 < 0 || s.y0 + s.size_h > h || s.x0 + s.size_w > w)
          throw std::invalid_argument("scene: rectangle out of bounds at t=0");
      } else {
        if (s.y0 - s.size_h < 0 || s.x0 - s.size_h < 0 || s.y0 + s.size_h >= h ||
            s.x0 + s.size_h >= w)
          throw std::invalid_argument("scene: disk out of bounds at t=0");
      }
    }
  }
};

struct Scene {
  std::vector<Tensor> images;  // num_classes channels each, signal 1.0 + jitter
  SegSequence labels;          // exact pre-noise geometry
  SegSequence noisy_labels;    // iid label flips at SceneSpec::noise
};

namespace detail {

inline void rasterize(const SceneSpec& spec, int t, SegMap& out) {
  for (std::uint16_t& v : out.ids) v = 0;
  for (const MovingShape& s : spec.shapes) {
    const double cy = s.y0 + s.vy * t;
    const double cx = s.x0 + s.vx * t;
    if (s.kind == ShapeKind::Rectangle) {
      const int y0 = static_cast<int>(std::lround(cy));
      const int x0 = static_cast<int>(std::lround(cx));
      for (int y = std::max(0, y0); y < std::min(spec.h, y0 + s.size_h); ++y)
        for (int x = std::max(0, x0); x < std::min(spec.w, x0 + s.size_w); ++x)
          out.at(y, x) = static_cast<std::uint16_t>(s.class_id);
    } else {
      const int r = s.size_h;
      const int yc = static_cast<int>(std::lround(cy));
      const int xc = static_cast<int>(std::lround(cx));
      for (int y = std::max(0, yc - r); y <= std::min(spec.h - 1, yc + r); ++y)
        for (int x = std::max(0, xc - r); x <= std::min(spec.w - 1, xc + r); ++x)
          if ((y - yc) * (y - yc) + (x - xc) * (x - xc) <= r * r)
            out.at(y, x) = static_cast<std::uint16_t>(s.class_id);
    }
  }
}

}  // namespace detail

inline constexpr double kImageJitterSigma = 0.1;

// Deterministic given the seed: labels are the exact shape geometry, the
// noisy stream flips each pixel to a uniformly random other class with
// probability spec.noise, and image channel c carries 1.0 + jitter where the
// (clean or noisy) label equals c and plain jitter elsewhere.
inline Scene generate(const SceneSpec& spec) {
  spec.validate();
  Rng noise_rng = Rng(spec.seed).split(1);
  Rng jitter_rng = Rng(spec.seed).split(2);

  Scene scene;
  for (int t = 0; t < spec.frames; ++t) {
    SegMap clean(spec.h, spec.w, spec.num_classes);
    detail::rasterize(spec, t, clean);

    SegMap noisy = clean;
    if (spec.noise > 0.0)
      for (std::uint16_t& v : noisy.ids)
        if (noise_rng.uniform() < spec.noise) {
          const auto shift = 1 + noise_rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes - 1));
          v = static_cast<std::uint16_t>((v + shift) % spec.num_classes);
        }

    const SegMap& source = spec.render_from_noisy ? noisy : clean;
    Tensor img(spec.num_classes, spec.h, spec.w);
    for (int c = 0; c < spec.num_classes; ++c)
      for (int y = 0; y < spec.h; ++y)
        for (int x = 0; x < spec.w; ++x)
          img.at(c, y, x) = (source.at(y, x) == c ? 1.0 : 0.0) +
                            jitter_rng.normal(0.0, kImageJitterSigma);

    scene.images.push_back(std::move(img));
    scene.labels.frames.push_back(std::move(clean));
    scene.noisy_labels.frames.push_back(std::move(noisy));
  }
  return scene;
}

// Default scene family used by the CLI and the toy trainer: one rectangle
// and one disk at seeded random positions with small random velocities,
// three classes total.
inline SceneSpec random_scene_spec(int h, int w, int frames, double noise, std::uint64_t seed,
                                   bool render_from_noisy = false) {
  Rng rng = Rng(seed).split(0);
  SceneSpec spec;
  spec.h = h;
  spec.w = w;
  spec.frames = frames;
  spec.num_classes = 3;
  spec.noise = noise;
  spec.seed = seed;
  spec.render_from_noisy = render_from_noisy;

  MovingShape rect;
  rect.class_id = 1;
  rect.kind = ShapeKind::Rectangle;
  rect.size_h = std::max(2, h / 5);
  rect.size_w = std::max(2, w / 4);
  rect.y0 = static_cast<double>(rng.uniform_int(std::max(1, h - rect.size_h - 2)) + 1);
  rect.x0 = static_cast<double>(rng.uniform_int(std::max(1, w - rect.size_w - 2)) + 1);
  rect.vy = 0.0;
  rect.vx = rng.uniform() < 0.5 ? 1.0 : -1.0;
  spec.shapes.push_back(rect);

  MovingShape disk;
  disk.class_id = 2;
  disk.kind = ShapeKind::Disk;
  disk.size_h = std::max(2, std::min(h, w) / 6);
  disk.size_w = disk.size_h;
  const int r = disk.size_h;
  disk.y0 = static_cast<double>(r + 1 + rng.uniform_int(std::max(1, h - 2 * r - 2)));
  disk.x0 = static_cast<double>(r + 1 + rng.uniform_int(std::max(1, w - 2 * r - 2)));
  disk.vy = rng.uniform() < 0.5 ? 1.0 : 0.0;
  disk.vx = disk.vy == 0.0 ? (rng.uniform() < 0.5 ? 1.0 : -1.0) : 0.0;
  spec.shapes.push_back(disk);
  return spec;
}

}  // namespace seplstm

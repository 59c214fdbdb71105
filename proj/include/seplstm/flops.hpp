#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "seplstm/cell.hpp"
#include "seplstm/tensor.hpp"

namespace seplstm {

// Closed-form FLOP breakdown for one cell step on a height x width feature
// map. Component rows follow the standard-cell tabulation: 8 convolutions,
// 3 Hadamard products, 3 sigmoids and 2 tanhs at 5 FLOPs each, 9 additions,
// everything scaled by out_channels * height * width.
struct FlopReport {
  std::uint64_t convolutions = 0;
  std::uint64_t hadamard = 0;
  std::uint64_t sigmoid = 0;
  std::uint64_t tanh = 0;
  std::uint64_t additions = 0;
  int map_height = 0;  // D_x
  int map_width = 0;   // D_y

  std::uint64_t total() const { return convolutions + hadamard + sigmoid + tanh + additions; }
};

namespace detail {

inline FlopReport elementwise_rows(const CellConfig& cfg, int height, int width) {
  FlopReport r;
  const std::uint64_t od = static_cast<std::uint64_t>(cfg.out_channels) * height * width;
  r.hadamard = 3 * od;
  r.sigmoid = 3ULL * kActivationFlopCost * od;
  r.tanh = 2ULL * kActivationFlopCost * od;
  r.additions = 9 * od;
  r.map_height = height;
  r.map_width = width;
  return r;
}

}  // namespace detail

// Standard cell: total (16*Kh*Kw*I + 37) * O * Dx * Dy.
inline FlopReport flops_standard(const CellConfig& cfg, int height, int width) {
  cfg.validate();
  FlopReport r = detail::elementwise_rows(cfg, height, width);
  r.convolutions = 8ULL * 2 * cfg.kernel_h * cfg.kernel_w * cfg.in_channels * cfg.out_channels *
                   height * width;
  return r;
}

// Spatial cell, general rectangular form: conv row 16*(Kh+Kw)*I*O*Dx*Dy.
// Reduces to (32*K*I + 37)*O*Dx*Dy when Kh == Kw.
inline FlopReport flops_spatial(const CellConfig& cfg, int height, int width) {
  cfg.validate();
  FlopReport r = detail::elementwise_rows(cfg, height, width);
  r.convolutions = 16ULL * (cfg.kernel_h + cfg.kernel_w) * cfg.in_channels * cfg.out_channels *
                   height * width;
  return r;
}

// Depthwise cell: total (16*Kh*Kw + 37) * O * Dx * Dy.
inline FlopReport flops_depthwise(const CellConfig& cfg, int height, int width) {
  cfg.validate();
  FlopReport r = detail::elementwise_rows(cfg, height, width);
  r.convolutions =
      8ULL * 2 * cfg.kernel_h * cfg.kernel_w * cfg.out_channels * height * width;
  return r;
}

// Separable cell: total (16*Kh*Kw + 16*I + 37) * O * Dx * Dy.
inline FlopReport flops_separable(const CellConfig& cfg, int height, int width) {
  cfg.validate();
  FlopReport r = detail::elementwise_rows(cfg, height, width);
  r.convolutions = (8ULL * 2 * cfg.kernel_h * cfg.kernel_w +
                    8ULL * 2 * cfg.in_channels) *
                   cfg.out_channels * height * width;
  return r;
}

inline FlopReport analytic_flops(const CellConfig& cfg, int height, int width) {
  switch (cfg.variant) {
    case CellVariant::Standard: return flops_standard(cfg, height, width);
    case CellVariant::Spatial: return flops_spatial(cfg, height, width);
    case CellVariant::Depthwise: return flops_depthwise(cfg, height, width);
    case CellVariant::Separable: return flops_separable(cfg, height, width);
  }
  throw std::logic_error("unreachable variant");
}

// Analytic total relative to the standard cell at the same config.
inline double ratio_vs_standard(const CellConfig& cfg, int height, int width) {
  CellConfig std_cfg = cfg;
  std_cfg.variant = CellVariant::Standard;
  return static_cast<double>(analytic_flops(cfg, height, width).total()) /
         static_cast<double>(analytic_flops(std_cfg, height, width).total());
}

// Dynamically counted FLOPs of one forward pass, tallied by the tensor
// kernels into the caller's counter. Weight values do not affect the count.
inline FlopReport measured_flops(const CellConfig& cfg, int height, int width, FlopCounter* fc) {
  if (!fc) throw std::invalid_argument("measured_flops: instrumentation requires a counter");
  cfg.validate();
  fc->reset();
  const CellWeights w = zero_weights(cfg);
  const Tensor x(cfg.in_channels, height, width);
  forward(cfg, w, x, zero_state(cfg, height, width), fc);
  FlopReport r;
  r.convolutions = fc->conv;
  r.hadamard = fc->hadamard;
  r.sigmoid = fc->sigmoid;
  r.tanh = fc->tanh;
  r.additions = fc->additions;
  r.map_height = height;
  r.map_width = width;
  return r;
}

inline std::string flops_csv_header() {
  return "variant,kx,ky,in,out,dx,dy,conv,hadamard,sigmoid,tanh,add,total";
}

inline std::string flops_csv_row(const CellConfig& cfg, const FlopReport& r) {
  return std::string(variant_name(cfg.variant)) + "," + std::to_string(cfg.kernel_h) + "," +
         std::to_string(cfg.kernel_w) + "," + std::to_string(cfg.in_channels) + "," +
         std::to_string(cfg.out_channels) + "," + std::to_string(r.map_height) + "," +
         std::to_string(r.map_width) + "," + std::to_string(r.convolutions) + "," +
         std::to_string(r.hadamard) + "," + std::to_string(r.sigmoid) + "," +
         std::to_string(r.tanh) + "," + std::to_string(r.additions) + "," +
         std::to_string(r.total());
}

}  // namespace seplstm

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seplstm/cell.hpp"
#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"

namespace seplstm {

struct GradCheckEntry {
  std::string group;
  double max_rel_err = 0.0;
  int checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> groups;
  double eps = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string worst_group;
  double worst_err = 0.0;
};

namespace detail {

// Scalar probe loss: fixed random projection of both outputs, so every H_t
// and C_t element influences the loss.
inline double probe_loss(const CellConfig& cfg, const CellWeights& w, const Tensor& x,
                         const CellState& state, const Tensor& ph, const Tensor& pc) {
  const CellState out = forward(cfg, w, x, state);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.h.data.size(); ++i)
    loss += ph.data[i] * out.h.data[i] + pc.data[i] * out.c.data[i];
  return loss;
}

// Denominator floor guards entries whose true gradient is so small that the
// central difference is dominated by floating-point roundoff.
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace detail

// Central-difference check of backward() against forward(): every weight,
// bias, input pixel and incoming state element is perturbed by ±eps and the
// numeric slope compared with the analytic gradient.
inline GradCheckReport check_cell_gradients(const CellConfig& cfg, std::uint64_t seed,
                                            double eps = 1e-5, double tol = 1e-4, int height = 5,
                                            int width = 4) {
  cfg.validate();
  Rng rng(seed);
  CellWeights w = init_weights(cfg, rng.next_u64());
  Rng data_rng = rng.split(1);

  auto fill = [&](Tensor& t) {
    for (double& v : t.data) v = data_rng.normal() * 0.5;
  };
  Tensor x(cfg.in_channels, height, width);
  CellState state = zero_state(cfg, height, width);
  Tensor ph(cfg.out_channels, height, width), pc(cfg.out_channels, height, width);
  fill(x);
  fill(state.h);
  fill(state.c);
  fill(ph);
  fill(pc);

  ForwardCache cache;
  forward(cfg, w, x, state, nullptr, &cache);
  CellGrads grads = backward(cfg, w, cache, ph, pc);

  GradCheckReport report;
  report.eps = eps;
  report.tol = tol;

  auto check_span = [&](const std::string& group, double* values, const double* analytic,
                        std::size_t n) {
    GradCheckEntry entry{group, 0.0, static_cast<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = values[i];
      values[i] = keep + eps;
      const double up = detail::probe_loss(cfg, w, x, state, ph, pc);
      values[i] = keep - eps;
      const double down = detail::probe_loss(cfg, w, x, state, ph, pc);
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      entry.max_rel_err = std::max(entry.max_rel_err, detail::rel_err(analytic[i], numeric));
    }
    report.groups.push_back(entry);
  };

  for (int g = 0; g < 4; ++g) {
    const std::string gate = kGateNames[g];
    for (int p = 0; p < 2; ++p) {
      auto& path = p ? w.gates[g].h_path : w.gates[g].x_path;
      auto& dpath = p ? grads.dweights.gates[g].h_path : grads.dweights.gates[g].x_path;
      const std::string path_name = p ? "h_path" : "x_path";
      for (std::size_t s = 0; s < path.size(); ++s)
        check_span(gate + "." + path_name + ".stage" + std::to_string(s),
                   path[s].kernel.data.data(), dpath[s].kernel.data.data(),
                   path[s].kernel.data.size());
    }
    check_span(gate + ".bias", w.gates[g].bias.data(), grads.dweights.gates[g].bias.data(),
               w.gates[g].bias.size());
  }
  check_span("input.x", x.data.data(), grads.dx.data.data(), x.data.size());
  check_span("state.h", state.h.data.data(), grads.dstate.h.data.data(), state.h.data.size());
  check_span("state.c", state.c.data.data(), grads.dstate.c.data.data(), state.c.data.size());

  report.pass = true;
  for (const GradCheckEntry& e : report.groups) {
    if (e.max_rel_err > report.worst_err) {
      report.worst_err = e.max_rel_err;
      report.worst_group = e.group;
    }
    if (e.max_rel_err >= tol) report.pass = false;
  }
  return report;
}

}  // namespace seplstm

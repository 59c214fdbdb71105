#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <stdexcept>
#include <vector>

namespace seplstm {

struct BenchStats {
  int repeats = 0;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  double mean_ms = 0.0;
};

// Wall-clock timing of fn: `warmup` unmeasured runs, then `repeats` measured
// ones. Percentiles use the nearest-rank method on the sorted samples.
inline BenchStats run_bench(const std::function<void()>& fn, int repeats, int warmup = 1) {
  if (repeats < 1) throw std::invalid_argument("run_bench: need at least one repeat");
  if (warmup < 0) throw std::invalid_argument("run_bench: negative warmup");
  for (int i = 0; i < warmup; ++i) fn();

  std::vector<double> ms(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());

  auto rank = [&](double p) {
    int idx = static_cast<int>(p * repeats + 0.5);
    return ms[std::clamp(idx, 0, repeats - 1)];
  };
  BenchStats s;
  s.repeats = repeats;
  s.median_ms = (repeats % 2 == 1) ? ms[repeats / 2] : 0.5 * (ms[repeats / 2 - 1] + ms[repeats / 2]);
  s.p10_ms = rank(0.10);
  s.p90_ms = rank(0.90);
  double sum = 0.0;
  for (double v : ms) sum += v;
  s.mean_ms = sum / repeats;
  return s;
}

}  // namespace seplstm

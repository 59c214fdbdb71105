#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "seplstm/flops.hpp"
#include "seplstm/rng.hpp"

using namespace seplstm;

namespace {

std::uint64_t closed_form_total(const CellConfig& c, int dx, int dy) {
  const std::uint64_t D = static_cast<std::uint64_t>(dx) * dy;
  const std::uint64_t K = static_cast<std::uint64_t>(c.kernel_h) * c.kernel_w;
  const std::uint64_t Ksum = static_cast<std::uint64_t>(c.kernel_h) + c.kernel_w;
  switch (c.variant) {
    case CellVariant::Standard:
      return (16 * K * c.in_channels + 37) * c.out_channels * D;
    case CellVariant::Spatial:
      return (16 * Ksum * c.in_channels + 37) * c.out_channels * D;
    case CellVariant::Depthwise:
      return (16 * K + 37) * c.out_channels * D;
    case CellVariant::Separable:
      return (16 * K + 16 * c.in_channels + 37) * c.out_channels * D;
  }
  return 0;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

TEST_CASE("standard totals match direct substitution", "[flops]") {
  const FlopReport big = flops_standard({CellVariant::Standard, 128, 128, 3, 3}, 1, 1);
  CHECK(big.total() == 2364032);
  CHECK(big.convolutions == 2359296);
  CHECK(big.hadamard == 384);
  CHECK(big.sigmoid == 1920);
  CHECK(big.tanh == 1280);
  CHECK(big.additions == 1152);

  const FlopReport tiny = flops_standard({CellVariant::Standard, 1, 1, 1, 1}, 1, 1);
  CHECK(tiny.total() == 53);
}

TEST_CASE("cost ratios reproduce the published percentages", "[flops]") {
  const int I = 128, K = 3;
  CHECK(ratio_vs_standard({CellVariant::Spatial, I, I, K, K}, 1, 1) ==
        Catch::Approx(0.6673).margin(0.0001));
  CHECK(ratio_vs_standard({CellVariant::Depthwise, I, I, K, K}, 1, 1) ==
        Catch::Approx(0.0098).margin(0.0001));
  CHECK(ratio_vs_standard({CellVariant::Separable, I, I, K, K}, 1, 1) ==
        Catch::Approx(0.1207).margin(0.0001));
  CHECK(ratio_vs_standard({CellVariant::Standard, I, I, K, K}, 1, 1) == 1.0);
}

TEST_CASE("ratios reduce to the known fractions", "[flops]") {
  CHECK(ratio_vs_standard({CellVariant::Spatial, 128, 128, 3, 3}, 1, 1) ==
        Catch::Approx(12325.0 / 18469.0).epsilon(1e-12));
  CHECK(ratio_vs_standard({CellVariant::Depthwise, 128, 128, 3, 3}, 1, 1) ==
        Catch::Approx(181.0 / 18469.0).epsilon(1e-12));
  CHECK(ratio_vs_standard({CellVariant::Separable, 128, 128, 3, 3}, 1, 1) ==
        Catch::Approx(2229.0 / 18469.0).epsilon(1e-12));
}

TEST_CASE("spatial separation never pays at K=1", "[flops]") {
  for (int i : {1, 4, 128}) {
    const CellConfig sp{CellVariant::Spatial, i, i, 1, 1};
    const CellConfig st{CellVariant::Standard, i, i, 1, 1};
    CHECK(flops_spatial(sp, 2, 2).total() > flops_standard(st, 2, 2).total());
  }
}

TEST_CASE("spatial ratio approaches 2/K for wide layers", "[flops]") {
  const CellConfig cfg{CellVariant::Spatial, 1000000, 1000000, 3, 3};
  const double r = ratio_vs_standard(cfg, 1, 1);
  CHECK(std::abs(r - 2.0 / 3.0) / (2.0 / 3.0) < 0.001);
}

TEST_CASE("depthwise equals standard at one channel", "[flops]") {
  CHECK(flops_depthwise({CellVariant::Depthwise, 1, 1, 3, 3}, 4, 4).total() ==
        flops_standard({CellVariant::Standard, 1, 1, 3, 3}, 4, 4).total());
}

TEST_CASE("depthwise ratio tracks 1/I", "[flops]") {
  for (int i : {8, 16, 32, 64, 128, 256}) {
    const double r = ratio_vs_standard({CellVariant::Depthwise, i, i, 3, 3}, 1, 1);
    const double approx = 1.0 / i;
    CHECK(r < 2.0 * approx);
    CHECK(r > approx / 2.0);
  }
}

TEST_CASE("separable always costs more than depthwise", "[flops]") {
  for (int i : {1, 2, 8, 64, 256}) {
    CHECK(flops_separable({CellVariant::Separable, i, i, 3, 3}, 3, 3).total() >
          flops_depthwise({CellVariant::Depthwise, i, i, 3, 3}, 3, 3).total());
  }
}

TEST_CASE("separable ratio tracks 1/I + 1/(KxKy)", "[flops]") {
  for (int i : {32, 64, 128, 256}) {
    const double r = ratio_vs_standard({CellVariant::Separable, i, i, 3, 3}, 1, 1);
    const double approx = 1.0 / i + 1.0 / 9.0;
    CHECK(std::abs(r - approx) / approx < 0.05);
  }
}

TEST_CASE("components sum to the closed-form totals on random configs", "[flops]") {
  Rng rng(31);
  for (int n = 0; n < 100; ++n) {
    CellConfig cfg;
    const int pick = static_cast<int>(rng.uniform_int(4));
    cfg.variant = static_cast<CellVariant>(pick);
    cfg.out_channels = 1 + static_cast<int>(rng.uniform_int(8));
    cfg.in_channels = cfg.variant == CellVariant::Depthwise
                          ? cfg.out_channels
                          : 1 + static_cast<int>(rng.uniform_int(8));
    cfg.kernel_h = 2 * static_cast<int>(rng.uniform_int(3)) + 1;
    cfg.kernel_w = 2 * static_cast<int>(rng.uniform_int(3)) + 1;
    const int dx = 1 + static_cast<int>(rng.uniform_int(7));
    const int dy = 1 + static_cast<int>(rng.uniform_int(7));
    const FlopReport r = analytic_flops(cfg, dx, dy);
    CHECK(r.convolutions + r.hadamard + r.sigmoid + r.tanh + r.additions == r.total());
    CHECK(r.total() == closed_form_total(cfg, dx, dy));
  }
}

TEST_CASE("instrumented forward matches the analytic model", "[flops]") {
  FlopCounter fc;
  const CellConfig cfg{CellVariant::Standard, 2, 2, 3, 3};
  const FlopReport measured = measured_flops(cfg, 4, 4, &fc);
  const FlopReport analytic = analytic_flops(cfg, 4, 4);
  CHECK(measured.total() == analytic.total());
  CHECK(measured.convolutions == analytic.convolutions);
  CHECK(measured.hadamard == analytic.hadamard);
  CHECK(measured.sigmoid == analytic.sigmoid);
  CHECK(measured.tanh == analytic.tanh);
  CHECK(measured.additions == analytic.additions);
}

TEST_CASE("instrumented counts are deterministic", "[flops]") {
  FlopCounter fc;
  const CellConfig cfg{CellVariant::Separable, 3, 3, 3, 3};
  const std::uint64_t first = measured_flops(cfg, 5, 6, &fc).total();
  const std::uint64_t second = measured_flops(cfg, 5, 6, &fc).total();
  CHECK(first == second);
}

TEST_CASE("depthwise execution is cheaper than standard", "[flops]") {
  FlopCounter fc;
  const std::uint64_t dw = measured_flops({CellVariant::Depthwise, 8, 8, 3, 3}, 8, 8, &fc).total();
  const std::uint64_t st = measured_flops({CellVariant::Standard, 8, 8, 3, 3}, 8, 8, &fc).total();
  CHECK(dw < st);
}

TEST_CASE("instrumentation requires a counter", "[flops]") {
  CHECK_THROWS_AS(measured_flops({CellVariant::Standard, 1, 1, 3, 3}, 2, 2, nullptr),
                  std::invalid_argument);
}

TEST_CASE("csv rows round-trip through the documented header", "[flops]") {
  CHECK(flops_csv_header() == "variant,kx,ky,in,out,dx,dy,conv,hadamard,sigmoid,tanh,add,total");
  const CellConfig cfg{CellVariant::Separable, 128, 128, 3, 3};
  const FlopReport r = analytic_flops(cfg, 2, 5);
  const auto header = split_csv(flops_csv_header());
  const auto row = split_csv(flops_csv_row(cfg, r));
  REQUIRE(header.size() == 13);
  REQUIRE(row.size() == 13);
  CHECK(row[0] == "sep");
  CHECK(std::stoi(row[1]) == cfg.kernel_h);
  CHECK(std::stoi(row[2]) == cfg.kernel_w);
  CHECK(std::stoi(row[3]) == cfg.in_channels);
  CHECK(std::stoi(row[4]) == cfg.out_channels);
  CHECK(std::stoi(row[5]) == 2);
  CHECK(std::stoi(row[6]) == 5);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[7])) == r.convolutions);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[8])) == r.hadamard);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[9])) == r.sigmoid);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[10])) == r.tanh);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[11])) == r.additions);
  CHECK(static_cast<std::uint64_t>(std::stoll(row[12])) == r.total());
}

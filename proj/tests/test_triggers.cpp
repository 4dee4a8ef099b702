#include <catch2/catch_amalgamated.hpp>

#include "butter/reference.hpp"
#include "butter/rng.hpp"
#include "butter/triggers.hpp"

namespace ad = butter::ad;
using butter::SplitMix64;
using butter::Tensor;
using butter::TriggerParams;

namespace {

TriggerParams<double> zero_params(int channels, int f, int fh) {
  TriggerParams<double> p;
  p.clfd_conv = Tensor<double>({f * f, channels, 3, 3});
  p.chfa_conv = Tensor<double>({fh * fh, channels, 3, 3});
  return p;
}

}  // namespace

TEST_CASE("zero conv weights give uniform damping stencils") {
  SplitMix64 rng(51);
  auto m = butter::random_tensor<double>({2, 4, 4}, rng, -2, 2);
  auto q = butter::clfd_kernels(m, zero_params(2, 3, 3));
  REQUIRE(q.f == 3);
  REQUIRE(q.kernels.dims() == std::vector<int>{9, 4, 4});
  for (std::int64_t i = 0; i < q.kernels.size(); ++i) REQUIRE(q.kernels[i] == 1.0 / 9.0);
}

TEST_CASE("zero conv weights give the frozen high-pass stencil") {
  SplitMix64 rng(52);
  auto m = butter::random_tensor<double>({2, 4, 4}, rng, -2, 2);
  auto w = butter::chfa_kernels(m, zero_params(2, 3, 3));
  REQUIRE(w.f == 3);
  const std::int64_t plane = 16;
  for (int k = 0; k < 9; ++k)
    for (std::int64_t i = 0; i < plane; ++i) {
      const double got = w.kernels[k * plane + i];
      if (k == 4)
        REQUIRE(got == 1.0 - 1.0 / 9.0);  // center keeps the identity tap
      else
        REQUIRE(got == -1.0 / 9.0);
    }
}

TEST_CASE("damping stencils are positive and normalized") {
  SplitMix64 rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const int c = rng.uniform_int(1, 3);
    const int f = rng.uniform_int(0, 1) ? 3 : 5;
    auto p = butter::random_trigger_params<double>(c, f, 3, rng, 0.4);
    auto m = butter::random_tensor<double>({c, 4, 6}, rng, -2, 2);
    auto q = butter::clfd_kernels(m, p);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) {
        double sum = 0;
        for (int k = 0; k < f * f; ++k) {
          const double tap = q.kernels.at(k, i, j);
          REQUIRE(tap > 0.0);
          REQUIRE(tap < 1.0);
          sum += tap;
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
      }
  }
}

TEST_CASE("amplifier stencils sum to zero with a bounded center") {
  SplitMix64 rng(54);
  for (int trial = 0; trial < 10; ++trial) {
    const int c = rng.uniform_int(1, 3);
    const int f = rng.uniform_int(0, 1) ? 3 : 5;
    auto p = butter::random_trigger_params<double>(c, 3, f, rng, 0.4);
    auto m = butter::random_tensor<double>({c, 5, 4}, rng, -2, 2);
    auto w = butter::chfa_kernels(m, p);
    const int center = (f / 2) * f + f / 2;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        double sum = 0;
        for (int k = 0; k < f * f; ++k) {
          const double tap = w.kernels.at(k, i, j);
          if (k == center) {
            REQUIRE(tap > 0.0);
            REQUIRE(tap < 1.0);
          } else {
            REQUIRE(tap < 0.0);
            REQUIRE(tap > -1.0);
          }
          sum += tap;
        }
        REQUIRE(sum == Catch::Approx(0.0).margin(1e-12));
      }
  }
}

TEST_CASE("damping stencils are the softmax of a context convolution") {
  SplitMix64 rng(55);
  auto p = butter::random_trigger_params<double>(3, 3, 3, rng, 0.5);
  auto m = butter::random_tensor<double>({3, 4, 4}, rng, -2, 2);
  auto q = butter::clfd_kernels(m, p);
  auto logits = butter::ref::conv2d(m, p.clfd_conv, butter::Border::kReplicate);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      std::vector<double> v(9);
      for (int k = 0; k < 9; ++k) v[static_cast<std::size_t>(k)] = logits.at(k, i, j);
      auto s = butter::ref::softmax_vector(v);
      for (int k = 0; k < 9; ++k)
        REQUIRE(q.kernels.at(k, i, j) == Catch::Approx(s[static_cast<std::size_t>(k)]).margin(1e-12));
    }
}

TEST_CASE("uniform stencils upsample to window means") {
  // zero conv weights make every stencil the 3x3 box filter, so all four
  // output phases carry the replicate-border window mean of the coarse map
  Tensor<double> b({1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> m({1, 4, 4});
  auto q = butter::clfd_kernels(m, zero_params(1, 3, 3));
  auto up = butter::clfd_apply(b, q);
  REQUIRE(up.dims() == std::vector<int>{1, 4, 4});
  const double want00 = 18.0 / 9.0, want01 = 21.0 / 9.0;
  const double want10 = 24.0 / 9.0, want11 = 27.0 / 9.0;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj) {
      REQUIRE(up.at(0, 0 + di, 0 + dj) == Catch::Approx(want00).margin(1e-12));
      REQUIRE(up.at(0, 0 + di, 2 + dj) == Catch::Approx(want01).margin(1e-12));
      REQUIRE(up.at(0, 2 + di, 0 + dj) == Catch::Approx(want10).margin(1e-12));
      REQUIRE(up.at(0, 2 + di, 2 + dj) == Catch::Approx(want11).margin(1e-12));
    }
}

TEST_CASE("each output phase blends with its own stencil") {
  SplitMix64 rng(56);
  auto b = butter::random_tensor<double>({2, 3, 3}, rng, -2, 2);
  auto q = butter::random_tensor<double>({9, 6, 6}, rng, -1, 1);
  // normalize per pixel so the field looks like a softmax output
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double z = 0;
      for (int k = 0; k < 9; ++k) z += std::exp(q.at(k, i, j));
      for (int k = 0; k < 9; ++k) q.at(k, i, j) = std::exp(q.at(k, i, j)) / z;
    }
  auto up = butter::clfd_apply(ad::constant(b), ad::constant(q))->value;
  auto grouped = butter::space_to_depth(q);
  for (int g = 0; g < 4; ++g) {
    Tensor<double> bank({9, 3, 3});
    for (int k = 0; k < 9; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) bank.at(k, i, j) = grouped.at(g * 9 + k, i, j);
    auto phase = butter::ref::percell_filter(b, bank);
    const int di = g / 2, dj = g % 2;
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          REQUIRE(up.at(c, 2 * i + di, 2 * j + dj) ==
                  Catch::Approx(phase.at(c, i, j)).margin(1e-12));
  }
}

TEST_CASE("amplifier application is a residual high-pass") {
  SplitMix64 rng(57);
  auto p = butter::random_trigger_params<double>(2, 3, 3, rng, 0.5);
  auto m = butter::random_tensor<double>({2, 5, 5}, rng, -2, 2);
  auto a = butter::random_tensor<double>({2, 5, 5}, rng, -2, 2);
  auto w = butter::chfa_kernels(m, p);
  auto out = butter::chfa_apply(a, w);
  auto resp = butter::ref::percell_filter(a, w.kernels);
  for (std::int64_t i = 0; i < out.size(); ++i)
    REQUIRE(out[i] == Catch::Approx(a[i] + resp[i]).margin(1e-12));
}

TEST_CASE("constant maps pass through the amplifier") {
  SplitMix64 rng(58);
  auto p = butter::random_trigger_params<double>(2, 3, 5, rng, 0.5);
  auto m = butter::random_tensor<double>({2, 4, 4}, rng, -2, 2);
  auto a = Tensor<double>::full({2, 4, 4}, 0.7325);
  auto out = butter::chfa_apply(a, butter::chfa_kernels(m, p));
  for (std::int64_t i = 0; i < out.size(); ++i)
    REQUIRE(out[i] == Catch::Approx(0.7325).margin(1e-12));
}

TEST_CASE("the damping path needs an even context map") {
  SplitMix64 rng(59);
  auto p = butter::random_trigger_params<double>(1, 3, 3, rng, 0.5);
  Tensor<double> m_odd({1, 5, 4});
  REQUIRE_THROWS_AS(butter::clfd_kernels(m_odd, p), std::invalid_argument);
  Tensor<double> m_ok({1, 4, 4});
  REQUIRE_NOTHROW(butter::clfd_kernels(m_ok, p));
}

TEST_CASE("stencil banks must hold an odd square of taps") {
  REQUIRE(butter::stencil_extent(9, "t") == 3);
  REQUIRE(butter::stencil_extent(25, "t") == 5);
  REQUIRE(butter::stencil_extent(1, "t") == 1);
  REQUIRE_THROWS_AS(butter::stencil_extent(4, "t"), std::invalid_argument);   // even square
  REQUIRE_THROWS_AS(butter::stencil_extent(8, "t"), std::invalid_argument);   // not a square
  REQUIRE_THROWS_AS(butter::stencil_extent(12, "t"), std::invalid_argument);
}

TEST_CASE("kernel fields at 2x resolution are required for upsampling") {
  Tensor<double> b({1, 3, 3});
  Tensor<double> q_bad({9, 4, 4});  // wrong scale for a 3x3 coarse map
  REQUIRE_THROWS_AS(butter::clfd_apply(ad::constant(b), ad::constant(q_bad)),
                    std::invalid_argument);
}

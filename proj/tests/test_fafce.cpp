#include <catch2/catch_amalgamated.hpp>

#include "butter/fafce.hpp"
#include "butter/rng.hpp"

namespace ad = butter::ad;
using butter::FafceParams;
using butter::FafceTrace;
using butter::SplitMix64;
using butter::Tensor;
using butter::UpsampleMode;

TEST_CASE("constant inputs pass straight through") {
  SplitMix64 rng(71);
  for (auto mode : {UpsampleMode::kClfd, UpsampleMode::kNearest}) {
    auto p = butter::random_fafce_params<double>(3, 3, 3, rng, 0.5);
    p.upsample_mode = mode;
    const double ca = -0.625, cb = 1.375;
    auto a = Tensor<double>::full({3, 8, 8}, ca);
    auto b = Tensor<double>::full({3, 4, 4}, cb);
    auto out = butter::fafce_forward(a, b, p);
    REQUIRE(out.dims() == std::vector<int>{3, 8, 8});
    for (std::int64_t i = 0; i < out.size(); ++i)
      REQUIRE(out[i] == Catch::Approx(ca + cb).margin(1e-10));
  }
}

TEST_CASE("both blends are gated channel sums") {
  SplitMix64 rng(72);
  auto p = butter::random_fafce_params<double>(3, 3, 3, rng, 0.4);
  p.w_a1 = Tensor<double>({3}, {0.5, -1.25, 2.0});
  p.w_b1 = Tensor<double>({3}, {1.5, 0.25, -0.75});
  p.w_a3 = Tensor<double>({3}, {-0.5, 1.0, 0.125});
  p.w_b3 = Tensor<double>({3}, {2.0, -2.0, 0.5});
  auto a = butter::random_tensor<double>({3, 8, 8}, rng, -2, 2);
  auto b = butter::random_tensor<double>({3, 4, 4}, rng, -2, 2);
  FafceTrace<double> trace;
  auto out = butter::fafce_forward(a, b, p, &trace);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        REQUIRE(trace.b_initial.at(c, i, j) ==
                Catch::Approx(p.w_b1[c] * trace.b_upsampled.at(c, i, j) +
                              p.w_a1[c] * trace.a_enhanced.at(c, i, j))
                    .margin(1e-12));
        REQUIRE(out.at(c, i, j) ==
                Catch::Approx(p.w_b3[c] * trace.b_intermediate.at(c, i, j) +
                              p.w_a3[c] * trace.a_enhanced.at(c, i, j))
                    .margin(1e-12));
      }
}

TEST_CASE("zero alignment weights keep stage two inert") {
  SplitMix64 rng(73);
  auto p = butter::random_fafce_params<double>(2, 3, 3, rng, 0.5);
  p.displacement.orient_conv = Tensor<double>({2, 10, 3, 3});  // zero orientation
  auto a = butter::random_tensor<double>({2, 6, 6}, rng, -2, 2);
  auto b = butter::random_tensor<double>({2, 3, 3}, rng, -2, 2);
  FafceTrace<double> trace;
  butter::fafce_forward(a, b, p, &trace);
  for (std::int64_t i = 0; i < trace.displacement.size(); ++i)
    REQUIRE(trace.displacement[i] == 0.0);
  for (std::int64_t i = 0; i < trace.b_upsampled.size(); ++i)
    REQUIRE(trace.b_intermediate[i] == trace.b_upsampled[i]);
}

TEST_CASE("the trace exposes every stage at the right shape") {
  SplitMix64 rng(74);
  auto p = butter::random_fafce_params<double>(3, 3, 5, rng, 0.4);
  auto a = butter::random_tensor<double>({3, 8, 8}, rng, -2, 2);
  auto b = butter::random_tensor<double>({3, 4, 4}, rng, -2, 2);
  FafceTrace<double> trace;
  auto out = butter::fafce_forward(a, b, p, &trace);
  REQUIRE(trace.m.dims() == std::vector<int>{3, 8, 8});
  REQUIRE(trace.damping.dims() == std::vector<int>{9, 8, 8});
  REQUIRE(trace.amplifier.dims() == std::vector<int>{25, 8, 8});
  REQUIRE(trace.a_enhanced.dims() == std::vector<int>{3, 8, 8});
  REQUIRE(trace.b_upsampled.dims() == std::vector<int>{3, 8, 8});
  REQUIRE(trace.b_initial.dims() == std::vector<int>{3, 8, 8});
  REQUIRE(trace.similarity.dims() == std::vector<int>{8, 8, 8});
  REQUIRE(trace.displacement.dims() == std::vector<int>{2, 8, 8});
  REQUIRE(trace.b_intermediate.dims() == std::vector<int>{3, 8, 8});
  REQUIRE(trace.b_out.dims() == std::vector<int>{3, 8, 8});
  for (std::int64_t i = 0; i < out.size(); ++i) REQUIRE(trace.b_out[i] == out[i]);
  // the context map is the fine map plus the block-replicated coarse map
  auto up = butter::nearest_upsample2x(b);
  for (std::int64_t i = 0; i < trace.m.size(); ++i) REQUIRE(trace.m[i] == a[i] + up[i]);
}

TEST_CASE("the preliminary blend is the first stage of the full pass") {
  SplitMix64 rng(75);
  auto p = butter::random_fafce_params<double>(2, 3, 3, rng, 0.5);
  auto a = butter::random_tensor<double>({2, 6, 6}, rng, -2, 2);
  auto b = butter::random_tensor<double>({2, 3, 3}, rng, -2, 2);
  FafceTrace<double> trace;
  butter::fafce_forward(a, b, p, &trace);
  auto pre = butter::preliminary_fuse(a, b, p);
  for (std::int64_t i = 0; i < pre.size(); ++i) REQUIRE(pre[i] == trace.b_initial[i]);
}

TEST_CASE("a pointwise projection reconciles mismatched channels") {
  SplitMix64 rng(76);
  auto p = butter::random_fafce_params<double>(4, 3, 3, rng, 0.4);
  p.upsample_mode = UpsampleMode::kNearest;
  auto a = butter::random_tensor<double>({4, 8, 8}, rng, -2, 2);
  auto b = butter::random_tensor<double>({6, 4, 4}, rng, -2, 2);
  REQUIRE_THROWS_AS(butter::fafce_forward(a, b, p), std::invalid_argument);
  p.proj = butter::random_tensor<double>({4, 6, 1, 1}, rng, -0.5, 0.5);
  FafceTrace<double> trace;
  REQUIRE_NOTHROW(butter::fafce_forward(a, b, p, &trace));
  auto projected = butter::conv2d(b, p.proj, butter::Border::kReplicate);
  auto up = butter::nearest_upsample2x(projected);
  for (std::int64_t i = 0; i < up.size(); ++i) REQUIRE(trace.b_upsampled[i] == up[i]);
}

TEST_CASE("nearest mode skips the adaptive upsampler") {
  SplitMix64 rng(77);
  auto p = butter::random_fafce_params<double>(2, 3, 3, rng, 0.5);
  p.upsample_mode = UpsampleMode::kNearest;
  auto a = butter::random_tensor<double>({2, 6, 6}, rng, -2, 2);
  auto b = butter::random_tensor<double>({2, 3, 3}, rng, -2, 2);
  FafceTrace<double> trace;
  butter::fafce_forward(a, b, p, &trace);
  REQUIRE(trace.damping.size() == 0);  // never produced
  auto up = butter::nearest_upsample2x(b);
  for (std::int64_t i = 0; i < up.size(); ++i) REQUIRE(trace.b_upsampled[i] == up[i]);
}

TEST_CASE("the fine map must sit at exactly twice the coarse resolution") {
  SplitMix64 rng(78);
  auto p = butter::random_fafce_params<double>(2, 3, 3, rng, 0.5);
  auto b = butter::random_tensor<double>({2, 4, 4}, rng, -1, 1);
  REQUIRE_THROWS_AS(butter::fafce_forward(butter::random_tensor<double>({2, 6, 6}, rng, -1, 1), b, p),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(butter::fafce_forward(butter::random_tensor<double>({2, 8, 6}, rng, -1, 1), b, p),
                    std::invalid_argument);
  REQUIRE_NOTHROW(butter::fafce_forward(butter::random_tensor<double>({2, 8, 8}, rng, -1, 1), b, p));
}

TEST_CASE("gates at one make an untrained unit a residual sum") {
  // with unit gates and zero trigger and alignment convs the unit reduces to
  // uniform-damped upsampling plus the plain fine map, twice blended
  SplitMix64 rng(79);
  FafceParams<double> p;
  p.trigger.clfd_conv = Tensor<double>({9, 2, 3, 3});
  p.trigger.chfa_conv = Tensor<double>({9, 2, 3, 3});
  p.displacement.orient_conv = Tensor<double>({2, 10, 3, 3});
  p.displacement.scale_conv = Tensor<double>({2, 10, 3, 3});
  p.w_a1 = Tensor<double>::full({2}, 1.0);
  p.w_b1 = Tensor<double>::full({2}, 1.0);
  p.w_a3 = Tensor<double>::full({2}, 1.0);
  p.w_b3 = Tensor<double>::full({2}, 1.0);
  auto a = butter::random_tensor<double>({2, 6, 6}, rng, -2, 2);
  auto b = butter::random_tensor<double>({2, 3, 3}, rng, -2, 2);
  FafceTrace<double> trace;
  auto out = butter::fafce_forward(a, b, p, &trace);
  // zero amplifier conv still leaves a real stencil, so a_enhanced != a, but
  // zero orientation keeps stage two frozen: out = b_upsampled + a_enhanced
  for (std::int64_t i = 0; i < out.size(); ++i)
    REQUIRE(out[i] == Catch::Approx(trace.b_upsampled[i] + trace.a_enhanced[i]).margin(1e-12));
}

// Acceptance gate: one line per criterion, wall-clock budget enforced,
// nonzero exit if anything fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "butter/cli.hpp"

namespace ad = butter::ad;

namespace {

using butter::Tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

// elementwise deviation scaled by the oracle's magnitude, floored at one so
// near-zero oracles read as absolute error
double scaled_err(const Tensor<double>& got, const Tensor<double>& want) {
  double diff = 0, scale = 1.0;
  for (std::int64_t i = 0; i < want.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return diff / scale;
}

int g_failed = 0;

template <typename Fn>
void criterion(const std::string& name, double budget_s, Fn&& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("unexpected exception: ") + e.what();
  }
  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_budget = dt < budget_s;
  const bool pass = o.pass && in_budget;
  g_failed += pass ? 0 : 1;
  std::cout << (pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(24) << name << " "
            << o.detail << (in_budget ? "" : "  (over budget)") << "  [" << std::fixed
            << std::setprecision(2) << dt << "s / " << std::setprecision(0) << budget_s << "s]\n";
}

// ---- criteria ----

Outcome kernel_normalization() {
  double worst_sum1 = 0, worst_sum0 = 0, min_tap = 1e300;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    butter::SplitMix64 rng(seed);
    const int f = seed % 2 ? 3 : 5;
    auto p = butter::random_trigger_params<double>(2, f, f, rng, 0.6);
    auto m = ad::constant(butter::random_tensor<double>({2, 6, 6}, rng, -2, 2));
    auto q = butter::clfd_kernels(m, ad::constant(p.clfd_conv));
    auto w = butter::chfa_kernels(m, ad::constant(p.chfa_conv));
    const int taps = q->value.dim(0);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double qs = 0, ws = 0;
        for (int t = 0; t < taps; ++t) {
          min_tap = std::min(min_tap, q->value.at(t, i, j));
          qs += q->value.at(t, i, j);
        }
        for (int t = 0; t < w->value.dim(0); ++t) ws += w->value.at(t, i, j);
        worst_sum1 = std::max(worst_sum1, std::abs(qs - 1.0));
        worst_sum0 = std::max(worst_sum0, std::abs(ws));
      }
  }
  Outcome o;
  o.pass = min_tap > 0 && worst_sum1 < 1e-7 && worst_sum0 < 1e-7;
  o.detail = "1000 seeds  low-pass |sum-1| " + sci(worst_sum1) + " min tap " + sci(min_tap) +
             "  high-pass |sum| " + sci(worst_sum0);
  return o;
}

Outcome dc_contracts() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    butter::SplitMix64 rng(seed * 31 + 7);
    auto p = butter::random_trigger_params<double>(3, 3, 5, rng, 0.5);
    auto m = ad::constant(butter::random_tensor<double>({3, 8, 8}, rng, -2, 2));
    const double cb = rng.uniform() * 4 - 2, ca = rng.uniform() * 4 - 2;
    auto up = butter::clfd_apply(ad::constant(Tensor<double>::full({3, 4, 4}, cb)),
                                 butter::clfd_kernels(m, ad::constant(p.clfd_conv)));
    for (std::int64_t i = 0; i < up->value.size(); ++i)
      worst = std::max(worst, std::abs(up->value[i] - cb));
    auto enh = butter::chfa_apply(ad::constant(Tensor<double>::full({3, 8, 8}, ca)),
                                  butter::chfa_kernels(m, ad::constant(p.chfa_conv)));
    for (std::int64_t i = 0; i < enh->value.size(); ++i)
      worst = std::max(worst, std::abs(enh->value[i] - ca));
  }
  Outcome o;
  o.pass = worst < 1e-10;
  o.detail = "100 seeds  max constant drift " + sci(worst);
  return o;
}

Outcome oracle_equivalence() {
  double conv_err = 0, dw_err = 0, bil_err = 0, dft_err = 0;
  butter::SplitMix64 rng(0xACCE10);
  auto dim = [&](int lo, int hi) { return rng.uniform_int(lo, hi); };
  for (int i = 0; i < 1000; ++i) {
    const auto border = i % 2 ? butter::Border::kZero : butter::Border::kReplicate;
    {
      const int ci = dim(1, 3), co = dim(1, 3), h = dim(1, 8), w = dim(1, 8), k = i % 3 ? 3 : 1;
      auto x = butter::random_tensor<double>({ci, h, w}, rng, -3, 3);
      auto kk = butter::random_tensor<double>({co, ci, k, k}, rng, -2, 2);
      conv_err = std::max(conv_err,
                          scaled_err(butter::conv2d(x, kk, border), butter::ref::conv2d(x, kk, border)));
    }
    {
      const int c = dim(1, 4), h = dim(1, 8), w = dim(1, 8), k = i % 3 ? 3 : 1;
      const int stride = i % 5 ? 1 : 2;
      auto x = butter::random_tensor<double>({c, h, w}, rng, -3, 3);
      auto kk = butter::random_tensor<double>({c, k, k}, rng, -2, 2);
      dw_err = std::max(dw_err, scaled_err(butter::depthwise_conv2d(x, kk, border, stride),
                                           butter::ref::depthwise_conv2d(x, kk, border, stride)));
    }
    {
      const int c = dim(1, 3), h = dim(2, 8), w = dim(2, 8), ho = dim(1, 8), wo = dim(1, 8);
      auto x = butter::random_tensor<double>({c, h, w}, rng, -3, 3);
      Tensor<double> coords({2, ho, wo});
      for (int r = 0; r < ho; ++r)
        for (int s = 0; s < wo; ++s) {
          coords.at(0, r, s) = rng.uniform() * (h + 2.0) - 1.5;  // runs past both edges
          coords.at(1, r, s) = rng.uniform() * (w + 2.0) - 1.5;
        }
      auto got = butter::bilinear_sample(x, coords);
      Tensor<double> want(got.dims());
      for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < ho; ++r)
          for (int s = 0; s < wo; ++s)
            want.at(ch, r, s) = butter::ref::bilinear_at(x, ch, coords.at(0, r, s), coords.at(1, r, s));
      bil_err = std::max(bil_err, scaled_err(got, want));
    }
    {
      const int c = dim(1, 2), h = dim(1, 8), w = dim(1, 8);
      auto x = butter::random_tensor<double>({c, h, w}, rng, -3, 3);
      auto got = butter::dft2(x);
      auto want = butter::ref::dft2(x);
      double diff = 0, scale = 1.0;
      for (std::size_t j = 0; j < want.re.size(); ++j) {
        diff = std::max({diff, std::abs(got.re[j] - want.re[j]), std::abs(got.im[j] - want.im[j])});
        scale = std::max({scale, std::abs(want.re[j]), std::abs(want.im[j])});
      }
      dft_err = std::max(dft_err, diff / scale);
    }
  }
  Outcome o;
  o.pass = conv_err < 1e-9 && dw_err < 1e-9 && bil_err < 1e-9 && dft_err < 1e-9;
  o.detail = "1000 cases each  conv " + sci(conv_err) + "  depthwise " + sci(dw_err) +
             "  bilinear " + sci(bil_err) + "  dft " + sci(dft_err);
  return o;
}

Outcome aliasing_law() {
  int held = 0;
  for (int i = 1; i <= 9; ++i) {
    butter::AliasArgs args;
    args.ratio = 0.05 * i;
    args.samples = 40;
    std::ostringstream out, err;
    if (butter::cmd_alias_demo(args, out, err) == butter::kExitOk) ++held;
  }
  Outcome o;
  o.pass = held == 9;
  o.detail = std::to_string(held) + "/9 tones land on the analytic bin";
  return o;
}

Outcome gradient_correctness() {
  const char* names[] = {"triggers", "displacement", "fafce", "phffnet", "loss", "end2end"};
  double worst = 0;
  int passed = 0;
  for (std::uint64_t i = 0; i < 6; ++i) {
    auto target = butter::make_gradcheck_target(names[i], 2024 + i);
    auto rep = butter::run_gradcheck(target, 1e-4, 1e-4, 2024 + i);
    worst = std::max(worst, rep.worst);
    passed += rep.pass ? 1 : 0;
  }
  Outcome o;
  o.pass = passed == 6 && worst < 1e-4;
  o.detail = std::to_string(passed) + "/6 targets under 1e-04  worst " + sci(worst);
  return o;
}

Outcome casf_convexity() {
  double worst_sum1 = 0, min_lambda = 1e300, worst_escape = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    butter::SplitMix64 rng(seed ^ 0xCA5F);
    auto x1 = butter::random_tensor<double>({2, 5, 5}, rng, -3, 3);
    auto x2 = butter::random_tensor<double>({2, 5, 5}, rng, -3, 3);
    auto x3 = butter::random_tensor<double>({2, 5, 5}, rng, -3, 3);
    butter::CasfVars<double> cv;
    for (int i = 0; i < 3; ++i)
      cv.logit_conv[static_cast<std::size_t>(i)] =
          ad::constant(butter::random_tensor<double>({1, 2, 1, 1}, rng, -0.8, 0.8));
    auto v1 = ad::constant(x1), v2 = ad::constant(x2), v3 = ad::constant(x3);
    auto lam = butter::casf_weights(v1, v2, v3, cv);
    auto fused = butter::casf_fuse(v1, v2, v3, lam);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int t = 0; t < 3; ++t) {
          min_lambda = std::min(min_lambda, lam->value.at(t, i, j));
          s += lam->value.at(t, i, j);
        }
        worst_sum1 = std::max(worst_sum1, std::abs(s - 1.0));
        for (int c = 0; c < 2; ++c) {
          const double lo = std::min({x1.at(c, i, j), x2.at(c, i, j), x3.at(c, i, j)});
          const double hi = std::max({x1.at(c, i, j), x2.at(c, i, j), x3.at(c, i, j)});
          const double f = fused->value.at(c, i, j);
          worst_escape = std::max({worst_escape, lo - f, f - hi});
        }
      }
  }
  Outcome o;
  o.pass = min_lambda >= 0 && worst_sum1 < 1e-7 && worst_escape < 1e-12;
  o.detail = "1000 seeds  min weight " + sci(min_lambda) + "  |sum-1| " + sci(worst_sum1) +
             "  envelope escape " + sci(worst_escape);
  return o;
}

// heads whose responsible pixel carries exactly the given box and class row
std::vector<butter::HeadOutput<double>> boxed_heads(double x, double y, double w, double h,
                                                    const std::vector<double>& cls_probs) {
  std::vector<butter::HeadOutput<double>> heads(4);
  const int k = static_cast<int>(cls_probs.size());
  for (auto& hd : heads) {
    hd.box = Tensor<double>({4, 2, 2});
    hd.cls = Tensor<double>({k, 2, 2});
    hd.obj = Tensor<double>::full({1, 2, 2}, 0.5);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        hd.box.at(0, i, j) = x;
        hd.box.at(1, i, j) = y;
        hd.box.at(2, i, j) = w;
        hd.box.at(3, i, j) = h;
        for (int c = 0; c < k; ++c) hd.cls.at(c, i, j) = cls_probs[static_cast<std::size_t>(c)];
      }
  }
  return heads;
}

butter::GroundTruth<double> one_box(double x, double y, double w, double h, int cls, int k) {
  butter::GroundTruth<double> gt;
  gt.grid_s = 1;
  gt.boxes_b = 1;
  gt.num_classes = k;
  gt.records = {{0, 0, x, y, w, h, cls}};
  return gt;
}

Outcome loss_semantics() {
  // a perfect prediction scores zero up to the probability clamp
  auto heads = boxed_heads(0.35, 0.45, 0.2, 0.3, {1.0, 0.0});
  auto gt = one_box(0.35, 0.45, 0.2, 0.3, 0, 2);
  const double iou0 = butter::iou_coordinate_loss(heads, gt, nullptr);
  const double cls0 = butter::cls_loss(heads, gt);
  auto [probs, labels] = butter::gather_class_rows(heads, gt);
  const double dfl0 = butter::dfl_focal_loss(probs, labels, 0.25, 2.0);
  const double zero_worst = std::max({iou0, cls0, dfl0});

  // composite weighting is the literal weighted sum, bit for bit
  bool exact = true;
  butter::SplitMix64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform() * 3, b = rng.uniform() * 3, d = rng.uniform() * 3;
    auto lb = butter::total_loss(a, b, d, butter::LossWeights<double>{});
    exact = exact && lb.total == 7.5 * a + 0.5 * b + 1.5 * d;
  }

  // hand-evaluated single-box cases
  double hand_worst = 0;
  {
    auto h2 = boxed_heads(0.45, 0.45, 0.2, 0.3, {1.0});
    hand_worst = std::max(hand_worst,
                          std::abs(butter::iou_coordinate_loss(h2, one_box(0.35, 0.45, 0.2, 0.3, 0, 1), nullptr) - 0.01));
  }
  {
    auto h2 = boxed_heads(0.35, 0.45, 1.0, 0.3, {1.0});
    hand_worst = std::max(hand_worst,
                          std::abs(butter::iou_coordinate_loss(h2, one_box(0.35, 0.45, 0.25, 0.3, 0, 1), nullptr) - 0.25));
  }
  {
    auto h2 = boxed_heads(0.35, 0.45, 0.2, 0.3, {0.8});
    hand_worst = std::max(hand_worst, std::abs(butter::cls_loss(h2, one_box(0.35, 0.45, 0.2, 0.3, 0, 1)) - 0.04));
    auto [p2, l2] = butter::gather_class_rows(h2, one_box(0.35, 0.45, 0.2, 0.3, 0, 1));
    hand_worst = std::max(hand_worst,
                          std::abs(butter::dfl_focal_loss(p2, l2, 1.0, 2.0) - 0.00892574205256839));
  }

  Outcome o;
  o.pass = zero_worst < 1e-6 && exact && hand_worst < 1e-12;
  o.detail = "perfect " + sci(zero_worst) + "  weighted sum " + (exact ? "exact" : "DRIFTED") +
             "  hand cases " + sci(hand_worst);
  return o;
}

Outcome end2end_trainability() {
  auto scene_rng = butter::SplitMix64(424242);
  const auto image = butter::random_tensor<double>({3, 64, 64}, scene_rng, -1, 1);
  butter::GroundTruth<double> gt;
  gt.grid_s = 2;
  gt.boxes_b = 4;
  gt.num_classes = 2;
  gt.records = {{0, 0, 0.3, 0.4, 0.25, 0.3, 0},
                {1, 1, 0.7, 0.3, 0.4, 0.35, 1},
                {2, 2, 0.4, 0.7, 0.5, 0.5, 0},
                {3, 3, 0.6, 0.6, 0.75, 0.8, 1}};
  const butter::LossWeights<double> w{};
  int decreased = 0;
  double first_before = 0, first_after = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    butter::SplitMix64 rng(1000 + seed);
    auto params = butter::random_detector_params<double>(4, 2, 3, 5, rng, 0.25);
    auto vars = butter::make_detector_vars(params);
    auto out = butter::detector_forward(ad::constant(image), vars);
    auto loss = butter::detection_loss(out.heads, gt, w, 0.25, 2.0);
    const double before = loss.total->value[0];
    ad::backward(loss.total);
    butter::detector_sgd_step(params, vars, 1e-3);
    auto vars2 = butter::make_detector_vars(params);
    auto out2 = butter::detector_forward(ad::constant(image), vars2);
    auto loss2 = butter::detection_loss(out2.heads, gt, w, 0.25, 2.0);
    const double after = loss2.total->value[0];
    if (seed == 1) {
      first_before = before;
      first_after = after;
    }
    if (std::isfinite(after) && after < before) ++decreased;
  }
  Outcome o;
  o.pass = decreased >= 95;
  o.detail = std::to_string(decreased) + "/100 inits strictly decrease (first " + sci(first_before) +
             " -> " + sci(first_after) + ")";
  return o;
}

Outcome shape_contract() {
  butter::SplitMix64 rng(7);
  auto params = butter::random_detector_params<double>(4, 2, 3, 5, rng, 0.25);
  auto vars = butter::make_detector_vars(params);
  auto image = butter::random_tensor<double>({3, 640, 640}, rng, -1, 1);
  auto out = butter::detector_forward(ad::constant(image), vars);
  bool ok = out.heads.size() == 4;
  std::string got;
  for (std::size_t i = 0; i < out.heads.size(); ++i) {
    const int res = 640 >> (2 + static_cast<int>(i));  // strides 4, 8, 16, 32
    const auto& hd = out.heads[i];
    ok = ok && hd.box->value.dims() == std::vector<int>{4, res, res} &&
         hd.cls->value.dims() == std::vector<int>{2, res, res} &&
         hd.obj->value.dims() == std::vector<int>{1, res, res} &&
         butter::all_finite(hd.box->value);
    got += (i ? "/" : "") + std::to_string(hd.box->value.dim(1));
  }
  Outcome o;
  o.pass = ok;
  o.detail = "640x640x3 -> 4 heads at " + got + " (want 160/80/40/20)";
  return o;
}

}  // namespace

int main() {
  std::cout << "acceptance: detection neck property gate\n";
  criterion("kernel-normalization", 30, kernel_normalization);
  criterion("dc-contracts", 10, dc_contracts);
  criterion("oracle-equivalence", 120, oracle_equivalence);
  criterion("aliasing-law", 5, aliasing_law);
  criterion("gradient-correctness", 180, gradient_correctness);
  criterion("casf-convexity", 30, casf_convexity);
  criterion("loss-semantics", 5, loss_semantics);
  criterion("end2end-trainability", 300, end2end_trainability);
  criterion("shape-contract", 30, shape_contract);
  std::cout << (9 - g_failed) << "/9 criteria passed\n";
  return g_failed == 0 ? 0 : 1;
}

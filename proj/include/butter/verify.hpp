#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "butter/detect.hpp"
#include "butter/dft.hpp"
#include "butter/fafce.hpp"
#include "butter/io.hpp"
#include "butter/reference.hpp"

// Self-checking property suites over every module, runnable from the CLI and
// reused by the test binaries. Each suite draws its own seeded instances and
// reports the worst deviation it saw. Everything here runs in double.
namespace butter {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int f = 3;
  int fhat = 3;
  // fault injection: added to one softmax output before the normalization
  // check, so a nonzero value must make that suite fail
  double tamper_softmax = 0.0;
};

namespace vdetail {

using D = double;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline SuiteResult bound(const std::string& name, double worst, double tol) {
  return SuiteResult{name, worst <= tol, "worst " + fmt(worst) + " tol " + fmt(tol)};
}

struct Check {
  bool ok = true;
  std::string why;
  void fail(const std::string& w) {
    if (ok) why = w;
    ok = false;
  }
  void expect(bool cond, const std::string& w) {
    if (!cond) fail(w);
  }
  template <typename Fn>
  void expect_throw(Fn&& fn, const std::string& w) {
    try {
      fn();
      fail(w);
    } catch (const std::exception&) {
    }
  }
  SuiteResult result(const std::string& name) const { return SuiteResult{name, ok, ok ? "ok" : why}; }
};

inline double hf_energy(const Tensor<D>& t) {
  auto f = dft2(t);
  const int h = t.dim(1), w = t.dim(2);
  double e = 0;
  for (int c = 0; c < t.dim(0); ++c)
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v)
        if (is_high_band(u, v, h, w)) {
          const std::int64_t i = (static_cast<std::int64_t>(c) * h + u) * w + v;
          e += f.re[static_cast<std::size_t>(i)] * f.re[static_cast<std::size_t>(i)] +
               f.im[static_cast<std::size_t>(i)] * f.im[static_cast<std::size_t>(i)];
        }
  return e;
}

inline double total_energy_spectrum(const Tensor<D>& t) {
  auto f = dft2(t);
  double e = 0;
  for (std::int64_t i = 0; i < f.size(); ++i)
    e += f.re[static_cast<std::size_t>(i)] * f.re[static_cast<std::size_t>(i)] +
         f.im[static_cast<std::size_t>(i)] * f.im[static_cast<std::size_t>(i)];
  return e;
}

// ---- tensor core ----

inline SuiteResult suite_conv_oracle(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x101);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ci = rng.uniform_int(1, 4), co = rng.uniform_int(1, 4);
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const int k = 2 * rng.uniform_int(0, 2) + 1;
    const Border border = rng.uniform_int(0, 1) ? Border::kReplicate : Border::kZero;
    auto in = random_tensor<D>({ci, h, w}, rng, -2, 2);
    auto kk = random_tensor<D>({co, ci, k, k}, rng, -2, 2);
    worst = std::max(worst, max_abs_diff(conv2d(in, kk, border), ref::conv2d(in, kk, border)));
    auto dk = random_tensor<D>({ci, k, k}, rng, -2, 2);
    const int stride = rng.uniform_int(1, 2);
    worst = std::max(worst, max_abs_diff(depthwise_conv2d(in, dk, border, stride),
                                         ref::depthwise_conv2d(in, dk, border, stride)));
  }
  return bound("conv-oracle", worst, 1e-10);
}

inline SuiteResult suite_softmax_normalization(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x102);
  Check c;
  double worst = 0;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int n = rng.uniform_int(2, 9), h = rng.uniform_int(1, 5), w = rng.uniform_int(1, 5);
    auto x = random_tensor<D>({n, h, w}, rng, -30, 30);
    auto s = softmax_over_axis(x, 0);
    s[0] += opt.tamper_softmax;
    for (int i = 0; i < h && c.ok; ++i)
      for (int j = 0; j < w && c.ok; ++j) {
        double sum = 0;
        for (int ch = 0; ch < n; ++ch) {
          const double v = s.at(ch, i, j);
          c.expect(v > 0 && v < 1, "entry outside (0,1)");
          sum += v;
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
        c.expect(std::fabs(sum - 1.0) <= 1e-12, "pixel sum deviates by " + fmt(std::fabs(sum - 1.0)));
      }
  }
  auto r = c.result("softmax-normalization");
  if (r.pass) r.detail = "worst " + fmt(worst) + " tol 1.000e-12";
  return r;
}

inline SuiteResult suite_softmax_stability(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x103);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int n = rng.uniform_int(2, 9);
    auto x = random_tensor<D>({n, 2, 2}, rng, -5, 5);
    for (double shift : {1000.0, -1000.0}) {
      Tensor<D> y(x.dims());
      for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] + shift;
      c.expect(max_abs_diff(softmax_over_axis(x, 0), softmax_over_axis(y, 0)) <= 1e-12,
               "shifted logits changed the softmax");
    }
    // scalar path against the extended-precision oracle
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = x.at(i, 0, 0);
    auto o = ref::softmax_vector(v);
    auto s = softmax_over_axis(x, 0);
    for (int i = 0; i < n; ++i)
      c.expect(std::fabs(s.at(i, 0, 0) - o[static_cast<std::size_t>(i)]) <= 1e-12, "softmax oracle mismatch");
    c.expect(all_finite(softmax_over_axis(random_tensor<D>({3, 1, 1}, rng, -1e6, 1e6), 0)),
             "extreme logits produced non-finite values");
  }
  return c.result("softmax-stability");
}

inline SuiteResult suite_layout_roundtrip(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x104);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 5), w = rng.uniform_int(1, 5);
    auto x = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -1, 1);
    auto grouped = space_to_depth(x);
    c.expect(max_abs_diff(depth_to_space(grouped), x) == 0.0, "space/depth roundtrip not exact");
    // phase-major layout straight from the index formula
    for (int g = 0; g < 4; ++g)
      for (int cc = 0; cc < ch; ++cc)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            c.expect(grouped.at(g * ch + cc, i, j) == x.at(cc, 2 * i + g / 2, 2 * j + g % 2),
                     "phase layout violated");
  }
  return c.result("layout-roundtrip");
}

inline SuiteResult suite_bilinear_oracle(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x105);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 3), h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const int ho = rng.uniform_int(1, 6), wo = rng.uniform_int(1, 6);
    auto x = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto coords = random_tensor<D>({2, ho, wo}, rng, -2, std::max(h, w) + 2);
    auto got = bilinear_sample(x, coords);
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j)
          worst = std::max(worst, std::fabs(got.at(cc, i, j) -
                                            ref::bilinear_at(x, cc, coords.at(0, i, j), coords.at(1, i, j))));
  }
  return bound("bilinear-oracle", worst, 1e-12);
}

inline SuiteResult suite_dft_oracle(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x106);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 2), h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    auto x = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto fast = dft2(x);
    auto slow = ref::dft2(x);
    double scale_ref = 1e-30;
    for (std::int64_t i = 0; i < slow.size(); ++i)
      scale_ref = std::max(scale_ref, std::max(std::fabs(slow.re[static_cast<std::size_t>(i)]),
                                               std::fabs(slow.im[static_cast<std::size_t>(i)])));
    for (std::int64_t i = 0; i < slow.size(); ++i) {
      worst = std::max(worst, std::fabs(fast.re[static_cast<std::size_t>(i)] - slow.re[static_cast<std::size_t>(i)]) / scale_ref);
      worst = std::max(worst, std::fabs(fast.im[static_cast<std::size_t>(i)] - slow.im[static_cast<std::size_t>(i)]) / scale_ref);
    }
  }
  return bound("dft-oracle", worst, 1e-9);
}

inline SuiteResult suite_dft_identities(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x107);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int h = rng.uniform_int(1, 10), w = rng.uniform_int(1, 10);
    auto x = random_tensor<D>({1, h, w}, rng, -2, 2);
    auto f = dft2(x);
    // roundtrip
    auto back = idft2(f);
    double worst = 0, imag = 0;
    for (std::int64_t i = 0; i < back.size(); ++i) {
      worst = std::max(worst, std::fabs(back.re[static_cast<std::size_t>(i)] - x[i]));
      imag = std::max(imag, std::fabs(back.im[static_cast<std::size_t>(i)]));
    }
    c.expect(worst <= 1e-9 && imag <= 1e-9, "inverse transform failed to reproduce the signal");
    // energy identity for the 1/(HW) forward convention:
    // sum |A_F|^2 = (1/(HW)) sum |A|^2
    double spec = 0, spat = 0;
    for (std::int64_t i = 0; i < f.size(); ++i)
      spec += f.re[static_cast<std::size_t>(i)] * f.re[static_cast<std::size_t>(i)] +
              f.im[static_cast<std::size_t>(i)] * f.im[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < x.size(); ++i) spat += x[i] * x[i];
    spat /= static_cast<double>(h) * w;
    c.expect(std::fabs(spec - spat) <= 1e-9 * std::max(1.0, spat), "energy identity violated");
    // DC bin is the mean
    double mean = 0;
    for (std::int64_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= static_cast<double>(h) * w;
    c.expect(std::fabs(f.re[0] - mean) <= 1e-12 && std::fabs(f.im[0]) <= 1e-12, "DC bin is not the mean");
  }
  return c.result("dft-identities");
}

inline SuiteResult suite_autodiff_primitives(const VerifyOptions& opt) {
  SplitMix64 rng(opt.seed ^ 0x108);
  using V = ad::Var<D>;
  auto wts = random_tensor<D>({3, 4, 4}, rng, -1, 1);
  auto wts2 = random_tensor<D>({12, 2, 2}, rng, -1, 1);
  auto wts8 = random_tensor<D>({8, 4, 4}, rng, -1, 1);
  auto wts_half = random_tensor<D>({3, 2, 2}, rng, -1, 1);
  auto wts_up = random_tensor<D>({3, 8, 8}, rng, -1, 1);
  auto fixed_k = random_tensor<D>({2, 3, 3, 3}, rng, -1, 1);
  auto fixed_x = random_tensor<D>({3, 4, 4}, rng, -2, 2);
  auto fixed_dk = random_tensor<D>({3, 3, 3}, rng, -1, 1);
  auto fixed_pk = random_tensor<D>({9, 4, 4}, rng, -1, 1);
  auto fixed_d = Tensor<D>({2, 4, 4});
  for (std::int64_t i = 0; i < fixed_d.size(); ++i)
    fixed_d[i] = (rng.uniform_int(0, 1) ? 1 : -1) * rng.uniform(0.15, 0.45);
  auto wconv = random_tensor<D>({2, 4, 4}, rng, -1, 1);
  auto wvec = random_tensor<D>({3}, rng, -1, 1);
  auto wone = random_tensor<D>({1, 4, 4}, rng, -1, 1);
  auto fixed_w = random_tensor<D>({3, 5}, rng, -1, 1);
  auto fixed_b = random_tensor<D>({3}, rng, -1, 1);
  auto fixed_vec = random_tensor<D>({5}, rng, -1, 1);

  struct Case {
    const char* name;
    std::vector<int> dims;
    double lo, hi;
    std::function<V(const V&)> f;
  };
  std::vector<Case> cases = {
      {"mul", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::mul(x, x), wts); }},
      {"sigmoid", {3, 4, 4}, -3, 3, [&](const V& x) { return ad::weighted_sum(ad::sigmoid(x), wts); }},
      {"exp", {3, 4, 4}, -1, 1, [&](const V& x) { return ad::weighted_sum(ad::exp(x), wts); }},
      {"log", {3, 4, 4}, 0.5, 2, [&](const V& x) { return ad::weighted_sum(ad::log(x), wts); }},
      {"pow", {3, 4, 4}, 0.5, 2, [&](const V& x) { return ad::weighted_sum(ad::pow_const(x, 1.7), wts); }},
      {"sqrt0", {3, 4, 4}, 0.5, 2, [&](const V& x) { return ad::weighted_sum(ad::sqrt0(x), wts); }},
      {"clamp", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::clamp(x, -0.9, 0.9), wts); }},
      {"softmax", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::softmax_axis(x, 0), wts); }},
      {"conv-in", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::conv2d(x, ad::constant(fixed_k), Border::kZero), wconv); }},
      {"conv-k", {2, 3, 3, 3}, -1, 1,
       [&](const V& k) { return ad::weighted_sum(ad::conv2d(ad::constant(fixed_x), k, Border::kReplicate), wconv); }},
      {"dwconv", {3, 4, 4}, -2, 2,
       [&](const V& x) {
         return ad::weighted_sum(ad::depthwise_conv2d(x, ad::constant(fixed_dk), Border::kReplicate, 2), wts_half);
       }},
      {"percell-x", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::percell_filter(x, ad::constant(fixed_pk)), wts); }},
      {"percell-k", {9, 4, 4}, -1, 1,
       [&](const V& k) { return ad::weighted_sum(ad::percell_filter(ad::constant(fixed_x), k), wts); }},
      {"space-depth", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::space_to_depth(x), wts2); }},
      {"depth-space", {12, 2, 2}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::depth_to_space(x), wts); }},
      {"upsample", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::nearest_upsample2x(x), wts_up); }},
      {"resample-x", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::resample(x, ad::constant(fixed_d)), wts); }},
      {"resample-d", {2, 4, 4}, 0.15, 0.45,
       [&](const V& d) { return ad::weighted_sum(ad::resample(ad::constant(fixed_x), d), wts); }},
      {"cosine", {3, 4, 4}, 0.3, 2, [&](const V& m) { return ad::weighted_sum(ad::cosine_sim8(m), wts8); }},
      {"maxpool", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::maxpool_same(x, 3), wts); }},
      {"chmean", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::channel_mean_map(x), wone); }},
      {"chmax", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::channel_max_map(x), wone); }},
      {"gavg", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::global_avg_vector(x), wvec); }},
      {"gmax", {3, 4, 4}, -2, 2, [&](const V& x) { return ad::weighted_sum(ad::global_max_vector(x), wvec); }},
      {"chgate", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::mul_channel_gate(x, ad::constant(wvec)), wts); }},
      {"chbias", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::add_channel_bias(x, ad::constant(wvec)), wts); }},
      {"spatial", {3, 4, 4}, -2, 2,
       [&](const V& x) { return ad::weighted_sum(ad::mul_spatial(x, ad::constant(wone)), wts); }},
      {"linear-w", {3, 5}, -1, 1,
       [&](const V& w) { return ad::weighted_sum(ad::linear(w, ad::constant(fixed_vec), ad::constant(fixed_b)), wvec); }},
      {"linear-x", {5}, -1, 1,
       [&](const V& x) { return ad::weighted_sum(ad::linear(ad::constant(fixed_w), x, ad::constant(fixed_b)), wvec); }},
      {"concat-narrow", {3, 4, 4}, -2, 2,
       [&](const V& x) {
         auto cat = ad::concat_channels<D>({x, ad::constant(fixed_x), x});
         return ad::weighted_sum(ad::narrow_channels(cat, 2, 3), wts);
       }},
  };
  double worst = 0;
  std::string at;
  for (auto& cse : cases) {
    auto x0 = random_tensor<D>(cse.dims, rng, cse.lo, cse.hi);
    const double err = ad::grad_check<D>(cse.f, x0, 1e-5);
    if (err > worst) {
      worst = err;
      at = cse.name;
    }
  }
  auto r = bound("autodiff-primitives", worst, 1e-6);
  r.detail += " (worst op: " + at + ")";
  return r;
}

inline SuiteResult suite_softmax_gradient_null(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x109);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    auto x = ad::leaf(random_tensor<D>({rng.uniform_int(2, 6), 3, 3}, rng, -4, 4));
    auto y = ad::sum_all(ad::softmax_axis(x, 0));
    ad::backward(y);
    auto g = ad::gradient(x);
    for (std::int64_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::fabs(g[i]));
  }
  return bound("softmax-gradient-null", worst, 1e-12);
}

// ---- frequency triggers ----

inline SuiteResult suite_damping_normalization(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x201);
  Check c;
  double worst = 0;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
    auto params = random_trigger_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    auto m = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -2, 2);
    auto q = clfd_kernels(m, params);
    const int f2 = q.kernels.dim(0);
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) {
        double sum = 0;
        for (int k = 0; k < f2; ++k) {
          const double v = q.kernels.at(k, i, j);
          c.expect(v > 0, "damping tap not positive");
          sum += v;
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
  }
  c.expect(worst <= 1e-7, "damping tap sum off by " + fmt(worst));
  auto r = c.result("damping-normalization");
  if (r.pass) r.detail = "worst " + fmt(worst) + " tol 1.000e-07";
  return r;
}

inline SuiteResult suite_amplifier_structure(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x202);
  Check c;
  double worst = 0;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6);
    auto params = random_trigger_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    auto m = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto amp = chfa_kernels(m, params);
    const int f = amp.f, center = (f / 2) * f + f / 2;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double sum = 0;
        for (int k = 0; k < f * f; ++k) {
          const double v = amp.kernels.at(k, i, j);
          if (k == center)
            c.expect(v > 0 && v < 1, "center tap outside (0,1)");
          else
            c.expect(v > -1 && v < 0, "off-center tap outside (-1,0)");
          sum += v;
        }
        worst = std::max(worst, std::fabs(sum));
      }
  }
  c.expect(worst <= 1e-7, "amplifier tap sum off by " + fmt(worst));
  auto r = c.result("amplifier-structure");
  if (r.pass) r.detail = "worst " + fmt(worst) + " tol 1.000e-07";
  return r;
}

inline SuiteResult suite_trigger_oracle(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x203);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 3), h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
    auto params = random_trigger_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    auto m = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -2, 2);
    // damping field: reference conv composed with the scalar softmax oracle
    auto logits = ref::conv2d(m, params.clfd_conv, Border::kReplicate);
    const int f2 = logits.dim(0);
    Tensor<D> expected(logits.dims());
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) {
        std::vector<double> col(static_cast<std::size_t>(f2));
        for (int k = 0; k < f2; ++k) col[static_cast<std::size_t>(k)] = logits.at(k, i, j);
        auto soft = ref::softmax_vector(col);
        for (int k = 0; k < f2; ++k) expected.at(k, i, j) = soft[static_cast<std::size_t>(k)];
      }
    worst = std::max(worst, max_abs_diff(clfd_kernels(m, params).kernels, expected));
    // amplifier field: identity column minus the same composition
    auto logits2 = ref::conv2d(m, params.chfa_conv, Border::kReplicate);
    const int g2 = logits2.dim(0);
    int g = 1;
    while (g * g < g2) ++g;
    const int center = (g / 2) * g + g / 2;
    Tensor<D> expected2(logits2.dims());
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) {
        std::vector<double> col(static_cast<std::size_t>(g2));
        for (int k = 0; k < g2; ++k) col[static_cast<std::size_t>(k)] = logits2.at(k, i, j);
        auto soft = ref::softmax_vector(col);
        for (int k = 0; k < g2; ++k) expected2.at(k, i, j) = (k == center ? 1.0 : 0.0) - soft[static_cast<std::size_t>(k)];
      }
    worst = std::max(worst, max_abs_diff(chfa_kernels(m, params).kernels, expected2));
    // application against the naive per-pixel stencil
    auto b = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto q = clfd_kernels(m, params);
    auto got = clfd_apply(b, q);
    auto grouped = space_to_depth(q.kernels);
    for (int gph = 0; gph < 4; ++gph) {
      auto phase = ref::percell_filter(b, narrow_channels(grouped, gph * f2, f2));
      for (int cc = 0; cc < ch; ++cc)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            worst = std::max(worst, std::fabs(got.at(cc, 2 * i + gph / 2, 2 * j + gph % 2) - phase.at(cc, i, j)));
    }
    auto a = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -2, 2);
    auto amp = chfa_kernels(m, params);
    worst = std::max(worst, max_abs_diff(chfa_apply(a, amp), add(a, ref::percell_filter(a, amp.kernels))));
  }
  return bound("trigger-oracle", worst, 1e-9);
}

inline SuiteResult suite_trigger_dc(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x204);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
    auto params = random_trigger_params<D>(ch, opt.f, opt.fhat, rng, 0.6);
    auto m = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -2, 2);
    // constant coarse input stays that constant through the damping upsample
    Tensor<D> b({ch, h, w});
    std::vector<double> levels(static_cast<std::size_t>(ch));
    for (int cc = 0; cc < ch; ++cc) {
      levels[static_cast<std::size_t>(cc)] = rng.uniform(-3, 3);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) b.at(cc, i, j) = levels[static_cast<std::size_t>(cc)];
    }
    auto up = clfd_apply(b, clfd_kernels(m, params));
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          worst = std::max(worst, std::fabs(up.at(cc, i, j) - levels[static_cast<std::size_t>(cc)]));
    // constant fine input passes the amplifier untouched
    Tensor<D> a({ch, 2 * h, 2 * w});
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j) a.at(cc, i, j) = levels[static_cast<std::size_t>(cc)];
    worst = std::max(worst, max_abs_diff(chfa_apply(a, chfa_kernels(m, params)), a));
  }
  return bound("trigger-dc", worst, 1e-10);
}

inline SuiteResult suite_damping_window_mean(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x205);
  double worst = 0;
  const int f = opt.f, f2 = f * f, r = (f - 1) / 2;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 3), h = rng.uniform_int(2, 5), w = rng.uniform_int(2, 5);
    auto b = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto q = Tensor<D>::full({f2, 2 * h, 2 * w}, 1.0 / f2);
    auto up = clfd_apply(b, DampingKernels<D>{q, f});
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j) {
          double mean = 0;
          for (int a = -r; a <= r; ++a)
            for (int bb = -r; bb <= r; ++bb)
              mean += b.at(cc, clamp_index(i / 2 + a, h), clamp_index(j / 2 + bb, w));
          worst = std::max(worst, std::fabs(up.at(cc, i, j) - mean / f2));
        }
  }
  return bound("damping-window-mean", worst, 1e-12);
}

inline SuiteResult suite_spectral_response(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x206);
  Check c;
  double amp_min = 1e300, damp_sum = 0, base_sum = 0;
  const int ch = 2, h = 8, w = 8;
  for (int t = 0; t < cases && c.ok; ++t) {
    auto params = random_trigger_params<D>(ch, opt.f, opt.fhat, rng, 0.3);
    auto m = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -1, 1);
    // amplifier path must not lose energy at a driven high-band sinusoid
    Tensor<D> a({ch, 2 * h, 2 * w});
    for (int cc = 0; cc < ch; ++cc) {
      const double phase = rng.uniform(0, 2 * M_PI);
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          a.at(cc, i, j) = std::cos(2 * M_PI * 0.375 * i + phase) + std::cos(2 * M_PI * 0.375 * j + phase);
    }
    const double pre = hf_energy(a);
    const double post = hf_energy(chfa_apply(a, chfa_kernels(m, params)));
    amp_min = std::min(amp_min, post / pre);
    c.expect(post >= pre * (1.0 - 1e-9), "amplifier lowered high-band energy, ratio " + fmt(post / pre));
    // damping upsample must carry a smaller high-band fraction than nearest
    auto b = random_tensor<D>({ch, h, w}, rng, -1, 1);
    auto damped = clfd_apply(b, clfd_kernels(m, params));
    auto base = nearest_upsample2x(b);
    damp_sum += hf_energy(damped) / total_energy_spectrum(damped);
    base_sum += hf_energy(base) / total_energy_spectrum(base);
  }
  c.expect(damp_sum < base_sum, "damping did not lower the mean high-band fraction");
  auto r = c.result("spectral-response");
  if (r.pass)
    r.detail = "amplifier min ratio " + fmt(amp_min) + ", damped fraction " + fmt(damp_sum / cases) +
               " vs nearest " + fmt(base_sum / cases);
  return r;
}

// ---- displacement ----

inline SuiteResult suite_similarity_contract(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x301);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(2, 6), w = rng.uniform_int(2, 6);
    auto m = random_tensor<D>({ch, h, w}, rng, -2, 2);
    if (t % 3 == 0)
      for (int cc = 0; cc < ch; ++cc) m.at(cc, h / 2, w / 2) = 0;  // a zero-norm pixel
    auto s = local_cosine_similarity(m).values;
    for (int k = 0; k < 8 && c.ok; ++k)
      for (int i = 0; i < h && c.ok; ++i)
        for (int j = 0; j < w && c.ok; ++j) {
          const double v = s.at(k, i, j);
          c.expect(v >= -1 - 1e-12 && v <= 1 + 1e-12, "similarity outside [-1,1]");
          // oracle
          const int p = clamp_index(i + ad::kNeighborOffsets[k][0], h);
          const int q = clamp_index(j + ad::kNeighborOffsets[k][1], w);
          std::vector<double> u(static_cast<std::size_t>(ch)), vv(static_cast<std::size_t>(ch));
          for (int cc = 0; cc < ch; ++cc) {
            u[static_cast<std::size_t>(cc)] = m.at(cc, i, j);
            vv[static_cast<std::size_t>(cc)] = m.at(cc, p, q);
          }
          c.expect(std::fabs(v - ref::cosine_pair(u, vv)) <= 1e-12, "similarity oracle mismatch");
          // pair symmetry on interior pixels: looking back along the negated
          // offset from the neighbor reproduces the value
          const int ai = i + ad::kNeighborOffsets[k][0], aj = j + ad::kNeighborOffsets[k][1];
          if (ai >= 0 && ai < h && aj >= 0 && aj < w)
            c.expect(std::fabs(v - s.at(7 - k, ai, aj)) <= 1e-12, "pair symmetry violated");
        }
    if (t % 3 == 0) {
      bool zeronorm_zero = true;
      for (int k = 0; k < 8; ++k) zeronorm_zero = zeronorm_zero && s.at(k, h / 2, w / 2) == 0.0;
      c.expect(zeronorm_zero, "zero-norm pixel similarity not zero");
    }
  }
  return c.result("similarity-contract");
}

inline SuiteResult suite_displacement_bound(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x302);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(2, 6), w = rng.uniform_int(2, 6);
    auto m = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto params = random_displacement_params<D>(ch, rng, 0.5);
    auto field = displacement_field(m, local_cosine_similarity(m), params);
    for (std::int64_t i = 0; i < field.d.size(); ++i) {
      c.expect(std::fabs(field.d[i]) <= std::fabs(field.o[i]), "confidence gate amplified the orientation");
      if (field.o[i] != 0) c.expect(std::fabs(field.d[i]) < std::fabs(field.o[i]), "gate failed to contract");
      c.expect(field.p[i] > 0 && field.p[i] < 1, "gate outside (0,1)");
    }
  }
  return c.result("displacement-bound");
}

inline SuiteResult suite_resample_contract(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x303);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 3), h = rng.uniform_int(2, 7), w = rng.uniform_int(2, 7);
    auto x = random_tensor<D>({ch, h, w}, rng, -2, 2);
    // zero field is exactly the identity
    DisplacementField<D> zero{Tensor<D>({2, h, w}), Tensor<D>({2, h, w}), Tensor<D>({2, h, w})};
    c.expect(max_abs_diff(resample(x, zero), x) == 0.0, "zero displacement is not the identity");
    // integer shift pulls the clamped shifted sample
    DisplacementField<D> shift{Tensor<D>({2, h, w}), Tensor<D>(), Tensor<D>()};
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        shift.d.at(0, i, j) = 1;
        shift.d.at(1, i, j) = 0;
      }
    auto shifted = resample(x, shift);
    for (int cc = 0; cc < ch && c.ok; ++cc)
      for (int i = 0; i < h && c.ok; ++i)
        for (int j = 0; j < w; ++j)
          c.expect(shifted.at(cc, i, j) == x.at(cc, clamp_index(i + 1, h), j), "unit shift mismatch");
    // random fields against the oracle
    auto d = random_tensor<D>({2, h, w}, rng, -2.5, 2.5);
    auto got = resample(x, DisplacementField<D>{d, Tensor<D>(), Tensor<D>()});
    for (int cc = 0; cc < ch && c.ok; ++cc)
      for (int i = 0; i < h && c.ok; ++i)
        for (int j = 0; j < w; ++j)
          c.expect(std::fabs(got.at(cc, i, j) - ref::bilinear_at(x, cc, i + d.at(0, i, j), j + d.at(1, i, j))) <= 1e-12,
                   "resample oracle mismatch");
  }
  return c.result("resample-contract");
}

// ---- fafce ----

inline SuiteResult suite_fafce_dc(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x401);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto params = random_fafce_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    params.upsample_mode = t % 2 ? UpsampleMode::kNearest : UpsampleMode::kClfd;
    Tensor<D> a({ch, 2 * h, 2 * w}), b({ch, h, w});
    std::vector<double> ca(static_cast<std::size_t>(ch)), cb(static_cast<std::size_t>(ch));
    for (int cc = 0; cc < ch; ++cc) {
      ca[static_cast<std::size_t>(cc)] = rng.uniform(-2, 2);
      cb[static_cast<std::size_t>(cc)] = rng.uniform(-2, 2);
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j) a.at(cc, i, j) = ca[static_cast<std::size_t>(cc)];
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) b.at(cc, i, j) = cb[static_cast<std::size_t>(cc)];
    }
    auto out = fafce_forward(a, b, params);
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          worst = std::max(worst,
                           std::fabs(out.at(cc, i, j) - (ca[static_cast<std::size_t>(cc)] + cb[static_cast<std::size_t>(cc)])));
  }
  return bound("fafce-dc", worst, 1e-10);
}

inline SuiteResult suite_fafce_zero_displacement(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x402);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 3);
    auto params = random_fafce_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    for (std::int64_t i = 0; i < params.displacement.orient_conv.size(); ++i)
      params.displacement.orient_conv[i] = 0;
    auto a = random_tensor<D>({ch, 8, 8}, rng, -2, 2);
    auto b = random_tensor<D>({ch, 4, 4}, rng, -2, 2);
    FafceTrace<D> trace;
    fafce_forward(a, b, params, &trace);
    for (std::int64_t i = 0; i < trace.displacement.size(); ++i)
      worst = std::max(worst, std::fabs(trace.displacement[i]));
    worst = std::max(worst, max_abs_diff(trace.b_intermediate, trace.b_upsampled));
  }
  return bound("fafce-zero-displacement", worst, 0.0);
}

inline SuiteResult suite_fafce_gate_linearity(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x403);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 3);
    auto params = random_fafce_params<D>(ch, opt.f, opt.fhat, rng, 0.5);
    auto a = random_tensor<D>({ch, 8, 8}, rng, -2, 2);
    auto b = random_tensor<D>({ch, 4, 4}, rng, -2, 2);
    FafceTrace<D> base;
    auto out1 = fafce_forward(a, b, params, &base);
    auto doubled = params;
    for (std::int64_t i = 0; i < doubled.w_a3.size(); ++i) doubled.w_a3[i] *= 2;
    auto out2 = fafce_forward(a, b, doubled);
    // stage 3 is linear in its gates: the delta is exactly one more gated copy
    // of the enhanced fine map
    const std::int64_t plane = static_cast<std::int64_t>(base.a_enhanced.dim(1)) * base.a_enhanced.dim(2);
    for (int cc = 0; cc < ch; ++cc)
      for (std::int64_t i = 0; i < plane; ++i)
        worst = std::max(worst, std::fabs((out2[cc * plane + i] - out1[cc * plane + i]) -
                                          params.w_a3[cc] * base.a_enhanced[cc * plane + i]));
    auto doubled_b = params;
    for (std::int64_t i = 0; i < doubled_b.w_b3.size(); ++i) doubled_b.w_b3[i] *= 2;
    auto out3 = fafce_forward(a, b, doubled_b);
    for (int cc = 0; cc < ch; ++cc)
      for (std::int64_t i = 0; i < plane; ++i)
        worst = std::max(worst, std::fabs((out3[cc * plane + i] - out1[cc * plane + i]) -
                                          params.w_b3[cc] * base.b_intermediate[cc * plane + i]));
  }
  return bound("fafce-gate-linearity", worst, 1e-12);
}

inline SuiteResult suite_fafce_shape_guards(const VerifyOptions& opt) {
  SplitMix64 rng(opt.seed ^ 0x404);
  Check c;
  auto params = random_fafce_params<D>(3, opt.f, opt.fhat, rng, 0.5);
  auto a = random_tensor<D>({3, 8, 8}, rng, -1, 1);
  auto b = random_tensor<D>({3, 4, 4}, rng, -1, 1);
  auto out = fafce_forward(a, b, params);
  c.expect(out.dims() == std::vector<int>({3, 8, 8}), "output resolution wrong");
  c.expect_throw([&] { fafce_forward(random_tensor<D>({3, 9, 8}, rng, -1, 1), b, params); },
                 "non-2x pair accepted");
  c.expect_throw([&] { fafce_forward(a, random_tensor<D>({2, 4, 4}, rng, -1, 1), params); },
                 "channel mismatch accepted without projection");
  auto wide = random_tensor<D>({5, 4, 4}, rng, -1, 1);
  auto proj_params = params;
  proj_params.proj = random_tensor<D>({3, 5, 1, 1}, rng, -0.5, 0.5);
  c.expect(fafce_forward(a, wide, proj_params).dims() == std::vector<int>({3, 8, 8}),
           "projection path failed");
  return c.result("fafce-shape-guards");
}

inline SuiteResult suite_fafce_spectral(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x405);
  Check c;
  double amp_min = 1e300, damp_sum = 0, base_sum = 0;
  const int ch = 2, h = 8, w = 8;
  for (int t = 0; t < cases && c.ok; ++t) {
    auto params = random_fafce_params<D>(ch, opt.f, opt.fhat, rng, 0.3);
    Tensor<D> a({ch, 2 * h, 2 * w});
    for (int cc = 0; cc < ch; ++cc) {
      const double phase = rng.uniform(0, 2 * M_PI);
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          a.at(cc, i, j) = std::cos(2 * M_PI * 0.375 * i + phase) + std::cos(2 * M_PI * 0.375 * j + phase);
    }
    auto b = random_tensor<D>({ch, h, w}, rng, -0.5, 0.5);
    FafceTrace<D> trace;
    fafce_forward(a, b, params, &trace);
    const double ratio = hf_energy(trace.a_enhanced) / hf_energy(a);
    amp_min = std::min(amp_min, ratio);
    c.expect(ratio >= 1.0 - 1e-9, "enhanced fine map lost high-band energy, ratio " + fmt(ratio));
    // damping comparison on a separate neutral instance: a sinusoid-dominated
    // context drives the kernel fields themselves at high frequency, and the
    // contrast with nearest only holds in the mean over seeds
    auto a2 = random_tensor<D>({ch, 2 * h, 2 * w}, rng, -1, 1);
    auto b2 = random_tensor<D>({ch, h, w}, rng, -1, 1);
    FafceTrace<D> trace2;
    fafce_forward(a2, b2, params, &trace2);
    damp_sum += hf_energy(trace2.b_upsampled) / total_energy_spectrum(trace2.b_upsampled);
    const auto base = nearest_upsample2x(b2);
    base_sum += hf_energy(base) / total_energy_spectrum(base);
  }
  c.expect(damp_sum < base_sum, "damping upsample carries more high band than nearest on average");
  auto r = c.result("fafce-spectral");
  if (r.pass)
    r.detail = "amplifier min ratio " + fmt(amp_min) + ", damped fraction " + fmt(damp_sum / cases) +
               " vs nearest " + fmt(base_sum / cases);
  return r;
}

// ---- phffnet ----

inline SuiteResult suite_casf_normalization(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x501);
  Check c;
  double worst = 0;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6);
    CasfParams<D> params;
    for (auto& wt : params.logit_conv) wt = random_tensor<D>({1, ch, 1, 1}, rng, -1, 1);
    auto x1 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto x2 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto x3 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto lam = casf_weights(x1, x2, x3, params).lambdas;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double sum = 0;
        for (int k = 0; k < 3; ++k) {
          c.expect(lam.at(k, i, j) > 0 && lam.at(k, i, j) < 1, "weight outside (0,1)");
          sum += lam.at(k, i, j);
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
    c.expect(worst <= 1e-12, "weight sum off by " + fmt(worst));
    // equal logits: zero convs give exactly 1/3
    CasfParams<D> zero;
    for (auto& wt : zero.logit_conv) wt = Tensor<D>({1, ch, 1, 1});
    auto lam0 = casf_weights(x1, x2, x3, zero).lambdas;
    for (std::int64_t i = 0; i < lam0.size(); ++i)
      c.expect(std::fabs(lam0[i] - 1.0 / 3.0) <= 1e-15, "equal logits do not give 1/3");
    // shifting all three logit maps by one constant changes nothing
    auto l1 = conv2d(x1, params.logit_conv[0], Border::kReplicate);
    auto l2 = conv2d(x2, params.logit_conv[1], Border::kReplicate);
    auto l3 = conv2d(x3, params.logit_conv[2], Border::kReplicate);
    auto stack = concat_channels<D>({l1, l2, l3});
    Tensor<D> stack_shifted(stack.dims());
    for (std::int64_t i = 0; i < stack.size(); ++i) stack_shifted[i] = stack[i] + 0.7;
    c.expect(max_abs_diff(softmax_over_axis(stack, 0), softmax_over_axis(stack_shifted, 0)) <= 1e-9,
             "constant logit shift changed the weights");
  }
  auto r = c.result("casf-normalization");
  if (r.pass) r.detail = "worst sum deviation " + fmt(worst);
  return r;
}

inline SuiteResult suite_casf_convexity(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x502);
  double worst = 0;
  for (int t = 0; t < cases; ++t) {
    const int ch = rng.uniform_int(1, 4), h = rng.uniform_int(1, 5), w = rng.uniform_int(1, 5);
    CasfParams<D> params;
    for (auto& wt : params.logit_conv) wt = random_tensor<D>({1, ch, 1, 1}, rng, -1, 1);
    auto x1 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto x2 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto x3 = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto fused = casf_fuse(x1, x2, x3, casf_weights(x1, x2, x3, params));
    for (int cc = 0; cc < ch; ++cc)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double lo = std::min(std::min(x1.at(cc, i, j), x2.at(cc, i, j)), x3.at(cc, i, j));
          const double hi = std::max(std::max(x1.at(cc, i, j), x2.at(cc, i, j)), x3.at(cc, i, j));
          const double v = fused.at(cc, i, j);
          worst = std::max(worst, std::max(lo - v, v - hi));
        }
  }
  return bound("casf-convexity", worst, 1e-12);
}

inline SuiteResult suite_progressive_order(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x503);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(1, 4);
    auto params = random_phffnet_params<D>(ch, rng, 0.5);
    PyramidFeatures<D> pyr;
    pyr.c2 = random_tensor<D>({ch, 16, 16}, rng, -1, 1);
    pyr.c3 = random_tensor<D>({ch, 8, 8}, rng, -1, 1);
    pyr.c4 = random_tensor<D>({ch, 4, 4}, rng, -1, 1);
    pyr.c5 = random_tensor<D>({ch, 2, 2}, rng, -1, 1);
    auto full = phffnet_forward(pyr, params);
    auto zeroed = pyr;
    zeroed.c5 = Tensor<D>({ch, 2, 2});
    auto cut = phffnet_forward(zeroed, params);
    c.expect(max_abs_diff(full.f23, cut.f23) == 0.0, "zeroing the coarsest level reached f23");
    c.expect(max_abs_diff(full.f234, cut.f234) == 0.0, "zeroing the coarsest level reached f234");
    auto zeroed4 = pyr;
    zeroed4.c4 = Tensor<D>({ch, 4, 4});
    c.expect(max_abs_diff(full.f23, phffnet_forward(zeroed4, params).f23) == 0.0,
             "zeroing level 4 reached f23");
  }
  return c.result("progressive-order");
}

inline SuiteResult suite_phffnet_shape(const VerifyOptions& opt) {
  SplitMix64 rng(opt.seed ^ 0x504);
  Check c;
  const int ch = 3;
  auto params = random_phffnet_params<D>(ch, rng, 0.5);
  PyramidFeatures<D> pyr;
  pyr.c2 = random_tensor<D>({ch, 16, 16}, rng, -1, 1);
  pyr.c3 = random_tensor<D>({ch, 8, 8}, rng, -1, 1);
  pyr.c4 = random_tensor<D>({ch, 4, 4}, rng, -1, 1);
  pyr.c5 = random_tensor<D>({ch, 2, 2}, rng, -1, 1);
  auto fused = phffnet_forward(pyr, params);
  c.expect(fused.head_inputs[0].dims() == pyr.c2.dims(), "stride-4 head input dims");
  c.expect(fused.head_inputs[1].dims() == pyr.c3.dims(), "stride-8 head input dims");
  c.expect(fused.head_inputs[2].dims() == pyr.c4.dims(), "stride-16 head input dims");
  c.expect(fused.head_inputs[3].dims() == pyr.c5.dims(), "stride-32 head input dims");
  c.expect(fused.f23.dims() == pyr.c3.dims() && fused.f234.dims() == pyr.c4.dims() &&
               fused.f2345.dims() == pyr.c5.dims(),
           "chain output dims");
  auto broken = pyr;
  broken.c4 = random_tensor<D>({ch, 5, 4}, rng, -1, 1);
  c.expect_throw([&] { phffnet_forward(broken, params); }, "broken pyramid accepted");
  return c.result("phffnet-shape");
}

// ---- detect ----

inline SuiteResult suite_cbam_contraction(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x601);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int ch = rng.uniform_int(2, 6), h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6);
    SplitMix64 prng(rng.next());
    auto bp = random_backbone_params<D>(ch, prng, 0.5);
    auto x = random_tensor<D>({ch, h, w}, rng, -2, 2);
    auto out = cbam(ad::constant(x), make_cbam_vars(bp.cbam))->value;
    for (std::int64_t i = 0; i < x.size(); ++i)
      c.expect(std::fabs(out[i]) <= std::fabs(x[i]), "attention amplified a value");
    // saturated logits reduce to the identity
    auto sat = bp.cbam;
    for (std::int64_t i = 0; i < sat.mlp_w1.size(); ++i) sat.mlp_w1[i] *= 1e-3;
    for (std::int64_t i = 0; i < sat.mlp_w2.size(); ++i) sat.mlp_w2[i] *= 1e-3;
    for (std::int64_t i = 0; i < sat.spatial_conv.size(); ++i) sat.spatial_conv[i] *= 1e-3;
    for (std::int64_t i = 0; i < sat.mlp_b2.size(); ++i) sat.mlp_b2[i] = 60;
    sat.spatial_bias[0] = 60;
    auto idout = cbam(ad::constant(x), make_cbam_vars(sat))->value;
    c.expect(max_abs_diff(idout, x) <= 1e-12, "saturated gates are not the identity");
  }
  return c.result("cbam-contraction");
}

inline SuiteResult suite_sppf_dilation(const VerifyOptions& opt) {
  Check c;
  const int h = 11, w = 11, k = 3;
  Tensor<D> x({1, h, w});
  x.at(0, 5, 5) = 1;
  auto out = sppf(ad::constant(x), k)->value;
  c.expect(out.dims() == std::vector<int>({4, h, w}), "pooled stack dims");
  for (int blk = 0; blk < 4; ++blk) {
    const int radius = blk * (k - 1) / 2;
    for (int i = 0; i < h && c.ok; ++i)
      for (int j = 0; j < w; ++j) {
        const bool inside = std::abs(i - 5) <= radius && std::abs(j - 5) <= radius;
        c.expect(out.at(blk, i, j) == (inside ? 1.0 : 0.0),
                 "impulse dilation wrong in block " + std::to_string(blk));
      }
  }
  (void)opt;
  return c.result("sppf-dilation");
}

inline SuiteResult suite_backbone_shape(const VerifyOptions& opt) {
  SplitMix64 rng(opt.seed ^ 0x602);
  Check c;
  const int ch = 4;
  auto bp = random_backbone_params<D>(ch, rng, 0.4);
  auto bv = make_backbone_vars(bp);
  auto img = ad::constant(random_tensor<D>({3, 64, 96}, rng, 0, 1));
  auto pyr = backbone_forward(img, bv);
  c.expect(pyr.c2->value.dims() == std::vector<int>({ch, 16, 24}), "stride-4 dims");
  c.expect(pyr.c3->value.dims() == std::vector<int>({ch, 8, 12}), "stride-8 dims");
  c.expect(pyr.c4->value.dims() == std::vector<int>({ch, 4, 6}), "stride-16 dims");
  c.expect(pyr.c5->value.dims() == std::vector<int>({ch, 2, 3}), "stride-32 dims");
  c.expect_throw([&] { backbone_forward(ad::constant(random_tensor<D>({3, 60, 64}, rng, 0, 1)), bv); },
                 "non-multiple-of-32 image accepted");
  c.expect_throw([&] { backbone_forward(ad::constant(random_tensor<D>({1, 64, 64}, rng, 0, 1)), bv); },
                 "non-RGB image accepted");
  // zero image through zero parameters stays exactly zero
  BackboneParams<D> zp = bp;
  std::vector<std::pair<std::string, Tensor<D>*>> entries;
  backbone_param_entries("", zp, entries);
  for (auto& [name, t] : entries)
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] = 0;
  auto zpyr = backbone_forward(ad::constant(Tensor<D>({3, 64, 64})), make_backbone_vars(zp));
  for (const auto& lvl : {zpyr.c2, zpyr.c3, zpyr.c4, zpyr.c5})
    for (std::int64_t i = 0; i < lvl->value.size(); ++i)
      c.expect(lvl->value[i] == 0.0, "zero image did not map to zero features");
  return c.result("backbone-shape");
}

inline SuiteResult suite_loss_hand_values(const VerifyOptions& opt) {
  Check c;
  // one object, prediction off only in x by 0.1
  GroundTruth<D> gt;
  gt.grid_s = 1;
  gt.boxes_b = 1;
  gt.num_classes = 1;
  gt.records.push_back({0, 0, 0.4, 0.5, 0.25, 0.25, 0});
  std::vector<HeadOutput<D>> heads(4);
  for (auto& hd : heads) {
    hd.box = Tensor<D>({4, 1, 1});
    hd.cls = Tensor<D>::full({1, 1, 1}, 1.0);
    hd.obj = Tensor<D>::full({1, 1, 1}, 0.5);
  }
  heads[0].box.at(0, 0, 0) = 0.5;
  heads[0].box.at(1, 0, 0) = 0.5;
  heads[0].box.at(2, 0, 0) = 0.25;
  heads[0].box.at(3, 0, 0) = 0.25;
  c.expect(std::fabs(iou_coordinate_loss(heads, gt) - 0.01) <= 1e-12, "coordinate loss hand value");
  c.expect(std::fabs(cls_loss(heads, gt)) <= 1e-12, "perfect class probabilities must cost zero");
  heads[0].cls.at(0, 0, 0) = 0.8;
  c.expect(std::fabs(cls_loss(heads, gt) - 0.04) <= 1e-12, "class loss hand value");
  // perfect coordinates cost zero
  heads[0].box.at(0, 0, 0) = 0.4;
  c.expect(std::fabs(iou_coordinate_loss(heads, gt)) <= 1e-12, "perfect coordinates must cost zero");
  // frozen focal value: single positive, p=0.8, gamma=2, alpha=1
  Tensor<D> probs({1, 1}), labels({1, 1});
  probs[0] = 0.8;
  labels[0] = 1;
  c.expect(std::fabs(dfl_focal_loss(probs, labels, 1.0, 2.0) - 0.00892574205256839) <= 1e-12,
           "frozen focal hand value");
  c.expect(std::fabs(dfl_focal_loss(probs, labels, 1.0, 2.0) - (-0.04 * std::log(0.8))) <= 1e-15,
           "focal formula self-check");
  // negative extents are clamped and flagged
  heads[0].box.at(2, 0, 0) = -0.5;
  LossDiagnostics diag;
  const double clamped = iou_coordinate_loss(heads, gt, &diag);
  c.expect(diag.clamped_extents == 1, "negative extent not flagged");
  c.expect(std::fabs(clamped - 0.25) <= 1e-12, "clamped extent loss value");  // (0 - 0.5)^2
  (void)opt;
  return c.result("loss-hand-values");
}

inline SuiteResult suite_loss_linearity(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x603);
  Check c;
  LossWeights<D> w;
  for (int t = 0; t < cases && c.ok; ++t) {
    const double a = rng.uniform(0, 5), b = rng.uniform(0, 5), d = rng.uniform(0, 5);
    auto lb = total_loss(a, b, d, w);
    c.expect(std::fabs(lb.total - (7.5 * a + 0.5 * b + 1.5 * d)) <= 1e-12, "total mismatch");
    // two-point slope in each component equals its weight
    const double da = rng.uniform(0.1, 1);
    c.expect(std::fabs((total_loss(a + da, b, d, w).total - lb.total) / da - 7.5) <= 1e-9, "iou slope");
    const double db = rng.uniform(0.1, 1);
    c.expect(std::fabs((total_loss(a, b + db, d, w).total - lb.total) / db - 0.5) <= 1e-9, "cls slope");
    const double dd = rng.uniform(0.1, 1);
    c.expect(std::fabs((total_loss(a, b, d + dd, w).total - lb.total) / dd - 1.5) <= 1e-9, "dfl slope");
  }
  c.expect_throw([&] { total_loss(-0.1, 0.0, 0.0, w); }, "negative component accepted");
  c.expect_throw([&] { total_loss(std::nan(""), 0.0, 0.0, w); }, "NaN component accepted");
  return c.result("loss-linearity");
}

inline SuiteResult suite_dfl_reduction(const VerifyOptions& opt, int cases) {
  SplitMix64 rng(opt.seed ^ 0x604);
  Check c;
  for (int t = 0; t < cases && c.ok; ++t) {
    const int n = rng.uniform_int(1, 5), k = rng.uniform_int(2, 5);
    Tensor<D> probs({n, k}), labels({n, k});
    for (int i = 0; i < n; ++i) {
      const int pos = rng.uniform_int(0, k - 1);
      for (int j = 0; j < k; ++j) {
        probs[static_cast<std::int64_t>(i) * k + j] = rng.uniform(0.05, 0.95);
        labels[static_cast<std::int64_t>(i) * k + j] = j == pos ? 1.0 : 0.0;
      }
    }
    // gamma=0, alpha=1/2 halves the plain cross entropy over all entries
    double ce = 0;
    for (std::int64_t i = 0; i < probs.size(); ++i)
      ce += labels[i] == 1.0 ? -std::log(probs[i]) : -std::log(1 - probs[i]);
    c.expect(std::fabs(dfl_focal_loss(probs, labels, 0.5, 0.0) - 0.5 * ce) <= 1e-12 * std::max(1.0, ce),
             "gamma=0 does not reduce to scaled cross entropy");
    auto bad = labels;
    bad[0] = 1 - bad[0];
    c.expect_throw([&] { dfl_focal_loss(probs, bad, 0.5, 0.0); }, "non-one-hot labels accepted");
  }
  return c.result("dfl-reduction");
}

inline SuiteResult suite_btf_guards(const VerifyOptions& opt) {
  SplitMix64 rng(opt.seed ^ 0x605);
  Check c;
  const std::string dir = "/tmp";
  const std::string path = dir + "/butter_verify_roundtrip.btf";
  auto x = random_tensor<float>({3, 4, 5}, rng, -2, 2);
  write_btf(path, x);
  auto y = read_btf<float>(path);
  c.expect(y.dims() == x.dims() && max_abs_diff(x, y) == 0.0f, "float payload roundtrip not exact");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  c.expect_throw([&] { read_btf<float>(path); }, "bad magic accepted");
  write_btf(path, x);
  {
    std::ifstream is(path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::ofstream os(path, std::ios::binary);
    os.write(all.data(), static_cast<std::streamsize>(all.size() - 7));
  }
  c.expect_throw([&] { read_btf<float>(path); }, "truncated payload accepted");
  write_btf(path, x);
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << "x";
  }
  c.expect_throw([&] { read_btf<float>(path); }, "trailing bytes accepted");
  std::remove(path.c_str());
  return c.result("btf-guards");
}

}  // namespace vdetail

inline std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opt) {
  using namespace vdetail;
  std::vector<SuiteResult> out;
  out.push_back(suite_conv_oracle(opt, 300));
  out.push_back(suite_softmax_normalization(opt, 200));
  out.push_back(suite_softmax_stability(opt, 100));
  out.push_back(suite_layout_roundtrip(opt, 100));
  out.push_back(suite_bilinear_oracle(opt, 300));
  out.push_back(suite_dft_oracle(opt, 120));
  out.push_back(suite_dft_identities(opt, 100));
  out.push_back(suite_autodiff_primitives(opt));
  out.push_back(suite_softmax_gradient_null(opt, 100));
  out.push_back(suite_damping_normalization(opt, 300));
  out.push_back(suite_amplifier_structure(opt, 300));
  out.push_back(suite_trigger_oracle(opt, 200));
  out.push_back(suite_trigger_dc(opt, 100));
  out.push_back(suite_damping_window_mean(opt, 100));
  out.push_back(suite_spectral_response(opt, 100));
  out.push_back(suite_similarity_contract(opt, 100));
  out.push_back(suite_displacement_bound(opt, 100));
  out.push_back(suite_resample_contract(opt, 100));
  out.push_back(suite_fafce_dc(opt, 50));
  out.push_back(suite_fafce_zero_displacement(opt, 25));
  out.push_back(suite_fafce_gate_linearity(opt, 25));
  out.push_back(suite_fafce_shape_guards(opt));
  out.push_back(suite_fafce_spectral(opt, 50));
  out.push_back(suite_casf_normalization(opt, 200));
  out.push_back(suite_casf_convexity(opt, 300));
  out.push_back(suite_progressive_order(opt, 25));
  out.push_back(suite_phffnet_shape(opt));
  out.push_back(suite_cbam_contraction(opt, 100));
  out.push_back(suite_sppf_dilation(opt));
  out.push_back(suite_backbone_shape(opt));
  out.push_back(suite_loss_hand_values(opt));
  out.push_back(suite_loss_linearity(opt, 100));
  out.push_back(suite_dfl_reduction(opt, 100));
  out.push_back(suite_btf_guards(opt));
  return out;
}

}  // namespace butter

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "butter/autodiff.hpp"
#include "butter/rng.hpp"

// Progressive hierarchical fusion over a 4-level pyramid (strides 4/8/16/32,
// shared channel count). The chain folds levels in strictly one direction,
//   F23 = mix([down(C2); C3]),  F234 = mix([down(F23); C4]),
//   F2345 = mix([down(F234); C5]),
// so zeroing a coarse level can never reach an earlier chain output. Each
// detection level except stride 4 is then re-blended from three aligned
// sources with a per-pixel convex softmax (CASF); the stride-4 head input is
// the chain's own input level passed through.
namespace butter {

template <typename T>
struct PyramidFeatures {
  Tensor<T> c2, c3, c4, c5;
};

template <typename T>
struct CasfParams {
  std::array<Tensor<T>, 3> logit_conv;  // each [1,C,1,1]
};

template <typename T>
struct FusionWeights {
  Tensor<T> lambdas;  // [3,H,W], positive, summing to 1 per pixel
};

template <typename T>
struct StepParams {
  Tensor<T> down_dw;  // [C,3,3], stride-2 depthwise
  Tensor<T> mix;      // [C,2C,1,1]
};

template <typename T>
struct HfbParams {
  std::vector<Tensor<T>> down_dw;  // stride-2 depthwise kernels, one per downsample hop
  CasfParams<T> casf;
};

template <typename T>
struct PhffnetParams {
  StepParams<T> s23, s234, s2345;
  HfbParams<T> hfb8, hfb16, hfb32;
};

template <typename T>
struct FusedPyramid {
  Tensor<T> f23, f234, f2345;
  std::array<Tensor<T>, 4> head_inputs;  // strides 4, 8, 16, 32
};

template <typename T>
PhffnetParams<T> random_phffnet_params(int channels, SplitMix64& rng, double weight_scale) {
  auto step = [&](StepParams<T>& s) {
    s.down_dw = random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale);
    s.mix = random_tensor<T>({channels, 2 * channels, 1, 1}, rng, -weight_scale, weight_scale);
  };
  auto casf = [&](CasfParams<T>& c) {
    for (auto& w : c.logit_conv) w = random_tensor<T>({1, channels, 1, 1}, rng, -weight_scale, weight_scale);
  };
  PhffnetParams<T> p;
  step(p.s23);
  step(p.s234);
  step(p.s2345);
  p.hfb8.down_dw.push_back(random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale));
  casf(p.hfb8.casf);
  p.hfb16.down_dw.push_back(random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale));
  casf(p.hfb16.casf);
  for (int i = 0; i < 3; ++i)
    p.hfb32.down_dw.push_back(random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale));
  casf(p.hfb32.casf);
  return p;
}

// ---- vars ----

template <typename T>
struct CasfVars {
  std::array<Var<T>, 3> logit_conv;
};

template <typename T>
struct StepVars {
  Var<T> down_dw, mix;
};

template <typename T>
struct HfbVars {
  std::vector<Var<T>> down_dw;
  CasfVars<T> casf;
};

template <typename T>
struct PhffnetVars {
  StepVars<T> s23, s234, s2345;
  HfbVars<T> hfb8, hfb16, hfb32;
};

template <typename T>
PhffnetVars<T> make_phffnet_vars(const PhffnetParams<T>& p) {
  PhffnetVars<T> v;
  auto step = [](const StepParams<T>& s, StepVars<T>& sv) {
    sv.down_dw = ad::leaf(s.down_dw);
    sv.mix = ad::leaf(s.mix);
  };
  auto hfb = [](const HfbParams<T>& h, HfbVars<T>& hv) {
    for (const auto& k : h.down_dw) hv.down_dw.push_back(ad::leaf(k));
    for (int i = 0; i < 3; ++i) hv.casf.logit_conv[static_cast<std::size_t>(i)] = ad::leaf(h.casf.logit_conv[static_cast<std::size_t>(i)]);
  };
  step(p.s23, v.s23);
  step(p.s234, v.s234);
  step(p.s2345, v.s2345);
  hfb(p.hfb8, v.hfb8);
  hfb(p.hfb16, v.hfb16);
  hfb(p.hfb32, v.hfb32);
  return v;
}

template <typename T>
void phffnet_var_entries(const std::string& prefix, const PhffnetVars<T>& v,
                         std::vector<std::pair<std::string, Var<T>>>& out) {
  auto step = [&](const std::string& name, const StepVars<T>& s) {
    out.emplace_back(prefix + name + ".down_dw", s.down_dw);
    out.emplace_back(prefix + name + ".mix", s.mix);
  };
  auto hfb = [&](const std::string& name, const HfbVars<T>& h) {
    for (std::size_t i = 0; i < h.down_dw.size(); ++i)
      out.emplace_back(prefix + name + ".down_dw" + std::to_string(i), h.down_dw[i]);
    for (int i = 0; i < 3; ++i)
      out.emplace_back(prefix + name + ".casf" + std::to_string(i), h.casf.logit_conv[static_cast<std::size_t>(i)]);
  };
  step("s23", v.s23);
  step("s234", v.s234);
  step("s2345", v.s2345);
  hfb("hfb8", v.hfb8);
  hfb("hfb16", v.hfb16);
  hfb("hfb32", v.hfb32);
}

template <typename T>
void phffnet_param_entries(const std::string& prefix, PhffnetParams<T>& p,
                           std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  auto step = [&](const std::string& name, StepParams<T>& s) {
    out.emplace_back(prefix + name + ".down_dw", &s.down_dw);
    out.emplace_back(prefix + name + ".mix", &s.mix);
  };
  auto hfb = [&](const std::string& name, HfbParams<T>& h) {
    for (std::size_t i = 0; i < h.down_dw.size(); ++i)
      out.emplace_back(prefix + name + ".down_dw" + std::to_string(i), &h.down_dw[i]);
    for (int i = 0; i < 3; ++i)
      out.emplace_back(prefix + name + ".casf" + std::to_string(i), &h.casf.logit_conv[static_cast<std::size_t>(i)]);
  };
  step("s23", p.s23);
  step("s234", p.s234);
  step("s2345", p.s2345);
  hfb("hfb8", p.hfb8);
  hfb("hfb16", p.hfb16);
  hfb("hfb32", p.hfb32);
}

// ---- ops, graph path ----

// fold one finer chain output into the next coarser raw level
template <typename T>
Var<T> hierarchical_fuse_step(const Var<T>& f_prev, const Var<T>& c_next, const StepVars<T>& s) {
  detail::require(c_next->value.dim(0) == f_prev->value.dim(0) &&
                      2 * c_next->value.dim(1) == f_prev->value.dim(1) &&
                      2 * c_next->value.dim(2) == f_prev->value.dim(2),
                  "hierarchical_fuse_step: levels must be one stride apart, got " +
                      dims_to_string(f_prev->value.dims()) + " vs " + dims_to_string(c_next->value.dims()));
  auto down = ad::depthwise_conv2d(f_prev, s.down_dw, Border::kReplicate, 2);
  auto cat = ad::concat_channels<T>({down, c_next});
  return ad::conv2d(cat, s.mix, Border::kReplicate);
}

// per-pixel convex weights over three aligned sources
template <typename T>
Var<T> casf_weights(const Var<T>& x1, const Var<T>& x2, const Var<T>& x3, const CasfVars<T>& c) {
  detail::require(x1->value.same_dims(x2->value) && x2->value.same_dims(x3->value),
                  "casf_weights: sources must share dims");
  auto l1 = ad::conv2d(x1, c.logit_conv[0], Border::kReplicate);
  auto l2 = ad::conv2d(x2, c.logit_conv[1], Border::kReplicate);
  auto l3 = ad::conv2d(x3, c.logit_conv[2], Border::kReplicate);
  return ad::softmax_axis(ad::concat_channels<T>({l1, l2, l3}), 0);
}

template <typename T>
Var<T> casf_fuse(const Var<T>& x1, const Var<T>& x2, const Var<T>& x3, const Var<T>& lambdas) {
  detail::require(lambdas->value.dim(0) == 3, "casf_fuse: weights must be [3,H,W]");
  auto y1 = ad::mul_spatial(x1, ad::narrow_channels(lambdas, 0, 1));
  auto y2 = ad::mul_spatial(x2, ad::narrow_channels(lambdas, 1, 1));
  auto y3 = ad::mul_spatial(x3, ad::narrow_channels(lambdas, 2, 1));
  return ad::add(ad::add(y1, y2), y3);
}

template <typename T>
struct FusedVars {
  Var<T> f23, f234, f2345;
  std::array<Var<T>, 4> head_inputs;
};

template <typename T>
struct PyramidVars {
  Var<T> c2, c3, c4, c5;
};

template <typename T>
FusedVars<T> phffnet_forward(const PyramidVars<T>& pyr, const PhffnetVars<T>& v) {
  auto down = [&](const Var<T>& x, const Var<T>& k) {
    return ad::depthwise_conv2d(x, k, Border::kReplicate, 2);
  };
  FusedVars<T> out;
  out.f23 = hierarchical_fuse_step(pyr.c2, pyr.c3, v.s23);
  out.f234 = hierarchical_fuse_step(out.f23, pyr.c4, v.s234);
  out.f2345 = hierarchical_fuse_step(out.f234, pyr.c5, v.s2345);
  // stride 8: finer raw level pulled down, the chain output itself, coarser chain output pulled up
  {
    auto x1 = down(pyr.c2, v.hfb8.down_dw[0]);
    auto x3 = ad::nearest_upsample2x(out.f234);
    out.head_inputs[1] = casf_fuse(x1, out.f23, x3, casf_weights(x1, out.f23, x3, v.hfb8.casf));
  }
  // stride 16
  {
    auto x1 = down(out.f23, v.hfb16.down_dw[0]);
    auto x3 = ad::nearest_upsample2x(out.f2345);
    out.head_inputs[2] = casf_fuse(x1, out.f234, x3, casf_weights(x1, out.f234, x3, v.hfb16.casf));
  }
  // stride 32: nothing coarser exists, so the third source is the earliest
  // chain output pulled down twice
  {
    auto x1 = down(out.f234, v.hfb32.down_dw[0]);
    auto x3 = down(down(out.f23, v.hfb32.down_dw[1]), v.hfb32.down_dw[2]);
    out.head_inputs[3] = casf_fuse(x1, out.f2345, x3, casf_weights(x1, out.f2345, x3, v.hfb32.casf));
  }
  out.head_inputs[0] = pyr.c2;
  return out;
}

// ---- plain path ----

template <typename T>
Tensor<T> hierarchical_fuse_step(const Tensor<T>& f_prev, const Tensor<T>& c_next, const StepParams<T>& s) {
  StepVars<T> sv{ad::constant(s.down_dw), ad::constant(s.mix)};
  return hierarchical_fuse_step(ad::constant(f_prev), ad::constant(c_next), sv)->value;
}

template <typename T>
CasfVars<T> make_casf_vars(const CasfParams<T>& c) {
  CasfVars<T> v;
  for (int i = 0; i < 3; ++i) v.logit_conv[static_cast<std::size_t>(i)] = ad::constant(c.logit_conv[static_cast<std::size_t>(i)]);
  return v;
}

template <typename T>
FusionWeights<T> casf_weights(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x3,
                              const CasfParams<T>& c) {
  auto v = make_casf_vars(c);
  return FusionWeights<T>{casf_weights(ad::constant(x1), ad::constant(x2), ad::constant(x3), v)->value};
}

template <typename T>
Tensor<T> casf_fuse(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x3,
                    const FusionWeights<T>& w) {
  return casf_fuse(ad::constant(x1), ad::constant(x2), ad::constant(x3), ad::constant(w.lambdas))->value;
}

template <typename T>
FusedPyramid<T> phffnet_forward(const PyramidFeatures<T>& pyr, const PhffnetParams<T>& p) {
  detail::require(pyr.c2.ndim() == 3 && pyr.c3.ndim() == 3 && pyr.c4.ndim() == 3 && pyr.c5.ndim() == 3,
                  "phffnet_forward: pyramid levels must be [C,H,W]");
  PyramidVars<T> pv{ad::constant(pyr.c2), ad::constant(pyr.c3), ad::constant(pyr.c4), ad::constant(pyr.c5)};
  auto v = make_phffnet_vars(p);
  auto f = phffnet_forward(pv, v);
  FusedPyramid<T> out;
  out.f23 = f.f23->value;
  out.f234 = f.f234->value;
  out.f2345 = f.f2345->value;
  for (int i = 0; i < 4; ++i) out.head_inputs[static_cast<std::size_t>(i)] = f.head_inputs[static_cast<std::size_t>(i)]->value;
  return out;
}

}  // namespace butter

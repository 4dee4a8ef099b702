#pragma once

#include <string>
#include <utility>
#include <vector>

#include "butter/displacement.hpp"
#include "butter/triggers.hpp"

// Frequency-adaptive fusion of one pyramid level pair: a fine map `a`
// [C,2H,2W] and the already-fused coarser map `b` [Cb,H,W].
//
//   stage 1  M = a + nearest(b); amplifier-enhance a, damping-upsample b,
//            blend with per-channel gates into b_initial
//   stage 2  displace the upsampled b by the field predicted from b_initial
//   stage 3  blend the displaced map with the enhanced a, second gate pair
//
// Gates start at 1 so an untrained unit is a plain residual sum. A constant
// pair (a = const, b = const) passes through both stages unchanged: the
// damping kernels are convex, the amplifier response of a constant is zero,
// and displacing a constant map is the identity.
namespace butter {

enum class UpsampleMode { kClfd, kNearest };

template <typename T>
struct FafceParams {
  TriggerParams<T> trigger;
  DisplacementParams<T> displacement;
  Tensor<T> w_a1, w_b1, w_a3, w_b3;  // [C], init 1
  Tensor<T> proj;                    // optional [C,Cb,1,1]; empty when channels already match
  UpsampleMode upsample_mode = UpsampleMode::kClfd;
};

template <typename T>
FafceParams<T> random_fafce_params(int channels, int f, int fh, SplitMix64& rng, double weight_scale) {
  FafceParams<T> p;
  p.trigger = random_trigger_params<T>(channels, f, fh, rng, weight_scale);
  p.displacement = random_displacement_params<T>(channels, rng, weight_scale);
  p.w_a1 = Tensor<T>::full({channels}, T(1));
  p.w_b1 = Tensor<T>::full({channels}, T(1));
  p.w_a3 = Tensor<T>::full({channels}, T(1));
  p.w_b3 = Tensor<T>::full({channels}, T(1));
  return p;
}

template <typename T>
struct FafceVars {
  Var<T> clfd_conv, chfa_conv, orient_conv, scale_conv;
  Var<T> w_a1, w_b1, w_a3, w_b3;
  Var<T> proj;  // null when unused
  UpsampleMode upsample_mode = UpsampleMode::kClfd;
};

template <typename T>
FafceVars<T> make_fafce_vars(const FafceParams<T>& p) {
  FafceVars<T> v;
  v.clfd_conv = ad::leaf(p.trigger.clfd_conv);
  v.chfa_conv = ad::leaf(p.trigger.chfa_conv);
  v.orient_conv = ad::leaf(p.displacement.orient_conv);
  v.scale_conv = ad::leaf(p.displacement.scale_conv);
  v.w_a1 = ad::leaf(p.w_a1);
  v.w_b1 = ad::leaf(p.w_b1);
  v.w_a3 = ad::leaf(p.w_a3);
  v.w_b3 = ad::leaf(p.w_b3);
  if (p.proj.size() > 0) v.proj = ad::leaf(p.proj);
  v.upsample_mode = p.upsample_mode;
  return v;
}

template <typename T>
void fafce_var_entries(const std::string& prefix, const FafceVars<T>& v,
                       std::vector<std::pair<std::string, Var<T>>>& out) {
  out.emplace_back(prefix + "clfd_conv", v.clfd_conv);
  out.emplace_back(prefix + "chfa_conv", v.chfa_conv);
  out.emplace_back(prefix + "orient_conv", v.orient_conv);
  out.emplace_back(prefix + "scale_conv", v.scale_conv);
  out.emplace_back(prefix + "w_a1", v.w_a1);
  out.emplace_back(prefix + "w_b1", v.w_b1);
  out.emplace_back(prefix + "w_a3", v.w_a3);
  out.emplace_back(prefix + "w_b3", v.w_b3);
  if (v.proj) out.emplace_back(prefix + "proj", v.proj);
}

template <typename T>
void fafce_param_entries(const std::string& prefix, FafceParams<T>& p,
                         std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  out.emplace_back(prefix + "clfd_conv", &p.trigger.clfd_conv);
  out.emplace_back(prefix + "chfa_conv", &p.trigger.chfa_conv);
  out.emplace_back(prefix + "orient_conv", &p.displacement.orient_conv);
  out.emplace_back(prefix + "scale_conv", &p.displacement.scale_conv);
  out.emplace_back(prefix + "w_a1", &p.w_a1);
  out.emplace_back(prefix + "w_b1", &p.w_b1);
  out.emplace_back(prefix + "w_a3", &p.w_a3);
  out.emplace_back(prefix + "w_b3", &p.w_b3);
  if (p.proj.size() > 0) out.emplace_back(prefix + "proj", &p.proj);
}

// intermediate values of one forward pass, for the fuse trace and the tests
template <typename T>
struct FafceTrace {
  Tensor<T> m;
  Tensor<T> damping;    // [F*F, 2H, 2W]
  Tensor<T> amplifier;  // [Fh*Fh, 2H, 2W]
  Tensor<T> a_enhanced;
  Tensor<T> b_upsampled;
  Tensor<T> b_initial;
  Tensor<T> similarity;
  Tensor<T> displacement;  // [2, 2H, 2W]
  Tensor<T> b_intermediate;
  Tensor<T> b_out;
};

namespace detail {

template <typename T>
struct FafceStage1 {
  Var<T> b_initial, a_enhanced, b_upsampled;
};

template <typename T>
FafceStage1<T> fafce_stage1(const Var<T>& a, const Var<T>& b_in, const FafceVars<T>& v, FafceTrace<T>* trace) {
  Var<T> b = b_in;
  if (v.proj) b = ad::conv2d(b, v.proj, Border::kReplicate);
  require(b->value.dim(0) == a->value.dim(0),
          "fafce: channel mismatch " + dims_to_string(a->value.dims()) + " vs " + dims_to_string(b_in->value.dims()));
  require(a->value.dim(1) == 2 * b->value.dim(1) && a->value.dim(2) == 2 * b->value.dim(2),
          "fafce: fine map must be exactly 2x the coarse resolution, got " + dims_to_string(a->value.dims()) +
              " vs " + dims_to_string(b_in->value.dims()));
  auto m = ad::add(a, ad::nearest_upsample2x(b));
  auto amp = chfa_kernels(m, v.chfa_conv);
  auto a_enh = chfa_apply(a, amp);
  Var<T> b_up;
  if (v.upsample_mode == UpsampleMode::kClfd) {
    auto damp = clfd_kernels(m, v.clfd_conv);
    if (trace) trace->damping = damp->value;
    b_up = clfd_apply(b, damp);
  } else {
    b_up = ad::nearest_upsample2x(b);
  }
  FafceStage1<T> s;
  s.b_initial = ad::add(ad::mul_channel_gate(b_up, v.w_b1), ad::mul_channel_gate(a_enh, v.w_a1));
  s.a_enhanced = a_enh;
  s.b_upsampled = b_up;
  if (trace) {
    trace->m = m->value;
    trace->amplifier = amp->value;
    trace->a_enhanced = a_enh->value;
    trace->b_upsampled = b_up->value;
    trace->b_initial = s.b_initial->value;
  }
  return s;
}

}  // namespace detail

// stage 1 only
template <typename T>
Var<T> preliminary_fuse(const Var<T>& a, const Var<T>& b, const FafceVars<T>& v, FafceTrace<T>* trace = nullptr) {
  return detail::fafce_stage1(a, b, v, trace).b_initial;
}

// full three-stage unit
template <typename T>
Var<T> fafce_forward(const Var<T>& a, const Var<T>& b, const FafceVars<T>& v, FafceTrace<T>* trace = nullptr) {
  auto s1 = detail::fafce_stage1(a, b, v, trace);
  auto sim = local_cosine_similarity(s1.b_initial);
  auto field = displacement_field(s1.b_initial, sim, v.orient_conv, v.scale_conv);
  auto b_inter = ad::resample(s1.b_upsampled, field.d);
  auto out = ad::add(ad::mul_channel_gate(b_inter, v.w_b3), ad::mul_channel_gate(s1.a_enhanced, v.w_a3));
  if (trace) {
    trace->similarity = sim->value;
    trace->displacement = field.d->value;
    trace->b_intermediate = b_inter->value;
    trace->b_out = out->value;
  }
  return out;
}

// ---- plain path ----

template <typename T>
Tensor<T> preliminary_fuse(const Tensor<T>& a, const Tensor<T>& b, const FafceParams<T>& p,
                           FafceTrace<T>* trace = nullptr) {
  auto v = make_fafce_vars(p);
  return preliminary_fuse(ad::constant(a), ad::constant(b), v, trace)->value;
}

template <typename T>
Tensor<T> fafce_forward(const Tensor<T>& a, const Tensor<T>& b, const FafceParams<T>& p,
                        FafceTrace<T>* trace = nullptr) {
  auto v = make_fafce_vars(p);
  return fafce_forward(ad::constant(a), ad::constant(b), v, trace)->value;
}

}  // namespace butter

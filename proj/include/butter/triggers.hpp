#pragma once

#include <cmath>

#include "butter/autodiff.hpp"
#include "butter/rng.hpp"
#include "butter/tensor.hpp"
#include "butter/tensor_ops.hpp"

// Content-adaptive frequency triggers. Both triggers predict one small
// stencil per pixel from the fused context map M with a 3x3 conv:
//   damping path   : kernel-axis softmax  -> positive taps summing to 1,
//                    a per-pixel low-pass used to upsample the coarse input
//   amplifier path : identity minus softmax -> taps summing to 0 with the
//                    center in (0,1), a per-pixel high-pass residual
namespace butter {

template <typename T>
struct TriggerParams {
  Tensor<T> clfd_conv;  // [F*F, C, 3, 3]
  Tensor<T> chfa_conv;  // [Fh*Fh, C, 3, 3]
};

// per-pixel low-pass stencils, [F*F, Hm, Wm], taps positive, sum 1
template <typename T>
struct DampingKernels {
  Tensor<T> kernels;
  int f = 0;
};

// per-pixel high-pass stencils, [Fh*Fh, Hm, Wm], taps sum 0
template <typename T>
struct AmplifierKernels {
  Tensor<T> kernels;
  int f = 0;
};

inline int stencil_extent(int bank_channels, const char* who) {
  const int f = static_cast<int>(std::lround(std::sqrt(static_cast<double>(bank_channels))));
  detail::require(f * f == bank_channels && f % 2 == 1,
                  std::string(who) + ": kernel bank must hold an odd-square tap count");
  return f;
}

template <typename T>
TriggerParams<T> random_trigger_params(int channels, int f, int fh, SplitMix64& rng, double weight_scale) {
  detail::require(f % 2 == 1 && fh % 2 == 1, "random_trigger_params: kernel extents must be odd");
  TriggerParams<T> p;
  p.clfd_conv = random_tensor<T>({f * f, channels, 3, 3}, rng, -weight_scale, weight_scale);
  p.chfa_conv = random_tensor<T>({fh * fh, channels, 3, 3}, rng, -weight_scale, weight_scale);
  return p;
}

// ---- graph path ----

template <typename T>
Var<T> clfd_kernels(const Var<T>& m, const Var<T>& conv_w) {
  stencil_extent(conv_w->value.dim(0), "clfd_kernels");
  detail::require(m->value.dim(1) % 2 == 0 && m->value.dim(2) % 2 == 0,
                  "clfd_kernels: context map dims must be even, got " + dims_to_string(m->value.dims()));
  auto logits = ad::conv2d(m, conv_w, Border::kReplicate);
  return ad::softmax_axis(logits, 0);
}

// upsample b [C,H,W] to [C,2H,2W]: the four output phases each blend an FxF
// window of b with that phase's per-pixel stencil
template <typename T>
Var<T> clfd_apply(const Var<T>& b, const Var<T>& q) {
  const int f2 = q->value.dim(0);
  stencil_extent(f2, "clfd_apply");
  detail::require(q->value.dim(1) == 2 * b->value.dim(1) && q->value.dim(2) == 2 * b->value.dim(2),
                  "clfd_apply: kernel field must be at 2x the coarse resolution");
  auto grouped = ad::space_to_depth(q);  // [4*F*F, H, W], phase-major
  std::vector<Var<T>> phases;
  phases.reserve(4);
  for (int g = 0; g < 4; ++g)
    phases.push_back(ad::percell_filter(b, ad::narrow_channels(grouped, g * f2, f2)));
  return ad::depth_to_space(ad::concat_channels(phases));
}

template <typename T>
Var<T> chfa_kernels(const Var<T>& m, const Var<T>& conv_w) {
  const int f = stencil_extent(conv_w->value.dim(0), "chfa_kernels");
  auto soft = ad::softmax_axis(ad::conv2d(m, conv_w, Border::kReplicate), 0);
  Tensor<T> e(soft->value.dims());
  const int center = (f / 2) * f + f / 2;
  const std::int64_t plane = static_cast<std::int64_t>(e.dim(1)) * e.dim(2);
  for (std::int64_t i = 0; i < plane; ++i) e[center * plane + i] = T(1);
  return ad::sub(ad::constant(std::move(e)), soft);
}

// residual high-pass: a plus the per-pixel stencil response of a
template <typename T>
Var<T> chfa_apply(const Var<T>& a, const Var<T>& w) {
  detail::require(w->value.dim(1) == a->value.dim(1) && w->value.dim(2) == a->value.dim(2),
                  "chfa_apply: kernel field resolution must match the input");
  return ad::add(a, ad::percell_filter(a, w));
}

// ---- plain path ----

template <typename T>
DampingKernels<T> clfd_kernels(const Tensor<T>& m, const TriggerParams<T>& p) {
  auto q = clfd_kernels(ad::constant(m), ad::constant(p.clfd_conv));
  return DampingKernels<T>{q->value, stencil_extent(p.clfd_conv.dim(0), "clfd_kernels")};
}

template <typename T>
Tensor<T> clfd_apply(const Tensor<T>& b, const DampingKernels<T>& q) {
  return clfd_apply(ad::constant(b), ad::constant(q.kernels))->value;
}

template <typename T>
AmplifierKernels<T> chfa_kernels(const Tensor<T>& m, const TriggerParams<T>& p) {
  auto w = chfa_kernels(ad::constant(m), ad::constant(p.chfa_conv));
  return AmplifierKernels<T>{w->value, stencil_extent(p.chfa_conv.dim(0), "chfa_kernels")};
}

template <typename T>
Tensor<T> chfa_apply(const Tensor<T>& a, const AmplifierKernels<T>& w) {
  return chfa_apply(ad::constant(a), ad::constant(w.kernels))->value;
}

}  // namespace butter

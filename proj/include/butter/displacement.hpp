#pragma once

#include "butter/autodiff.hpp"
#include "butter/rng.hpp"
#include "butter/tensor.hpp"

// Alignment stage. Each pixel gets a 2-vector displacement d = o * p where o
// is an unbounded orientation estimate and p a (0,1) confidence gate, both
// predicted by 3x3 convs over the feature map concatenated with its local
// 8-neighbor cosine similarity. Features are then pulled bilinearly at the
// displaced coordinates.
namespace butter {

template <typename T>
struct SimilarityMap {
  Tensor<T> values;  // [8,H,W], neighbor scan order fixed by kNeighborOffsets
};

template <typename T>
struct DisplacementParams {
  Tensor<T> orient_conv;  // [2, C+8, 3, 3]
  Tensor<T> scale_conv;   // [2, C+8, 3, 3]
};

template <typename T>
struct DisplacementField {
  Tensor<T> d;  // [2,H,W], d = o * p elementwise
  Tensor<T> o;
  Tensor<T> p;
};

template <typename T>
DisplacementParams<T> random_displacement_params(int channels, SplitMix64& rng, double weight_scale) {
  DisplacementParams<T> p;
  p.orient_conv = random_tensor<T>({2, channels + 8, 3, 3}, rng, -weight_scale, weight_scale);
  p.scale_conv = random_tensor<T>({2, channels + 8, 3, 3}, rng, -weight_scale, weight_scale);
  return p;
}

// ---- graph path ----

template <typename T>
Var<T> local_cosine_similarity(const Var<T>& m) {
  return ad::cosine_sim8(m);
}

template <typename T>
struct DisplacementVars {
  Var<T> d, o, p;
};

template <typename T>
DisplacementVars<T> displacement_field(const Var<T>& m, const Var<T>& s, const Var<T>& orient_conv,
                                       const Var<T>& scale_conv) {
  detail::require(s->value.ndim() == 3 && s->value.dim(0) == 8, "displacement_field: similarity must be [8,H,W]");
  detail::require(s->value.dim(1) == m->value.dim(1) && s->value.dim(2) == m->value.dim(2),
                  "displacement_field: similarity resolution must match the feature map");
  auto cat = ad::concat_channels<T>({m, s});
  DisplacementVars<T> out;
  out.o = ad::conv2d(cat, orient_conv, Border::kReplicate);
  out.p = ad::sigmoid(ad::conv2d(cat, scale_conv, Border::kReplicate));
  out.d = ad::mul(out.o, out.p);
  return out;
}

template <typename T>
Var<T> resample(const Var<T>& x, const Var<T>& d) {
  return ad::resample(x, d);
}

// ---- plain path ----

template <typename T>
SimilarityMap<T> local_cosine_similarity(const Tensor<T>& m) {
  return SimilarityMap<T>{ad::cosine_sim8(ad::constant(m))->value};
}

template <typename T>
DisplacementField<T> displacement_field(const Tensor<T>& m, const SimilarityMap<T>& s,
                                        const DisplacementParams<T>& params) {
  auto v = displacement_field(ad::constant(m), ad::constant(s.values), ad::constant(params.orient_conv),
                              ad::constant(params.scale_conv));
  return DisplacementField<T>{v.d->value, v.o->value, v.p->value};
}

template <typename T>
Tensor<T> resample(const Tensor<T>& x, const DisplacementField<T>& field) {
  return ad::resample(ad::constant(x), ad::constant(field.d))->value;
}

}  // namespace butter

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "butter/fafce.hpp"
#include "butter/phffnet.hpp"

// Minimal single-image detection scaffold around the fusion neck: a small
// depthwise-separable backbone with SPPF and CBAM on the coarsest level,
// per-level 1x1 prediction heads, and the composite training loss
// (coordinate + classification + focal). The scaffold exists to give the
// neck realistic producers and consumers; it is not a competitive detector.
namespace butter {

// ---- attention ----

template <typename T>
struct CbamParams {
  Tensor<T> mlp_w1;        // [Cr, C]
  Tensor<T> mlp_b1;        // [Cr]
  Tensor<T> mlp_w2;        // [C, Cr]
  Tensor<T> mlp_b2;        // [C]
  Tensor<T> spatial_conv;  // [1, 2, k, k]
  Tensor<T> spatial_bias;  // [1]
};

template <typename T>
struct CbamVars {
  Var<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2, spatial_conv, spatial_bias;
};

template <typename T>
CbamVars<T> make_cbam_vars(const CbamParams<T>& p) {
  return CbamVars<T>{ad::leaf(p.mlp_w1),       ad::leaf(p.mlp_b1),
                     ad::leaf(p.mlp_w2),       ad::leaf(p.mlp_b2),
                     ad::leaf(p.spatial_conv), ad::leaf(p.spatial_bias)};
}

// channel gate from pooled statistics through a shared 2-layer MLP, then a
// spatial gate from the mean/max maps. Both gates are strict (0,1) factors,
// so |out| <= |in| elementwise; saturating the logits recovers the identity.
template <typename T>
Var<T> cbam(const Var<T>& x, const CbamVars<T>& v) {
  auto avg = ad::global_avg_vector(x);
  auto mx = ad::global_max_vector(x);
  auto h_avg = ad::relu(ad::linear(v.mlp_w1, avg, v.mlp_b1));
  auto h_max = ad::relu(ad::linear(v.mlp_w1, mx, v.mlp_b1));
  auto gate_c = ad::sigmoid(ad::add(ad::linear(v.mlp_w2, h_avg, v.mlp_b2), ad::linear(v.mlp_w2, h_max, v.mlp_b2)));
  auto xc = ad::mul_channel_gate(x, gate_c);
  auto stats = ad::concat_channels<T>({ad::channel_mean_map(xc), ad::channel_max_map(xc)});
  auto gate_s = ad::sigmoid(ad::add_channel_bias(ad::conv2d(stats, v.spatial_conv, Border::kReplicate), v.spatial_bias));
  return ad::mul_spatial(xc, gate_s);
}

// same-resolution pyramid pooling: input plus three stacked max pools
template <typename T>
Var<T> sppf(const Var<T>& x, int k) {
  auto p1 = ad::maxpool_same(x, k);
  auto p2 = ad::maxpool_same(p1, k);
  auto p3 = ad::maxpool_same(p2, k);
  return ad::concat_channels<T>({x, p1, p2, p3});
}

// ---- backbone ----

template <typename T>
struct StageParams {
  Tensor<T> dw;  // [C,3,3], stride 2
  Tensor<T> pw;  // [C,C,1,1]
};

template <typename T>
struct BackboneParams {
  Tensor<T> stem_pw1;  // [C,3,1,1]
  Tensor<T> stem_dw1;  // [C,3,3], stride 2
  Tensor<T> stem_pw2;  // [C,C,1,1]
  Tensor<T> stem_dw2;  // [C,3,3], stride 2
  StageParams<T> st3, st4, st5;
  Tensor<T> sppf_reduce;  // [C,4C,1,1]
  int sppf_k = 5;
  CbamParams<T> cbam;
};

template <typename T>
BackboneParams<T> random_backbone_params(int channels, SplitMix64& rng, double weight_scale) {
  const int cr = channels / 2 > 0 ? channels / 2 : 1;
  BackboneParams<T> p;
  p.stem_pw1 = random_tensor<T>({channels, 3, 1, 1}, rng, -weight_scale, weight_scale);
  p.stem_dw1 = random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale);
  p.stem_pw2 = random_tensor<T>({channels, channels, 1, 1}, rng, -weight_scale, weight_scale);
  p.stem_dw2 = random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale);
  for (auto* st : {&p.st3, &p.st4, &p.st5}) {
    st->dw = random_tensor<T>({channels, 3, 3}, rng, -weight_scale, weight_scale);
    st->pw = random_tensor<T>({channels, channels, 1, 1}, rng, -weight_scale, weight_scale);
  }
  p.sppf_reduce = random_tensor<T>({channels, 4 * channels, 1, 1}, rng, -weight_scale, weight_scale);
  p.cbam.mlp_w1 = random_tensor<T>({cr, channels}, rng, -weight_scale, weight_scale);
  p.cbam.mlp_b1 = Tensor<T>({cr});
  p.cbam.mlp_w2 = random_tensor<T>({channels, cr}, rng, -weight_scale, weight_scale);
  p.cbam.mlp_b2 = Tensor<T>({channels});
  p.cbam.spatial_conv = random_tensor<T>({1, 2, 7, 7}, rng, -weight_scale, weight_scale);
  p.cbam.spatial_bias = Tensor<T>({1});
  return p;
}

template <typename T>
struct BackboneVars {
  Var<T> stem_pw1, stem_dw1, stem_pw2, stem_dw2;
  Var<T> st3_dw, st3_pw, st4_dw, st4_pw, st5_dw, st5_pw;
  Var<T> sppf_reduce;
  int sppf_k = 5;
  CbamVars<T> cbam;
};

template <typename T>
BackboneVars<T> make_backbone_vars(const BackboneParams<T>& p) {
  BackboneVars<T> v;
  v.stem_pw1 = ad::leaf(p.stem_pw1);
  v.stem_dw1 = ad::leaf(p.stem_dw1);
  v.stem_pw2 = ad::leaf(p.stem_pw2);
  v.stem_dw2 = ad::leaf(p.stem_dw2);
  v.st3_dw = ad::leaf(p.st3.dw);
  v.st3_pw = ad::leaf(p.st3.pw);
  v.st4_dw = ad::leaf(p.st4.dw);
  v.st4_pw = ad::leaf(p.st4.pw);
  v.st5_dw = ad::leaf(p.st5.dw);
  v.st5_pw = ad::leaf(p.st5.pw);
  v.sppf_reduce = ad::leaf(p.sppf_reduce);
  v.sppf_k = p.sppf_k;
  v.cbam = make_cbam_vars(p.cbam);
  return v;
}

// image [3,H,W] with H,W divisible by 32 -> levels at strides 4/8/16/32
template <typename T>
PyramidVars<T> backbone_forward(const Var<T>& image, const BackboneVars<T>& v) {
  detail::require(image->value.ndim() == 3 && image->value.dim(0) == 3,
                  "backbone_forward: image must be [3,H,W], got " + dims_to_string(image->value.dims()));
  detail::require(image->value.dim(1) % 32 == 0 && image->value.dim(2) % 32 == 0,
                  "backbone_forward: image dims must be divisible by 32, got " + dims_to_string(image->value.dims()));
  auto x = ad::conv2d(image, v.stem_pw1, Border::kReplicate);
  x = ad::depthwise_conv2d(x, v.stem_dw1, Border::kReplicate, 2);
  x = ad::conv2d(x, v.stem_pw2, Border::kReplicate);
  PyramidVars<T> pyr;
  pyr.c2 = ad::depthwise_conv2d(x, v.stem_dw2, Border::kReplicate, 2);
  pyr.c3 = ad::conv2d(ad::depthwise_conv2d(pyr.c2, v.st3_dw, Border::kReplicate, 2), v.st3_pw, Border::kReplicate);
  pyr.c4 = ad::conv2d(ad::depthwise_conv2d(pyr.c3, v.st4_dw, Border::kReplicate, 2), v.st4_pw, Border::kReplicate);
  auto c5_pre = ad::conv2d(ad::depthwise_conv2d(pyr.c4, v.st5_dw, Border::kReplicate, 2), v.st5_pw, Border::kReplicate);
  auto pooled = ad::conv2d(sppf(c5_pre, v.sppf_k), v.sppf_reduce, Border::kReplicate);
  pyr.c5 = cbam(pooled, v.cbam);
  return pyr;
}

// ---- heads ----

template <typename T>
struct HeadParams {
  Tensor<T> conv;  // [(5+K), C, 1, 1]
};

// decoded per-pixel predictions at one stride
template <typename T>
struct HeadOutput {
  Tensor<T> box;  // [4,H,W]: sigmoid x, sigmoid y (cell-relative), exp w, exp h
  Tensor<T> cls;  // [K,H,W], sigmoid
  Tensor<T> obj;  // [1,H,W], sigmoid
};

template <typename T>
struct HeadOutVars {
  Var<T> box, cls, obj;
};

template <typename T>
HeadOutVars<T> head_forward(const Var<T>& x, const Var<T>& conv_w) {
  const int k = conv_w->value.dim(0) - 5;
  detail::require(k >= 1, "head_forward: head conv must emit 4 box + K class + 1 objectness channels");
  auto raw = ad::conv2d(x, conv_w, Border::kReplicate);
  HeadOutVars<T> out;
  out.box = ad::concat_channels<T>(
      {ad::sigmoid(ad::narrow_channels(raw, 0, 2)), ad::exp(ad::narrow_channels(raw, 2, 2))});
  out.cls = ad::sigmoid(ad::narrow_channels(raw, 4, k));
  out.obj = ad::sigmoid(ad::narrow_channels(raw, 4 + k, 1));
  return out;
}

// ---- ground truth ----

template <typename T>
struct GtRecord {
  int cell = 0;  // row-major index into the S*S grid
  int slot = 0;  // responsible head, 0 = finest stride
  T x = 0, y = 0;  // cell-relative center, [0,1]
  T w = 0, h = 0;  // normalized extents, (0,1]
  int cls = 0;
};

template <typename T>
struct GroundTruth {
  int grid_s = 0;
  int boxes_b = 0;  // declared record count
  int num_classes = 0;
  std::vector<GtRecord<T>> records;
};

template <typename T>
void validate_ground_truth(const GroundTruth<T>& gt, int num_heads = 4) {
  detail::require(gt.grid_s >= 1 && gt.num_classes >= 1, "ground truth: S and K must be positive");
  detail::require(static_cast<int>(gt.records.size()) == gt.boxes_b, "ground truth: record count does not match B");
  for (const auto& r : gt.records) {
    detail::require(r.cell >= 0 && r.cell < gt.grid_s * gt.grid_s, "ground truth: cell index out of range");
    detail::require(r.slot >= 0 && r.slot < num_heads, "ground truth: head slot out of range");
    detail::require(r.x >= T(0) && r.x <= T(1) && r.y >= T(0) && r.y <= T(1), "ground truth: center must lie in [0,1]");
    detail::require(r.w > T(0) && r.w <= T(1) && r.h > T(0) && r.h <= T(1), "ground truth: extents must lie in (0,1]");
    detail::require(r.cls >= 0 && r.cls < gt.num_classes, "ground truth: class id out of range");
  }
}

// center of grid cell `cell` mapped into a head's pixel grid
inline std::pair<int, int> responsible_pixel(int cell, int grid_s, int h, int w) {
  const int row = cell / grid_s, col = cell % grid_s;
  int pi = static_cast<int>((2 * row + 1) * h / (2 * grid_s));
  int pj = static_cast<int>((2 * col + 1) * w / (2 * grid_s));
  if (pi >= h) pi = h - 1;
  if (pj >= w) pj = w - 1;
  return {pi, pj};
}

// ---- losses ----

struct LossDiagnostics {
  int clamped_extents = 0;  // predicted w/h that were negative before sqrt
};

template <typename T>
struct LossBreakdown {
  T iou = 0, cls = 0, dfl = 0, total = 0;
};

// squared-error coordinate loss with sqrt-compressed extents, coord weight 1
template <typename T>
T iou_coordinate_loss(const std::vector<HeadOutput<T>>& heads, const GroundTruth<T>& gt,
                      LossDiagnostics* diag = nullptr) {
  validate_ground_truth(gt, static_cast<int>(heads.size()));
  long double acc = 0;
  for (const auto& r : gt.records) {
    const auto& head = heads[static_cast<std::size_t>(r.slot)];
    const auto [pi, pj] = responsible_pixel(r.cell, gt.grid_s, head.box.dim(1), head.box.dim(2));
    const T px = head.box.at(0, pi, pj), py = head.box.at(1, pi, pj);
    T pw = head.box.at(2, pi, pj), ph = head.box.at(3, pi, pj);
    if (pw < T(0)) {
      pw = T(0);
      if (diag) ++diag->clamped_extents;
    }
    if (ph < T(0)) {
      ph = T(0);
      if (diag) ++diag->clamped_extents;
    }
    const long double dx = static_cast<long double>(px) - r.x;
    const long double dy = static_cast<long double>(py) - r.y;
    const long double dw = std::sqrt(static_cast<long double>(pw)) - std::sqrt(static_cast<long double>(r.w));
    const long double dh = std::sqrt(static_cast<long double>(ph)) - std::sqrt(static_cast<long double>(r.h));
    acc += dx * dx + dy * dy + dw * dw + dh * dh;
  }
  return static_cast<T>(acc);
}

// squared error against the one-hot class vector at each responsible pixel
template <typename T>
T cls_loss(const std::vector<HeadOutput<T>>& heads, const GroundTruth<T>& gt) {
  validate_ground_truth(gt, static_cast<int>(heads.size()));
  long double acc = 0;
  for (const auto& r : gt.records) {
    const auto& head = heads[static_cast<std::size_t>(r.slot)];
    const auto [pi, pj] = responsible_pixel(r.cell, gt.grid_s, head.cls.dim(1), head.cls.dim(2));
    for (int c = 0; c < gt.num_classes; ++c) {
      const long double d = static_cast<long double>(head.cls.at(c, pi, pj)) - (c == r.cls ? 1.0L : 0.0L);
      acc += d * d;
    }
  }
  return static_cast<T>(acc);
}

// focal loss over probability rows with strictly one-hot labels.
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs.
template <typename T>
T dfl_focal_loss(const Tensor<T>& probs, const Tensor<T>& labels, T alpha, T gamma) {
  detail::require(probs.ndim() == 2 && labels.ndim() == 2 && probs.same_dims(labels),
                  "dfl_focal_loss: probs and labels must be matching [N,K]");
  const int n = probs.dim(0), k = probs.dim(1);
  for (int i = 0; i < n; ++i) {
    int ones = 0;
    for (int j = 0; j < k; ++j) {
      const T v = labels[static_cast<std::int64_t>(i) * k + j];
      detail::require(v == T(0) || v == T(1), "dfl_focal_loss: labels must be one-hot");
      if (v == T(1)) ++ones;
    }
    detail::require(ones == 1, "dfl_focal_loss: labels must be one-hot");
  }
  const T lo = static_cast<T>(1e-7), hi = T(1) - static_cast<T>(1e-7);
  long double acc = 0;
  for (std::int64_t i = 0; i < probs.size(); ++i) {
    long double p = static_cast<long double>(std::min(std::max(probs[i], lo), hi));
    if (labels[i] == T(1))
      acc += static_cast<long double>(alpha) * std::pow(1.0L - p, static_cast<long double>(gamma)) * std::log(p);
    else
      acc += (1.0L - static_cast<long double>(alpha)) * std::pow(p, static_cast<long double>(gamma)) *
             std::log(1.0L - p);
  }
  return static_cast<T>(-acc);
}

template <typename T>
struct LossWeights {
  T iou = static_cast<T>(7.5);
  T cls = static_cast<T>(0.5);
  T dfl = static_cast<T>(1.5);
};

template <typename T>
LossBreakdown<T> total_loss(T iou, T cls, T dfl, const LossWeights<T>& w) {
  detail::require(std::isfinite(static_cast<double>(iou)) && std::isfinite(static_cast<double>(cls)) &&
                      std::isfinite(static_cast<double>(dfl)),
                  "total_loss: components must be finite");
  detail::require(iou >= T(0) && cls >= T(0) && dfl >= T(0), "total_loss: components must be nonnegative");
  LossBreakdown<T> out;
  out.iou = iou;
  out.cls = cls;
  out.dfl = dfl;
  out.total = w.iou * iou + w.cls * cls + w.dfl * dfl;
  return out;
}

// gathered class probability rows and matching one-hot labels, [N,K]
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gather_class_rows(const std::vector<HeadOutput<T>>& heads,
                                                  const GroundTruth<T>& gt) {
  validate_ground_truth(gt, static_cast<int>(heads.size()));
  const int n = static_cast<int>(gt.records.size()), k = gt.num_classes;
  Tensor<T> probs({n > 0 ? n : 1, k});
  Tensor<T> labels({n > 0 ? n : 1, k});
  if (n == 0) {
    labels[0] = T(1);  // degenerate single row so callers can still form [N,K]
    probs[0] = T(1);
  }
  for (int i = 0; i < n; ++i) {
    const auto& r = gt.records[static_cast<std::size_t>(i)];
    const auto& head = heads[static_cast<std::size_t>(r.slot)];
    const auto [pi, pj] = responsible_pixel(r.cell, gt.grid_s, head.cls.dim(1), head.cls.dim(2));
    for (int c = 0; c < k; ++c) {
      probs[static_cast<std::int64_t>(i) * k + c] = head.cls.at(c, pi, pj);
      labels[static_cast<std::int64_t>(i) * k + c] = c == r.cls ? T(1) : T(0);
    }
  }
  return {std::move(probs), std::move(labels)};
}

// ---- composite loss on the graph ----

template <typename T>
Var<T> scalar_var(T v) {
  Tensor<T> t({1});
  t[0] = v;
  return ad::constant(std::move(t));
}

template <typename T>
struct DetectionLossVars {
  Var<T> total, iou, cls, dfl;
};

template <typename T>
DetectionLossVars<T> detection_loss(const std::vector<HeadOutVars<T>>& heads, const GroundTruth<T>& gt,
                                    const LossWeights<T>& w, T alpha, T gamma) {
  validate_ground_truth(gt, static_cast<int>(heads.size()));
  const T lo = static_cast<T>(1e-7), hi = T(1) - static_cast<T>(1e-7);
  auto one_minus = [](const Var<T>& p) { return ad::add_scalar(ad::scale(p, T(-1)), T(1)); };
  Var<T> iou_acc, cls_acc, dfl_acc;
  auto accumulate = [](Var<T>& acc, const Var<T>& term) { acc = acc ? ad::add(acc, term) : term; };
  for (const auto& r : gt.records) {
    const auto& head = heads[static_cast<std::size_t>(r.slot)];
    const int bh = head.box->value.dim(1), bw = head.box->value.dim(2);
    const auto [pi, pj] = responsible_pixel(r.cell, gt.grid_s, bh, bw);
    auto flat = [&](int ch) { return (static_cast<std::int64_t>(ch) * bh + pi) * bw + pj; };
    auto dx = ad::add_scalar(ad::pick(head.box, flat(0)), -r.x);
    auto dy = ad::add_scalar(ad::pick(head.box, flat(1)), -r.y);
    auto dw = ad::add_scalar(ad::sqrt0(ad::pick(head.box, flat(2))), static_cast<T>(-std::sqrt(static_cast<double>(r.w))));
    auto dh = ad::add_scalar(ad::sqrt0(ad::pick(head.box, flat(3))), static_cast<T>(-std::sqrt(static_cast<double>(r.h))));
    accumulate(iou_acc, ad::add(ad::add(ad::mul(dx, dx), ad::mul(dy, dy)), ad::add(ad::mul(dw, dw), ad::mul(dh, dh))));
    const int ch2 = head.cls->value.dim(1), cw2 = head.cls->value.dim(2);
    const auto [ci, cj] = responsible_pixel(r.cell, gt.grid_s, ch2, cw2);
    for (int c = 0; c < gt.num_classes; ++c) {
      auto p = ad::pick(head.cls, (static_cast<std::int64_t>(c) * ch2 + ci) * cw2 + cj);
      auto d = ad::add_scalar(p, c == r.cls ? T(-1) : T(0));
      accumulate(cls_acc, ad::mul(d, d));
      auto pc = ad::clamp(p, lo, hi);
      Var<T> term;
      if (c == r.cls)
        term = ad::scale(ad::mul(ad::pow_const(one_minus(pc), gamma), ad::log(pc)), alpha);
      else
        term = ad::scale(ad::mul(ad::pow_const(pc, gamma), ad::log(one_minus(pc))), T(1) - alpha);
      accumulate(dfl_acc, term);
    }
  }
  DetectionLossVars<T> out;
  out.iou = iou_acc ? iou_acc : scalar_var(T(0));
  out.cls = cls_acc ? cls_acc : scalar_var(T(0));
  out.dfl = dfl_acc ? ad::scale(dfl_acc, T(-1)) : scalar_var(T(0));
  out.total = ad::add(ad::add(ad::scale(out.iou, w.iou), ad::scale(out.cls, w.cls)), ad::scale(out.dfl, w.dfl));
  return out;
}

// ---- full pipeline ----

template <typename T>
struct DetectorParams {
  BackboneParams<T> backbone;
  FafceParams<T> faf4, faf3, faf2;  // coarse-to-fine refinement order
  PhffnetParams<T> phff;
  std::array<HeadParams<T>, 4> heads;
  int num_classes = 1;
};

template <typename T>
DetectorParams<T> random_detector_params(int channels, int num_classes, int f, int fh, SplitMix64& rng,
                                         double weight_scale) {
  DetectorParams<T> p;
  p.backbone = random_backbone_params<T>(channels, rng, weight_scale);
  p.faf4 = random_fafce_params<T>(channels, f, fh, rng, weight_scale);
  p.faf3 = random_fafce_params<T>(channels, f, fh, rng, weight_scale);
  p.faf2 = random_fafce_params<T>(channels, f, fh, rng, weight_scale);
  p.phff = random_phffnet_params<T>(channels, rng, weight_scale);
  for (auto& h : p.heads)
    h.conv = random_tensor<T>({5 + num_classes, channels, 1, 1}, rng, -weight_scale, weight_scale);
  p.num_classes = num_classes;
  return p;
}

template <typename T>
struct DetectorVars {
  BackboneVars<T> backbone;
  FafceVars<T> faf4, faf3, faf2;
  PhffnetVars<T> phff;
  std::array<Var<T>, 4> head_conv;
};

template <typename T>
DetectorVars<T> make_detector_vars(const DetectorParams<T>& p) {
  DetectorVars<T> v;
  v.backbone = make_backbone_vars(p.backbone);
  v.faf4 = make_fafce_vars(p.faf4);
  v.faf3 = make_fafce_vars(p.faf3);
  v.faf2 = make_fafce_vars(p.faf2);
  v.phff = make_phffnet_vars(p.phff);
  for (int i = 0; i < 4; ++i) v.head_conv[static_cast<std::size_t>(i)] = ad::leaf(p.heads[static_cast<std::size_t>(i)].conv);
  return v;
}

template <typename T>
void backbone_var_entries(const std::string& prefix, const BackboneVars<T>& v,
                          std::vector<std::pair<std::string, Var<T>>>& out) {
  out.emplace_back(prefix + "stem_pw1", v.stem_pw1);
  out.emplace_back(prefix + "stem_dw1", v.stem_dw1);
  out.emplace_back(prefix + "stem_pw2", v.stem_pw2);
  out.emplace_back(prefix + "stem_dw2", v.stem_dw2);
  out.emplace_back(prefix + "st3.dw", v.st3_dw);
  out.emplace_back(prefix + "st3.pw", v.st3_pw);
  out.emplace_back(prefix + "st4.dw", v.st4_dw);
  out.emplace_back(prefix + "st4.pw", v.st4_pw);
  out.emplace_back(prefix + "st5.dw", v.st5_dw);
  out.emplace_back(prefix + "st5.pw", v.st5_pw);
  out.emplace_back(prefix + "sppf_reduce", v.sppf_reduce);
  out.emplace_back(prefix + "cbam.mlp_w1", v.cbam.mlp_w1);
  out.emplace_back(prefix + "cbam.mlp_b1", v.cbam.mlp_b1);
  out.emplace_back(prefix + "cbam.mlp_w2", v.cbam.mlp_w2);
  out.emplace_back(prefix + "cbam.mlp_b2", v.cbam.mlp_b2);
  out.emplace_back(prefix + "cbam.spatial_conv", v.cbam.spatial_conv);
  out.emplace_back(prefix + "cbam.spatial_bias", v.cbam.spatial_bias);
}

template <typename T>
void backbone_param_entries(const std::string& prefix, BackboneParams<T>& p,
                            std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  out.emplace_back(prefix + "stem_pw1", &p.stem_pw1);
  out.emplace_back(prefix + "stem_dw1", &p.stem_dw1);
  out.emplace_back(prefix + "stem_pw2", &p.stem_pw2);
  out.emplace_back(prefix + "stem_dw2", &p.stem_dw2);
  out.emplace_back(prefix + "st3.dw", &p.st3.dw);
  out.emplace_back(prefix + "st3.pw", &p.st3.pw);
  out.emplace_back(prefix + "st4.dw", &p.st4.dw);
  out.emplace_back(prefix + "st4.pw", &p.st4.pw);
  out.emplace_back(prefix + "st5.dw", &p.st5.dw);
  out.emplace_back(prefix + "st5.pw", &p.st5.pw);
  out.emplace_back(prefix + "sppf_reduce", &p.sppf_reduce);
  out.emplace_back(prefix + "cbam.mlp_w1", &p.cbam.mlp_w1);
  out.emplace_back(prefix + "cbam.mlp_b1", &p.cbam.mlp_b1);
  out.emplace_back(prefix + "cbam.mlp_w2", &p.cbam.mlp_w2);
  out.emplace_back(prefix + "cbam.mlp_b2", &p.cbam.mlp_b2);
  out.emplace_back(prefix + "cbam.spatial_conv", &p.cbam.spatial_conv);
  out.emplace_back(prefix + "cbam.spatial_bias", &p.cbam.spatial_bias);
}

template <typename T>
void detector_var_entries(const DetectorVars<T>& v, std::vector<std::pair<std::string, Var<T>>>& out) {
  backbone_var_entries("backbone.", v.backbone, out);
  fafce_var_entries("faf4.", v.faf4, out);
  fafce_var_entries("faf3.", v.faf3, out);
  fafce_var_entries("faf2.", v.faf2, out);
  phffnet_var_entries("phff.", v.phff, out);
  for (int i = 0; i < 4; ++i) out.emplace_back("head" + std::to_string(i) + ".conv", v.head_conv[static_cast<std::size_t>(i)]);
}

template <typename T>
void detector_param_entries(DetectorParams<T>& p, std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  backbone_param_entries("backbone.", p.backbone, out);
  fafce_param_entries("faf4.", p.faf4, out);
  fafce_param_entries("faf3.", p.faf3, out);
  fafce_param_entries("faf2.", p.faf2, out);
  phffnet_param_entries("phff.", p.phff, out);
  for (int i = 0; i < 4; ++i) out.emplace_back("head" + std::to_string(i) + ".conv", &p.heads[static_cast<std::size_t>(i)].conv);
}

template <typename T>
struct DetectorOutVars {
  PyramidVars<T> raw_pyramid;
  PyramidVars<T> refined_pyramid;
  FusedVars<T> fused;
  std::vector<HeadOutVars<T>> heads;
};

// backbone -> coarse-to-fine frequency refinement -> progressive fusion -> heads
template <typename T>
DetectorOutVars<T> detector_forward(const Var<T>& image, const DetectorVars<T>& v) {
  DetectorOutVars<T> out;
  out.raw_pyramid = backbone_forward(image, v.backbone);
  out.refined_pyramid.c5 = out.raw_pyramid.c5;
  out.refined_pyramid.c4 = fafce_forward(out.raw_pyramid.c4, out.refined_pyramid.c5, v.faf4);
  out.refined_pyramid.c3 = fafce_forward(out.raw_pyramid.c3, out.refined_pyramid.c4, v.faf3);
  out.refined_pyramid.c2 = fafce_forward(out.raw_pyramid.c2, out.refined_pyramid.c3, v.faf2);
  out.fused = phffnet_forward(out.refined_pyramid, v.phff);
  out.heads.reserve(4);
  for (int i = 0; i < 4; ++i)
    out.heads.push_back(head_forward(out.fused.head_inputs[static_cast<std::size_t>(i)], v.head_conv[static_cast<std::size_t>(i)]));
  return out;
}

// one plain gradient-descent update; vars must carry gradients from backward
template <typename T>
void detector_sgd_step(DetectorParams<T>& params, const DetectorVars<T>& vars, T lr) {
  std::vector<std::pair<std::string, Var<T>>> gv;
  detector_var_entries(vars, gv);
  std::vector<std::pair<std::string, Tensor<T>*>> pv;
  detector_param_entries(params, pv);
  detail::require(gv.size() == pv.size(), "detector_sgd_step: entry lists diverged");
  for (std::size_t i = 0; i < gv.size(); ++i) {
    detail::require(gv[i].first == pv[i].first, "detector_sgd_step: entry order diverged");
    Tensor<T> g = ad::gradient(gv[i].second);
    Tensor<T>& t = *pv[i].second;
    for (std::int64_t j = 0; j < t.size(); ++j) t[j] -= lr * g[j];
  }
}

}  // namespace butter

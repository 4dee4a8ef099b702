#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "butter/tensor.hpp"

namespace butter {

enum class Border { kZero, kReplicate };

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.same_dims(b), "add: dims " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.same_dims(b), "sub: dims " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.same_dims(b), "mul: dims " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
T sum_all(const Tensor<T>& a) {
  T s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

// ---- nonlinearities ----

// Numerically stable logistic. Output is pinned to the open interval (0,1):
// saturated inputs land on the smallest positive value / largest value below 1
// instead of exactly 0 or 1.
template <typename T>
T sigmoid_scalar(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    T e = std::exp(x);
    y = e / (T(1) + e);
  }
  if (y <= T(0)) y = std::numeric_limits<T>::min();
  if (y >= T(1)) y = std::nextafter(T(1), T(0));
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = sigmoid_scalar(a[i]);
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return out;
}

// Softmax along one axis with max subtraction, so constant shifts of the
// input cancel exactly and huge logits do not overflow.
template <typename T>
Tensor<T> softmax_over_axis(const Tensor<T>& t, int axis) {
  detail::require(axis >= 0 && axis < t.ndim(), "softmax_over_axis: axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= t.dim(i);
  for (int i = axis + 1; i < t.ndim(); ++i) inner *= t.dim(i);
  const int n = t.dim(axis);
  Tensor<T> out(t.dims());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      T m = t[base];
      for (int k = 1; k < n; ++k) m = std::max(m, t[base + k * inner]);
      T z = 0;
      for (int k = 0; k < n; ++k) {
        T e = std::exp(t[base + k * inner] - m);
        out[base + k * inner] = e;
        z += e;
      }
      // pinned to the open interval so the normalization contract survives
      // saturated logits, same policy as sigmoid_scalar
      for (int k = 0; k < n; ++k)
        out[base + k * inner] = std::clamp(out[base + k * inner] / z, std::numeric_limits<T>::min(),
                                           std::nextafter(T(1), T(0)));
    }
  }
  return out;
}

// ---- convolutions ----

// in [Ci,H,W], k [Co,Ci,kh,kw], odd square window, stride 1, output [Co,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const Tensor<T>& k, Border border) {
  detail::require(in.ndim() == 3, "conv2d: input must be [C,H,W], got " + dims_to_string(in.dims()));
  detail::require(k.ndim() == 4, "conv2d: kernel must be [O,C,kh,kw], got " + dims_to_string(k.dims()));
  detail::require(k.dim(1) == in.dim(0), "conv2d: channel mismatch " + dims_to_string(in.dims()) + " vs " + dims_to_string(k.dims()));
  detail::require(k.dim(2) == k.dim(3) && k.dim(2) % 2 == 1, "conv2d: window must be odd square, got " + dims_to_string(k.dims()));
  const int ci = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int co = k.dim(0), kw = k.dim(2), r = (kw - 1) / 2;
  Tensor<T> out({co, h, w});
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        T acc = 0;
        for (int c = 0; c < ci; ++c)
          for (int a = 0; a < kw; ++a)
            for (int b = 0; b < kw; ++b) {
              int ii = i + a - r, jj = j + b - r;
              if (border == Border::kZero) {
                if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              } else {
                ii = clamp_index(ii, h);
                jj = clamp_index(jj, w);
              }
              acc += k.at(o, c, a, b) * in.at(c, ii, jj);
            }
        out.at(o, i, j) = acc;
      }
  return out;
}

// in [C,H,W], k [C,kh,kw], one filter per channel, square odd window.
// stride > 1 subsamples output positions (top-left aligned).
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& in, const Tensor<T>& k, Border border, int stride = 1) {
  detail::require(in.ndim() == 3, "depthwise_conv2d: input must be [C,H,W], got " + dims_to_string(in.dims()));
  detail::require(k.ndim() == 3 && k.dim(0) == in.dim(0), "depthwise_conv2d: kernel must be [C,kh,kw] matching input channels");
  detail::require(k.dim(1) == k.dim(2) && k.dim(1) % 2 == 1, "depthwise_conv2d: window must be odd square");
  detail::require(stride >= 1, "depthwise_conv2d: stride must be positive");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int kw = k.dim(1), r = (kw - 1) / 2;
  const int ho = (h - 1) / stride + 1, wo = (w - 1) / stride + 1;
  Tensor<T> out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj) {
        const int i = oi * stride, j = oj * stride;
        T acc = 0;
        for (int a = 0; a < kw; ++a)
          for (int b = 0; b < kw; ++b) {
            int ii = i + a - r, jj = j + b - r;
            if (border == Border::kZero) {
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
            } else {
              ii = clamp_index(ii, h);
              jj = clamp_index(jj, w);
            }
            acc += k.at(ch, a, b) * in.at(ch, ii, jj);
          }
        out.at(ch, oi, oj) = acc;
      }
  return out;
}

// Per-pixel stencil: kern holds one f*f window per output position,
// flattened row-major over offsets, shared across channels. Replicate border.
// out[c,i,j] = sum_{a,b} kern[(a+r)*f+(b+r),i,j] * x[c,clamp(i+a),clamp(j+b)]
template <typename T>
Tensor<T> percell_filter(const Tensor<T>& x, const Tensor<T>& kern) {
  detail::require(x.ndim() == 3 && kern.ndim() == 3, "percell_filter: operands must be [C,H,W] and [f*f,H,W]");
  detail::require(kern.dim(1) == x.dim(1) && kern.dim(2) == x.dim(2), "percell_filter: spatial dims mismatch " + dims_to_string(x.dims()) + " vs " + dims_to_string(kern.dims()));
  const int f2 = kern.dim(0);
  const int f = static_cast<int>(std::lround(std::sqrt(static_cast<double>(f2))));
  detail::require(f * f == f2 && f % 2 == 1, "percell_filter: kernel bank channel count must be an odd square");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), r = (f - 1) / 2;
  Tensor<T> out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        T acc = 0;
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b) {
            const int idx = (a + r) * f + (b + r);
            acc += kern.at(idx, i, j) * x.at(ch, clamp_index(i + a, h), clamp_index(j + b, w));
          }
        out.at(ch, i, j) = acc;
      }
  return out;
}

// ---- layout moves ----

// [C,2H,2W] -> [4C,H,W], phase-major: output channel g*C+c holds the phase-g
// subgrid of channel c, with phases ordered TL, TR, BL, BR. Group g of size C
// is therefore a contiguous channel slice.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& t) {
  detail::require(t.ndim() == 3 && t.dim(1) % 2 == 0 && t.dim(2) % 2 == 0, "space_to_depth: input must be [C,2H,2W], got " + dims_to_string(t.dims()));
  const int c = t.dim(0), h = t.dim(1) / 2, w = t.dim(2) / 2;
  Tensor<T> out({4 * c, h, w});
  for (int g = 0; g < 4; ++g) {
    const int di = g / 2, dj = g % 2;
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) out.at(g * c + ch, i, j) = t.at(ch, 2 * i + di, 2 * j + dj);
  }
  return out;
}

// exact inverse of space_to_depth
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& t) {
  detail::require(t.ndim() == 3 && t.dim(0) % 4 == 0, "depth_to_space: input must be [4C,H,W], got " + dims_to_string(t.dims()));
  const int c = t.dim(0) / 4, h = t.dim(1), w = t.dim(2);
  Tensor<T> out({c, 2 * h, 2 * w});
  for (int g = 0; g < 4; ++g) {
    const int di = g / 2, dj = g % 2;
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) out.at(ch, 2 * i + di, 2 * j + dj) = t.at(g * c + ch, i, j);
  }
  return out;
}

template <typename T>
Tensor<T> nearest_upsample2x(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "nearest_upsample2x: input must be [C,H,W]");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor<T> out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) out.at(ch, i, j) = t.at(ch, i / 2, j / 2);
  return out;
}

// ---- sampling ----

// coords [2,Ho,Wo]: channel 0 rows, channel 1 cols, in input pixel units.
// Coordinates are clamped to [0,H-1]x[0,W-1] before the 4-neighbor blend.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& t, const Tensor<T>& coords) {
  detail::require(t.ndim() == 3, "bilinear_sample: input must be [C,H,W]");
  detail::require(coords.ndim() == 3 && coords.dim(0) == 2, "bilinear_sample: coords must be [2,Ho,Wo], got " + dims_to_string(coords.dims()));
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const int ho = coords.dim(1), wo = coords.dim(2);
  Tensor<T> out({c, ho, wo});
  for (int i = 0; i < ho; ++i)
    for (int j = 0; j < wo; ++j) {
      T rr = std::min(std::max(coords.at(0, i, j), T(0)), T(h - 1));
      T cc = std::min(std::max(coords.at(1, i, j), T(0)), T(w - 1));
      const int r0 = static_cast<int>(std::floor(rr)), c0 = static_cast<int>(std::floor(cc));
      const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
      const T fr = rr - static_cast<T>(r0), fc = cc - static_cast<T>(c0);
      for (int ch = 0; ch < c; ++ch) {
        const T v00 = t.at(ch, r0, c0), v01 = t.at(ch, r0, c1);
        const T v10 = t.at(ch, r1, c0), v11 = t.at(ch, r1, c1);
        out.at(ch, i, j) = (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11);
      }
    }
  return out;
}

// ---- pooling / reductions ----

// same-resolution max pool, odd square window, replicate border
template <typename T>
Tensor<T> maxpool_same(const Tensor<T>& t, int k) {
  detail::require(t.ndim() == 3, "maxpool_same: input must be [C,H,W]");
  detail::require(k % 2 == 1 && k >= 1, "maxpool_same: window must be odd");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2), r = (k - 1) / 2;
  Tensor<T> out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        T m = -std::numeric_limits<T>::infinity();
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b)
            m = std::max(m, t.at(ch, clamp_index(i + a, h), clamp_index(j + b, w)));
        out.at(ch, i, j) = m;
      }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_channels: empty part list");
  int c = 0;
  for (const auto& p : parts) {
    detail::require(p.ndim() == 3, "concat_channels: parts must be [C,H,W]");
    detail::require(p.dim(1) == parts[0].dim(1) && p.dim(2) == parts[0].dim(2), "concat_channels: spatial dims mismatch");
    c += p.dim(0);
  }
  Tensor<T> out({c, parts[0].dim(1), parts[0].dim(2)});
  std::int64_t off = 0;
  for (const auto& p : parts) {
    for (std::int64_t i = 0; i < p.size(); ++i) out[off + i] = p[i];
    off += p.size();
  }
  return out;
}

template <typename T>
Tensor<T> narrow_channels(const Tensor<T>& t, int start, int len) {
  detail::require(t.ndim() == 3, "narrow_channels: input must be [C,H,W]");
  detail::require(start >= 0 && len >= 1 && start + len <= t.dim(0), "narrow_channels: slice out of range");
  const int h = t.dim(1), w = t.dim(2);
  Tensor<T> out({len, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = t[start * plane + i];
  return out;
}

template <typename T>
Tensor<T> channel_mean_map(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "channel_mean_map: input must be [C,H,W]");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor<T> out({1, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      T s = 0;
      for (int ch = 0; ch < c; ++ch) s += t.at(ch, i, j);
      out.at(0, i, j) = s / static_cast<T>(c);
    }
  return out;
}

template <typename T>
Tensor<T> channel_max_map(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "channel_max_map: input must be [C,H,W]");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor<T> out({1, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      T m = t.at(0, i, j);
      for (int ch = 1; ch < c; ++ch) m = std::max(m, t.at(ch, i, j));
      out.at(0, i, j) = m;
    }
  return out;
}

template <typename T>
Tensor<T> global_avg_vector(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "global_avg_vector: input must be [C,H,W]");
  const int c = t.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(t.dim(1)) * t.dim(2);
  Tensor<T> out({c});
  for (int ch = 0; ch < c; ++ch) {
    T s = 0;
    for (std::int64_t i = 0; i < plane; ++i) s += t[ch * plane + i];
    out[ch] = s / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
Tensor<T> global_max_vector(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "global_max_vector: input must be [C,H,W]");
  const int c = t.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(t.dim(1)) * t.dim(2);
  Tensor<T> out({c});
  for (int ch = 0; ch < c; ++ch) {
    T m = t[ch * plane];
    for (std::int64_t i = 1; i < plane; ++i) m = std::max(m, t[ch * plane + i]);
    out[ch] = m;
  }
  return out;
}

}  // namespace butter

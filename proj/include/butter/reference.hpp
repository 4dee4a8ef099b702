#pragma once

#include <cmath>
#include <vector>

#include "butter/dft.hpp"
#include "butter/tensor.hpp"
#include "butter/tensor_ops.hpp"

// Deliberately naive re-derivations of every numeric primitive, written
// straight from the defining formulas with no shared code paths into the
// fast implementations. These exist to be compared against, not to be fast.
namespace butter {
namespace ref {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const Tensor<T>& k, Border border) {
  const int ci = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int co = k.dim(0), kw = k.dim(2), r = (kw - 1) / 2;
  Tensor<T> out({co, h, w});
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        long double acc = 0;
        for (int c = 0; c < ci; ++c)
          for (int a = -r; a <= r; ++a)
            for (int b = -r; b <= r; ++b) {
              int ii = i + a, jj = j + b;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) {
                if (border == Border::kZero) continue;
                ii = ii < 0 ? 0 : (ii >= h ? h - 1 : ii);
                jj = jj < 0 ? 0 : (jj >= w ? w - 1 : jj);
              }
              acc += static_cast<long double>(k.at(o, c, a + r, b + r)) * in.at(c, ii, jj);
            }
        out.at(o, i, j) = static_cast<T>(acc);
      }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& in, const Tensor<T>& k, Border border, int stride) {
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int kw = k.dim(1), r = (kw - 1) / 2;
  const int ho = (h - 1) / stride + 1, wo = (w - 1) / stride + 1;
  Tensor<T> out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oi = 0; oi < ho; ++oi)
      for (int oj = 0; oj < wo; ++oj) {
        long double acc = 0;
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b) {
            int ii = oi * stride + a, jj = oj * stride + b;
            if (ii < 0 || ii >= h || jj < 0 || jj >= w) {
              if (border == Border::kZero) continue;
              ii = ii < 0 ? 0 : (ii >= h ? h - 1 : ii);
              jj = jj < 0 ? 0 : (jj >= w ? w - 1 : jj);
            }
            acc += static_cast<long double>(k.at(ch, a + r, b + r)) * in.at(ch, ii, jj);
          }
        out.at(ch, oi, oj) = static_cast<T>(acc);
      }
  return out;
}

// softmax of a bare vector in extended precision
inline std::vector<double> softmax_vector(const std::vector<double>& x) {
  long double m = x[0];
  for (double v : x)
    if (v > m) m = v;
  long double z = 0;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(x[i]) - m);
    z += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / z);
  return out;
}

// four-neighbor blend at one clamped coordinate, straight from the formula
template <typename T>
T bilinear_at(const Tensor<T>& t, int ch, double row, double col) {
  const int h = t.dim(1), w = t.dim(2);
  double rr = row < 0 ? 0 : (row > h - 1 ? h - 1 : row);
  double cc = col < 0 ? 0 : (col > w - 1 ? w - 1 : col);
  const int r0 = static_cast<int>(std::floor(rr));
  const int c0 = static_cast<int>(std::floor(cc));
  const int r1 = r0 + 1 > h - 1 ? h - 1 : r0 + 1;
  const int c1 = c0 + 1 > w - 1 ? w - 1 : c0 + 1;
  const double fr = rr - r0, fc = cc - c0;
  const double v = (1 - fr) * (1 - fc) * t.at(ch, r0, c0) + (1 - fr) * fc * t.at(ch, r0, c1) +
                   fr * (1 - fc) * t.at(ch, r1, c0) + fr * fc * t.at(ch, r1, c1);
  return static_cast<T>(v);
}

// quartic-loop 2-D DFT, one output bin at a time
template <typename T>
ComplexTensor<T> dft2(const Tensor<T>& t) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  ComplexTensor<T> out(t.dims());
  for (int ch = 0; ch < c; ++ch)
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v) {
        long double ar = 0, ai = 0;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) {
            const long double ang =
                -2.0L * M_PI * (static_cast<long double>(u) * i / h + static_cast<long double>(v) * j / w);
            ar += static_cast<long double>(t.at(ch, i, j)) * std::cos(ang);
            ai += static_cast<long double>(t.at(ch, i, j)) * std::sin(ang);
          }
        const std::size_t o = (static_cast<std::size_t>(ch) * h + u) * w + v;
        out.re[o] = static_cast<T>(ar / (static_cast<long double>(h) * w));
        out.im[o] = static_cast<T>(ai / (static_cast<long double>(h) * w));
      }
  return out;
}

// per-pixel stencil straight from the sum, replicate border
template <typename T>
Tensor<T> percell_filter(const Tensor<T>& x, const Tensor<T>& kern) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int f2 = kern.dim(0);
  int f = 1;
  while (f * f < f2) ++f;
  const int r = (f - 1) / 2;
  Tensor<T> out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        long double acc = 0;
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b) {
            int ii = i + a, jj = j + b;
            ii = ii < 0 ? 0 : (ii >= h ? h - 1 : ii);
            jj = jj < 0 ? 0 : (jj >= w ? w - 1 : jj);
            acc += static_cast<long double>(kern.at((a + r) * f + (b + r), i, j)) * x.at(ch, ii, jj);
          }
        out.at(ch, i, j) = static_cast<T>(acc);
      }
  return out;
}

// cosine of two explicit vectors; zero norm gives exactly zero
inline double cosine_pair(const std::vector<double>& u, const std::vector<double>& v) {
  long double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    nu += static_cast<long double>(u[i]) * u[i];
    nv += static_cast<long double>(v[i]) * v[i];
  }
  if (nu == 0 || nv == 0) return 0.0;
  return static_cast<double>(dot / (std::sqrt(nu) * std::sqrt(nv)));
}

}  // namespace ref
}  // namespace butter

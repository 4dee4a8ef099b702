#pragma once

#include <cmath>
#include <vector>

#include "butter/tensor.hpp"
#include "butter/tensor_ops.hpp"

namespace butter {

template <typename T>
struct ComplexTensor {
  std::vector<int> dims;
  std::vector<T> re, im;

  ComplexTensor() = default;
  explicit ComplexTensor(std::vector<int> d)
      : dims(std::move(d)),
        re(static_cast<std::size_t>(checked_volume(dims)), T(0)),
        im(static_cast<std::size_t>(checked_volume(dims)), T(0)) {}

  std::int64_t size() const { return static_cast<std::int64_t>(re.size()); }
};

// Forward 2-D DFT per channel, normalized by 1/(H*W):
//   A_F(u,v) = (1/(H*W)) * sum_{h,w} A(h,w) * exp(-2*pi*j*(u*h/H + v*w/W))
// Computed separably (rows then columns); the quartic-loop form lives in the
// reference module.
template <typename T>
ComplexTensor<T> dft2(const Tensor<T>& t) {
  detail::require(t.ndim() == 3, "dft2: input must be [C,H,W], got " + dims_to_string(t.dims()));
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  // twiddle tables: wr/wi[n*size + k] = cos/sin(-2*pi*n*k/size)
  std::vector<T> hr(static_cast<std::size_t>(h) * h), hi(static_cast<std::size_t>(h) * h);
  std::vector<T> wr(static_cast<std::size_t>(w) * w), wi(static_cast<std::size_t>(w) * w);
  const double tau = 2.0 * M_PI;
  for (int u = 0; u < h; ++u)
    for (int n = 0; n < h; ++n) {
      const double ang = -tau * static_cast<double>(u) * n / h;
      hr[static_cast<std::size_t>(u) * h + n] = static_cast<T>(std::cos(ang));
      hi[static_cast<std::size_t>(u) * h + n] = static_cast<T>(std::sin(ang));
    }
  for (int v = 0; v < w; ++v)
    for (int n = 0; n < w; ++n) {
      const double ang = -tau * static_cast<double>(v) * n / w;
      wr[static_cast<std::size_t>(v) * w + n] = static_cast<T>(std::cos(ang));
      wi[static_cast<std::size_t>(v) * w + n] = static_cast<T>(std::sin(ang));
    }
  ComplexTensor<T> out(t.dims());
  std::vector<T> rowr(static_cast<std::size_t>(h) * w), rowi(static_cast<std::size_t>(h) * w);
  const T norm = T(1) / (static_cast<T>(h) * static_cast<T>(w));
  for (int ch = 0; ch < c; ++ch) {
    // transform along w first
    for (int i = 0; i < h; ++i)
      for (int v = 0; v < w; ++v) {
        T ar = 0, ai = 0;
        for (int n = 0; n < w; ++n) {
          const T x = t.at(ch, i, n);
          ar += x * wr[static_cast<std::size_t>(v) * w + n];
          ai += x * wi[static_cast<std::size_t>(v) * w + n];
        }
        rowr[static_cast<std::size_t>(i) * w + v] = ar;
        rowi[static_cast<std::size_t>(i) * w + v] = ai;
      }
    // then along h
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v) {
        T ar = 0, ai = 0;
        for (int n = 0; n < h; ++n) {
          const T br = rowr[static_cast<std::size_t>(n) * w + v];
          const T bi = rowi[static_cast<std::size_t>(n) * w + v];
          const T cr = hr[static_cast<std::size_t>(u) * h + n];
          const T cim = hi[static_cast<std::size_t>(u) * h + n];
          ar += br * cr - bi * cim;
          ai += br * cim + bi * cr;
        }
        const std::size_t o = (static_cast<std::size_t>(ch) * h + u) * w + v;
        out.re[o] = ar * norm;
        out.im[o] = ai * norm;
      }
  }
  return out;
}

// Inverse of dft2 (the forward carries the full 1/(H*W), so none here):
//   A(h,w) = sum_{u,v} A_F(u,v) * exp(+2*pi*j*(u*h/H + v*w/W))
template <typename T>
ComplexTensor<T> idft2(const ComplexTensor<T>& f) {
  detail::require(f.dims.size() == 3, "idft2: input must be [C,H,W]");
  const int c = f.dims[0], h = f.dims[1], w = f.dims[2];
  ComplexTensor<T> out(f.dims);
  std::vector<T> hr(static_cast<std::size_t>(h) * h), hi(static_cast<std::size_t>(h) * h);
  std::vector<T> wr(static_cast<std::size_t>(w) * w), wi(static_cast<std::size_t>(w) * w);
  const double tau = 2.0 * M_PI;
  for (int u = 0; u < h; ++u)
    for (int n = 0; n < h; ++n) {
      const double ang = tau * static_cast<double>(u) * n / h;
      hr[static_cast<std::size_t>(u) * h + n] = static_cast<T>(std::cos(ang));
      hi[static_cast<std::size_t>(u) * h + n] = static_cast<T>(std::sin(ang));
    }
  for (int v = 0; v < w; ++v)
    for (int n = 0; n < w; ++n) {
      const double ang = tau * static_cast<double>(v) * n / w;
      wr[static_cast<std::size_t>(v) * w + n] = static_cast<T>(std::cos(ang));
      wi[static_cast<std::size_t>(v) * w + n] = static_cast<T>(std::sin(ang));
    }
  std::vector<T> rowr(static_cast<std::size_t>(h) * w), rowi(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i)
      for (int v = 0; v < w; ++v) {
        T ar = 0, ai = 0;
        for (int n = 0; n < w; ++n) {
          const std::size_t o = (static_cast<std::size_t>(ch) * h + i) * w + n;
          const T cr = wr[static_cast<std::size_t>(v) * w + n];
          const T cim = wi[static_cast<std::size_t>(v) * w + n];
          ar += f.re[o] * cr - f.im[o] * cim;
          ai += f.re[o] * cim + f.im[o] * cr;
        }
        rowr[static_cast<std::size_t>(i) * w + v] = ar;
        rowi[static_cast<std::size_t>(i) * w + v] = ai;
      }
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v) {
        T ar = 0, ai = 0;
        for (int n = 0; n < h; ++n) {
          const T br = rowr[static_cast<std::size_t>(n) * w + v];
          const T bi = rowi[static_cast<std::size_t>(n) * w + v];
          const T cr = hr[static_cast<std::size_t>(u) * h + n];
          const T cim = hi[static_cast<std::size_t>(u) * h + n];
          ar += br * cr - bi * cim;
          ai += br * cim + bi * cr;
        }
        const std::size_t o = (static_cast<std::size_t>(ch) * h + u) * w + v;
        out.re[o] = ar;
        out.im[o] = ai;
      }
  }
  return out;
}

// 1-D DFT of a real signal with the matching 1/N normalization.
template <typename T>
ComplexTensor<T> dft1(const std::vector<T>& x) {
  const int n = static_cast<int>(x.size());
  detail::require(n > 0, "dft1: empty signal");
  ComplexTensor<T> out({n});
  const double tau = 2.0 * M_PI;
  for (int k = 0; k < n; ++k) {
    double ar = 0, ai = 0;
    for (int m = 0; m < n; ++m) {
      const double ang = -tau * static_cast<double>(k) * m / n;
      ar += static_cast<double>(x[static_cast<std::size_t>(m)]) * std::cos(ang);
      ai += static_cast<double>(x[static_cast<std::size_t>(m)]) * std::sin(ang);
    }
    out.re[static_cast<std::size_t>(k)] = static_cast<T>(ar / n);
    out.im[static_cast<std::size_t>(k)] = static_cast<T>(ai / n);
  }
  return out;
}

// signed normalized frequency of bin u out of n, in [-0.5, 0.5)
inline double bin_frequency(int u, int n) {
  const int s = 2 * u < n ? u : u - n;
  return static_cast<double>(s) / n;
}

// high band: |u/H| > 1/4 or |v/W| > 1/4 in signed normalized frequency
inline bool is_high_band(int u, int v, int h, int w) {
  return std::fabs(bin_frequency(u, h)) > 0.25 || std::fabs(bin_frequency(v, w)) > 0.25;
}

template <typename T>
double spectral_magnitude(const ComplexTensor<T>& f, std::int64_t i) {
  return std::hypot(static_cast<double>(f.re[static_cast<std::size_t>(i)]),
                    static_cast<double>(f.im[static_cast<std::size_t>(i)]));
}

}  // namespace butter

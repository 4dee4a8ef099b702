#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "butter/tensor.hpp"
#include "butter/tensor_ops.hpp"

namespace butter {
namespace ad {

// Eager reverse-mode tape. Each op computes its value immediately and records
// a closure that scatters the node's gradient into its parents. Values are
// immutable once a node is built; gradients are allocated lazily the first
// time backward touches a node, so forward-only use never pays for them.
template <typename T>
struct GradNode {
  Tensor<T> value;
  Tensor<T> grad;
  const char* op = "leaf";
  std::vector<std::shared_ptr<GradNode<T>>> parents;
  std::function<void(GradNode<T>&)> backprop;

  Tensor<T>& ensure_grad() {
    if (grad.size() == 0) grad = Tensor<T>(value.dims());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<GradNode<T>>;

template <typename T>
Var<T> leaf(Tensor<T> v) {
  auto n = std::make_shared<GradNode<T>>();
  n->value = std::move(v);
  return n;
}

// a leaf whose gradient nobody reads
template <typename T>
Var<T> constant(Tensor<T> v) {
  auto n = leaf(std::move(v));
  n->op = "const";
  return n;
}

// gradient of a node after backward; zeros if the node was never reached
template <typename T>
Tensor<T> gradient(const Var<T>& v) {
  if (v->grad.size() == 0) return Tensor<T>(v->value.dims());
  return v->grad;
}

template <typename T>
Var<T> make_node(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(GradNode<T>&)> bp) {
  auto n = std::make_shared<GradNode<T>>();
  n->value = std::move(value);
  n->op = op;
  n->parents = std::move(parents);
  n->backprop = std::move(bp);
  return n;
}

// Scalar-rooted reverse sweep. Iterative post-order DFS over the parent DAG;
// the reverse of that order processes every consumer before its producer, so
// each backprop closure runs exactly once with its full incoming gradient.
template <typename T>
void backward(const Var<T>& root) {
  detail::require(root != nullptr && root->value.size() == 1, "backward: root must be a scalar node");
  std::vector<GradNode<T>*> order;
  std::unordered_set<GradNode<T>*> seen;
  struct Frame {
    GradNode<T>* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  seen.insert(root.get());
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next < top.n->parents.size()) {
      GradNode<T>* p = top.n->parents[top.next].get();
      ++top.next;
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(top.n);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GradNode<T>* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_node<T>("add", butter::add(a->value, b->value), {a, b}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    auto& gb = n.parents[1]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make_node<T>("sub", butter::sub(a->value, b->value), {a, b}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    auto& gb = n.parents[1]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make_node<T>("mul", butter::mul(a->value, b->value), {a, b}, [](GradNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    auto& ga = pa.ensure_grad();
    auto& gb = pb.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i] * pb.value[i];
      gb[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return make_node<T>("scale", butter::scale(a->value, s), {a}, [s](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * s;
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = a->value[i] + c;
  return make_node<T>("add_scalar", std::move(v), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return make_node<T>("sigmoid", butter::sigmoid(a->value), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      const T s = n.value[i];
      ga[i] += n.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return make_node<T>("relu", butter::relu(a->value), {a}, [](GradNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i)
      if (pa.value[i] > T(0)) ga[i] += n.grad[i];
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::exp(a->value[i]);
  return make_node<T>("exp", std::move(v), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * n.value[i];
  });
}

// natural log; inputs must be positive (callers clamp first)
template <typename T>
Var<T> log(const Var<T>& a) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::log(a->value[i]);
  return make_node<T>("log", std::move(v), {a}, [](GradNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] / pa.value[i];
  });
}

// clamp to [lo,hi]; gradient passes only through the interior
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::min(std::max(a->value[i], lo), hi);
  return make_node<T>("clamp", std::move(v), {a}, [lo, hi](GradNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i)
      if (pa.value[i] > lo && pa.value[i] < hi) ga[i] += n.grad[i];
  });
}

// x^p for constant p; inputs must be positive when p < 1
template <typename T>
Var<T> pow_const(const Var<T>& a, T p) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::pow(a->value[i], p);
  return make_node<T>("pow_const", std::move(v), {a}, [p](GradNode<T>& n) {
    if (p == T(0)) return;
    auto& pa = *n.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i)
      ga[i] += n.grad[i] * p * std::pow(pa.value[i], p - T(1));
  });
}

// sqrt(max(x,0)); zero gradient on the clipped branch and at exactly 0
template <typename T>
Var<T> sqrt0(const Var<T>& a) {
  Tensor<T> v(a->value.dims());
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = a->value[i] > T(0) ? std::sqrt(a->value[i]) : T(0);
  return make_node<T>("sqrt0", std::move(v), {a}, [](GradNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i)
      if (pa.value[i] > T(0)) ga[i] += n.grad[i] * T(0.5) / n.value[i];
  });
}

// ---- reductions / scalars ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> v({1});
  v[0] = butter::sum_all(a->value);
  return make_node<T>("sum_all", std::move(v), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[0];
  });
}

// fixed-weight contraction to a scalar; the standard scalarizer for checks
template <typename T>
Var<T> weighted_sum(const Var<T>& a, Tensor<T> wts) {
  detail::require(a->value.same_dims(wts), "weighted_sum: weight dims mismatch");
  Tensor<T> v({1});
  T s = 0;
  for (std::int64_t i = 0; i < wts.size(); ++i) s += a->value[i] * wts[i];
  v[0] = s;
  return make_node<T>("weighted_sum", std::move(v), {a}, [w = std::move(wts)](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[0] * w[i];
  });
}

template <typename T>
Var<T> pick(const Var<T>& a, std::int64_t idx) {
  detail::require(idx >= 0 && idx < a->value.size(), "pick: index out of range");
  Tensor<T> v({1});
  v[0] = a->value[idx];
  return make_node<T>("pick", std::move(v), {a}, [idx](GradNode<T>& n) {
    n.parents[0]->ensure_grad()[idx] += n.grad[0];
  });
}

// ---- convolutions ----

template <typename T>
Var<T> conv2d(const Var<T>& in, const Var<T>& k, Border border) {
  return make_node<T>("conv2d", butter::conv2d(in->value, k->value, border), {in, k},
                      [border](GradNode<T>& n) {
                        auto& pin = *n.parents[0];
                        auto& pk = *n.parents[1];
                        auto& gin = pin.ensure_grad();
                        auto& gk = pk.ensure_grad();
                        const int ci = pin.value.dim(0), h = pin.value.dim(1), w = pin.value.dim(2);
                        const int co = pk.value.dim(0), kw = pk.value.dim(2), r = (kw - 1) / 2;
                        for (int o = 0; o < co; ++o)
                          for (int i = 0; i < h; ++i)
                            for (int j = 0; j < w; ++j) {
                              const T g = n.grad.at(o, i, j);
                              if (g == T(0)) continue;
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
                                    gin.at(c, ii, jj) += g * pk.value.at(o, c, a, b);
                                    gk.at(o, c, a, b) += g * pin.value.at(c, ii, jj);
                                  }
                            }
                      });
}

template <typename T>
Var<T> depthwise_conv2d(const Var<T>& in, const Var<T>& k, Border border, int stride = 1) {
  return make_node<T>("depthwise_conv2d", butter::depthwise_conv2d(in->value, k->value, border, stride),
                      {in, k}, [border, stride](GradNode<T>& n) {
                        auto& pin = *n.parents[0];
                        auto& pk = *n.parents[1];
                        auto& gin = pin.ensure_grad();
                        auto& gk = pk.ensure_grad();
                        const int c = pin.value.dim(0), h = pin.value.dim(1), w = pin.value.dim(2);
                        const int kw = pk.value.dim(1), r = (kw - 1) / 2;
                        const int ho = n.value.dim(1), wo = n.value.dim(2);
                        for (int ch = 0; ch < c; ++ch)
                          for (int oi = 0; oi < ho; ++oi)
                            for (int oj = 0; oj < wo; ++oj) {
                              const T g = n.grad.at(ch, oi, oj);
                              if (g == T(0)) continue;
                              const int i = oi * stride, j = oj * stride;
                              for (int a = 0; a < kw; ++a)
                                for (int b = 0; b < kw; ++b) {
                                  int ii = i + a - r, jj = j + b - r;
                                  if (border == Border::kZero) {
                                    if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                                  } else {
                                    ii = clamp_index(ii, h);
                                    jj = clamp_index(jj, w);
                                  }
                                  gin.at(ch, ii, jj) += g * pk.value.at(ch, a, b);
                                  gk.at(ch, a, b) += g * pin.value.at(ch, ii, jj);
                                }
                            }
                      });
}

template <typename T>
Var<T> percell_filter(const Var<T>& x, const Var<T>& kern) {
  return make_node<T>("percell_filter", butter::percell_filter(x->value, kern->value), {x, kern},
                      [](GradNode<T>& n) {
                        auto& px = *n.parents[0];
                        auto& pk = *n.parents[1];
                        auto& gx = px.ensure_grad();
                        auto& gk = pk.ensure_grad();
                        const int c = px.value.dim(0), h = px.value.dim(1), w = px.value.dim(2);
                        const int f2 = pk.value.dim(0);
                        const int f = static_cast<int>(std::lround(std::sqrt(static_cast<double>(f2))));
                        const int r = (f - 1) / 2;
                        for (int ch = 0; ch < c; ++ch)
                          for (int i = 0; i < h; ++i)
                            for (int j = 0; j < w; ++j) {
                              const T g = n.grad.at(ch, i, j);
                              if (g == T(0)) continue;
                              for (int a = -r; a <= r; ++a)
                                for (int b = -r; b <= r; ++b) {
                                  const int idx = (a + r) * f + (b + r);
                                  const int ii = clamp_index(i + a, h), jj = clamp_index(j + b, w);
                                  gx.at(ch, ii, jj) += g * pk.value.at(idx, i, j);
                                  gk.at(idx, i, j) += g * px.value.at(ch, ii, jj);
                                }
                            }
                      });
}

// ---- softmax ----

template <typename T>
Var<T> softmax_axis(const Var<T>& a, int axis) {
  return make_node<T>("softmax_axis", butter::softmax_over_axis(a->value, axis), {a},
                      [axis](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        std::int64_t outer = 1, inner = 1;
                        for (int i = 0; i < axis; ++i) outer *= n.value.dim(i);
                        for (int i = axis + 1; i < n.value.ndim(); ++i) inner *= n.value.dim(i);
                        const int k = n.value.dim(axis);
                        for (std::int64_t o = 0; o < outer; ++o)
                          for (std::int64_t in = 0; in < inner; ++in) {
                            const std::int64_t base = o * k * inner + in;
                            T dot = 0;
                            for (int m = 0; m < k; ++m) dot += n.grad[base + m * inner] * n.value[base + m * inner];
                            for (int m = 0; m < k; ++m) {
                              const std::int64_t p = base + m * inner;
                              ga[p] += n.value[p] * (n.grad[p] - dot);
                            }
                          }
                      });
}

// ---- layout moves ----

template <typename T>
Var<T> space_to_depth(const Var<T>& a) {
  return make_node<T>("space_to_depth", butter::space_to_depth(a->value), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    const int c = ga.dim(0), h = n.value.dim(1), w = n.value.dim(2);
    for (int g = 0; g < 4; ++g) {
      const int di = g / 2, dj = g % 2;
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) ga.at(ch, 2 * i + di, 2 * j + dj) += n.grad.at(g * c + ch, i, j);
    }
  });
}

template <typename T>
Var<T> depth_to_space(const Var<T>& a) {
  return make_node<T>("depth_to_space", butter::depth_to_space(a->value), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    const int c = n.value.dim(0), h = ga.dim(1), w = ga.dim(2);
    for (int g = 0; g < 4; ++g) {
      const int di = g / 2, dj = g % 2;
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) ga.at(g * c + ch, i, j) += n.grad.at(ch, 2 * i + di, 2 * j + dj);
    }
  });
}

template <typename T>
Var<T> nearest_upsample2x(const Var<T>& a) {
  return make_node<T>("nearest_upsample2x", butter::nearest_upsample2x(a->value), {a}, [](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    const int c = ga.dim(0), h2 = n.value.dim(1), w2 = n.value.dim(2);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h2; ++i)
        for (int j = 0; j < w2; ++j) ga.at(ch, i / 2, j / 2) += n.grad.at(ch, i, j);
  });
}

// ---- warping ----

// bilinear pull at (i + d[0,i,j], j + d[1,i,j]), coordinates clamped to the
// frame. Gradient w.r.t. the displacement vanishes where clamping is active.
template <typename T>
Var<T> resample(const Var<T>& x, const Var<T>& d) {
  detail::require(d->value.ndim() == 3 && d->value.dim(0) == 2, "resample: displacement must be [2,H,W]");
  detail::require(d->value.dim(1) == x->value.dim(1) && d->value.dim(2) == x->value.dim(2),
                  "resample: spatial dims mismatch");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  Tensor<T> coords({2, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      coords.at(0, i, j) = static_cast<T>(i) + d->value.at(0, i, j);
      coords.at(1, i, j) = static_cast<T>(j) + d->value.at(1, i, j);
    }
  return make_node<T>("resample", butter::bilinear_sample(x->value, coords), {x, d},
                      [c, h, w](GradNode<T>& n) {
                        auto& px = *n.parents[0];
                        auto& pd = *n.parents[1];
                        auto& gx = px.ensure_grad();
                        auto& gd = pd.ensure_grad();
                        for (int i = 0; i < h; ++i)
                          for (int j = 0; j < w; ++j) {
                            const T rraw = static_cast<T>(i) + pd.value.at(0, i, j);
                            const T craw = static_cast<T>(j) + pd.value.at(1, i, j);
                            const bool rin = rraw > T(0) && rraw < T(h - 1);
                            const bool cin = craw > T(0) && craw < T(w - 1);
                            const T rr = std::min(std::max(rraw, T(0)), T(h - 1));
                            const T cc = std::min(std::max(craw, T(0)), T(w - 1));
                            const int r0 = static_cast<int>(std::floor(rr)), c0 = static_cast<int>(std::floor(cc));
                            const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
                            const T fr = rr - static_cast<T>(r0), fc = cc - static_cast<T>(c0);
                            T dr = 0, dc = 0;
                            for (int ch = 0; ch < c; ++ch) {
                              const T g = n.grad.at(ch, i, j);
                              if (g == T(0)) continue;
                              const T v00 = px.value.at(ch, r0, c0), v01 = px.value.at(ch, r0, c1);
                              const T v10 = px.value.at(ch, r1, c0), v11 = px.value.at(ch, r1, c1);
                              gx.at(ch, r0, c0) += g * (1 - fr) * (1 - fc);
                              gx.at(ch, r0, c1) += g * (1 - fr) * fc;
                              gx.at(ch, r1, c0) += g * fr * (1 - fc);
                              gx.at(ch, r1, c1) += g * fr * fc;
                              dr += g * ((1 - fc) * (v10 - v00) + fc * (v11 - v01));
                              dc += g * ((1 - fr) * (v01 - v00) + fr * (v11 - v10));
                            }
                            if (rin) gd.at(0, i, j) += dr;
                            if (cin) gd.at(1, i, j) += dc;
                          }
                      });
}

// ---- similarity ----

// offsets in fixed scan order; shared by forward, backward and the oracle
inline const int kNeighborOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                           {0, 1},  {1, -1}, {1, 0},  {1, 1}};

// cosine similarity of each pixel's channel vector against its 8 neighbors,
// replicate border, [8,H,W] output. Zero-norm pairs give exactly 0.
template <typename T>
Var<T> cosine_sim8(const Var<T>& m) {
  detail::require(m->value.ndim() == 3, "cosine_sim8: input must be [C,H,W]");
  const int c = m->value.dim(0), h = m->value.dim(1), w = m->value.dim(2);
  Tensor<T> out({8, h, w});
  for (int k = 0; k < 8; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int p = clamp_index(i + kNeighborOffsets[k][0], h);
        const int q = clamp_index(j + kNeighborOffsets[k][1], w);
        T dot = 0, nu = 0, nv = 0;
        for (int ch = 0; ch < c; ++ch) {
          const T u = m->value.at(ch, i, j), v = m->value.at(ch, p, q);
          dot += u * v;
          nu += u * u;
          nv += v * v;
        }
        out.at(k, i, j) = (nu == T(0) || nv == T(0)) ? T(0) : dot / (std::sqrt(nu) * std::sqrt(nv));
      }
  return make_node<T>("cosine_sim8", std::move(out), {m}, [c, h, w](GradNode<T>& n) {
    auto& pm = *n.parents[0];
    auto& gm = pm.ensure_grad();
    for (int k = 0; k < 8; ++k)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const T g = n.grad.at(k, i, j);
          if (g == T(0)) continue;
          const int p = clamp_index(i + kNeighborOffsets[k][0], h);
          const int q = clamp_index(j + kNeighborOffsets[k][1], w);
          T dot = 0, nu2 = 0, nv2 = 0;
          for (int ch = 0; ch < c; ++ch) {
            const T u = pm.value.at(ch, i, j), v = pm.value.at(ch, p, q);
            dot += u * v;
            nu2 += u * u;
            nv2 += v * v;
          }
          if (nu2 == T(0) || nv2 == T(0)) continue;
          const T nu = std::sqrt(nu2), nv = std::sqrt(nv2);
          const T s = dot / (nu * nv);
          for (int ch = 0; ch < c; ++ch) {
            const T u = pm.value.at(ch, i, j), v = pm.value.at(ch, p, q);
            gm.at(ch, i, j) += g * (v / (nu * nv) - s * u / nu2);
            gm.at(ch, p, q) += g * (u / (nu * nv) - s * v / nv2);
          }
        }
  });
}

// ---- pooling / structure ----

template <typename T>
Var<T> maxpool_same(const Var<T>& a, int k) {
  Tensor<T> v = butter::maxpool_same(a->value, k);
  // record the winning input index per output cell
  const int c = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2), r = (k - 1) / 2;
  std::vector<std::int64_t> amax(static_cast<std::size_t>(v.size()));
  std::int64_t o = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t arg = 0;
        for (int a2 = -r; a2 <= r; ++a2)
          for (int b2 = -r; b2 <= r; ++b2) {
            const int ii = clamp_index(i + a2, h), jj = clamp_index(j + b2, w);
            const T x = a->value.at(ch, ii, jj);
            if (x > best) {
              best = x;
              arg = (static_cast<std::int64_t>(ch) * h + ii) * w + jj;
            }
          }
        amax[static_cast<std::size_t>(o)] = arg;
      }
  return make_node<T>("maxpool_same", std::move(v), {a}, [am = std::move(amax)](GradNode<T>& n) {
    auto& ga = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[am[static_cast<std::size_t>(i)]] += n.grad[i];
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> vals;
  vals.reserve(parts.size());
  for (const auto& p : parts) vals.push_back(p->value);
  return make_node<T>("concat_channels", butter::concat_channels(vals), {parts.begin(), parts.end()},
                      [](GradNode<T>& n) {
                        std::int64_t off = 0;
                        for (auto& p : n.parents) {
                          auto& gp = p->ensure_grad();
                          for (std::int64_t i = 0; i < gp.size(); ++i) gp[i] += n.grad[off + i];
                          off += gp.size();
                        }
                      });
}

template <typename T>
Var<T> narrow_channels(const Var<T>& a, int start, int len) {
  const std::int64_t plane = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
  return make_node<T>("narrow_channels", butter::narrow_channels(a->value, start, len), {a},
                      [start, plane](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[start * plane + i] += n.grad[i];
                      });
}

// x [C,H,W] plus one bias per channel
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  detail::require(b->value.ndim() == 1 && b->value.dim(0) == x->value.dim(0), "add_channel_bias: bias must be [C]");
  const int c = x->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
  Tensor<T> v(x->value.dims());
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < plane; ++i) v[ch * plane + i] = x->value[ch * plane + i] + b->value[ch];
  return make_node<T>("add_channel_bias", std::move(v), {x, b}, [c, plane](GradNode<T>& n) {
    auto& gx = n.parents[0]->ensure_grad();
    auto& gb = n.parents[1]->ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < plane; ++i) {
        gx[ch * plane + i] += n.grad[ch * plane + i];
        gb[ch] += n.grad[ch * plane + i];
      }
  });
}

// x [C,H,W] scaled per channel by g [C]
template <typename T>
Var<T> mul_channel_gate(const Var<T>& x, const Var<T>& g) {
  detail::require(g->value.ndim() == 1 && g->value.dim(0) == x->value.dim(0), "mul_channel_gate: gate must be [C]");
  const int c = x->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
  Tensor<T> v(x->value.dims());
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < plane; ++i) v[ch * plane + i] = x->value[ch * plane + i] * g->value[ch];
  return make_node<T>("mul_channel_gate", std::move(v), {x, g}, [c, plane](GradNode<T>& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& gx = px.ensure_grad();
    auto& gg = pg.ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < plane; ++i) {
        const std::int64_t o = ch * plane + i;
        gx[o] += n.grad[o] * pg.value[ch];
        gg[ch] += n.grad[o] * px.value[o];
      }
  });
}

// x [C,H,W] scaled per pixel by m [1,H,W]
template <typename T>
Var<T> mul_spatial(const Var<T>& x, const Var<T>& m) {
  detail::require(m->value.ndim() == 3 && m->value.dim(0) == 1 && m->value.dim(1) == x->value.dim(1) &&
                      m->value.dim(2) == x->value.dim(2),
                  "mul_spatial: mask must be [1,H,W] matching input");
  const int c = x->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
  Tensor<T> v(x->value.dims());
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < plane; ++i) v[ch * plane + i] = x->value[ch * plane + i] * m->value[i];
  return make_node<T>("mul_spatial", std::move(v), {x, m}, [c, plane](GradNode<T>& n) {
    auto& px = *n.parents[0];
    auto& pm = *n.parents[1];
    auto& gx = px.ensure_grad();
    auto& gm = pm.ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < plane; ++i) {
        const std::int64_t o = ch * plane + i;
        gx[o] += n.grad[o] * pm.value[i];
        gm[i] += n.grad[o] * px.value[o];
      }
  });
}

template <typename T>
Var<T> channel_mean_map(const Var<T>& a) {
  const int c = a->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
  return make_node<T>("channel_mean_map", butter::channel_mean_map(a->value), {a},
                      [c, plane](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        for (int ch = 0; ch < c; ++ch)
                          for (std::int64_t i = 0; i < plane; ++i)
                            ga[ch * plane + i] += n.grad[i] / static_cast<T>(c);
                      });
}

template <typename T>
Var<T> channel_max_map(const Var<T>& a) {
  const int c = a->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
  std::vector<int> amax(static_cast<std::size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    int arg = 0;
    T best = a->value[i];
    for (int ch = 1; ch < c; ++ch)
      if (a->value[ch * plane + i] > best) {
        best = a->value[ch * plane + i];
        arg = ch;
      }
    amax[static_cast<std::size_t>(i)] = arg;
  }
  return make_node<T>("channel_max_map", butter::channel_max_map(a->value), {a},
                      [plane, am = std::move(amax)](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        for (std::int64_t i = 0; i < plane; ++i)
                          ga[am[static_cast<std::size_t>(i)] * plane + i] += n.grad[i];
                      });
}

template <typename T>
Var<T> global_avg_vector(const Var<T>& a) {
  const int c = a->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
  return make_node<T>("global_avg_vector", butter::global_avg_vector(a->value), {a},
                      [c, plane](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        for (int ch = 0; ch < c; ++ch)
                          for (std::int64_t i = 0; i < plane; ++i)
                            ga[ch * plane + i] += n.grad[ch] / static_cast<T>(plane);
                      });
}

template <typename T>
Var<T> global_max_vector(const Var<T>& a) {
  const int c = a->value.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
  std::vector<std::int64_t> amax(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    std::int64_t arg = ch * plane;
    T best = a->value[arg];
    for (std::int64_t i = 1; i < plane; ++i)
      if (a->value[ch * plane + i] > best) {
        best = a->value[ch * plane + i];
        arg = ch * plane + i;
      }
    amax[static_cast<std::size_t>(ch)] = arg;
  }
  return make_node<T>("global_max_vector", butter::global_max_vector(a->value), {a},
                      [c, am = std::move(amax)](GradNode<T>& n) {
                        auto& ga = n.parents[0]->ensure_grad();
                        for (int ch = 0; ch < c; ++ch) ga[am[static_cast<std::size_t>(ch)]] += n.grad[ch];
                      });
}

// w [O,I] * x [I] + b [O]
template <typename T>
Var<T> linear(const Var<T>& w, const Var<T>& x, const Var<T>& b) {
  detail::require(w->value.ndim() == 2 && x->value.ndim() == 1 && b->value.ndim() == 1,
                  "linear: expected w [O,I], x [I], b [O]");
  const int o = w->value.dim(0), in = w->value.dim(1);
  detail::require(x->value.dim(0) == in && b->value.dim(0) == o, "linear: dims mismatch");
  Tensor<T> v({o});
  for (int i = 0; i < o; ++i) {
    T s = b->value[i];
    for (int j = 0; j < in; ++j) s += w->value[static_cast<std::int64_t>(i) * in + j] * x->value[j];
    v[i] = s;
  }
  return make_node<T>("linear", std::move(v), {w, x, b}, [o, in](GradNode<T>& n) {
    auto& pw = *n.parents[0];
    auto& px = *n.parents[1];
    auto& gw = pw.ensure_grad();
    auto& gx = px.ensure_grad();
    auto& gb = n.parents[2]->ensure_grad();
    for (int i = 0; i < o; ++i) {
      const T g = n.grad[i];
      gb[i] += g;
      for (int j = 0; j < in; ++j) {
        gw[static_cast<std::int64_t>(i) * in + j] += g * px.value[j];
        gx[j] += g * pw.value[static_cast<std::int64_t>(i) * in + j];
      }
    }
  });
}

// ---- finite-difference check ----

// max over elements of |analytic - central difference| / max(1, |fd|)
template <typename T>
double grad_check(const std::function<Var<T>(const Var<T>&)>& f, const Tensor<T>& x, T eps) {
  auto lx = leaf(x);
  auto y = f(lx);
  backward(y);
  Tensor<T> analytic = gradient(lx);
  double worst = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    Tensor<T> xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    const double fp = static_cast<double>(f(leaf(xp))->value[0]);
    const double fm = static_cast<double>(f(leaf(xm))->value[0]);
    const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
    const double err = std::fabs(static_cast<double>(analytic[i]) - fd) / std::max(1.0, std::fabs(fd));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace ad

template <typename T>
using Var = ad::Var<T>;

}  // namespace butter

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "butter/detect.hpp"

// Finite-difference validation of the reverse-mode gradients, organized as
// named targets that cover one module each plus the full pipeline. A target
// owns its parameter storage; rebuilding the graph after a perturbation reads
// the mutated tensors, which is what makes central differences possible.
namespace butter {

struct GroupReport {
  std::string name;
  double max_err = 0;
  int checked = 0;
};

struct TargetReport {
  std::string target;
  std::vector<GroupReport> groups;
  double worst = 0;
  double threshold = 0;
  bool pass = false;
};

template <typename T>
struct GradTarget {
  std::string name;
  // keeps the parameter structs referenced by `params` alive
  std::shared_ptr<void> storage;
  std::vector<std::pair<std::string, Tensor<T>*>> params;
  // builds a fresh scalar graph from the current parameter values and names
  // its leaves in the same order as `params`
  std::function<std::pair<ad::Var<T>, std::vector<std::pair<std::string, ad::Var<T>>>>()> build;
  // 0 checks every element; otherwise a seeded subset of this size per group
  int cap_per_group = 0;
};

template <typename T>
TargetReport run_gradcheck(GradTarget<T>& target, double eps, double threshold, std::uint64_t seed) {
  auto [root, leaves] = target.build();
  detail::require(root->value.size() == 1, "run_gradcheck: target root must be scalar");
  ad::backward(root);
  std::map<std::string, Tensor<T>> analytic;
  for (auto& [name, v] : leaves) analytic.emplace(name, ad::gradient(v));
  detail::require(analytic.size() == target.params.size(), "run_gradcheck: leaf/param lists diverged");

  TargetReport report;
  report.target = target.name;
  report.threshold = threshold;
  SplitMix64 pick(seed ^ 0xA5A5A5A5ULL);
  for (auto& [name, tensor] : target.params) {
    const auto it = analytic.find(name);
    detail::require(it != analytic.end(), "run_gradcheck: no leaf named " + name);
    detail::require(it->second.dims() == tensor->dims(), "run_gradcheck: gradient dims diverged for " + name);
    std::vector<std::int64_t> idxs;
    if (target.cap_per_group <= 0 || tensor->size() <= target.cap_per_group) {
      idxs.resize(static_cast<std::size_t>(tensor->size()));
      for (std::int64_t i = 0; i < tensor->size(); ++i) idxs[static_cast<std::size_t>(i)] = i;
    } else {
      std::set<std::int64_t> chosen;
      while (static_cast<int>(chosen.size()) < target.cap_per_group)
        chosen.insert(pick.uniform_int(0, static_cast<int>(tensor->size()) - 1));
      idxs.assign(chosen.begin(), chosen.end());
    }
    GroupReport group{name, 0.0, static_cast<int>(idxs.size())};
    for (const auto idx : idxs) {
      const T saved = (*tensor)[idx];
      (*tensor)[idx] = saved + static_cast<T>(eps);
      const double up = static_cast<double>(target.build().first->value[0]);
      (*tensor)[idx] = saved - static_cast<T>(eps);
      const double down = static_cast<double>(target.build().first->value[0]);
      (*tensor)[idx] = saved;
      const double fd = (up - down) / (2 * eps);
      const double err = std::fabs(static_cast<double>(it->second[idx]) - fd) / std::max(1.0, std::fabs(fd));
      group.max_err = std::max(group.max_err, err);
    }
    report.worst = std::max(report.worst, group.max_err);
    report.groups.push_back(std::move(group));
  }
  report.pass = report.worst < threshold;
  return report;
}

namespace gcdetail {

using D = double;
using V = ad::Var<D>;
using Leaves = std::vector<std::pair<std::string, V>>;

// displacement components bounded away from the integer lattice, where the
// clamped bilinear read is not differentiable
inline Tensor<D> lattice_safe_field(const std::vector<int>& dims, SplitMix64& rng) {
  Tensor<D> d(dims);
  for (std::int64_t i = 0; i < d.size(); ++i)
    d[i] = (rng.uniform_int(0, 1) ? 1 : -1) * rng.uniform(0.15, 0.45);
  return d;
}

inline GradTarget<D> target_triggers(std::uint64_t seed) {
  struct Store {
    TriggerParams<D> params;
    Tensor<D> m, a, b, wa, wb;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x71);
  s->params = random_trigger_params<D>(3, 3, 3, rng, 0.5);
  s->m = random_tensor<D>({3, 6, 6}, rng, -1, 1);
  s->a = random_tensor<D>({3, 6, 6}, rng, -1, 1);
  s->b = random_tensor<D>({3, 3, 3}, rng, -1, 1);
  s->wa = random_tensor<D>({3, 6, 6}, rng, -1, 1);
  s->wb = random_tensor<D>({3, 6, 6}, rng, -1, 1);
  GradTarget<D> t;
  t.name = "triggers";
  t.storage = s;
  t.params = {{"clfd_conv", &s->params.clfd_conv},
              {"chfa_conv", &s->params.chfa_conv},
              {"m", &s->m},
              {"a", &s->a},
              {"b", &s->b}};
  t.build = [s]() {
    auto clfd_w = ad::leaf(s->params.clfd_conv);
    auto chfa_w = ad::leaf(s->params.chfa_conv);
    auto m = ad::leaf(s->m);
    auto a = ad::leaf(s->a);
    auto b = ad::leaf(s->b);
    auto amp = chfa_apply(a, chfa_kernels(m, chfa_w));
    auto damp = clfd_apply(b, clfd_kernels(m, clfd_w));
    auto root = ad::add(ad::weighted_sum(amp, s->wa), ad::weighted_sum(damp, s->wb));
    return std::make_pair(root, Leaves{{"clfd_conv", clfd_w}, {"chfa_conv", chfa_w}, {"m", m}, {"a", a}, {"b", b}});
  };
  return t;
}

inline GradTarget<D> target_displacement(std::uint64_t seed) {
  struct Store {
    DisplacementParams<D> params;
    Tensor<D> m, x, d0, wx, wd;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x72);
  s->params = random_displacement_params<D>(3, rng, 0.5);
  s->m = random_tensor<D>({3, 5, 5}, rng, -1, 1);
  s->x = random_tensor<D>({3, 5, 5}, rng, -1, 1);
  s->d0 = lattice_safe_field({2, 5, 5}, rng);
  s->wx = random_tensor<D>({3, 5, 5}, rng, -1, 1);
  s->wd = random_tensor<D>({2, 5, 5}, rng, -1, 1);
  GradTarget<D> t;
  t.name = "displacement";
  t.storage = s;
  t.params = {{"orient_conv", &s->params.orient_conv},
              {"scale_conv", &s->params.scale_conv},
              {"m", &s->m},
              {"x", &s->x},
              {"d", &s->d0}};
  t.build = [s]() {
    auto ow = ad::leaf(s->params.orient_conv);
    auto sw = ad::leaf(s->params.scale_conv);
    auto m = ad::leaf(s->m);
    auto x = ad::leaf(s->x);
    auto d0 = ad::leaf(s->d0);
    auto field = displacement_field(m, local_cosine_similarity(m), ow, sw);
    auto root = ad::add(ad::weighted_sum(ad::resample(x, d0), s->wx), ad::weighted_sum(field.d, s->wd));
    return std::make_pair(root, Leaves{{"orient_conv", ow}, {"scale_conv", sw}, {"m", m}, {"x", x}, {"d", d0}});
  };
  return t;
}

inline GradTarget<D> target_fafce(std::uint64_t seed) {
  struct Store {
    FafceParams<D> params;
    Tensor<D> a, b, w;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x73);
  s->params = random_fafce_params<D>(4, 3, 3, rng, 0.4);
  s->a = random_tensor<D>({4, 8, 8}, rng, -1, 1);
  s->b = random_tensor<D>({4, 4, 4}, rng, -1, 1);
  s->w = random_tensor<D>({4, 8, 8}, rng, -1, 1);
  GradTarget<D> t;
  t.name = "fafce";
  t.storage = s;
  t.params = {{"a", &s->a}, {"b", &s->b}};
  {
    std::vector<std::pair<std::string, Tensor<D>*>> pv;
    fafce_param_entries("", s->params, pv);
    for (auto& e : pv) t.params.push_back(e);
  }
  t.build = [s]() {
    auto vars = make_fafce_vars(s->params);
    auto a = ad::leaf(s->a);
    auto b = ad::leaf(s->b);
    auto root = ad::weighted_sum(fafce_forward(a, b, vars), s->w);
    Leaves leaves{{"a", a}, {"b", b}};
    fafce_var_entries("", vars, leaves);
    return std::make_pair(root, leaves);
  };
  return t;
}

inline GradTarget<D> target_phffnet(std::uint64_t seed) {
  struct Store {
    PhffnetParams<D> params;
    Tensor<D> c2, c3, c4, c5;
    std::vector<Tensor<D>> w;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x74);
  s->params = random_phffnet_params<D>(4, rng, 0.4);
  s->c2 = random_tensor<D>({4, 16, 16}, rng, -1, 1);
  s->c3 = random_tensor<D>({4, 8, 8}, rng, -1, 1);
  s->c4 = random_tensor<D>({4, 4, 4}, rng, -1, 1);
  s->c5 = random_tensor<D>({4, 2, 2}, rng, -1, 1);
  s->w.push_back(random_tensor<D>({4, 16, 16}, rng, -1, 1));
  s->w.push_back(random_tensor<D>({4, 8, 8}, rng, -1, 1));
  s->w.push_back(random_tensor<D>({4, 4, 4}, rng, -1, 1));
  s->w.push_back(random_tensor<D>({4, 2, 2}, rng, -1, 1));
  GradTarget<D> t;
  t.name = "phffnet";
  t.storage = s;
  t.params = {{"c2", &s->c2}, {"c3", &s->c3}, {"c4", &s->c4}, {"c5", &s->c5}};
  {
    std::vector<std::pair<std::string, Tensor<D>*>> pv;
    phffnet_param_entries("", s->params, pv);
    for (auto& e : pv) t.params.push_back(e);
  }
  t.cap_per_group = 96;
  t.build = [s]() {
    auto vars = make_phffnet_vars(s->params);
    PyramidVars<D> pyr{ad::leaf(s->c2), ad::leaf(s->c3), ad::leaf(s->c4), ad::leaf(s->c5)};
    auto fused = phffnet_forward(pyr, vars);
    V root;
    for (int i = 0; i < 4; ++i) {
      auto term = ad::weighted_sum(fused.head_inputs[static_cast<std::size_t>(i)], s->w[static_cast<std::size_t>(i)]);
      root = root ? ad::add(root, term) : term;
    }
    Leaves leaves{{"c2", pyr.c2}, {"c3", pyr.c3}, {"c4", pyr.c4}, {"c5", pyr.c5}};
    phffnet_var_entries("", vars, leaves);
    return std::make_pair(root, leaves);
  };
  return t;
}

inline GradTarget<D> target_loss(std::uint64_t seed) {
  struct Store {
    std::vector<Tensor<D>> raw;      // pre-decode head maps, [5+K,H,W]
    std::vector<Tensor<D>> decode;   // constant identity 1x1 convs
    GroundTruth<D> gt;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x75);
  const int k = 2, ch = 5 + k;
  const int sizes[4] = {4, 4, 2, 1};
  for (int i = 0; i < 4; ++i) {
    s->raw.push_back(random_tensor<D>({ch, sizes[i], sizes[i]}, rng, -1.5, 1.5));
    Tensor<D> eye({ch, ch, 1, 1});
    for (int c = 0; c < ch; ++c) eye.at(c, c, 0, 0) = 1;
    s->decode.push_back(eye);
  }
  s->gt.grid_s = 2;
  s->gt.boxes_b = 4;
  s->gt.num_classes = k;
  s->gt.records = {{0, 0, 0.3, 0.6, 0.4, 0.5, 0},
                   {1, 1, 0.7, 0.2, 0.2, 0.3, 1},
                   {2, 2, 0.5, 0.5, 0.6, 0.1, 0},
                   {3, 3, 0.2, 0.8, 0.3, 0.7, 1}};
  GradTarget<D> t;
  t.name = "loss";
  t.storage = s;
  for (int i = 0; i < 4; ++i)
    t.params.emplace_back("raw" + std::to_string(i), &s->raw[static_cast<std::size_t>(i)]);
  t.build = [s]() {
    std::vector<HeadOutVars<D>> heads;
    Leaves leaves;
    for (int i = 0; i < 4; ++i) {
      auto raw = ad::leaf(s->raw[static_cast<std::size_t>(i)]);
      leaves.emplace_back("raw" + std::to_string(i), raw);
      heads.push_back(head_forward(raw, ad::constant(s->decode[static_cast<std::size_t>(i)])));
    }
    auto loss = detection_loss(heads, s->gt, LossWeights<D>{}, 0.25, 2.0);
    return std::make_pair(loss.total, leaves);
  };
  return t;
}

inline GradTarget<D> target_end2end(std::uint64_t seed) {
  struct Store {
    DetectorParams<D> params;
    Tensor<D> image;
    GroundTruth<D> gt;
  };
  auto s = std::make_shared<Store>();
  SplitMix64 rng(seed ^ 0x76);
  s->params = random_detector_params<D>(4, 2, 3, 3, rng, 0.4);
  s->image = random_tensor<D>({3, 32, 32}, rng, 0, 1);
  s->gt.grid_s = 2;
  s->gt.boxes_b = 3;
  s->gt.num_classes = 2;
  s->gt.records = {{0, 0, 0.4, 0.4, 0.3, 0.3, 0}, {3, 1, 0.6, 0.5, 0.2, 0.4, 1}, {2, 3, 0.5, 0.3, 0.5, 0.5, 0}};
  GradTarget<D> t;
  t.name = "end2end";
  t.storage = s;
  detector_param_entries(s->params, t.params);
  t.cap_per_group = 10;
  t.build = [s]() {
    auto vars = make_detector_vars(s->params);
    auto out = detector_forward(ad::constant(s->image), vars);
    auto loss = detection_loss(out.heads, s->gt, LossWeights<D>{}, 0.25, 2.0);
    Leaves leaves;
    detector_var_entries(vars, leaves);
    return std::make_pair(loss.total, leaves);
  };
  return t;
}

}  // namespace gcdetail

inline std::vector<std::string> gradcheck_target_names() {
  return {"triggers", "displacement", "fafce", "phffnet", "loss", "end2end"};
}

inline GradTarget<double> make_gradcheck_target(const std::string& name, std::uint64_t seed) {
  if (name == "triggers") return gcdetail::target_triggers(seed);
  if (name == "displacement") return gcdetail::target_displacement(seed);
  if (name == "fafce") return gcdetail::target_fafce(seed);
  if (name == "phffnet") return gcdetail::target_phffnet(seed);
  if (name == "loss") return gcdetail::target_loss(seed);
  if (name == "end2end") return gcdetail::target_end2end(seed);
  throw std::invalid_argument("make_gradcheck_target: unknown target " + name);
}

}  // namespace butter

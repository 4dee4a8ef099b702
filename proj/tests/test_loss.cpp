#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "butter/detect.hpp"
#include "butter/rng.hpp"

namespace ad = butter::ad;
using butter::GroundTruth;
using butter::HeadOutput;
using butter::LossWeights;
using butter::SplitMix64;
using butter::Tensor;

namespace {

// four 1x1 heads with perfect predictions for one centered object
std::vector<HeadOutput<double>> unit_heads() {
  std::vector<HeadOutput<double>> heads(4);
  for (auto& hd : heads) {
    hd.box = Tensor<double>({4, 1, 1}, {0.4, 0.5, 0.25, 0.25});
    hd.cls = Tensor<double>::full({1, 1, 1}, 1.0);
    hd.obj = Tensor<double>::full({1, 1, 1}, 0.5);
  }
  return heads;
}

GroundTruth<double> unit_gt() {
  GroundTruth<double> gt;
  gt.grid_s = 1;
  gt.boxes_b = 1;
  gt.num_classes = 1;
  gt.records.push_back({0, 0, 0.4, 0.5, 0.25, 0.25, 0});
  return gt;
}

}  // namespace

TEST_CASE("perfect predictions cost nothing") {
  auto heads = unit_heads();
  auto gt = unit_gt();
  REQUIRE(butter::iou_coordinate_loss(heads, gt) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(butter::cls_loss(heads, gt) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("coordinate loss hand value") {
  auto heads = unit_heads();
  auto gt = unit_gt();
  heads[0].box.at(0, 0, 0) = 0.5;  // off by 0.1 in x only
  REQUIRE(butter::iou_coordinate_loss(heads, gt) == Catch::Approx(0.01).margin(1e-12));
  heads[0].box.at(1, 0, 0) = 0.3;  // and 0.2 in y
  REQUIRE(butter::iou_coordinate_loss(heads, gt) == Catch::Approx(0.05).margin(1e-12));
}

TEST_CASE("extent error lives in square root space") {
  auto heads = unit_heads();
  auto gt = unit_gt();
  heads[0].box.at(2, 0, 0) = 1.0;  // sqrt(1) - sqrt(0.25) = 0.5
  REQUIRE(butter::iou_coordinate_loss(heads, gt) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("negative extents are clamped and counted") {
  auto heads = unit_heads();
  auto gt = unit_gt();
  heads[0].box.at(2, 0, 0) = -0.5;  // clamps to 0: (0 - sqrt(0.25))^2 = 0.25
  butter::LossDiagnostics diag;
  REQUIRE(butter::iou_coordinate_loss(heads, gt, &diag) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(diag.clamped_extents == 1);
}

TEST_CASE("class loss hand values") {
  auto heads = unit_heads();
  auto gt = unit_gt();
  heads[0].cls.at(0, 0, 0) = 0.8;
  REQUIRE(butter::cls_loss(heads, gt) == Catch::Approx(0.04).margin(1e-12));
}

TEST_CASE("class loss covers every class column") {
  std::vector<HeadOutput<double>> heads(4);
  for (auto& hd : heads) {
    hd.box = Tensor<double>({4, 1, 1}, {0.5, 0.5, 0.5, 0.5});
    hd.cls = Tensor<double>({2, 1, 1}, {0.8, 0.3});
    hd.obj = Tensor<double>::full({1, 1, 1}, 0.5);
  }
  GroundTruth<double> gt;
  gt.grid_s = 1;
  gt.boxes_b = 1;
  gt.num_classes = 2;
  gt.records.push_back({0, 0, 0.5, 0.5, 0.5, 0.5, 0});
  // (0.8-1)^2 + (0.3-0)^2
  REQUIRE(butter::cls_loss(heads, gt) == Catch::Approx(0.13).margin(1e-12));
}

TEST_CASE("focal loss frozen hand value") {
  Tensor<double> probs({1, 1}), labels({1, 1});
  probs[0] = 0.8;
  labels[0] = 1;
  const double got = butter::dfl_focal_loss(probs, labels, 1.0, 2.0);
  REQUIRE(got == Catch::Approx(0.00892574205256839).margin(1e-12));
  REQUIRE(got == Catch::Approx(-0.04 * std::log(0.8)).margin(1e-15));
}

TEST_CASE("focal loss with zero gamma is scaled cross entropy") {
  SplitMix64 rng(111);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.uniform_int(1, 5), k = rng.uniform_int(2, 5);
    Tensor<double> probs({n, k}), labels({n, k});
    for (int i = 0; i < n; ++i) {
      const int pos = rng.uniform_int(0, k - 1);
      for (int j = 0; j < k; ++j) {
        probs[static_cast<std::int64_t>(i) * k + j] = rng.uniform(0.05, 0.95);
        labels[static_cast<std::int64_t>(i) * k + j] = j == pos ? 1.0 : 0.0;
      }
    }
    double ce = 0;
    for (std::int64_t i = 0; i < probs.size(); ++i)
      ce += labels[i] == 1.0 ? -std::log(probs[i]) : -std::log(1 - probs[i]);
    REQUIRE(butter::dfl_focal_loss(probs, labels, 0.5, 0.0) ==
            Catch::Approx(0.5 * ce).epsilon(1e-12));
  }
}

TEST_CASE("focal loss clamps extreme probabilities") {
  Tensor<double> probs({1, 2}, {1.0, 0.0});
  Tensor<double> labels({1, 2}, {1.0, 0.0});
  const double got = butter::dfl_focal_loss(probs, labels, 0.5, 0.0);
  // both entries clamp to 1-1e-7, each contributing -0.5*log(1-1e-7)
  REQUIRE(std::isfinite(got));
  REQUIRE(got == Catch::Approx(-std::log(1.0 - 1e-7)).margin(1e-15));
}

TEST_CASE("focal loss demands one-hot labels") {
  Tensor<double> probs({1, 2}, {0.5, 0.5});
  REQUIRE_THROWS_AS(butter::dfl_focal_loss(probs, Tensor<double>({1, 2}, {1.0, 1.0}), 0.5, 2.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(butter::dfl_focal_loss(probs, Tensor<double>({1, 2}, {0.0, 0.0}), 0.5, 2.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(butter::dfl_focal_loss(probs, Tensor<double>({1, 2}, {0.5, 0.5}), 0.5, 2.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(butter::dfl_focal_loss(probs, Tensor<double>({2, 1}, {1.0, 1.0}), 0.5, 2.0),
                    std::invalid_argument);
}

TEST_CASE("the total is the exact weighted sum") {
  LossWeights<double> w;
  SplitMix64 rng(112);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.uniform(0, 5), b = rng.uniform(0, 5), d = rng.uniform(0, 5);
    auto lb = butter::total_loss(a, b, d, w);
    REQUIRE(lb.iou == a);
    REQUIRE(lb.cls == b);
    REQUIRE(lb.dfl == d);
    REQUIRE(lb.total == 7.5 * a + 0.5 * b + 1.5 * d);
  }
  LossWeights<double> w2{2.0, 3.0, 4.0};
  REQUIRE(butter::total_loss(1.0, 1.0, 1.0, w2).total == 9.0);
  REQUIRE_THROWS_AS(butter::total_loss(-0.1, 0.0, 0.0, w), std::invalid_argument);
  REQUIRE_THROWS_AS(butter::total_loss(0.0, std::nan(""), 0.0, w), std::invalid_argument);
  REQUIRE_THROWS_AS(butter::total_loss(0.0, 0.0, HUGE_VAL, w), std::invalid_argument);
}

TEST_CASE("the graph loss matches the plain composition") {
  SplitMix64 rng(113);
  const int k = 3;
  std::vector<butter::HeadOutVars<double>> hv;
  std::vector<HeadOutput<double>> hp;
  const int res[4] = {8, 4, 2, 2};
  for (int i = 0; i < 4; ++i) {
    auto x = butter::random_tensor<double>({3, res[i], res[i]}, rng, -2, 2);
    auto conv = butter::random_tensor<double>({5 + k, 3, 1, 1}, rng, -1, 1);
    auto out = butter::head_forward(ad::constant(x), ad::constant(conv));
    hv.push_back(out);
    hp.push_back({out.box->value, out.cls->value, out.obj->value});
  }
  GroundTruth<double> gt;
  gt.grid_s = 2;
  gt.boxes_b = 4;
  gt.num_classes = k;
  gt.records.push_back({0, 0, 0.25, 0.75, 0.5, 0.25, 0});
  gt.records.push_back({1, 1, 0.5, 0.5, 0.25, 0.25, 2});
  gt.records.push_back({2, 2, 0.75, 0.25, 0.125, 0.5, 1});
  gt.records.push_back({3, 3, 1.0, 0.0, 1.0, 1.0, 2});

  LossWeights<double> w;
  const double alpha = 0.25, gamma = 2.0;
  auto graph = butter::detection_loss(hv, gt, w, alpha, gamma);

  const double iou_plain = butter::iou_coordinate_loss(hp, gt);
  const double cls_plain = butter::cls_loss(hp, gt);
  auto [probs, labels] = butter::gather_class_rows(hp, gt);
  const double dfl_plain = butter::dfl_focal_loss(probs, labels, alpha, gamma);
  auto total_plain = butter::total_loss(iou_plain, cls_plain, dfl_plain, w);

  REQUIRE(graph.iou->value[0] == Catch::Approx(iou_plain).margin(1e-12));
  REQUIRE(graph.cls->value[0] == Catch::Approx(cls_plain).margin(1e-12));
  REQUIRE(graph.dfl->value[0] == Catch::Approx(dfl_plain).margin(1e-12));
  REQUIRE(graph.total->value[0] == Catch::Approx(total_plain.total).margin(1e-11));

  // and the graph total must be differentiable end to end
  ad::backward(graph.total);
  for (const auto& h : hv) REQUIRE(butter::all_finite(ad::gradient(h.box)));
}

TEST_CASE("empty ground truth costs exactly zero") {
  SplitMix64 rng(114);
  std::vector<butter::HeadOutVars<double>> hv;
  std::vector<HeadOutput<double>> hp;
  for (int i = 0; i < 4; ++i) {
    auto x = butter::random_tensor<double>({3, 2, 2}, rng, -2, 2);
    auto conv = butter::random_tensor<double>({7, 3, 1, 1}, rng, -1, 1);
    auto out = butter::head_forward(ad::constant(x), ad::constant(conv));
    hv.push_back(out);
    hp.push_back({out.box->value, out.cls->value, out.obj->value});
  }
  GroundTruth<double> gt;
  gt.grid_s = 2;
  gt.boxes_b = 0;
  gt.num_classes = 2;
  auto graph = butter::detection_loss(hv, gt, LossWeights<double>{}, 0.25, 2.0);
  REQUIRE(graph.iou->value[0] == 0.0);
  REQUIRE(graph.cls->value[0] == 0.0);
  REQUIRE(graph.dfl->value[0] == 0.0);
  REQUIRE(graph.total->value[0] == 0.0);
  REQUIRE(butter::iou_coordinate_loss(hp, gt) == 0.0);
  REQUIRE(butter::cls_loss(hp, gt) == 0.0);
}

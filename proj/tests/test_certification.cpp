#include <doctest.h>

#include "test_support.hpp"

#include <cmath>
#include <limits>

#include "crnn/certification.hpp"
#include "crnn/stability.hpp"

using namespace crnn;
using namespace crnn::test;

TEST_CASE("eta examples") {
  CHECK(eta_bound(1.0, 0.5, 2.0, 4) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eta_bound(0.0, 0.5, 2.0, 4) == 0.0);
  CHECK(eta_bound(1.0, 0.999999, 1.0, 4) > 4e5);
  CHECK(code_of([] { eta_bound(1.0, 1.0, 1.0, 4); }) == ErrorCode::kUnstableModel);
  CHECK(code_of([] { eta_bound(1.0, 1.5, 1.0, 4); }) == ErrorCode::kUnstableModel);
}

TEST_CASE("hidden deviation bound examples") {
  CHECK(hidden_deviation_bound(2.0, 0.5, 1, 0.3) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(hidden_deviation_bound(2.0, 0.5, 2, 0.3) == doctest::Approx(1.5 * 0.6).epsilon(1e-15));
  CHECK(std::abs(hidden_deviation_bound(2.0, 0.5, 50, 0.3) - 2 * 2.0 * 0.3) <= 1e-12);
  double previous = 0.0;
  for (int t = 1; t <= 30; ++t) {
    const double v = hidden_deviation_bound(1.0, 0.9, t, 1.0);
    CHECK(v > previous);
    CHECK(v <= 1.0 / (1 - 0.9) + 1e-12);
    previous = v;
  }
}

TEST_CASE("state deviation after t steps stays under the geometric bound") {
  // Contracting model: small recurrent weights, measured constants inflated.
  const LstmWeights w = random_weights(3, 5, 2, 0.15, 3);
  const auto data = random_sequences(3, 20, 4, 8);
  const auto pool = build_sampling_pool(w, data);
  const double lambda = estimate_lambda(w, pool, 20000, 0.5, 1).value * 1.05;
  const double kappa = estimate_kappa(w, pool, 20000, 1.0, 2).value * 1.05;
  REQUIRE(lambda < 1.0);
  for (std::size_t i = 0; i + 1 < data.size(); ++i) {
    Sequence perturbed = data[i];
    perturbed.steps += 0.1 * data[i + 1].steps;
    const double d_inf = seq_linf_distance(data[i], perturbed);
    const auto s1 = run_trajectory(w, data[i]);
    const auto s2 = run_trajectory(w, perturbed);
    for (std::size_t t = 1; t < s1.size(); ++t) {
      CHECK(state_distance(s1[t], s2[t]) <=
            hidden_deviation_bound(kappa, lambda, static_cast<int>(t), d_inf) + 1e-12);
    }
  }
}

TEST_CASE("robustness radius examples") {
  CHECK(robustness_radius({Eigen::Vector2d(0.8, 0.2)}, 0, 2) ==
        doctest::Approx(0.3 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(robustness_radius({Eigen::Vector2d(0.8, 0.2), Eigen::Vector2d(0.6, 0.4)}, 0, 2) ==
        doctest::Approx(0.1 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(robustness_radius({Eigen::Vector2d(0.8, 0.2), Eigen::Vector2d(0.5, 0.5)}, 0, 2) == 0.0);
  CHECK(robustness_radius({Eigen::Vector2d(0.2, 0.8), Eigen::Vector2d(0.5, 0.5)}, 1, 2) == 0.0);
  CHECK(code_of([] { robustness_radius({}, 0, 2); }) == ErrorCode::kUndefinedRadius);
  CHECK(code_of([] { robustness_radius({Eigen::Vector2d(0.2, 0.8)}, 0, 2); }) ==
        ErrorCode::kInvalidInput);
}

TEST_CASE("nominal sets") {
  const auto data = random_sequences(3, 40, 6);
  std::vector<Sequence> labeled = data;
  for (std::size_t i = 0; i < labeled.size(); ++i) labeled[i].label = static_cast<int>(i % 3);

  // Zero weights give uniform beliefs: a tie, so nothing is nominal.
  const LstmWeights zero = LstmWeights::zeros(3, 4, 3);
  for (int k = 0; k < 3; ++k) CHECK(nominal_set(zero, labeled, k).empty());

  // A head bias toward class 2 classifies everything as 2.
  LstmWeights biased = zero;
  biased.head_bias[2] = 1.0;
  const NominalSet all = nominal_set(biased, labeled, 2);
  CHECK(all.members.size() == 13);
  CHECK(nominal_set(biased, labeled, 0).empty());

  // Generic model: exactly the correctly classified subset.
  const LstmWeights w = random_weights(3, 6, 3, 1.0, 31);
  for (int k = 0; k < 3; ++k) {
    const NominalSet set = nominal_set(w, labeled, k);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const auto top = argmax_label(run_sequence(w, labeled[i]).belief);
      const bool member = labeled[i].label == k && top.label == k && !top.boundary;
      expected += member;
      CHECK(member == (std::find(set.members.begin(), set.members.end(), i) != set.members.end()));
    }
    CHECK(set.members.size() == expected);
    CHECK(set.ids.size() == expected);
  }
  CHECK(code_of([&] { nominal_set(w, labeled, 3); }) == ErrorCode::kIndexOutOfRange);
}

TEST_CASE("certificate inflation, budgets and text round-trip") {
  RobustnessCertificate cert = make_certificate(1.2, 0.8, 3.0, 4, 1.05);
  CHECK(cert.kappa_used == doctest::Approx(1.26));
  CHECK(1.0 / (1.0 - cert.lambda_used) == doctest::Approx(1.05 / 0.2));
  CHECK(std::abs(cert.eta - cert.recomputed_eta()) <= 1e-12 * cert.eta);
  cert.classes = {{0, 3, 0.2, {"a", "b", "c"}}, {1, 0, std::nullopt, {}}, {2, 1, 0.0, {"d"}}};

  CHECK(certified_budget(cert, 0) == doctest::Approx(0.2 / cert.eta).epsilon(1e-15));
  CHECK(certified_budget(cert, 2) == 0.0);
  CHECK(code_of([&] { certified_budget(cert, 1); }) == ErrorCode::kUndefinedRadius);
  CHECK(code_of([&] { certified_budget(cert, 3); }) == ErrorCode::kIndexOutOfRange);

  RobustnessCertificate doubled = cert;
  doubled.eta = 2 * cert.eta;
  CHECK(certified_budget(doubled, 0) == doctest::Approx(certified_budget(cert, 0) / 2));

  const auto back = RobustnessCertificate::from_text(cert.to_text());
  CHECK(back.eta == cert.eta);
  CHECK(std::abs(back.recomputed_eta() - back.eta) <= 1e-12 * back.eta);
  CHECK(back.kappa_hat == cert.kappa_hat);
  CHECK(back.lambda_used == cert.lambda_used);
  REQUIRE(back.classes.size() == 3);
  CHECK(back.classes[0].nominal_ids == cert.classes[0].nominal_ids);
  CHECK_FALSE(back.classes[1].epsilon.has_value());
  CHECK(back.to_text() == cert.to_text());

  CHECK(code_of([] { make_certificate(1.0, 0.5, 1.0, 2, 0.9); }) == ErrorCode::kInvalidInput);
}

TEST_CASE("degenerate certificate has infinite budgets") {
  RobustnessCertificate cert = make_certificate(0.0, 0.5, 1.0, 2, 1.05);
  cert.classes = {{0, 1, 0.1, {"x"}}};
  CHECK(cert.degenerate());
  CHECK(certified_budget(cert, 0) == std::numeric_limits<double>::infinity());
}

TEST_CASE("check_certified examples") {
  const auto nominal = random_sequences(4, 5, 12);
  const auto same = check_certified(nominal[3], nominal, 1e-9);
  CHECK(same.certified);
  CHECK(same.witness == 3);
  CHECK(same.distance == 0.0);

  Sequence shifted = nominal[1];
  shifted.steps.array() += 0.1;  // distance 0.1 * sqrt(4) = 0.2
  CHECK(check_certified(shifted, nominal, 0.21).certified);
  CHECK_FALSE(check_certified(shifted, nominal, 0.19).certified);

  Sequence far = nominal[0];
  far.steps.array() += 100.0;
  CHECK_FALSE(check_certified(far, nominal, 1.0).certified);
  CHECK(code_of([&] { check_certified(far, {}, 1.0); }) == ErrorCode::kInvalidInput);
}

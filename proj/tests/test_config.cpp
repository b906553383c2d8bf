#include <doctest.h>

#include "test_support.hpp"

#include "crnn/config.hpp"

using namespace crnn;
using namespace crnn::test;

TEST_CASE("config parses documented keys") {
  const auto c = parse_config(
      "# comment\n"
      "dataset = synth:9\n"
      "synth.classes = 3\n"
      "sequence.window = 12\n"
      "model.hidden = 16\n"
      "train.tau = 1.2\n"
      "train.stability = both\n"
      "train.constraint = strict\n"
      "estimate.lambda_samples = 500\n"
      "sweep.grid = 0, 0.5, 1\n"
      "compare.perturbation = rotation:0.1:3\n"
      "out = results\n");
  CHECK(c.dataset.seed == 9);
  CHECK(c.synth_classes == 3);
  CHECK(c.sequence.window == 12);
  CHECK(c.hidden == 16);
  CHECK(c.train.tau == 1.2);
  CHECK(c.stability == StabilityChoice::kBoth);
  CHECK(c.train.mode == ConstraintMode::kStrict);
  CHECK(c.estimation.lambda_samples == 500);
  CHECK(c.sweep_grid == std::vector<double>{0, 0.5, 1});
  REQUIRE(c.compare_perturbation.has_value());
  CHECK(c.compare_perturbation->kind == PerturbationKind::kRotation);
  CHECK(c.out == "results");
}

TEST_CASE("config text round-trips") {
  auto c = parse_config("dataset = mnist:/data/m\ntrain.epochs = 7\nsweep.grid = 0, 2\n");
  const auto back = parse_config(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.dataset.kind == DatasetSelector::Kind::kMnist);
  CHECK(back.dataset.dir == "/data/m");
  CHECK(back.train.epochs == 7);
}

TEST_CASE("config errors name the source, line and key") {
  const std::string unknown = message_of([] { parse_config("train.tau = 2\nbogus = 1\n", "a.cfg"); });
  CHECK(unknown.find("a.cfg:2") != std::string::npos);
  CHECK(unknown.find("bogus") != std::string::npos);
  CHECK(code_of([] { parse_config("train.tau = 2\ntrain.tau = 3\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("train.epochs = many\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("no equals sign\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("sweep.grid = 1, 0.5\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("train.tau = 0.9\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("dataset = imagenet\n"); }) == ErrorCode::kConfig);
}

TEST_CASE("dataset selectors") {
  CHECK(parse_dataset_selector("synth:4").seed == 4);
  CHECK(parse_dataset_selector("mnist:/x").to_string() == "mnist:/x");
  CHECK(parse_stability_choice(to_string(StabilityChoice::kOff)) == StabilityChoice::kOff);
}

#pragma once

// Experiment configuration: a flat "key = value" text file. Lines starting
// with '#' are comments. Unknown or repeated keys are errors, reported with
// the file name, line number and key.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crnn/data.hpp"
#include "crnn/stability.hpp"
#include "crnn/training.hpp"

namespace crnn {

struct DatasetSelector {
  enum class Kind { kSynthetic, kMnist };
  Kind kind = Kind::kSynthetic;
  std::uint64_t seed = 1;
  std::filesystem::path dir;

  std::string to_string() const;
};

/// "synth:<seed>" or "mnist:<dir>".
DatasetSelector parse_dataset_selector(const std::string& text);

enum class StabilityChoice { kOn, kOff, kBoth };

struct ExperimentConfig {
  DatasetSelector dataset;
  // synthetic maps
  int synth_classes = 4;
  int synth_height = 48;
  int synth_width = 48;
  int synth_train_per_class = 40;
  int synth_test_per_class = 20;
  // MNIST subset, balanced per class; 0 keeps every image
  int mnist_train_per_class = 150;
  int mnist_test_per_class = 50;
  SequenceConfig sequence;
  int hidden = 32;
  std::optional<int> expect_input_dim;
  std::optional<int> expect_classes;
  TrainConfig train;
  StabilityChoice stability = StabilityChoice::kOn;
  EstimationOptions estimation;
  double inflation = 1.05;
  std::vector<double> sweep_grid = {0,    1e-3, 2e-3, 5e-3, 0.01, 0.02, 0.05,
                                    0.1,  0.2,  0.5,  1,    2,    5,    10};
  std::vector<double> budget_fractions = {0.25, 0.5, 0.9, 0.99};
  std::optional<PerturbationSpec> compare_perturbation;
  std::filesystem::path out = "crnn_out";

  /// Throws kConfig naming the offending field.
  void validate() const;
  /// key = value lines that parse back to this configuration.
  std::string to_text() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

StabilityChoice parse_stability_choice(const std::string& text);
std::string to_string(StabilityChoice choice);

}  // namespace crnn

#pragma once

// End-to-end pipelines shared by the command-line tool and the acceptance
// suite: dataset construction, training runs, certification, constant-shift
// sweeps and the unperturbed/perturbed comparison table.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crnn/certification.hpp"
#include "crnn/config.hpp"
#include "crnn/data.hpp"
#include "crnn/stability.hpp"
#include "crnn/training.hpp"

namespace crnn {

inline constexpr const char* kVersion = "0.1.0";

SequenceDataset build_dataset(const ExperimentConfig& config);

/// Balanced per-class subset (first `per_class` of each label in file
/// order); per_class == 0 keeps everything.
std::vector<GridImage> balanced_subset(const std::vector<GridImage>& images, int m, int per_class);

struct TrainRun {
  bool stability = true;
  TrainConfig config;
  TrainResult result;
};

TrainRun run_training(const ExperimentConfig& config, const SequenceDataset& data, bool stability,
                      const StepObserver& observer = {});

Checkpoint make_checkpoint(const TrainRun& run, const ExperimentConfig& config);

struct CertifyOutput {
  StabilityReport stability;
  RobustnessCertificate certificate;
};

/// Estimates the constants on the training sequences, builds nominal sets
/// and robustness radii. Throws kUnstableModel when lambda_hat >= 1.
CertifyOutput certify_model(const LstmWeights& w, const std::vector<Sequence>& train,
                            const EstimationOptions& options, double inflation);

struct SweepRow {
  std::optional<int> cls;  // empty for the class-balanced summary row
  double xi = 0;
  double distance = 0;       // measured seq_linf_distance of the shift (xi * sqrt(a))
  double max_norm_distance = 0;  // the same shift measured with the per-step max-norm (= xi)
  double budget = 0;
  std::size_t count = 0;
  double accuracy = 0;
  bool certified = false;
};

struct SweepTable {
  std::vector<double> grid;
  std::vector<SweepRow> rows;

  std::string to_csv() const;
  /// Class-balanced summary row at grid point `i`.
  const SweepRow& summary(std::size_t i) const;
};

/// Base grid merged with xi = f * budget_k / sqrt(a) for every class budget
/// and fraction f; sorted and de-duplicated.
std::vector<double> sweep_grid(const std::vector<double>& base, const RobustnessCertificate& cert,
                               const std::vector<double>& fractions, Eigen::Index input_dim);

/// Shifts every nominal training sequence by xi at each grid point and
/// measures per-class accuracy. The certificate must describe these weights
/// and data (nominal counts are cross-checked).
SweepTable run_sweep(const LstmWeights& w, const RobustnessCertificate& cert,
                     const std::vector<Sequence>& train, const std::vector<double>& grid);

struct CompareRow {
  std::string name;
  std::string stability;
  std::string tau;
  double unperturbed = 0;  // percent, training sequences
  double perturbed = 0;    // percent, test sequences
  double loss = 0;         // unperturbed - perturbed
};

CompareRow compare_model(const std::string& name, const Checkpoint& ck, const SequenceDataset& data,
                         const std::optional<PerturbationSpec>& perturbation = std::nullopt);
std::string compare_csv(const std::vector<CompareRow>& rows);

/// Structured run manifest: command, config echo, seeds and versions.
std::string run_manifest(const std::string& command, const ExperimentConfig& config,
                         const std::vector<std::pair<std::string, std::string>>& extra = {});

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace crnn

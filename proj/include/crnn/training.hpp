#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crnn/errors.hpp"
#include "crnn/lstm.hpp"
#include "crnn/lstm_io.hpp"
#include "crnn/stability.hpp"

namespace crnn {

/// Cross-entropy from logits: log_sum_exp(q) - q_k.
double lse_loss(const Eigen::VectorXd& logits, int k);

/// -log p_k from a belief vector; +inf when p_k == 0.
double nll_loss(const Eigen::VectorXd& belief, int k);

LstmWeights zeros_like(const LstmWeights& w);
/// dst += scale * src, block by block.
void add_scaled(LstmWeights& dst, const LstmWeights& src, double scale);

struct BatchGradient {
  LstmWeights gradient;  // d(mean loss)/d(parameters)
  double loss = 0;       // mean loss over the batch
  std::size_t correct = 0;
};

/// Backpropagation through time for the mean cross-entropy over `batch`.
/// Per-sequence gradients are reduced in batch order.
BatchGradient backward(const LstmWeights& w, std::span<const Sequence* const> batch);
BatchGradient backward(const LstmWeights& w, const std::vector<Sequence>& batch);

/// Uniform in [-1/sqrt(a), 1/sqrt(a)] for input matrices and
/// [-1/sqrt(b), 1/sqrt(b)] for recurrent and head matrices; zero biases
/// except the forget gate.
LstmWeights init_weights(Eigen::Index a, Eigen::Index b, Eigen::Index m, std::uint64_t seed,
                         double forget_bias = 1.0);

struct AdamState {
  LstmWeights first;
  LstmWeights second;
  long step = 0;
};

struct TrainConfig {
  double learning_rate = 0.005;
  int epochs = 30;
  std::size_t batch_size = 32;
  double tau = 1.05;
  bool stability_enabled = true;
  ConstraintMode mode = ConstraintMode::kRecurrent;
  /// Re-estimate f_sup after every step instead of once per epoch.
  bool per_step_f_sup = false;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double forget_bias = 1.0;
  /// Samples for the per-epoch lambda snapshot (0 disables it).
  std::size_t lambda_snapshot_samples = 1000;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double train_accuracy = 0;
  long constraint_rounds = 0;
  double f_sup = 0;
  double lambda_hat = 0;
  double constraint_lhs = 0;
  std::size_t steps = 0;
  /// Steps after which the constraint held (all of them when enabled).
  std::size_t steps_satisfied = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Columns: epoch, loss, train_accuracy, constraint_rounds, f_sup,
  /// lambda_hat, constraint_lhs, steps, steps_satisfied.
  std::string to_csv() const;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, TrainHistory history)
      : Error(ErrorCode::kDiverged, message), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

struct StepEvent {
  std::size_t step = 0;
  int epoch = 0;
  const LstmWeights& weights;
  double f_sup = 0;
  int rounds = 0;
};

using StepObserver = std::function<void(const StepEvent&)>;

struct TrainResult {
  LstmWeights weights;
  AdamState adam;
  TrainHistory history;
  /// Closing projection (stability enabled): f_sup of the final weights,
  /// whether they satisfy the constraint at it, and the rounds it took.
  double final_f_sup = 0;
  bool final_satisfied = false;
  long closing_rounds = 0;
};

/// Adam on mini-batches; with stability enabled every step is followed by
/// the row-scaling projection. Deterministic for a fixed seed.
TrainResult train(LstmWeights weights, const std::vector<Sequence>& data,
                  const TrainConfig& config, const StepObserver& observer = {});

/// Fraction of labeled sequences whose strict argmax equals the label.
double accuracy(const LstmWeights& w, const std::vector<Sequence>& data);

struct Checkpoint {
  LstmWeights weights;
  std::optional<AdamState> adam;
  std::vector<std::pair<std::string, std::string>> meta;

  std::optional<std::string> meta_value(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path,
                     PackEncoding encoding = PackEncoding::kBinary);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crnn

#pragma once

// Sequential observations: fixed patch walks over images, the feature map
// applied to each patch, observation-space deformations and dataset I/O.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crnn/errors.hpp"
#include "crnn/lstm.hpp"

namespace crnn {

struct GridImage {
  Eigen::MatrixXd pixels;  // H x W, intensities in [0, 1]
  int label = -1;
  std::string id;
};

struct PathPlan {
  std::string name;
  std::vector<std::pair<int, int>> anchors;  // top-left (row, col) per step
  int window_h = 0;
  int window_w = 0;

  int length() const { return static_cast<int>(anchors.size()); }
};

/// Five fixed walks of `length` steps: raster sweep, main diagonal,
/// anti-diagonal, inward spiral and a seeded random walk.
std::vector<PathPlan> standard_paths(int image_h, int image_w, int window_h, int window_w,
                                     int length, std::uint64_t seed);

/// Window with its anchor clamped into the image. Throws kPlan when the
/// window is larger than the image.
Eigen::MatrixXd extract_window(const GridImage& img, int row, int col, int h, int w);

std::vector<Eigen::MatrixXd> patch_walk(const GridImage& img, const PathPlan& plan);

/// Area-average downsampling by an integer factor followed by a fixed affine
/// map (v - offset) / scale. offset and scale are fitted once on training
/// observations (zero mean, unit max-abs) and then frozen.
struct Featurizer {
  int window_h = 16;
  int window_w = 16;
  int factor = 2;
  double offset = 0.0;
  double scale = 1.0;

  Eigen::Index feature_dim() const;
  Eigen::VectorXd downsample(const Eigen::MatrixXd& patch) const;
  Eigen::VectorXd operator()(const Eigen::MatrixXd& patch) const;

  static Featurizer fit(int window_h, int window_w, int factor,
                        const std::vector<Eigen::MatrixXd>& patches);
};

enum class PerturbationKind {
  kConstantShift,
  kAdditiveNoise,
  kTranslation,
  kRotation,
  kScaling,
  kBrightness,
};

std::string_view to_string(PerturbationKind kind);
PerturbationKind parse_perturbation_kind(std::string_view text);

/// magnitude units: constant_shift feature units; additive_noise and
/// brightness intensity; translation pixels (max per-axis offset); rotation
/// radians; scaling zoom - 1.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::kAdditiveNoise;
  double magnitude = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// "kind:magnitude[:seed]".
PerturbationSpec parse_perturbation(std::string_view text);

/// Observation at window (row, col, h, w) under an observation-space
/// deformation. `stream` selects the random draw for this step. Results are
/// clamped to [0, 1].
Eigen::MatrixXd perturb_observation(const GridImage& img, int row, int col, int h, int w,
                                    const PerturbationSpec& spec, std::uint64_t stream);

/// x(t) + xi * 1 for every step.
Sequence perturb_sequence_constant(const Sequence& x, double xi);

Sequence make_sequence(const GridImage& img, const PathPlan& plan, const Featurizer& phi,
                       const std::optional<PerturbationSpec>& perturbation = std::nullopt,
                       std::uint64_t stream = 0);

struct SequenceConfig {
  int window = 16;
  int factor = 2;
  int length = 10;
  std::uint64_t path_seed = 7;
};

struct SequenceSource {
  std::size_t image = 0;
  std::size_t path = 0;
};

struct SequenceDataset {
  std::vector<GridImage> train_images;
  std::vector<GridImage> test_images;
  std::vector<PathPlan> paths;
  Featurizer featurizer;
  SequenceConfig config;
  std::vector<Sequence> train;
  std::vector<Sequence> test;
  std::vector<SequenceSource> train_source;
  std::vector<SequenceSource> test_source;
  int num_classes = 0;

  /// Re-generates training sequence i under a perturbation.
  Sequence perturbed_train(std::size_t i, const PerturbationSpec& spec) const;
  /// One line per image: id,split,label.
  std::string manifest() const;
};

/// Patch walks over every image along every standard path. The featurizer is
/// fitted on the training observations only.
SequenceDataset build_sequences(std::vector<GridImage> train_images,
                                std::vector<GridImage> test_images, int num_classes,
                                const SequenceConfig& config);

struct ImageSplit {
  std::vector<GridImage> train;
  std::vector<GridImage> test;
};

/// Procedural labeled maps: each class has its own stripe orientation and
/// blob layout; instances jitter phase, blob position and amplitude, plus
/// pixel noise. Deterministic per seed.
ImageSplit synth_maps(std::uint64_t seed, int m, int height, int width, int per_class_train,
                      int per_class_test);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<Eigen::MatrixXd> read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);
/// Images paired with labels by index; ids are "<prefix><index>".
std::vector<GridImage> load_idx(const std::filesystem::path& images,
                                const std::filesystem::path& labels,
                                const std::string& id_prefix = "idx");

std::vector<Eigen::MatrixXd> decode_idx_images(const std::string& bytes);
std::vector<int> decode_idx_labels(const std::string& bytes);
/// Pixels are scaled by 255 and rounded.
std::string encode_idx_images(const std::vector<Eigen::MatrixXd>& images);
std::string encode_idx_labels(const std::vector<int>& labels);

}  // namespace crnn

#include <doctest.h>

#include "test_support.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "crnn/data.hpp"

using namespace crnn;
using namespace crnn::test;

namespace {

GridImage ramp_image(int h, int w) {
  GridImage img;
  img.pixels.resize(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img.pixels(r, c) = double((r * 7 + c * 3) % 23) / 22.0;
  }
  img.id = "ramp";
  return img;
}

std::string idx_header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::string out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

// Mean intensity over a g x g grid of blocks.
Eigen::VectorXd block_means(const Eigen::MatrixXd& img, int g) {
  const int bh = static_cast<int>(img.rows()) / g;
  const int bw = static_cast<int>(img.cols()) / g;
  Eigen::VectorXd f(g * g);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) f[i * g + j] = img.block(i * bh, j * bw, bh, bw).mean();
  }
  return f;
}

}  // namespace

TEST_CASE("patch walk examples") {
  GridImage flat;
  flat.pixels = Eigen::MatrixXd::Constant(20, 20, 0.3);
  for (const PathPlan& plan : standard_paths(20, 20, 6, 6, 9, 1)) {
    CHECK(plan.length() == 9);
    for (const auto& patch : patch_walk(flat, plan)) {
      CHECK(patch.rows() == 6);
      CHECK((patch.array() == 0.3).all());
    }
  }
  const GridImage img = ramp_image(12, 10);
  for (const PathPlan& plan : standard_paths(12, 10, 12, 10, 1, 1)) {
    const auto patches = patch_walk(img, plan);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0] == img.pixels);
  }
  CHECK(code_of([&] { extract_window(img, 0, 0, 13, 4); }) == ErrorCode::kPlan);
}

TEST_CASE("windows are clamped into the image and overlap consistently") {
  const GridImage img = ramp_image(16, 16);
  CHECK(extract_window(img, 14, -3, 4, 4) == img.pixels.block(12, 0, 4, 4));
  const Eigen::MatrixXd a = extract_window(img, 2, 2, 6, 6);
  const Eigen::MatrixXd b = extract_window(img, 4, 3, 6, 6);
  CHECK(a.block(2, 1, 4, 5) == b.block(0, 0, 4, 5));
}

TEST_CASE("standard paths are deterministic and stay inside the image") {
  const auto p1 = standard_paths(28, 28, 14, 14, 10, 3);
  const auto p2 = standard_paths(28, 28, 14, 14, 10, 3);
  REQUIRE(p1.size() == 5);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].anchors == p2[i].anchors);
    for (auto [r, c] : p1[i].anchors) {
      CHECK(r >= 0);
      CHECK(c >= 0);
      CHECK(r + 14 <= 28);
      CHECK(c + 14 <= 28);
    }
  }
}

TEST_CASE("featurizer examples") {
  Featurizer phi;
  phi.window_h = phi.window_w = 4;
  phi.factor = 2;
  phi.offset = 0.25;
  phi.scale = 0.5;
  CHECK(phi.feature_dim() == 4);
  const Eigen::VectorXd zero = phi(Eigen::MatrixXd::Zero(4, 4));
  CHECK((zero.array() == -0.5).all());

  Eigen::MatrixXd patch(4, 4);
  patch << 0, 0, 1, 1, 0, 0, 1, 1, 0.5, 0.5, 0.2, 0.2, 0.5, 0.5, 0.2, 0.2;
  const Eigen::VectorXd down = phi.downsample(patch);
  CHECK(down.size() == 4);
  CHECK(down.minCoeff() == 0.0);
  CHECK(down.maxCoeff() == 1.0);
  CHECK((down.array() == 0.5).count() == 1);
  CHECK(phi(patch) == phi(patch));

  std::vector<Eigen::MatrixXd> patches = {patch, Eigen::MatrixXd::Constant(4, 4, 0.6)};
  const Featurizer fitted = Featurizer::fit(4, 4, 2, patches);
  Eigen::VectorXd all(8);
  all << fitted(patches[0]), fitted(patches[1]);
  CHECK(std::abs(all.mean()) < 1e-12);
  CHECK(all.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-magnitude perturbations are the identity") {
  const GridImage img = ramp_image(32, 32);
  const Eigen::MatrixXd clean = extract_window(img, 8, 9, 10, 10);
  for (auto kind : {PerturbationKind::kAdditiveNoise, PerturbationKind::kTranslation,
                    PerturbationKind::kRotation, PerturbationKind::kScaling,
                    PerturbationKind::kBrightness}) {
    const PerturbationSpec spec{kind, 0.0, 5};
    CHECK((perturb_observation(img, 8, 9, 10, 10, spec, 3) - clean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("translation equals a shifted interior window within the magnitude") {
  const GridImage img = ramp_image(40, 40);
  for (std::uint64_t stream = 0; stream < 20; ++stream) {
    const PerturbationSpec spec{PerturbationKind::kTranslation, 3.0, 8};
    const Eigen::MatrixXd moved = perturb_observation(img, 15, 15, 8, 8, spec, stream);
    bool found = false;
    for (int dr = -3; dr <= 3 && !found; ++dr) {
      for (int dc = -3; dc <= 3 && !found; ++dc) {
        found = moved == extract_window(img, 15 + dr, 15 + dc, 8, 8);
      }
    }
    CHECK(found);
  }
}

TEST_CASE("noise and brightness stay within their magnitude") {
  const GridImage img = ramp_image(24, 24);
  const Eigen::MatrixXd clean = extract_window(img, 4, 4, 12, 12);
  for (double xi : {0.01, 0.1, 0.5}) {
    for (auto kind : {PerturbationKind::kAdditiveNoise, PerturbationKind::kBrightness}) {
      const Eigen::MatrixXd out = perturb_observation(img, 4, 4, 12, 12, {kind, xi, 1}, 2);
      // Rounding in (v + xi) - v can exceed xi by an ulp.
      CHECK((out - clean).cwiseAbs().maxCoeff() <= xi * (1 + 1e-12));
      CHECK(out.minCoeff() >= 0.0);
      CHECK(out.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("excessive zoom is a deformation error; rotation keeps the range") {
  const GridImage img = ramp_image(24, 24);
  CHECK(code_of([&] {
          perturb_observation(img, 4, 4, 12, 12, {PerturbationKind::kScaling, 20.0, 1}, 0);
        }) == ErrorCode::kDeformation);
  const Eigen::MatrixXd rotated =
      perturb_observation(img, 4, 4, 12, 12, {PerturbationKind::kRotation, 0.3, 1}, 0);
  CHECK(rotated.minCoeff() >= 0.0);
  CHECK(rotated.maxCoeff() <= 1.0);
  CHECK(code_of([&] {
          perturb_observation(img, 4, 4, 12, 12, {PerturbationKind::kConstantShift, 0.1, 1}, 0);
        }) == ErrorCode::kInvalidInput);
}

TEST_CASE("constant shift distance is xi * sqrt(a)") {
  for (auto [a, xi] : {std::pair{1, 0.3}, std::pair{4, 0.1}, std::pair{49, 0.037}}) {
    const Sequence x = random_sequence(a, 7, 3);
    CHECK(seq_linf_distance(x, perturb_sequence_constant(x, 0.0)) == 0.0);
    const double d = seq_linf_distance(x, perturb_sequence_constant(x, xi));
    CHECK(std::abs(d - xi * std::sqrt(double(a))) <= 1e-12);
  }
}

TEST_CASE("perturbation spec parsing") {
  const auto spec = parse_perturbation("rotation:0.25:9");
  CHECK(spec.kind == PerturbationKind::kRotation);
  CHECK(spec.magnitude == 0.25);
  CHECK(spec.seed == 9);
  CHECK(parse_perturbation_kind(to_string(PerturbationKind::kBrightness)) ==
        PerturbationKind::kBrightness);
  CHECK(code_of([] { parse_perturbation("wobble:1"); }) == ErrorCode::kInvalidInput);
  CHECK(code_of([] { parse_perturbation("additive_noise:-1"); }) == ErrorCode::kInvalidInput);
}

TEST_CASE("IDX decoding examples") {
  std::string bytes = idx_header(kIdxImageMagic, {2, 28, 28});
  bytes += std::string(1568, '\0');
  bytes[16 + 5] = static_cast<char>(255);
  const auto images = decode_idx_images(bytes);
  REQUIRE(images.size() == 2);
  CHECK(images[0].rows() == 28);
  CHECK(images[0](0, 5) == 1.0);
  CHECK(images[1].sum() == 0.0);

  const std::string message = message_of([&] { decode_idx_images(bytes.substr(0, 1000)); });
  CHECK(message.find("expected 1584 bytes, got 1000") != std::string::npos);
  CHECK(code_of([&] { decode_idx_images(bytes.substr(0, 1000)); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { decode_idx_images(idx_header(kIdxLabelMagic, {2})); }) == ErrorCode::kFormat);

  const std::vector<int> labels = {3, 0, 9};
  CHECK(decode_idx_labels(encode_idx_labels(labels)) == labels);
  const auto back = decode_idx_images(encode_idx_images(images));
  CHECK(back[0] == images[0]);
}

TEST_CASE("IDX files load as labeled images") {
  const auto dir = std::filesystem::temp_directory_path() / "crnn_test_idx";
  std::filesystem::create_directories(dir);
  const std::vector<Eigen::MatrixXd> imgs = {Eigen::MatrixXd::Constant(3, 3, 1.0),
                                             Eigen::MatrixXd::Zero(3, 3)};
  std::ofstream(dir / "img", std::ios::binary) << encode_idx_images(imgs);
  std::ofstream(dir / "lbl", std::ios::binary) << encode_idx_labels({4, 1});
  std::ofstream(dir / "short", std::ios::binary) << encode_idx_labels({4});
  const auto loaded = load_idx(dir / "img", dir / "lbl", "t");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].label == 4);
  CHECK(loaded[1].id == "t1");
  CHECK(code_of([&] { load_idx(dir / "img", dir / "short"); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { load_idx(dir / "missing", dir / "lbl"); }) == ErrorCode::kIo);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic maps are deterministic per seed") {
  const auto a = synth_maps(5, 4, 48, 48, 3, 2);
  const auto b = synth_maps(5, 4, 48, 48, 3, 2);
  const auto c = synth_maps(6, 4, 48, 48, 3, 2);
  REQUIRE(a.train.size() == 12);
  REQUIRE(a.test.size() == 8);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].pixels == b.train[i].pixels);
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].pixels.minCoeff() >= 0.0);
    CHECK(a.train[i].pixels.maxCoeff() <= 1.0);
  }
  CHECK(a.train[0].pixels != c.train[0].pixels);
}

TEST_CASE("synthetic classes are linearly separable on whole-image features") {
  const auto split = synth_maps(1, 4, 48, 48, 40, 20);
  const int g = 8;
  auto features = [&](const GridImage& img) {
    Eigen::VectorXd f(g * g + 1);
    f << block_means(img.pixels, g), 1.0;
    return f;
  };
  // One-vs-rest ridge regression fitted on train, scored on test.
  const auto n = static_cast<Eigen::Index>(split.train.size());
  Eigen::MatrixXd X(n, g * g + 1);
  Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(n, 4, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = features(split.train[static_cast<std::size_t>(i)]).transpose();
    Y(i, split.train[static_cast<std::size_t>(i)].label) = 1.0;
  }
  const Eigen::MatrixXd gram = X.transpose() * X + 1e-3 * Eigen::MatrixXd::Identity(X.cols(), X.cols());
  const Eigen::MatrixXd coef = gram.ldlt().solve(X.transpose() * Y);
  int correct = 0;
  for (const GridImage& img : split.test) {
    Eigen::Index best;
    (features(img).transpose() * coef).maxCoeff(&best);
    correct += best == img.label;
  }
  const double acc = double(correct) / double(split.test.size());
  MESSAGE("linear test accuracy " << acc);
  CHECK(acc > 0.9);
}

TEST_CASE("every pair of synthetic classes differs in some block mean by 3 within-class sd") {
  const int m = 4;
  const auto split = synth_maps(1, m, 48, 48, 40, 0);
  const int g = 3;
  std::vector<Eigen::VectorXd> mean(m, Eigen::VectorXd::Zero(g * g));
  std::vector<Eigen::VectorXd> sq(m, Eigen::VectorXd::Zero(g * g));
  std::vector<int> count(m, 0);
  for (const GridImage& img : split.train) {
    const Eigen::VectorXd f = block_means(img.pixels, g);
    mean[img.label] += f;
    sq[img.label] += f.cwiseProduct(f);
    ++count[img.label];
  }
  std::vector<Eigen::VectorXd> sd(m);
  for (int k = 0; k < m; ++k) {
    mean[k] /= count[k];
    sd[k] = (sq[k] / count[k] - mean[k].cwiseProduct(mean[k])).cwiseMax(0.0).cwiseSqrt();
  }
  for (int k = 0; k < m; ++k) {
    for (int l = k + 1; l < m; ++l) {
      const Eigen::ArrayXd gap = (mean[k] - mean[l]).cwiseAbs().array();
      const Eigen::ArrayXd spread = sd[k].cwiseMax(sd[l]).array();
      const double best = (gap / spread).maxCoeff();
      MESSAGE("classes " << k + 1 << "," << l + 1 << ": " << best << " sd");
      CHECK(best >= 3.0);
    }
  }
}

TEST_CASE("sequence pipeline is deterministic and fits the featurizer on train only") {
  auto split = synth_maps(2, 2, 32, 32, 2, 1);
  SequenceConfig cfg;
  cfg.window = 8;
  cfg.factor = 2;
  cfg.length = 4;
  const SequenceDataset d1 = build_sequences(split.train, split.test, 2, cfg);
  const SequenceDataset d2 = build_sequences(split.train, split.test, 2, cfg);
  CHECK(d1.train.size() == 4 * 5);
  CHECK(d1.test.size() == 2 * 5);
  CHECK(d1.train[3].steps == d2.train[3].steps);
  CHECK(d1.train[3].id == split.train[0].id + "/" + d1.paths[3].name);
  CHECK(d1.train[0].feature_dim() == 16);

  // Changing the test images leaves the fitted map unchanged.
  auto other = split.test;
  other[0].pixels.setConstant(1.0);
  const SequenceDataset d3 = build_sequences(split.train, other, 2, cfg);
  CHECK(d3.featurizer.offset == d1.featurizer.offset);
  CHECK(d3.featurizer.scale == d1.featurizer.scale);

  const PerturbationSpec spec{PerturbationKind::kAdditiveNoise, 0.1, 4};
  CHECK(d1.perturbed_train(5, spec).steps == d2.perturbed_train(5, spec).steps);
  CHECK(d1.perturbed_train(5, {PerturbationKind::kAdditiveNoise, 0.0, 4}).steps ==
        d1.train[5].steps);
  CHECK(d1.manifest().find(split.train[0].id) != std::string::npos);
}

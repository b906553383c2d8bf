#include "crnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "crnn/lstm_io.hpp"
#include "crnn/random.hpp"

namespace crnn {

// ---------------------------------------------------------------- paths

namespace {

int lerp_index(int t, int steps, int max_value) {
  if (steps <= 1 || max_value <= 0) return 0;
  return static_cast<int>(std::lround(static_cast<double>(t) * max_value / (steps - 1)));
}

std::vector<int> linspace_int(int count, int max_value) {
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lerp_index(i, count, max_value);
  return out;
}

}  // namespace

std::vector<PathPlan> standard_paths(int image_h, int image_w, int window_h, int window_w,
                                     int length, std::uint64_t seed) {
  require(length >= 1, ErrorCode::kPlan, "path length must be >= 1");
  require(window_h >= 1 && window_w >= 1 && window_h <= image_h && window_w <= image_w,
          ErrorCode::kPlan, "window does not fit inside the image");
  const int max_r = image_h - window_h;
  const int max_c = image_w - window_w;
  std::vector<PathPlan> paths;
  auto make = [&](const std::string& name) -> PathPlan& {
    paths.push_back(PathPlan{name, {}, window_h, window_w});
    return paths.back();
  };

  // Snake over a coarse grid with at least `length` cells.
  {
    PathPlan& p = make("raster");
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(length))));
    const int rows = (length + cols - 1) / cols;
    const auto rs = linspace_int(rows, max_r);
    const auto cs = linspace_int(cols, max_c);
    for (int r = 0; r < rows && p.length() < length; ++r) {
      for (int k = 0; k < cols && p.length() < length; ++k) {
        const int c = (r % 2 == 0) ? k : cols - 1 - k;
        p.anchors.emplace_back(rs[static_cast<std::size_t>(r)], cs[static_cast<std::size_t>(c)]);
      }
    }
  }
  {
    PathPlan& p = make("diagonal");
    for (int t = 0; t < length; ++t) {
      p.anchors.emplace_back(lerp_index(t, length, max_r), lerp_index(t, length, max_c));
    }
  }
  {
    PathPlan& p = make("anti_diagonal");
    for (int t = 0; t < length; ++t) {
      p.anchors.emplace_back(lerp_index(t, length, max_r), max_c - lerp_index(t, length, max_c));
    }
  }
  // Clockwise spiral from the outer ring inwards over an n x n anchor grid.
  {
    PathPlan& p = make("spiral");
    int n = 1;
    while (n * n < length) ++n;
    const auto rs = linspace_int(n, max_r);
    const auto cs = linspace_int(n, max_c);
    int top = 0, bottom = n - 1, left = 0, right = n - 1;
    auto push = [&](int r, int c) {
      if (p.length() < length) {
        p.anchors.emplace_back(rs[static_cast<std::size_t>(r)], cs[static_cast<std::size_t>(c)]);
      }
    };
    while (top <= bottom && left <= right && p.length() < length) {
      for (int c = left; c <= right; ++c) push(top, c);
      for (int r = top + 1; r <= bottom; ++r) push(r, right);
      if (top < bottom) {
        for (int c = right - 1; c >= left; --c) push(bottom, c);
      }
      if (left < right) {
        for (int r = bottom - 1; r > top; --r) push(r, left);
      }
      ++top;
      --bottom;
      ++left;
      --right;
    }
  }
  {
    PathPlan& p = make("random");
    auto rng = make_rng(seed, 0xA7);
    std::uniform_int_distribution<int> dr(0, max_r);
    std::uniform_int_distribution<int> dc(0, max_c);
    for (int t = 0; t < length; ++t) {
      const int r = dr(rng);
      p.anchors.emplace_back(r, dc(rng));
    }
  }
  return paths;
}

Eigen::MatrixXd extract_window(const GridImage& img, int row, int col, int h, int w) {
  const auto H = static_cast<int>(img.pixels.rows());
  const auto W = static_cast<int>(img.pixels.cols());
  require(h >= 1 && w >= 1 && h <= H && w <= W, ErrorCode::kPlan,
          "window " + std::to_string(h) + "x" + std::to_string(w) + " does not fit image " +
              std::to_string(H) + "x" + std::to_string(W));
  row = std::clamp(row, 0, H - h);
  col = std::clamp(col, 0, W - w);
  return img.pixels.block(row, col, h, w);
}

std::vector<Eigen::MatrixXd> patch_walk(const GridImage& img, const PathPlan& plan) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(plan.anchors.size());
  for (const auto& [r, c] : plan.anchors) {
    out.push_back(extract_window(img, r, c, plan.window_h, plan.window_w));
  }
  return out;
}

// ---------------------------------------------------------------- features

Eigen::Index Featurizer::feature_dim() const {
  return static_cast<Eigen::Index>(window_h / factor) * (window_w / factor);
}

Eigen::VectorXd Featurizer::downsample(const Eigen::MatrixXd& patch) const {
  require(factor >= 1 && window_h % factor == 0 && window_w % factor == 0,
          ErrorCode::kDimensionMismatch, "window must be divisible by the downsampling factor");
  require(patch.rows() == window_h && patch.cols() == window_w, ErrorCode::kDimensionMismatch,
          "patch is " + std::to_string(patch.rows()) + "x" + std::to_string(patch.cols()) +
              ", featurizer expects " + std::to_string(window_h) + "x" + std::to_string(window_w));
  const int out_h = window_h / factor;
  const int out_w = window_w / factor;
  Eigen::VectorXd v(out_h * out_w);
  const double area = static_cast<double>(factor * factor);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      v[r * out_w + c] = patch.block(r * factor, c * factor, factor, factor).sum() / area;
    }
  }
  return v;
}

Eigen::VectorXd Featurizer::operator()(const Eigen::MatrixXd& patch) const {
  return (downsample(patch).array() - offset).matrix() / scale;
}

Featurizer Featurizer::fit(int window_h, int window_w, int factor,
                           const std::vector<Eigen::MatrixXd>& patches) {
  Featurizer phi{window_h, window_w, factor, 0.0, 1.0};
  require(!patches.empty(), ErrorCode::kInvalidInput, "featurizer fit needs patches");
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<Eigen::VectorXd> down;
  down.reserve(patches.size());
  for (const auto& p : patches) {
    down.push_back(phi.downsample(p));
    sum += down.back().sum();
    count += static_cast<std::size_t>(down.back().size());
  }
  phi.offset = sum / static_cast<double>(count);
  double max_abs = 0.0;
  for (const auto& d : down) max_abs = std::max(max_abs, (d.array() - phi.offset).abs().maxCoeff());
  phi.scale = max_abs > 0.0 ? max_abs : 1.0;
  return phi;
}

// ---------------------------------------------------------------- perturbations

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kConstantShift: return "constant_shift";
    case PerturbationKind::kAdditiveNoise: return "additive_noise";
    case PerturbationKind::kTranslation: return "translation";
    case PerturbationKind::kRotation: return "rotation";
    case PerturbationKind::kScaling: return "scaling";
    case PerturbationKind::kBrightness: return "brightness";
  }
  return "unknown";
}

PerturbationKind parse_perturbation_kind(std::string_view text) {
  for (auto k : {PerturbationKind::kConstantShift, PerturbationKind::kAdditiveNoise,
                 PerturbationKind::kTranslation, PerturbationKind::kRotation,
                 PerturbationKind::kScaling, PerturbationKind::kBrightness}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::kInvalidInput, "unknown perturbation kind '" + std::string(text) + "'");
}

void PerturbationSpec::validate() const {
  require(std::isfinite(magnitude) && magnitude >= 0.0, ErrorCode::kInvalidInput,
          "perturbation magnitude must be finite and >= 0");
}

PerturbationSpec parse_perturbation(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  require(parts.size() == 2 || parts.size() == 3, ErrorCode::kInvalidInput,
          "perturbation must look like kind:magnitude[:seed], got '" + std::string(text) + "'");
  PerturbationSpec spec;
  spec.kind = parse_perturbation_kind(parts[0]);
  spec.magnitude = parse_double(parts[1]);
  if (parts.size() == 3) spec.seed = std::stoull(parts[2]);
  spec.validate();
  return spec;
}

namespace {

double bilinear(const Eigen::MatrixXd& px, double r, double c) {
  const double max_r = static_cast<double>(px.rows() - 1);
  const double max_c = static_cast<double>(px.cols() - 1);
  r = std::clamp(r, 0.0, max_r);
  c = std::clamp(c, 0.0, max_c);
  const auto r0 = static_cast<Eigen::Index>(std::floor(r));
  const auto c0 = static_cast<Eigen::Index>(std::floor(c));
  const Eigen::Index r1 = std::min<Eigen::Index>(r0 + 1, px.rows() - 1);
  const Eigen::Index c1 = std::min<Eigen::Index>(c0 + 1, px.cols() - 1);
  const double fr = r - static_cast<double>(r0);
  const double fc = c - static_cast<double>(c0);
  const double top = (1.0 - fc) * px(r0, c0) + fc * px(r0, c1);
  const double bottom = (1.0 - fc) * px(r1, c0) + fc * px(r1, c1);
  return (1.0 - fr) * top + fr * bottom;
}

// Resamples the window through `map`, which takes an offset from the window
// center and returns the source offset.
template <typename Map>
Eigen::MatrixXd resample(const GridImage& img, int row, int col, int h, int w, Map&& map) {
  const double cr = row + (h - 1) / 2.0;
  const double cc = col + (w - 1) / 2.0;
  Eigen::MatrixXd out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const auto [dr, dc] = map(i - (h - 1) / 2.0, j - (w - 1) / 2.0);
      out(i, j) = bilinear(img.pixels, cr + dr, cc + dc);
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd perturb_observation(const GridImage& img, int row, int col, int h, int w,
                                    const PerturbationSpec& spec, std::uint64_t stream) {
  spec.validate();
  const auto H = static_cast<int>(img.pixels.rows());
  const auto W = static_cast<int>(img.pixels.cols());
  require(h >= 1 && w >= 1 && h <= H && w <= W, ErrorCode::kPlan, "window does not fit image");
  row = std::clamp(row, 0, H - h);
  col = std::clamp(col, 0, W - w);
  auto rng = make_rng(spec.seed, stream);
  const double mag = spec.magnitude;

  Eigen::MatrixXd out;
  switch (spec.kind) {
    case PerturbationKind::kConstantShift:
      fail(ErrorCode::kInvalidInput,
           "constant_shift acts on features; use perturb_sequence_constant");
    case PerturbationKind::kTranslation: {
      const int reach = static_cast<int>(std::floor(mag));
      std::uniform_int_distribution<int> offset(-reach, reach);
      const int dr = offset(rng);
      const int dc = offset(rng);
      out = extract_window(img, row + dr, col + dc, h, w);
      break;
    }
    case PerturbationKind::kRotation: {
      const double cs = std::cos(mag);
      const double sn = std::sin(mag);
      out = resample(img, row, col, h, w, [&](double y, double x) {
        return std::pair<double, double>{cs * y + sn * x, -sn * y + cs * x};
      });
      break;
    }
    case PerturbationKind::kScaling: {
      const double zoom = 1.0 + mag;
      if (static_cast<double>(h) / zoom < 1.0 || static_cast<double>(w) / zoom < 1.0) {
        fail(ErrorCode::kDeformation, "zoom " + format_double(zoom) +
                                          " leaves less than one source pixel in the window");
      }
      out = resample(img, row, col, h, w, [&](double y, double x) {
        return std::pair<double, double>{y / zoom, x / zoom};
      });
      break;
    }
    case PerturbationKind::kBrightness:
      out = img.pixels.block(row, col, h, w).array() + mag;
      break;
    case PerturbationKind::kAdditiveNoise: {
      out = img.pixels.block(row, col, h, w);
      if (mag > 0.0) {
        std::uniform_real_distribution<double> noise(-mag, mag);
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
          for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += noise(rng);
        }
      }
      break;
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

Sequence perturb_sequence_constant(const Sequence& x, double xi) {
  require(std::isfinite(xi) && xi >= 0.0, ErrorCode::kInvalidInput, "xi must be >= 0");
  Sequence out = x;
  out.steps.array() += xi;
  return out;
}

Sequence make_sequence(const GridImage& img, const PathPlan& plan, const Featurizer& phi,
                       const std::optional<PerturbationSpec>& perturbation, std::uint64_t stream) {
  Sequence seq;
  seq.steps.resize(phi.feature_dim(), plan.length());
  seq.id = img.id + "/" + plan.name;
  if (img.label >= 0) seq.label = img.label;
  const bool observation_space =
      perturbation && perturbation->kind != PerturbationKind::kConstantShift;
  for (int t = 0; t < plan.length(); ++t) {
    const auto [r, c] = plan.anchors[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd patch =
        observation_space
            ? perturb_observation(img, r, c, plan.window_h, plan.window_w, *perturbation,
                                  stream * 1024 + static_cast<std::uint64_t>(t))
            : extract_window(img, r, c, plan.window_h, plan.window_w);
    seq.steps.col(t) = phi(patch);
  }
  if (perturbation && perturbation->kind == PerturbationKind::kConstantShift) {
    return perturb_sequence_constant(seq, perturbation->magnitude);
  }
  return seq;
}

// ---------------------------------------------------------------- datasets

Sequence SequenceDataset::perturbed_train(std::size_t i, const PerturbationSpec& spec) const {
  require(i < train_source.size(), ErrorCode::kIndexOutOfRange, "sequence index out of range");
  const SequenceSource& src = train_source[i];
  return make_sequence(train_images[src.image], paths[src.path], featurizer, spec, i);
}

std::string SequenceDataset::manifest() const {
  std::ostringstream out;
  out << "# image manifest: id,split,label (labels 1-based)\n";
  out << "paths=";
  for (std::size_t i = 0; i < paths.size(); ++i) out << (i ? ";" : "") << paths[i].name;
  out << "\nwindow=" << config.window << "\nfactor=" << config.factor
      << "\nlength=" << config.length << "\npath_seed=" << config.path_seed
      << "\nfeature_offset=" << format_double(featurizer.offset)
      << "\nfeature_scale=" << format_double(featurizer.scale) << "\n";
  out << "id,split,label\n";
  for (const auto& img : train_images) out << img.id << ",train," << img.label + 1 << '\n';
  for (const auto& img : test_images) out << img.id << ",test," << img.label + 1 << '\n';
  return out.str();
}

SequenceDataset build_sequences(std::vector<GridImage> train_images,
                                std::vector<GridImage> test_images, int num_classes,
                                const SequenceConfig& config) {
  require(!train_images.empty(), ErrorCode::kInvalidInput, "no training images");
  require(num_classes >= 2, ErrorCode::kInvalidInput, "need at least two classes");
  SequenceDataset ds;
  ds.config = config;
  ds.num_classes = num_classes;
  const auto H = static_cast<int>(train_images.front().pixels.rows());
  const auto W = static_cast<int>(train_images.front().pixels.cols());
  for (const auto* set : {&train_images, &test_images}) {
    for (const GridImage& img : *set) {
      require(img.pixels.rows() == H && img.pixels.cols() == W, ErrorCode::kDimensionMismatch,
              "images differ in size");
      require(img.label >= 0 && img.label < num_classes, ErrorCode::kInvalidInput,
              "image " + img.id + " has label outside [0, m)");
    }
  }
  ds.paths = standard_paths(H, W, config.window, config.window, config.length, config.path_seed);

  std::vector<Eigen::MatrixXd> fit_patches;
  for (const GridImage& img : train_images) {
    for (const PathPlan& p : ds.paths) {
      for (auto& patch : patch_walk(img, p)) fit_patches.push_back(std::move(patch));
    }
  }
  ds.featurizer = Featurizer::fit(config.window, config.window, config.factor, fit_patches);

  ds.train_images = std::move(train_images);
  ds.test_images = std::move(test_images);
  for (std::size_t i = 0; i < ds.train_images.size(); ++i) {
    for (std::size_t p = 0; p < ds.paths.size(); ++p) {
      ds.train.push_back(make_sequence(ds.train_images[i], ds.paths[p], ds.featurizer));
      ds.train_source.push_back({i, p});
    }
  }
  for (std::size_t i = 0; i < ds.test_images.size(); ++i) {
    for (std::size_t p = 0; p < ds.paths.size(); ++p) {
      ds.test.push_back(make_sequence(ds.test_images[i], ds.paths[p], ds.featurizer));
      ds.test_source.push_back({i, p});
    }
  }
  return ds;
}

ImageSplit synth_maps(std::uint64_t seed, int m, int height, int width, int per_class_train,
                      int per_class_test) {
  require(m >= 2, ErrorCode::kInvalidInput, "need at least two classes");
  require(height >= 8 && width >= 8, ErrorCode::kInvalidInput, "maps must be at least 8x8");
  require(per_class_train >= 0 && per_class_test >= 0, ErrorCode::kInvalidInput,
          "negative image count");

  // Blob layouts: unordered pairs of cells in a 3 x 3 block grid.
  std::vector<std::pair<int, int>> layouts;
  for (int a = 0; a < 9; ++a) {
    for (int b = a + 1; b < 9; ++b) layouts.emplace_back(a, b);
  }
  const double block_h = height / 3.0;
  const double block_w = width / 3.0;
  const double blob_sigma = std::min(block_h, block_w) / 3.2;

  auto render = [&](int k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> tilt(-0.4, 0.4);
    const double angle = std::numbers::pi * k / m + tilt(rng);
    const double period = 8.0 + 2.0 * (k % 3);
    const double freq = 2.0 * std::numbers::pi / period;
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> shift(-5.0, 5.0);
    std::uniform_real_distribution<double> gain(0.75, 1.25);
    std::normal_distribution<double> pixel_noise(0.0, 0.3);
    const double phi = phase(rng);
    const auto [b1, b2] = layouts[static_cast<std::size_t>(k) % layouts.size()];
    struct Blob {
      double r, c, amp;
    };
    std::vector<Blob> blobs;
    for (int cell : {b1, b2}) {
      const double r = (cell / 3 + 0.5) * block_h + shift(rng);
      const double c = (cell % 3 + 0.5) * block_w + shift(rng);
      blobs.push_back({r, c, 0.45 * gain(rng)});
    }
    Eigen::MatrixXd px(height, width);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        double v = 0.3 + 0.2 * std::cos(freq * (r * std::sin(angle) + c * std::cos(angle)) + phi);
        for (const Blob& b : blobs) {
          const double d2 = (r - b.r) * (r - b.r) + (c - b.c) * (c - b.c);
          v += b.amp * std::exp(-d2 / (2.0 * blob_sigma * blob_sigma));
        }
        px(r, c) = std::clamp(v + pixel_noise(rng), 0.0, 1.0);
      }
    }
    return px;
  };

  ImageSplit split;
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < per_class_train + per_class_test; ++i) {
      auto rng = make_rng(seed, static_cast<std::uint64_t>(k) * 100003ULL + static_cast<std::uint64_t>(i));
      const bool is_train = i < per_class_train;
      GridImage img;
      img.pixels = render(k, rng);
      img.label = k;
      const int index = is_train ? i : i - per_class_train;
      img.id = std::string(is_train ? "train" : "test") + "_c" + std::to_string(k + 1) + "_" +
               std::to_string(index);
      (is_train ? split.train : split.test).push_back(std::move(img));
    }
  }
  return split;
}

// ---------------------------------------------------------------- IDX

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

void write_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex;
  s.width(8);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace

std::vector<Eigen::MatrixXd> decode_idx_images(const std::string& bytes) {
  require(bytes.size() >= 16, ErrorCode::kFormat,
          "truncated IDX image header: expected 16 bytes, got " + std::to_string(bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  require(magic == kIdxImageMagic, ErrorCode::kFormat,
          "bad IDX image magic " + hex32(magic) + ", expected " + hex32(kIdxImageMagic));
  const std::uint64_t n = read_be32(bytes, 4);
  const std::uint64_t rows = read_be32(bytes, 8);
  const std::uint64_t cols = read_be32(bytes, 12);
  const std::uint64_t expected = 16 + n * rows * cols;
  require(bytes.size() >= expected, ErrorCode::kFormat,
          "truncated IDX image payload: expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(bytes.size()));
  require(bytes.size() == expected, ErrorCode::kFormat,
          "IDX image file has " + std::to_string(bytes.size() - expected) + " trailing bytes");
  std::vector<Eigen::MatrixXd> images(n, Eigen::MatrixXd(rows, cols));
  std::size_t pos = 16;
  for (auto& img : images) {
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(rows); ++r) {
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(cols); ++c) {
        img(r, c) = static_cast<unsigned char>(bytes[pos++]) / 255.0;
      }
    }
  }
  return images;
}

std::vector<int> decode_idx_labels(const std::string& bytes) {
  require(bytes.size() >= 8, ErrorCode::kFormat,
          "truncated IDX label header: expected 8 bytes, got " + std::to_string(bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  require(magic == kIdxLabelMagic, ErrorCode::kFormat,
          "bad IDX label magic " + hex32(magic) + ", expected " + hex32(kIdxLabelMagic));
  const std::uint64_t n = read_be32(bytes, 4);
  const std::uint64_t expected = 8 + n;
  require(bytes.size() >= expected, ErrorCode::kFormat,
          "truncated IDX label payload: expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(bytes.size()));
  require(bytes.size() == expected, ErrorCode::kFormat,
          "IDX label file has " + std::to_string(bytes.size() - expected) + " trailing bytes");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

std::string encode_idx_images(const std::vector<Eigen::MatrixXd>& images) {
  std::string out;
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  const auto rows = images.empty() ? 0 : images.front().rows();
  const auto cols = images.empty() ? 0 : images.front().cols();
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    require(img.rows() == rows && img.cols() == cols, ErrorCode::kDimensionMismatch,
            "IDX images must share one shape");
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        out.push_back(static_cast<char>(std::lround(std::clamp(img(r, c), 0.0, 1.0) * 255.0)));
      }
    }
  }
  return out;
}

std::string encode_idx_labels(const std::vector<int>& labels) {
  std::string out;
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    require(l >= 0 && l <= 255, ErrorCode::kInvalidInput, "IDX labels are bytes");
    out.push_back(static_cast<char>(l));
  }
  return out;
}

std::vector<Eigen::MatrixXd> read_idx_images(const std::filesystem::path& path) {
  return decode_idx_images(slurp(path));
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  return decode_idx_labels(slurp(path));
}

std::vector<GridImage> load_idx(const std::filesystem::path& images,
                                const std::filesystem::path& labels,
                                const std::string& id_prefix) {
  auto pixels = read_idx_images(images);
  const auto ys = read_idx_labels(labels);
  require(pixels.size() == ys.size(), ErrorCode::kFormat,
          "image/label count mismatch: " + std::to_string(pixels.size()) + " images vs " +
              std::to_string(ys.size()) + " labels");
  std::vector<GridImage> out(pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].pixels = std::move(pixels[i]);
    out[i].label = ys[i];
    out[i].id = id_prefix + std::to_string(i);
  }
  return out;
}

}  // namespace crnn

#include "crnn/lstm_io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace crnn {
namespace {

static_assert(std::numeric_limits<double>::is_iec559);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      fail(ErrorCode::kFormat, std::string("truncated pack while reading ") + what +
                                   ": need " + std::to_string(n) + " bytes at offset " +
                                   std::to_string(pos_) + ", have " +
                                   std::to_string(bytes_.size() - pos_));
    }
  }
  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string str(const char* what) {
    const auto n = static_cast<std::size_t>(uint(4, what));
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  double f64() {
    const std::uint64_t bits = uint(8, "array value");
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string encode_binary(const Pack& pack) {
  std::string out(kPackMagic, sizeof kPackMagic);
  put_u32(out, kPackVersion);
  put_u64(out, pack.a);
  put_u64(out, pack.b);
  put_u64(out, pack.m);
  put_u32(out, static_cast<std::uint32_t>(pack.meta.size()));
  for (const auto& [k, v] : pack.meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(pack.arrays.size()));
  for (const auto& [name, values] : pack.arrays) {
    put_str(out, name);
    put_u64(out, static_cast<std::uint64_t>(values.rows()));
    put_u64(out, static_cast<std::uint64_t>(values.cols()));
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      for (Eigen::Index c = 0; c < values.cols(); ++c) put_f64(out, values(r, c));
    }
  }
  return out;
}

Pack decode_binary(const std::string& bytes) {
  Reader in(bytes);
  in.skip(sizeof kPackMagic);
  const auto version = in.uint(4, "version");
  require(version == kPackVersion, ErrorCode::kFormat,
          "unsupported pack version " + std::to_string(version));
  Pack pack;
  pack.a = in.uint(8, "dims");
  pack.b = in.uint(8, "dims");
  pack.m = in.uint(8, "dims");
  const auto n_meta = in.uint(4, "metadata count");
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = in.str("metadata key");
    std::string v = in.str("metadata value");
    pack.meta.emplace_back(std::move(k), std::move(v));
  }
  const auto n_arrays = in.uint(4, "array count");
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    std::string name = in.str("array name");
    const auto rows = in.uint(8, "array rows");
    const auto cols = in.uint(8, "array cols");
    require(rows < (1ULL << 31) && cols < (1ULL << 31), ErrorCode::kFormat,
            "array " + name + " has absurd shape");
    in.need(static_cast<std::size_t>(rows * cols * 8), "array payload");
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      for (Eigen::Index c = 0; c < values.cols(); ++c) values(r, c) = in.f64();
    }
    pack.arrays.emplace_back(std::move(name), std::move(values));
  }
  require(in.pos() == bytes.size(), ErrorCode::kFormat, "trailing bytes after pack");
  return pack;
}

std::string encode_text(const Pack& pack) {
  std::ostringstream out;
  out << "CRNNPACK text " << kPackVersion << "\n";
  out << "dims " << pack.a << ' ' << pack.b << ' ' << pack.m << "\n";
  for (const auto& [k, v] : pack.meta) {
    require(k.find_first_of(" \n") == std::string::npos && v.find('\n') == std::string::npos,
            ErrorCode::kFormat, "metadata key/value not representable in text: " + k);
    out << "meta " << k << ' ' << v << "\n";
  }
  for (const auto& [name, values] : pack.arrays) {
    out << "array " << name << ' ' << values.rows() << ' ' << values.cols() << "\n";
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(values(r, c));
      }
      out << "\n";
    }
  }
  out << "end\n";
  return out.str();
}

Pack decode_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat,
            std::string("unexpected end of text pack, expected ") + what);
    ++line_no;
  };
  auto bad = [&](const std::string& why) {
    fail(ErrorCode::kFormat, "text pack line " + std::to_string(line_no) + ": " + why);
  };

  next_line("header");
  if (line != "CRNNPACK text 1") bad("bad header '" + line + "'");
  Pack pack;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    if (tag == "dims") {
      if (!(fields >> pack.a >> pack.b >> pack.m)) bad("malformed dims");
    } else if (tag == "meta") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      pack.meta.emplace_back(key, value);
    } else if (tag == "array") {
      std::string name;
      Eigen::Index rows = 0;
      Eigen::Index cols = 0;
      if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) bad("malformed array header");
      Eigen::MatrixXd values(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        next_line("array row");
        std::istringstream row(line);
        std::string token;
        for (Eigen::Index c = 0; c < cols; ++c) {
          if (!(row >> token)) bad("array " + name + " row too short");
          values(r, c) = parse_double(token);
        }
        if (row >> token) bad("array " + name + " row too long");
      }
      pack.arrays.emplace_back(name, std::move(values));
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      bad("unknown record '" + tag + "'");
    }
  }
  if (!ended) fail(ErrorCode::kFormat, "text pack missing 'end'");
  return pack;
}

}  // namespace

const Eigen::MatrixXd* Pack::find(const std::string& name) const {
  for (const auto& [n, values] : arrays) {
    if (n == name) return &values;
  }
  return nullptr;
}

const Eigen::MatrixXd& Pack::at(const std::string& name) const {
  const Eigen::MatrixXd* v = find(name);
  require(v != nullptr, ErrorCode::kFormat, "pack has no array '" + name + "'");
  return *v;
}

std::optional<std::string> Pack::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void Pack::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

void Pack::add(const std::string& name, Eigen::MatrixXd values) {
  require(find(name) == nullptr, ErrorCode::kFormat, "duplicate array '" + name + "'");
  arrays.emplace_back(name, std::move(values));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last, ErrorCode::kFormat,
          "not a number: '" + text + "'");
  return v;
}

std::string encode_pack(const Pack& pack, PackEncoding encoding) {
  return encoding == PackEncoding::kBinary ? encode_binary(pack) : encode_text(pack);
}

Pack decode_pack(const std::string& bytes) {
  // The text header shares the magic prefix, so test it first.
  if (bytes.rfind("CRNNPACK text", 0) == 0) return decode_text(bytes);
  if (bytes.size() >= sizeof kPackMagic &&
      std::memcmp(bytes.data(), kPackMagic, sizeof kPackMagic) == 0) {
    return decode_binary(bytes);
  }
  fail(ErrorCode::kFormat, "not a CRNNPACK container (bad magic)");
}

void write_pack(const Pack& pack, const std::filesystem::path& path, PackEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pack(pack, encoding);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

Pack read_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pack(bytes);
}

void store_weights(Pack& pack, const LstmWeights& w, const std::string& prefix) {
  w.validate();
  if (prefix.empty()) {
    pack.a = static_cast<std::uint64_t>(w.input_dim());
    pack.b = static_cast<std::uint64_t>(w.hidden_dim());
    pack.m = static_cast<std::uint64_t>(w.num_classes());
  }
  for_each_parameter(w, [&](const std::string& name, const auto& block) {
    pack.add(prefix + name, Eigen::MatrixXd(block));
  });
}

LstmWeights load_weights(const Pack& pack, const std::string& prefix) {
  const auto a = static_cast<Eigen::Index>(pack.a);
  const auto b = static_cast<Eigen::Index>(pack.b);
  const auto m = static_cast<Eigen::Index>(pack.m);
  LstmWeights w = LstmWeights::zeros(a, b, m);
  for_each_parameter(w, [&](const std::string& name, auto& block) {
    const Eigen::MatrixXd& stored = pack.at(prefix + name);
    require(stored.rows() == block.rows() && stored.cols() == block.cols(),
            ErrorCode::kDimensionMismatch,
            "array " + name + " has shape " + std::to_string(stored.rows()) + "x" +
                std::to_string(stored.cols()) + ", dims imply " + std::to_string(block.rows()) +
                "x" + std::to_string(block.cols()));
    block = stored;
  });
  w.validate();
  return w;
}

void save_weights(const LstmWeights& w, const std::filesystem::path& path, PackEncoding encoding) {
  Pack pack;
  pack.set_meta("kind", "weights");
  store_weights(pack, w);
  write_pack(pack, path, encoding);
}

LstmWeights load_weights(const std::filesystem::path& path) { return load_weights(read_pack(path)); }

void store_sequences(Pack& pack, const std::vector<Sequence>& sequences) {
  pack.set_meta("sequence_count", std::to_string(sequences.size()));
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const Sequence& s = sequences[i];
    const std::string key = "seq." + std::to_string(i);
    pack.add(key, s.steps);
    pack.set_meta(key + ".id", s.id);
    pack.set_meta(key + ".label", s.label ? std::to_string(*s.label) : "none");
  }
}

std::vector<Sequence> load_sequences(const Pack& pack) {
  const auto count_text = pack.meta_value("sequence_count");
  require(count_text.has_value(), ErrorCode::kFormat, "pack holds no sequences");
  const std::size_t count = std::stoul(*count_text);
  std::vector<Sequence> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string key = "seq." + std::to_string(i);
    out[i].steps = pack.at(key);
    out[i].id = pack.meta_value(key + ".id").value_or("");
    const std::string label = pack.meta_value(key + ".label").value_or("none");
    if (label != "none") out[i].label = std::stoi(label);
  }
  return out;
}

}  // namespace crnn

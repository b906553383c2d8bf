#pragma once

// Self-describing array container used for weights, checkpoints and cached
// sequences.
//
// Binary layout (little-endian):
//   8-byte magic "CRNNPACK", u32 version, u64 a, u64 b, u64 m,
//   u32 metadata count, then per entry (u32 length + bytes) for key and value,
//   u32 array count, then per array: u32 name length, name bytes, u64 rows,
//   u64 cols, rows*cols f64 values in row-major order.
// The text variant carries the same content line by line:
//   CRNNPACK text 1
//   dims <a> <b> <m>
//   meta <key> <value>
//   array <name> <rows> <cols>
//   <one line of space-separated values per row>
//   end
// Text values use the shortest round-trip decimal form.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crnn/lstm.hpp"

namespace crnn {

inline constexpr char kPackMagic[8] = {'C', 'R', 'N', 'N', 'P', 'A', 'C', 'K'};
inline constexpr std::uint32_t kPackVersion = 1;

enum class PackEncoding { kBinary, kText };

struct Pack {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t m = 0;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;

  const Eigen::MatrixXd* find(const std::string& name) const;
  const Eigen::MatrixXd& at(const std::string& name) const;
  std::optional<std::string> meta_value(const std::string& key) const;
  void set_meta(const std::string& key, const std::string& value);
  void add(const std::string& name, Eigen::MatrixXd values);
};

std::string encode_pack(const Pack& pack, PackEncoding encoding);
/// Detects the encoding from the leading bytes.
Pack decode_pack(const std::string& bytes);

void write_pack(const Pack& pack, const std::filesystem::path& path, PackEncoding encoding);
Pack read_pack(const std::filesystem::path& path);

/// Weights under the names produced by for_each_parameter, with dims set.
void store_weights(Pack& pack, const LstmWeights& w, const std::string& prefix = "");
LstmWeights load_weights(const Pack& pack, const std::string& prefix = "");

void save_weights(const LstmWeights& w, const std::filesystem::path& path,
                  PackEncoding encoding = PackEncoding::kBinary);
LstmWeights load_weights(const std::filesystem::path& path);

/// Sequences as arrays "seq.<i>" (a x T) with labels and ids in metadata.
void store_sequences(Pack& pack, const std::vector<Sequence>& sequences);
std::vector<Sequence> load_sequences(const Pack& pack);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

}  // namespace crnn

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsfn {

// Tensor record layout (all little-endian):
//   "TSTN" | u32 version | u32 ndim | u32 reserved   (16-byte header)
//   ndim x u64 dims | prod(dims) x f64 values
inline constexpr char kTensorMagic[4] = {'T', 'S', 'T', 'N'};
inline constexpr std::uint32_t kTensorVersion = 1;

// Checkpoint layout:
//   "TSFN" | u32 version | u32 config length | config text (key=value lines)
//   | raw f64 values of every tensor in declaration order
inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'F', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

void write_tensor_record(std::ostream& out, std::span<const std::uint64_t> dims,
                         std::span<const double> values);
TensorRecord read_tensor_record(std::istream& in);

void save_tensors(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> load_tensors(const std::filesystem::path& path);

using KeyValues = std::map<std::string, std::string>;

// "key = value" per line; '#' starts a comment.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& values);

struct CheckpointBlob {
  KeyValues config;
  std::vector<double> values;
};

void save_checkpoint(const std::filesystem::path& path, const KeyValues& config,
                     std::span<const std::span<const double>> tensors);
CheckpointBlob load_checkpoint(const std::filesystem::path& path);

}  // namespace tsfn

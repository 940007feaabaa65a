#include "tsfn/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tsfn/error.hpp"

namespace tsfn {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

namespace {

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    throw DataError("unexpected end of binary stream");
  }
  return value;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

void write_tensor_record(std::ostream& out, std::span<const std::uint64_t> dims,
                         std::span<const double> values) {
  std::uint64_t count = 1;
  for (auto d : dims) {
    count *= d;
  }
  if (count != values.size()) {
    throw ShapeError("write_tensor_record: dims do not match value count");
  }
  out.write(kTensorMagic, 4);
  write_pod<std::uint32_t>(out, kTensorVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  write_pod<std::uint32_t>(out, 0);
  for (auto d : dims) {
    write_pod<std::uint64_t>(out, d);
  }
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

TensorRecord read_tensor_record(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw DataError("tensor record: bad magic");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kTensorVersion) {
    throw DataError("tensor record: unsupported version " + std::to_string(version));
  }
  const auto ndim = read_pod<std::uint32_t>(in);
  read_pod<std::uint32_t>(in);
  TensorRecord record;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    record.dims.push_back(read_pod<std::uint64_t>(in));
    count *= record.dims.back();
  }
  record.values.resize(count);
  in.read(reinterpret_cast<char*>(record.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) {
    throw DataError("tensor record: truncated payload");
  }
  return record;
}

void save_tensors(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  for (const auto& r : records) {
    write_tensor_record(out, r.dims, r.values);
  }
}

std::vector<TensorRecord> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<TensorRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    records.push_back(read_tensor_record(in));
  }
  return records;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues values;
  std::istringstream lines{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const std::string body = trim(line);
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!values.emplace(key, trim(std::string_view(body).substr(eq + 1))).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return values;
}

std::string format_key_values(const KeyValues& values) {
  std::string text;
  for (const auto& [key, value] : values) {
    text += key + " = " + value + "\n";
  }
  return text;
}

void save_checkpoint(const std::filesystem::path& path, const KeyValues& config,
                     std::span<const std::span<const double>> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  const std::string text = format_key_values(config);
  out.write(kCheckpointMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

CheckpointBlob load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version");
  }
  const auto text_len = read_pod<std::uint32_t>(in);
  std::string text(text_len, '\0');
  in.read(text.data(), text_len);
  if (!in) {
    throw DataError("checkpoint: truncated config block");
  }
  CheckpointBlob blob;
  blob.config = parse_key_values(text);
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(double) != 0) {
    throw DataError("checkpoint: payload is not a whole number of float64 values");
  }
  blob.values.resize(rest.size() / sizeof(double));
  std::memcpy(blob.values.data(), rest.data(), rest.size());
  return blob;
}

}  // namespace tsfn

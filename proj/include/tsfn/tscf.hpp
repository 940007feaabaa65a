#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfn/backbone.hpp"
#include "tsfn/numlib.hpp"

namespace tsfn {

enum class FusionMethod { TSCF, Sum, Max, Bilinear };

std::string_view to_string(FusionMethod method);
FusionMethod parse_fusion_method(std::string_view name);

// Final feature maps of the three streams, each D x S x S.
struct StreamFeatures {
  Tensor3 app;
  Tensor3 mot;
  Tensor3 ego;

  const Tensor3& get(StreamKind kind) const;
  Tensor3& get(StreamKind kind);
};

// Per-frame fused vector, length D.
using CorrelationVector = std::vector<double>;

// Subset of streams taking part in fusion.
struct StreamSet {
  bool app = true;
  bool mot = true;
  bool ego = true;

  static StreamSet all() { return {}; }
  static StreamSet only(StreamKind kind);
  bool contains(StreamKind kind) const;
  int count() const { return int(app) + int(mot) + int(ego); }
  bool operator==(const StreamSet&) const = default;
};

// "app,mot" <-> StreamSet. "all" selects every stream.
StreamSet parse_stream_set(std::string_view text);
std::string to_string(const StreamSet& set);

Tensor3 sum_fuse(const Tensor3& x, const Tensor3& y);

// X = F F^T for the S x S slice F of channel d.
Matrix self_gram(const Tensor3& f_spa, std::size_t d);

// (F a) o (F b): Hadamard product of the top-down and bottom-up attentions.
std::vector<double> combined_attention(const Matrix& f_app_d, const Rank1Pair& pair);

// v[d] = max_i attentions[d][i].
std::vector<double> channel_max_pool(std::span<const std::vector<double>> attentions);
// v[d] = max over the spatial entries of channel d.
std::vector<double> channel_max_pool(const Tensor3& f);
// v[d] = mean over the spatial entries of channel d.
std::vector<double> channel_avg_pool(const Tensor3& f);

// Intermediates of one tscf_fuse call, rows indexed by channel.
struct TscfTrace {
  Tensor3 f_spa;
  Tensor3 f_tmo;
  Matrix a;  // D x S
  Matrix b;  // D x S
  Matrix c;  // D x S
  CorrelationVector v_cor;
};

// Three-stream correlation fusion:
//   f_spa = app + mot, f_tmo = mot + ego
//   per channel: (a, b) = rank-1 of f_spa_d f_spa_d^T, c_d = (f_app_d a) o (f_app_d b)
//   v_cor[d] = max(c_d) + mean(f_tmo_d)
CorrelationVector tscf_fuse(const StreamFeatures& features, TscfTrace* trace = nullptr);

inline constexpr std::uint64_t kBilinearProjectionSeed = 0xB11EA5ULL;

// Sum / Max: channel-wise spatial max of the combined map.
// Bilinear: spatially averaged outer product of app with (mot + ego), signed
// square root, L2 normalisation, then a fixed Gaussian projection back to D.
CorrelationVector baseline_fuse(const StreamFeatures& features, FusionMethod method,
                                std::uint64_t projection_seed = kBilinearProjectionSeed);

// Fusion with some streams switched off. Excluded maps are zeroed before the
// chosen method runs; a single enabled stream is channel-average pooled.
CorrelationVector fuse_streams(const StreamFeatures& features, FusionMethod method,
                               const StreamSet& streams);

// Writes f_spa, f_tmo, a, b, c, v_cor as consecutive tensor records.
void save_trace(const std::filesystem::path& path, const TscfTrace& trace);

}  // namespace tsfn

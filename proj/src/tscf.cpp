#include "tsfn/tscf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsfn/container.hpp"
#include "tsfn/error.hpp"

namespace tsfn {

std::string_view to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::TSCF:
      return "tscf";
    case FusionMethod::Sum:
      return "sum";
    case FusionMethod::Max:
      return "max";
    case FusionMethod::Bilinear:
      return "bilinear";
  }
  return "?";
}

FusionMethod parse_fusion_method(std::string_view name) {
  if (name == "tscf") return FusionMethod::TSCF;
  if (name == "sum") return FusionMethod::Sum;
  if (name == "max") return FusionMethod::Max;
  if (name == "bilinear") return FusionMethod::Bilinear;
  throw ConfigError("unknown fusion method '" + std::string(name) +
                    "' (expected tscf, sum, max or bilinear)");
}

const Tensor3& StreamFeatures::get(StreamKind kind) const {
  switch (kind) {
    case StreamKind::Appearance:
      return app;
    case StreamKind::TargetMotion:
      return mot;
    case StreamKind::EgoMotion:
      return ego;
  }
  return app;
}

Tensor3& StreamFeatures::get(StreamKind kind) {
  return const_cast<Tensor3&>(std::as_const(*this).get(kind));
}

StreamSet StreamSet::only(StreamKind kind) {
  return {kind == StreamKind::Appearance, kind == StreamKind::TargetMotion,
          kind == StreamKind::EgoMotion};
}

bool StreamSet::contains(StreamKind kind) const {
  switch (kind) {
    case StreamKind::Appearance:
      return app;
    case StreamKind::TargetMotion:
      return mot;
    case StreamKind::EgoMotion:
      return ego;
  }
  return false;
}

StreamSet parse_stream_set(std::string_view text) {
  if (text == "all") {
    return StreamSet::all();
  }
  StreamSet set{false, false, false};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find_first_of(",+", pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      switch (parse_stream_kind(item)) {
        case StreamKind::Appearance:
          set.app = true;
          break;
        case StreamKind::TargetMotion:
          set.mot = true;
          break;
        case StreamKind::EgoMotion:
          set.ego = true;
          break;
      }
    }
    pos = comma + 1;
  }
  if (set.count() == 0) {
    throw ConfigError("stream subset is empty");
  }
  return set;
}

std::string to_string(const StreamSet& set) {
  std::string out;
  for (StreamKind k : kAllStreams) {
    if (set.contains(k)) {
      if (!out.empty()) out += ",";
      out += to_string(k);
    }
  }
  return out;
}

namespace {

void require_same_shape(const Tensor3& x, const Tensor3& y, const char* op) {
  if (!x.same_shape(y)) {
    throw ShapeError(std::string(op) + ": feature maps differ in shape");
  }
}

void require_features(const StreamFeatures& f) {
  require_same_shape(f.app, f.mot, "fusion");
  require_same_shape(f.app, f.ego, "fusion");
  if (f.app.height() != f.app.width()) {
    throw ShapeError("fusion: feature maps must be spatially square");
  }
}

}  // namespace

Tensor3 sum_fuse(const Tensor3& x, const Tensor3& y) {
  require_same_shape(x, y, "sum_fuse");
  Tensor3 out = x;
  auto dst = out.data();
  auto src = y.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
  return out;
}

Matrix self_gram(const Tensor3& f_spa, std::size_t d) {
  if (d >= f_spa.channels()) {
    throw ConfigError("self_gram: channel out of range");
  }
  const std::size_t h = f_spa.height();
  const std::size_t w = f_spa.width();
  Matrix x(h, h);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = i; j < h; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w; ++k) {
        acc += f_spa.at(d, i, k) * f_spa.at(d, j, k);
      }
      x(i, j) = acc;
      x(j, i) = acc;
    }
  }
  return x;
}

std::vector<double> combined_attention(const Matrix& f_app_d, const Rank1Pair& pair) {
  if (pair.a.size() != f_app_d.cols() || pair.b.size() != f_app_d.cols()) {
    throw ShapeError("combined_attention: factor length does not match slice width");
  }
  std::vector<double> top_down = f_app_d.multiply(pair.a);
  const std::vector<double> bottom_up = f_app_d.multiply(pair.b);
  for (std::size_t i = 0; i < top_down.size(); ++i) {
    top_down[i] *= bottom_up[i];
  }
  return top_down;
}

std::vector<double> channel_max_pool(std::span<const std::vector<double>> attentions) {
  std::vector<double> v(attentions.size(), 0.0);
  for (std::size_t d = 0; d < attentions.size(); ++d) {
    if (attentions[d].empty()) {
      throw ShapeError("channel_max_pool: empty attention vector");
    }
    v[d] = *std::max_element(attentions[d].begin(), attentions[d].end());
  }
  return v;
}

std::vector<double> channel_max_pool(const Tensor3& f) {
  std::vector<double> v(f.channels(), 0.0);
  for (std::size_t d = 0; d < f.channels(); ++d) {
    auto plane = f.channel(d);
    v[d] = *std::max_element(plane.begin(), plane.end());
  }
  return v;
}

std::vector<double> channel_avg_pool(const Tensor3& f) {
  std::vector<double> v(f.channels(), 0.0);
  const double inv = f.plane_size() > 0 ? 1.0 / static_cast<double>(f.plane_size()) : 0.0;
  for (std::size_t d = 0; d < f.channels(); ++d) {
    auto plane = f.channel(d);
    v[d] = std::accumulate(plane.begin(), plane.end(), 0.0) * inv;
  }
  return v;
}

CorrelationVector tscf_fuse(const StreamFeatures& features, TscfTrace* trace) {
  require_features(features);
  const std::size_t channels = features.app.channels();
  const std::size_t side = features.app.height();

  Tensor3 f_spa = sum_fuse(features.app, features.mot);
  Tensor3 f_tmo = sum_fuse(features.mot, features.ego);

  std::vector<std::vector<double>> attentions(channels);
  if (trace != nullptr) {
    trace->a = Matrix(channels, side);
    trace->b = Matrix(channels, side);
    trace->c = Matrix(channels, side);
  }
  for (std::size_t d = 0; d < channels; ++d) {
    const Rank1Pair pair = rank1_approx(self_gram(f_spa, d));
    attentions[d] = combined_attention(features.app.slice(d), pair);
    if (trace != nullptr) {
      std::copy(pair.a.begin(), pair.a.end(), trace->a.row(d).begin());
      std::copy(pair.b.begin(), pair.b.end(), trace->b.row(d).begin());
      std::copy(attentions[d].begin(), attentions[d].end(), trace->c.row(d).begin());
    }
  }

  CorrelationVector v_cor = channel_max_pool(attentions);
  const std::vector<double> v_tmo = channel_avg_pool(f_tmo);
  for (std::size_t d = 0; d < channels; ++d) {
    v_cor[d] += v_tmo[d];
  }
  if (trace != nullptr) {
    trace->f_spa = std::move(f_spa);
    trace->f_tmo = std::move(f_tmo);
    trace->v_cor = v_cor;
  }
  return v_cor;
}

CorrelationVector baseline_fuse(const StreamFeatures& features, FusionMethod method,
                                std::uint64_t projection_seed) {
  require_features(features);
  switch (method) {
    case FusionMethod::TSCF:
      throw ConfigError("baseline_fuse: use tscf_fuse for the TSCF method");
    case FusionMethod::Sum:
      return channel_max_pool(sum_fuse(sum_fuse(features.app, features.mot), features.ego));
    case FusionMethod::Max: {
      Tensor3 combined = features.app;
      auto dst = combined.data();
      auto mot = features.mot.data();
      auto ego = features.ego.data();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = std::max({dst[i], mot[i], ego[i]});
      }
      return channel_max_pool(combined);
    }
    case FusionMethod::Bilinear: {
      const Tensor3 motion = sum_fuse(features.mot, features.ego);
      const std::size_t d = features.app.channels();
      const std::size_t area = features.app.plane_size();
      std::vector<double> outer(d * d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        auto left = features.app.channel(i);
        for (std::size_t j = 0; j < d; ++j) {
          auto right = motion.channel(j);
          double acc = 0.0;
          for (std::size_t p = 0; p < area; ++p) {
            acc += left[p] * right[p];
          }
          outer[i * d + j] = acc / static_cast<double>(area);
        }
      }
      for (double& e : outer) {
        e = std::copysign(std::sqrt(std::abs(e)), e);
      }
      const double norm = l2_norm(outer);
      if (norm > 0.0) {
        for (double& e : outer) e /= norm;
      }
      // Projection rows are regenerated on each call rather than stored, so
      // the D x D^2 matrix never exists in memory.
      SeededRng rng(projection_seed);
      const double scale = 1.0 / std::sqrt(static_cast<double>(d));
      CorrelationVector v(d, 0.0);
      for (std::size_t k = 0; k < d; ++k) {
        double acc = 0.0;
        for (double e : outer) {
          acc += rng.normal() * e;
        }
        v[k] = acc * scale;
      }
      return v;
    }
  }
  throw ConfigError("baseline_fuse: unknown method");
}

CorrelationVector fuse_streams(const StreamFeatures& features, FusionMethod method,
                               const StreamSet& streams) {
  if (streams.count() == 0) {
    throw ConfigError("fuse_streams: no streams enabled");
  }
  if (streams.count() == 1) {
    for (StreamKind k : kAllStreams) {
      if (streams.contains(k)) {
        return channel_avg_pool(features.get(k));
      }
    }
  }
  if (streams.count() == 3) {
    return method == FusionMethod::TSCF ? tscf_fuse(features) : baseline_fuse(features, method);
  }
  StreamFeatures masked = features;
  for (StreamKind k : kAllStreams) {
    if (!streams.contains(k)) {
      Tensor3& t = masked.get(k);
      std::fill(t.data().begin(), t.data().end(), 0.0);
    }
  }
  return method == FusionMethod::TSCF ? tscf_fuse(masked) : baseline_fuse(masked, method);
}

void save_trace(const std::filesystem::path& path, const TscfTrace& trace) {
  auto tensor_record = [](const Tensor3& t) {
    return TensorRecord{{t.channels(), t.height(), t.width()},
                        std::vector<double>(t.data().begin(), t.data().end())};
  };
  auto matrix_record = [](const Matrix& m) {
    return TensorRecord{{m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end())};
  };
  save_tensors(path, {tensor_record(trace.f_spa), tensor_record(trace.f_tmo),
                      matrix_record(trace.a), matrix_record(trace.b), matrix_record(trace.c),
                      TensorRecord{{trace.v_cor.size()}, trace.v_cor}});
}

}  // namespace tsfn

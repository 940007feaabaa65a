#include "tsfn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "tsfn/error.hpp"

namespace tsfn {

namespace fs = std::filesystem;

namespace {

std::ostream* g_progress = nullptr;

void progress(const std::string& message) {
  if (g_progress != nullptr) {
    *g_progress << "[tsfn] " << message << std::endl;
  }
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, int>) {
      out = std::stoi(v, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
      out = std::stoull(v, &used);
    } else {
      out = std::stod(v, &used);
    }
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  }
}

std::size_t stream_index(StreamKind kind) { return static_cast<std::size_t>(kind); }

std::string stream_checkpoint_name(StreamKind kind) {
  return "backbone_" + std::string(to_string(kind)) + ".ckpt";
}

}  // namespace

void set_progress_stream(std::ostream* stream) { g_progress = stream; }

ExperimentConfig ExperimentConfig::desk() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::paper_shape() {
  ExperimentConfig c;
  c.input_size = 224;
  c.conv_blocks = "16p,32p,64p,128p,512p";
  c.flow_pairs = 10;
  c.interval_length = 3;
  c.lstm_hidden = 700;
  c.backbone.learning_rate = 1e-5;
  c.backbone.batch_size = 20;
  c.lstm.learning_rate = 1e-4;
  c.lstm.iterations = 1000;
  c.lstm.batch_size = 0;
  return c;
}

int ExperimentConfig::feature_channels() const {
  const auto blocks = parse_blocks(conv_blocks);
  if (blocks.empty()) throw ConfigError("conv_blocks is empty");
  return blocks.back().out_channels;
}

int ExperimentConfig::feature_spatial() const {
  ConvNetConfig c;
  c.input_size = input_size;
  c.blocks = parse_blocks(conv_blocks);
  return c.feature_spatial();
}

std::size_t ExperimentConfig::interval_width() const {
  return static_cast<std::size_t>(feature_channels()) * static_cast<std::size_t>(interval_length + 1);
}

std::size_t ExperimentConfig::encoding_length() const {
  const std::size_t n = interval_width();
  return is_power_of_two(n) ? n : next_power_of_two(n);
}

ConvNetConfig ExperimentConfig::stream_config(StreamKind kind, int classes) const {
  ConvNetConfig c;
  c.input_size = input_size;
  c.input_channels = kind == StreamKind::Appearance ? 3 : 2 * flow_pairs;
  c.blocks = parse_blocks(conv_blocks);
  c.head_classes = classes;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (streams.count() == 0) throw ConfigError("no streams enabled");
  if (flow_pairs < 1) throw ConfigError("flow_pairs must be at least 1");
  if (interval_length < 0) throw ConfigError("interval_length must be nonnegative");
  if (sequence_length < 1) throw ConfigError("sequence_length must be at least 1");
  if (lstm_hidden < 1) throw ConfigError("lstm_hidden must be positive");
  if (eval_anchors < 1 || train_anchor_stride < 1 || phase1_frame_stride < 1) {
    throw ConfigError("anchor counts and strides must be positive");
  }
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (appearance_iterations < 0 || motion_iterations < 0 || lstm.iterations < 0) {
    throw ConfigError("iteration counts must be nonnegative");
  }
  if (backbone.batch_size < 1) throw ConfigError("backbone batch size must be positive");
  stream_config(StreamKind::Appearance, 2);
  if (!pad_intervals && !is_power_of_two(interval_width())) {
    throw ConfigError("D*(L+1) = " + std::to_string(interval_width()) +
                      " is not a power of two; enable pad_intervals");
  }
}

KeyValues ExperimentConfig::to_key_values() const {
  return {
      {"dataset", dataset.string()},
      {"output", output.string()},
      {"seed", std::to_string(seed)},
      {"split_seed", std::to_string(split_seed)},
      {"test_fraction", format_double(test_fraction)},
      {"fusion", std::string(to_string(fusion))},
      {"streams", to_string(streams)},
      {"input_size", std::to_string(input_size)},
      {"conv_blocks", conv_blocks},
      {"flow_pairs", std::to_string(flow_pairs)},
      {"interval_length", std::to_string(interval_length)},
      {"sequence_length", std::to_string(sequence_length)},
      {"lstm_hidden", std::to_string(lstm_hidden)},
      {"spectrum", std::string(to_string(spectrum))},
      {"pad_intervals", pad_intervals ? "true" : "false"},
      {"standardize", standardize ? "true" : "false"},
      {"eval_anchors", std::to_string(eval_anchors)},
      {"train_anchor_stride", std::to_string(train_anchor_stride)},
      {"phase1_frame_stride", std::to_string(phase1_frame_stride)},
      {"fallback_size", std::to_string(fallback_size)},
      {"backbone.learning_rate", format_double(backbone.learning_rate)},
      {"backbone.batch_size", std::to_string(backbone.batch_size)},
      {"backbone.decay", format_double(backbone.decay)},
      {"backbone.epsilon", format_double(backbone.epsilon)},
      {"backbone.appearance_iterations", std::to_string(appearance_iterations)},
      {"backbone.motion_iterations", std::to_string(motion_iterations)},
      {"lstm.learning_rate", format_double(lstm.learning_rate)},
      {"lstm.forget_bias", format_double(lstm.forget_bias)},
      {"lstm.init_std", format_double(lstm.init_std)},
      {"lstm.iterations", std::to_string(lstm.iterations)},
      {"lstm.batch_size", std::to_string(lstm.batch_size)},
      {"repeats", std::to_string(repeats)},
  };
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c = desk();
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "paper") {
      c = paper_shape();
    } else if (it->second != "desk") {
      throw ConfigError("unknown preset '" + it->second + "' (desk or paper)");
    }
  }
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"preset", [](auto&, auto&) {}},
      {"dataset", [&](auto&, auto& v) { c.dataset = v; }},
      {"output", [&](auto&, auto& v) { c.output = v; }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"split_seed", [&](auto& k, auto& v) { c.split_seed = parse_number<std::uint64_t>(k, v); }},
      {"test_fraction", [&](auto& k, auto& v) { c.test_fraction = parse_number<double>(k, v); }},
      {"fusion", [&](auto&, auto& v) { c.fusion = parse_fusion_method(v); }},
      {"streams", [&](auto&, auto& v) { c.streams = parse_stream_set(v); }},
      {"input_size", [&](auto& k, auto& v) { c.input_size = parse_number<int>(k, v); }},
      {"conv_blocks", [&](auto&, auto& v) { c.conv_blocks = v; }},
      {"flow_pairs", [&](auto& k, auto& v) { c.flow_pairs = parse_number<int>(k, v); }},
      {"interval_length", [&](auto& k, auto& v) { c.interval_length = parse_number<int>(k, v); }},
      {"sequence_length", [&](auto& k, auto& v) { c.sequence_length = parse_number<int>(k, v); }},
      {"lstm_hidden", [&](auto& k, auto& v) { c.lstm_hidden = parse_number<int>(k, v); }},
      {"spectrum", [&](auto&, auto& v) { c.spectrum = parse_spectrum_mode(v); }},
      {"pad_intervals", [&](auto& k, auto& v) { c.pad_intervals = parse_bool(k, v); }},
      {"standardize", [&](auto& k, auto& v) { c.standardize = parse_bool(k, v); }},
      {"eval_anchors", [&](auto& k, auto& v) { c.eval_anchors = parse_number<int>(k, v); }},
      {"train_anchor_stride",
       [&](auto& k, auto& v) { c.train_anchor_stride = parse_number<int>(k, v); }},
      {"phase1_frame_stride",
       [&](auto& k, auto& v) { c.phase1_frame_stride = parse_number<int>(k, v); }},
      {"fallback_size", [&](auto& k, auto& v) { c.fallback_size = parse_number<int>(k, v); }},
      {"backbone.learning_rate",
       [&](auto& k, auto& v) { c.backbone.learning_rate = parse_number<double>(k, v); }},
      {"backbone.batch_size",
       [&](auto& k, auto& v) { c.backbone.batch_size = parse_number<int>(k, v); }},
      {"backbone.decay", [&](auto& k, auto& v) { c.backbone.decay = parse_number<double>(k, v); }},
      {"backbone.epsilon",
       [&](auto& k, auto& v) { c.backbone.epsilon = parse_number<double>(k, v); }},
      {"backbone.appearance_iterations",
       [&](auto& k, auto& v) { c.appearance_iterations = parse_number<int>(k, v); }},
      {"backbone.motion_iterations",
       [&](auto& k, auto& v) { c.motion_iterations = parse_number<int>(k, v); }},
      {"lstm.learning_rate",
       [&](auto& k, auto& v) { c.lstm.learning_rate = parse_number<double>(k, v); }},
      {"lstm.forget_bias", [&](auto& k, auto& v) { c.lstm.forget_bias = parse_number<double>(k, v); }},
      {"lstm.init_std", [&](auto& k, auto& v) { c.lstm.init_std = parse_number<double>(k, v); }},
      {"lstm.iterations", [&](auto& k, auto& v) { c.lstm.iterations = parse_number<int>(k, v); }},
      {"lstm.batch_size", [&](auto& k, auto& v) { c.lstm.batch_size = parse_number<int>(k, v); }},
      {"repeats", [&](auto& k, auto& v) { c.repeats = parse_number<int>(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    it->second(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_key_values(parse_key_values(ss.str()));
}

void ExperimentConfig::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_key_values(to_key_values());
}

void save_bundle(const fs::path& dir, const ModelBundle& bundle) {
  fs::create_directories(dir);
  bundle.config.save(dir / "config.txt");
  {
    std::ofstream out(dir / "bundle.txt");
    out << format_key_values({{"classes", std::to_string(bundle.classes)},
                              {"trained_streams", to_string(bundle.config.streams)}});
  }
  for (StreamKind kind : kAllStreams) {
    if (const auto& model = bundle.stream(kind)) {
      save_params(dir / stream_checkpoint_name(kind), model->config, model->params);
    }
  }
  save_lstm(dir / "lstm.ckpt", bundle.lstm);
  save_tensors(dir / "normalizer.bin",
               {TensorRecord{{bundle.feature_mean.size()}, bundle.feature_mean},
                TensorRecord{{bundle.feature_scale.size()}, bundle.feature_scale}});
}

namespace {

std::array<std::optional<StreamModel>, 3> load_backbones(const fs::path& dir,
                                                         const StreamSet& streams) {
  std::array<std::optional<StreamModel>, 3> out;
  for (StreamKind kind : kAllStreams) {
    if (!streams.contains(kind)) continue;
    auto [cfg, params] = load_params(dir / stream_checkpoint_name(kind));
    out[stream_index(kind)] = StreamModel{std::move(cfg), std::move(params)};
  }
  return out;
}

int read_bundle_classes(const fs::path& dir) {
  std::ifstream in(dir / "bundle.txt");
  if (!in) throw DataError("no bundle.txt in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const KeyValues kv = parse_key_values(ss.str());
  auto it = kv.find("classes");
  if (it == kv.end()) throw DataError("bundle.txt lacks classes");
  return std::stoi(it->second);
}

}  // namespace

ModelBundle load_bundle(const fs::path& dir) {
  ModelBundle b;
  b.config = ExperimentConfig::load(dir / "config.txt");
  b.classes = read_bundle_classes(dir);
  b.streams = load_backbones(dir, b.config.streams);
  b.lstm = load_lstm(dir / "lstm.ckpt");
  const auto norm = load_tensors(dir / "normalizer.bin");
  if (norm.size() != 2) throw DataError("normalizer.bin: expected two records");
  b.feature_mean = norm[0].values;
  b.feature_scale = norm[1].values;
  return b;
}

DataSplit split_dataset(const Dataset& dataset, std::uint64_t seed, double test_fraction) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.classes));
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.clips[i].label)].push_back(i);
  }
  SeededRng rng(seed);
  DataSplit split;
  for (auto& ids : by_class) {
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[rng.below(i)]);
    }
    std::size_t n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
    if (ids.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
    else n_test = 0;
    split.test.insert(split.test.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::size_t correlation_steps(const Clip& clip, const ExperimentConfig& config) {
  const auto t = static_cast<std::size_t>(config.flow_pairs);
  return clip.flows.size() >= t ? clip.flows.size() - t + 1 : 0;
}

std::size_t anchor_count(const Clip& clip, const ExperimentConfig& config) {
  const std::size_t steps = correlation_steps(clip, config);
  const auto span = static_cast<std::size_t>(config.interval_length) +
                    static_cast<std::size_t>(config.sequence_length);
  return steps >= span ? steps - span + 1 : 0;
}

std::vector<std::size_t> uniform_anchors(std::size_t available, std::size_t count) {
  if (available == 0 || count == 0) return {};
  std::vector<std::size_t> anchors(count, 0);
  if (count == 1) return anchors;
  for (std::size_t j = 0; j < count; ++j) {
    anchors[j] = static_cast<std::size_t>(std::lround(static_cast<double>(j) *
                                                      static_cast<double>(available - 1) /
                                                      static_cast<double>(count - 1)));
  }
  return anchors;
}

Tensor3 stream_input(const Clip& clip, std::size_t t, StreamKind kind,
                     const ExperimentConfig& config) {
  const auto pairs = static_cast<std::size_t>(config.flow_pairs);
  const int n = config.input_size;
  const BoundingBox box = clamp_box(clip.boxes.at(t), clip.frames.at(t).width, clip.frames.at(t).height);
  switch (kind) {
    case StreamKind::Appearance:
      return box.present ? crop_resize_target(clip.frames[t], box, n)
                         : Tensor3(3, static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    case StreamKind::TargetMotion: {
      if (!box.present) {
        return Tensor3(2 * pairs, static_cast<std::size_t>(n), static_cast<std::size_t>(n));
      }
      return mask_flow_target(build_flow_stack(clip.flows, t, pairs), box, n);
    }
    case StreamKind::EgoMotion: {
      const FlowStack stack = build_flow_stack(clip.flows, t, pairs);
      if (!box.present) {
        return mask_flow_nontarget(stack, box, n);
      }
      // Each pair is masked by its own source-frame detection; misses reuse the box at t.
      std::vector<BoundingBox> pair_boxes(pairs, box);
      for (std::size_t k = 1; k < pairs; ++k) {
        if (clip.boxes.at(t + k).present) pair_boxes[k] = clip.boxes[t + k];
      }
      return mask_flow_nontarget(stack, pair_boxes, n);
    }
  }
  throw ConfigError("stream_input: unknown stream");
}

std::array<std::optional<StreamModel>, 3> train_backbones(const ExperimentConfig& config,
                                                          const Dataset& dataset,
                                                          const std::vector<std::size_t>& train) {
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  std::vector<int> labels;
  for (std::size_t id : train) {
    const Clip& clip = dataset.clips[id];
    const std::size_t steps = correlation_steps(clip, config);
    for (std::size_t t = 0; t < steps; t += static_cast<std::size_t>(config.phase1_frame_stride)) {
      samples.emplace_back(id, t);
      labels.push_back(clip.label);
    }
  }
  if (samples.empty()) {
    throw DataError("phase 1: no training frames (clips shorter than the flow window?)");
  }

  std::array<std::optional<StreamModel>, 3> out;
  for (StreamKind kind : kAllStreams) {
    if (!config.streams.contains(kind)) continue;
    Stopwatch watch;
    const ConvNetConfig net = config.stream_config(kind, dataset.classes);
    StreamDataset data{labels, [&, kind](std::size_t i) {
                         return stream_input(dataset.clips[samples[i].first], samples[i].second,
                                             kind, config);
                       }};
    RmsPropHyper hyper = config.backbone;
    hyper.iterations =
        kind == StreamKind::Appearance ? config.appearance_iterations : config.motion_iterations;
    hyper.seed = config.seed * 1000003ULL + stream_index(kind) + 1;
    StreamTrainResult trained = train_stream(data, net, hyper);
    const double final_loss = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();
    progress("phase 1: " + std::string(to_string(kind)) + " stream, " +
             std::to_string(hyper.iterations) + " iterations on " + std::to_string(samples.size()) +
             " frames, final batch loss " + fixed(final_loss, 4) + " (" + fixed(watch.seconds()) +
             " s)");
    out[stream_index(kind)] = StreamModel{net, std::move(trained.params)};
  }
  return out;
}

std::vector<StreamFeatures> extract_features(const ModelBundle& bundle, const Clip& clip) {
  const ExperimentConfig& config = bundle.config;
  const auto d = static_cast<std::size_t>(config.feature_channels());
  const auto s = static_cast<std::size_t>(config.feature_spatial());
  const std::size_t steps = correlation_steps(clip, config);
  std::vector<StreamFeatures> out(steps, StreamFeatures{Tensor3(d, s, s), Tensor3(d, s, s),
                                                        Tensor3(d, s, s)});
  for (StreamKind kind : kAllStreams) {
    const auto& model = bundle.stream(kind);
    if (!config.streams.contains(kind)) continue;
    if (!model) {
      throw DataError("bundle lacks a backbone for enabled stream " + std::string(to_string(kind)));
    }
    for (std::size_t t = 0; t < steps; ++t) {
      out[t].get(kind) =
          forward_features(model->params, model->config, stream_input(clip, t, kind, config));
    }
  }
  return out;
}

std::vector<std::vector<double>> interval_encodings(const std::vector<CorrelationVector>& vectors,
                                                    const ExperimentConfig& config) {
  const auto span = static_cast<std::size_t>(config.interval_length) + 1;
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t + span <= vectors.size(); ++t) {
    const std::vector<double> v_sub = interval_concat(
        std::span<const CorrelationVector>(vectors.data() + t, span));
    out.push_back(interval_encode(v_sub, config.spectrum, config.pad_intervals).values);
  }
  return out;
}

namespace {

std::vector<CorrelationVector> fuse_clip(const ExperimentConfig& config,
                                         const std::vector<StreamFeatures>& features) {
  std::vector<CorrelationVector> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    CorrelationVector v = fuse_streams(f, config.fusion, config.streams);
    if (!all_finite(v)) {
      throw NumericalError("fusion produced a non-finite correlation vector");
    }
    out.push_back(std::move(v));
  }
  return out;
}

void apply_normalizer(const ModelBundle& bundle, std::vector<double>& x) {
  if (bundle.feature_mean.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (x[i] - bundle.feature_mean[i]) / bundle.feature_scale[i];
  }
}

// Normalised encodings of one clip.
std::vector<std::vector<double>> clip_encodings(const ModelBundle& bundle,
                                                const std::vector<StreamFeatures>& features) {
  auto enc = interval_encodings(fuse_clip(bundle.config, features), bundle.config);
  for (auto& e : enc) apply_normalizer(bundle, e);
  return enc;
}

Sequence sequence_at(const std::vector<std::vector<double>>& encodings, std::size_t anchor,
                     std::size_t length) {
  return Sequence(encodings.begin() + static_cast<std::ptrdiff_t>(anchor),
                  encodings.begin() + static_cast<std::ptrdiff_t>(anchor + length));
}

}  // namespace

void train_temporal(ModelBundle& bundle, const Dataset& dataset,
                    const std::vector<std::size_t>& train,
                    const std::vector<std::vector<StreamFeatures>>& features) {
  const ExperimentConfig& config = bundle.config;
  Stopwatch watch;
  std::vector<std::vector<std::vector<double>>> raw;
  for (std::size_t id : train) {
    raw.push_back(interval_encodings(fuse_clip(config, features[id]), config));
  }

  const std::size_t width = config.encoding_length();
  bundle.feature_mean.assign(width, 0.0);
  bundle.feature_scale.assign(width, 1.0);
  if (config.standardize) {
    std::size_t count = 0;
    for (const auto& clip : raw) {
      for (const auto& e : clip) {
        for (std::size_t i = 0; i < width; ++i) bundle.feature_mean[i] += e[i];
        ++count;
      }
    }
    if (count == 0) throw DataError("phase 2: no training intervals");
    for (double& m : bundle.feature_mean) m /= static_cast<double>(count);
    std::vector<double> var(width, 0.0);
    for (const auto& clip : raw) {
      for (const auto& e : clip) {
        for (std::size_t i = 0; i < width; ++i) {
          const double dv = e[i] - bundle.feature_mean[i];
          var[i] += dv * dv;
        }
      }
    }
    for (std::size_t i = 0; i < width; ++i) {
      const double sd = std::sqrt(var[i] / static_cast<double>(count));
      // Constant features map to zero rather than blowing up.
      bundle.feature_scale[i] = sd > 1e-12 * std::max(1.0, std::abs(bundle.feature_mean[i])) ? sd : 1.0;
    }
  } else {
    bundle.feature_mean.clear();
    bundle.feature_scale.clear();
  }

  std::vector<SequenceExample> examples;
  const auto seq_len = static_cast<std::size_t>(config.sequence_length);
  for (std::size_t k = 0; k < train.size(); ++k) {
    auto& enc = raw[k];
    for (auto& e : enc) apply_normalizer(bundle, e);
    if (enc.size() < seq_len) continue;
    const std::size_t anchors = enc.size() - seq_len + 1;
    for (std::size_t a = 0; a < anchors; a += static_cast<std::size_t>(config.train_anchor_stride)) {
      examples.push_back({sequence_at(enc, a, seq_len), dataset.clips[train[k]].label});
    }
  }
  if (examples.empty()) {
    throw DataError("phase 2: clips too short for one LSTM sequence");
  }
  LstmHyper hyper = config.lstm;
  hyper.seed = config.seed * 7919ULL + 11;
  LstmTrainResult trained = train_lstm(examples, config.lstm_hidden, dataset.classes, hyper);
  bundle.lstm = std::move(trained.params);
  const double final_loss = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();
  progress("phase 2: " + std::string(to_string(config.fusion)) + " LSTM on " +
           std::to_string(examples.size()) + " sequences, final batch loss " + fixed(final_loss, 4) +
           " (" + fixed(watch.seconds()) + " s)");
}

std::vector<std::vector<double>> anchor_probabilities(const ModelBundle& bundle,
                                                      const std::vector<StreamFeatures>& features,
                                                      const std::vector<std::size_t>& anchors) {
  const auto enc = clip_encodings(bundle, features);
  const auto seq_len = static_cast<std::size_t>(bundle.config.sequence_length);
  std::vector<std::vector<double>> probs;
  for (std::size_t a : anchors) {
    if (a + seq_len > enc.size()) {
      throw DataError("anchor beyond the end of the clip");
    }
    const Sequence seq = sequence_at(enc, a, seq_len);
    probs.push_back(classify_sequence(bundle.lstm, seq));
  }
  return probs;
}

int predict_clip(const std::vector<std::vector<double>>& anchor_probs) {
  if (anchor_probs.empty()) throw DataError("predict_clip: no anchors");
  std::vector<double> mean(anchor_probs.front().size(), 0.0);
  for (const auto& p : anchor_probs) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
  }
  if (!all_finite(mean)) throw NumericalError("class probabilities are not finite");
  return static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
}

EvalReport evaluate(const ModelBundle& bundle, const Dataset& dataset,
                    const std::vector<std::size_t>& test, int repeats,
                    const std::vector<std::vector<StreamFeatures>>* cached) {
  if (bundle.classes != dataset.classes || bundle.lstm.classes != dataset.classes) {
    throw DataError("model has " + std::to_string(bundle.lstm.classes) + " classes, data has " +
                    std::to_string(dataset.classes));
  }
  if (repeats < 1) throw ConfigError("evaluate: repeats must be at least 1");
  const ExperimentConfig& config = bundle.config;

  std::vector<std::vector<std::vector<double>>> encodings;
  std::vector<int> truth;
  for (std::size_t id : test) {
    const Clip& clip = dataset.clips.at(id);
    if (anchor_count(clip, config) == 0) {
      throw DataError("test clip " + std::to_string(id) + " is too short for one LSTM sequence");
    }
    encodings.push_back(cached != nullptr ? clip_encodings(bundle, (*cached)[id])
                                          : clip_encodings(bundle, extract_features(bundle, clip)));
    truth.push_back(clip.label);
  }

  const auto seq_len = static_cast<std::size_t>(config.sequence_length);
  std::vector<double> accuracies;
  EvalReport first;
  for (int r = 0; r < repeats; ++r) {
    SeededRng rng(config.seed + static_cast<std::uint64_t>(r));
    std::vector<int> predicted;
    for (const auto& enc : encodings) {
      const std::size_t available = enc.size() - seq_len + 1;
      std::vector<std::size_t> anchors;
      if (r == 0) {
        anchors = uniform_anchors(available, static_cast<std::size_t>(config.eval_anchors));
      } else {
        for (int j = 0; j < config.eval_anchors; ++j) anchors.push_back(rng.below(available));
      }
      std::vector<std::vector<double>> probs;
      for (std::size_t a : anchors) {
        probs.push_back(classify_sequence(bundle.lstm, sequence_at(enc, a, seq_len)));
      }
      predicted.push_back(predict_clip(probs));
    }
    EvalReport rep = EvalReport::from_predictions(dataset.classes, truth, predicted);
    accuracies.push_back(rep.accuracy);
    if (r == 0) first = std::move(rep);
  }
  first.repeat_accuracies = accuracies;
  first.mean_accuracy =
      std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(repeats);
  first.metadata = {
      {"fusion", std::string(to_string(config.fusion))},
      {"streams", to_string(config.streams)},
      {"seed", std::to_string(config.seed)},
      {"split_seed", std::to_string(config.split_seed)},
      {"test_clips", std::to_string(test.size())},
      {"spectrum", std::string(to_string(config.spectrum))},
      {"repeats", std::to_string(repeats)},
      {"anchors_per_clip", std::to_string(config.eval_anchors)},
  };
  return first;
}

namespace {

struct LoadedData {
  Dataset dataset;
  DataSplit split;
};

LoadedData load_and_split(const ExperimentConfig& config) {
  if (config.dataset.empty()) {
    throw ConfigError("no dataset path configured");
  }
  LoadedData d{load_dataset(config.dataset), {}};
  d.split = split_dataset(d.dataset, config.split_seed, config.test_fraction);
  if (d.split.train.empty() || d.split.test.empty()) {
    throw DataError("dataset too small for a train/test split");
  }
  for (const Clip& clip : d.dataset.clips) {
    if (anchor_count(clip, config) == 0) {
      throw DataError("clip with " + std::to_string(clip.frames.size()) +
                      " frames is too short for T, L and sequence_length");
    }
  }
  return d;
}

std::vector<std::vector<StreamFeatures>> extract_all(const ModelBundle& bundle,
                                                     const Dataset& dataset) {
  Stopwatch watch;
  std::vector<std::vector<StreamFeatures>> features;
  features.reserve(dataset.clips.size());
  for (const Clip& clip : dataset.clips) {
    features.push_back(extract_features(bundle, clip));
  }
  progress("features extracted for " + std::to_string(dataset.clips.size()) + " clips (" +
           fixed(watch.seconds()) + " s)");
  return features;
}

EvalReport finish_phase2(ModelBundle& bundle, const LoadedData& data) {
  const auto features = extract_all(bundle, data.dataset);
  train_temporal(bundle, data.dataset, data.split.train, features);
  save_bundle(bundle.config.output, bundle);
  EvalReport report = evaluate(bundle, data.dataset, data.split.test, bundle.config.repeats, &features);
  write_report(bundle.config.output, report);
  progress("accuracy " + fixed(100.0 * report.accuracy) + "% on " +
           std::to_string(data.split.test.size()) + " test clips -> " +
           bundle.config.output.string());
  return report;
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const LoadedData data = load_and_split(config);
  ModelBundle bundle;
  bundle.config = config;
  bundle.classes = data.dataset.classes;
  bundle.streams = train_backbones(config, data.dataset, data.split.train);
  return finish_phase2(bundle, data);
}

void run_phase1(const ExperimentConfig& config) {
  config.validate();
  const LoadedData data = load_and_split(config);
  fs::create_directories(config.output);
  config.save(config.output / "config.txt");
  const auto models = train_backbones(config, data.dataset, data.split.train);
  for (StreamKind kind : kAllStreams) {
    if (const auto& m = models[stream_index(kind)]) {
      save_params(config.output / stream_checkpoint_name(kind), m->config, m->params);
    }
  }
}

EvalReport run_phase2(const ExperimentConfig& config) {
  config.validate();
  const LoadedData data = load_and_split(config);
  ModelBundle bundle;
  bundle.config = config;
  bundle.classes = data.dataset.classes;
  bundle.streams = load_backbones(config.output, config.streams);
  return finish_phase2(bundle, data);
}

EvalReport evaluate_saved(const ExperimentConfig& config) {
  const ModelBundle bundle = load_bundle(config.output);
  ModelBundle effective = bundle;
  effective.config.repeats = config.repeats;
  const LoadedData data = load_and_split(effective.config);
  return evaluate(effective, data.dataset, data.split.test, config.repeats);
}

EvalReport ablate(const ExperimentConfig& config, const StreamSet& streams) {
  if (streams.count() == 0) throw ConfigError("ablate: empty stream subset");
  ExperimentConfig c = config;
  c.streams = streams;
  std::string tag = to_string(streams);
  std::replace(tag.begin(), tag.end(), ',', '+');
  c.output = config.output / ("ablate_" + tag);
  progress("ablation with streams {" + to_string(streams) + "}");
  return run_experiment(c);
}

std::vector<FusionBenchRow> fusion_bench(const ExperimentConfig& config,
                                         const std::vector<FusionMethod>& methods) {
  config.validate();
  if (config.streams.count() != 3) {
    throw ConfigError("fusion-bench compares three-stream fusions; enable all streams");
  }
  const LoadedData data = load_and_split(config);
  ModelBundle shared;
  shared.config = config;
  shared.classes = data.dataset.classes;
  shared.streams = train_backbones(config, data.dataset, data.split.train);
  const auto features = extract_all(shared, data.dataset);

  std::vector<FusionBenchRow> rows;
  for (FusionMethod method : methods) {
    ModelBundle bundle = shared;
    bundle.config.fusion = method;
    bundle.config.output = config.output / ("fusion_" + std::string(to_string(method)));
    train_temporal(bundle, data.dataset, data.split.train, features);
    save_bundle(bundle.config.output, bundle);
    EvalReport report = evaluate(bundle, data.dataset, data.split.test, config.repeats, &features);
    write_report(bundle.config.output, report);
    progress("fusion " + std::string(to_string(method)) + ": accuracy " +
             fixed(100.0 * report.accuracy) + "%");
    rows.push_back({method, std::move(report)});
  }

  fs::create_directories(config.output);
  std::ofstream csv(config.output / "fusion_bench.csv");
  csv << "method,accuracy,mean_accuracy\n";
  for (const auto& row : rows) {
    csv << to_string(row.method) << "," << format_double(row.report.accuracy) << ","
        << format_double(row.report.mean_accuracy) << "\n";
  }
  return rows;
}

GradcheckSummary run_gradchecks(std::uint64_t seed) {
  SeededRng rng(seed);
  GradcheckSummary summary;

  ConvNetConfig net;
  net.input_size = 8;
  net.input_channels = 2;
  net.blocks = {{3, true}, {4, true}};
  net.head_classes = 3;
  ConvNetParams params = init_params(net, rng);
  for (auto& layer : params.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.1, 0.1);
  }
  std::vector<Tensor3> inputs;
  std::vector<int> labels;
  for (int s = 0; s < 4; ++s) {
    Tensor3 x(2, 8, 8);
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
    inputs.push_back(std::move(x));
    labels.push_back(s % 3);
  }
  summary.backbone_samples = 120;
  summary.backbone_max_error =
      gradient_check(params, net, inputs, labels, summary.backbone_samples, seed + 1);

  LstmParams lstm = init_lstm(6, 4, 3, 0.5, 0.9, rng);
  std::vector<SequenceExample> batch;
  for (int s = 0; s < 3; ++s) {
    SequenceExample ex;
    for (int t = 0; t < 3; ++t) {
      std::vector<double> x(6);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      ex.steps.push_back(std::move(x));
    }
    ex.label = s % 3;
    batch.push_back(std::move(ex));
  }
  summary.lstm_samples = 200;
  summary.lstm_max_error = lstm_gradient_check(lstm, batch, summary.lstm_samples, seed + 2);
  return summary;
}

}  // namespace tsfn

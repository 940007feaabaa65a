#include "tsfn/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "tsfn/error.hpp"

namespace tsfn {

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::Appearance:
      return "app";
    case StreamKind::TargetMotion:
      return "mot";
    case StreamKind::EgoMotion:
      return "ego";
  }
  return "?";
}

StreamKind parse_stream_kind(std::string_view name) {
  if (name == "app" || name == "appearance") return StreamKind::Appearance;
  if (name == "mot" || name == "motion" || name == "target_motion") return StreamKind::TargetMotion;
  if (name == "ego" || name == "ego_motion") return StreamKind::EgoMotion;
  throw ConfigError("unknown stream '" + std::string(name) + "' (expected app, mot or ego)");
}

int ConvNetConfig::feature_channels() const {
  return blocks.empty() ? input_channels : blocks.back().out_channels;
}

int ConvNetConfig::feature_spatial() const {
  int size = input_size;
  for (const auto& b : blocks) {
    if (b.pool) {
      size /= 2;
    }
  }
  return size;
}

void ConvNetConfig::validate() const {
  if (input_size < 1 || input_channels < 1) {
    throw ConfigError("ConvNetConfig: input size and channels must be positive");
  }
  if (blocks.empty()) {
    throw ConfigError("ConvNetConfig: at least one conv block is required");
  }
  for (const auto& b : blocks) {
    if (b.out_channels < 1) {
      throw ConfigError("ConvNetConfig: block channels must be positive");
    }
  }
  if (feature_spatial() < 1) {
    throw ConfigError("ConvNetConfig: pooling collapses the input to zero size");
  }
  if (head_classes < 1) {
    throw ConfigError("ConvNetConfig: head needs at least one class");
  }
}

ConvNetConfig ConvNetConfig::desk(int input_channels, int head_classes, int feature_channels) {
  ConvNetConfig c;
  c.input_size = 56;
  c.input_channels = input_channels;
  c.blocks = {{8, true}, {16, true}, {16, true}, {feature_channels, false}};
  c.head_classes = head_classes;
  return c;
}

ConvNetConfig ConvNetConfig::paper_shape(int input_channels, int head_classes) {
  ConvNetConfig c;
  c.input_size = 224;
  c.input_channels = input_channels;
  c.blocks = {{16, true}, {32, true}, {64, true}, {128, true}, {512, true}};
  c.head_classes = head_classes;
  return c;
}

std::string format_blocks(const std::vector<ConvBlock>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(blocks[i].out_channels);
    if (blocks[i].pool) out += "p";
  }
  return out;
}

std::vector<ConvBlock> parse_blocks(std::string_view text) {
  std::vector<ConvBlock> blocks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string item(text.substr(pos, comma - pos));
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (!item.empty()) {
      ConvBlock b;
      b.pool = item.back() == 'p';
      if (b.pool) item.pop_back();
      try {
        std::size_t used = 0;
        b.out_channels = std::stoi(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("bad conv block spec '" + std::string(text) + "'");
      }
      blocks.push_back(b);
    }
    pos = comma + 1;
  }
  if (blocks.empty()) throw ConfigError("conv block spec is empty");
  return blocks;
}

KeyValues ConvNetConfig::to_key_values() const {
  return {
      {"kind", "convnet"},
      {"input_size", std::to_string(input_size)},
      {"input_channels", std::to_string(input_channels)},
      {"blocks", format_blocks(blocks)},
      {"head_classes", std::to_string(head_classes)},
  };
}

ConvNetConfig ConvNetConfig::from_key_values(const KeyValues& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("convnet config: missing key '" + key + "'");
    return it->second;
  };
  if (get("kind") != "convnet") throw DataError("checkpoint is not a convnet");
  ConvNetConfig c;
  c.input_size = std::stoi(get("input_size"));
  c.input_channels = std::stoi(get("input_channels"));
  c.blocks = parse_blocks(get("blocks"));
  c.head_classes = std::stoi(get("head_classes"));
  c.validate();
  return c;
}

std::size_t ConvNetParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](std::span<const double> t) { n += t.size(); });
  return n;
}

ConvNetParams ConvNetParams::zeros_like() const {
  ConvNetParams z = *this;
  z.for_each_tensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  return z;
}

bool ConvNetParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](std::span<const double> t) { ok = ok && tsfn::all_finite(t); });
  return ok;
}

ConvNetParams init_params(const ConvNetConfig& config, SeededRng& rng) {
  config.validate();
  ConvNetParams p;
  int in = config.input_channels;
  for (const auto& block : config.blocks) {
    ConvLayerParams layer;
    layer.in_channels = in;
    layer.out_channels = block.out_channels;
    const double stddev = std::sqrt(2.0 / (9.0 * in));
    layer.weight.resize(static_cast<std::size_t>(block.out_channels) * in * 9);
    for (double& w : layer.weight) w = rng.normal(0.0, stddev);
    layer.bias.assign(static_cast<std::size_t>(block.out_channels), 0.0);
    p.layers.push_back(std::move(layer));
    in = block.out_channels;
  }
  const double head_std = std::sqrt(1.0 / in);
  p.head_weight.resize(static_cast<std::size_t>(config.head_classes) * in);
  for (double& w : p.head_weight) w = rng.normal(0.0, head_std);
  p.head_bias.assign(static_cast<std::size_t>(config.head_classes), 0.0);
  return p;
}

namespace {

void check_input(const ConvNetParams& params, const ConvNetConfig& config, const Tensor3& input) {
  const auto n = static_cast<std::size_t>(config.input_size);
  if (input.channels() != static_cast<std::size_t>(config.input_channels) || input.height() != n ||
      input.width() != n) {
    throw ShapeError("backbone: input is " + std::to_string(input.channels()) + "x" +
                     std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                     ", expected " + std::to_string(config.input_channels) + "x" +
                     std::to_string(n) + "x" + std::to_string(n));
  }
  if (params.layers.size() != config.blocks.size()) {
    throw ShapeError("backbone: parameter/config layer count mismatch");
  }
}

// Same-padded 3x3 convolution. Iterating taps outermost keeps the inner loop a
// contiguous saxpy over a row.
void conv3x3_forward(const Tensor3& in, const ConvLayerParams& p, Tensor3& out) {
  const int h = static_cast<int>(in.height());
  const int w = static_cast<int>(in.width());
  out = Tensor3(static_cast<std::size_t>(p.out_channels), in.height(), in.width());
  for (int o = 0; o < p.out_channels; ++o) {
    auto dst_plane = out.channel(static_cast<std::size_t>(o));
    std::fill(dst_plane.begin(), dst_plane.end(), p.bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < p.in_channels; ++i) {
      const double* src_plane = in.channel(static_cast<std::size_t>(i)).data();
      const double* kernel = &p.weight[(static_cast<std::size_t>(o) * p.in_channels + i) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y_begin = std::max(0, -dy);
        const int y_end = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(w, w - dx);
          const double k = kernel[ky * 3 + kx];
          for (int y = y_begin; y < y_end; ++y) {
            double* dst = dst_plane.data() + static_cast<std::size_t>(y) * w;
            const double* src = src_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x_begin; x < x_end; ++x) {
              dst[x] += k * src[x];
            }
          }
        }
      }
    }
  }
}

void conv3x3_backward(const Tensor3& in, const ConvLayerParams& p, const Tensor3& grad_out,
                      ConvLayerParams& grad_p, Tensor3* grad_in) {
  const int h = static_cast<int>(in.height());
  const int w = static_cast<int>(in.width());
  if (grad_in != nullptr) {
    *grad_in = Tensor3(in.channels(), in.height(), in.width());
  }
  for (int o = 0; o < p.out_channels; ++o) {
    const auto go_plane = grad_out.channel(static_cast<std::size_t>(o));
    grad_p.bias[static_cast<std::size_t>(o)] +=
        std::accumulate(go_plane.begin(), go_plane.end(), 0.0);
    for (int i = 0; i < p.in_channels; ++i) {
      const double* src_plane = in.channel(static_cast<std::size_t>(i)).data();
      double* gi_plane =
          grad_in != nullptr ? grad_in->channel(static_cast<std::size_t>(i)).data() : nullptr;
      const std::size_t kbase = (static_cast<std::size_t>(o) * p.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y_begin = std::max(0, -dy);
        const int y_end = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(w, w - dx);
          const double k = p.weight[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y_begin; y < y_end; ++y) {
            const double* go = go_plane.data() + static_cast<std::size_t>(y) * w;
            const std::size_t off = static_cast<std::size_t>(y + dy) * w + dx;
            const double* src = src_plane + off;
            for (int x = x_begin; x < x_end; ++x) {
              acc += go[x] * src[x];
            }
            if (gi_plane != nullptr) {
              double* gi = gi_plane + off;
              for (int x = x_begin; x < x_end; ++x) {
                gi[x] += k * go[x];
              }
            }
          }
          grad_p.weight[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.data()) {
    v = v > 0.0 ? v : 0.0;
  }
}

// 2x2 stride-2 max pool (floor); records the flat argmax index per output.
Tensor3 max_pool2(const Tensor3& in, std::vector<std::size_t>& argmax) {
  const std::size_t oh = in.height() / 2;
  const std::size_t ow = in.width() / 2;
  Tensor3 out(in.channels(), oh, ow);
  argmax.assign(out.size(), 0);
  const auto src = in.data();
  std::size_t k = 0;
  for (std::size_t c = 0; c < in.channels(); ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++k) {
        std::size_t best = (c * in.height() + 2 * y) * in.width() + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * in.height() + 2 * y + dy) * in.width() + 2 * x + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out.data()[k] = src[best];
        argmax[k] = best;
      }
    }
  }
  return out;
}

struct BlockTrace {
  Tensor3 input;
  Tensor3 activated;  // post-ReLU, pre-pool
  std::vector<std::size_t> argmax;
};

Tensor3 run_blocks(const ConvNetParams& params, const ConvNetConfig& config, const Tensor3& input,
                   std::vector<BlockTrace>* trace) {
  Tensor3 x = input;
  for (std::size_t l = 0; l < config.blocks.size(); ++l) {
    Tensor3 z;
    conv3x3_forward(x, params.layers[l], z);
    relu_inplace(z);
    BlockTrace bt;
    if (trace != nullptr) {
      bt.input = std::move(x);
    }
    if (config.blocks[l].pool) {
      x = max_pool2(z, bt.argmax);
    } else {
      x = z;
    }
    if (trace != nullptr) {
      bt.activated = std::move(z);
      trace->push_back(std::move(bt));
    }
  }
  return x;
}

std::vector<double> head_logits(const ConvNetParams& params, std::span<const double> pooled,
                                int classes) {
  const std::size_t d = pooled.size();
  std::vector<double> logits(params.head_bias);
  for (int k = 0; k < classes; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      logits[static_cast<std::size_t>(k)] += params.head_weight[static_cast<std::size_t>(k) * d + j] * pooled[j];
    }
  }
  return logits;
}

std::vector<double> global_average(const Tensor3& f) {
  std::vector<double> pooled(f.channels(), 0.0);
  const double inv = 1.0 / static_cast<double>(f.plane_size());
  for (std::size_t c = 0; c < f.channels(); ++c) {
    auto plane = f.channel(c);
    pooled[c] = std::accumulate(plane.begin(), plane.end(), 0.0) * inv;
  }
  return pooled;
}

}  // namespace

Tensor3 forward_features(const ConvNetParams& params, const ConvNetConfig& config,
                         const Tensor3& input) {
  check_input(params, config, input);
  return run_blocks(params, config, input, nullptr);
}

std::vector<double> forward_logits(const ConvNetParams& params, const ConvNetConfig& config,
                                   const Tensor3& input) {
  const Tensor3 f = forward_features(params, config, input);
  return head_logits(params, global_average(f), config.head_classes);
}

double loss_and_gradient(const ConvNetParams& params, const ConvNetConfig& config,
                         std::span<const Tensor3> inputs, std::span<const int> labels,
                         ConvNetParams* grad) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw ConfigError("loss_and_gradient: batch empty or labels mismatch");
  }
  if (grad != nullptr) {
    *grad = params.zeros_like();
  }
  const double inv_batch = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const int label = labels[s];
    if (label < 0 || label >= config.head_classes) {
      throw ConfigError("loss_and_gradient: label out of range");
    }
    check_input(params, config, inputs[s]);
    std::vector<BlockTrace> trace;
    const Tensor3 features = run_blocks(params, config, inputs[s], grad ? &trace : nullptr);
    const std::vector<double> pooled = global_average(features);
    std::vector<double> probs = head_logits(params, pooled, config.head_classes);
    softmax_inplace(probs);
    loss -= std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300)) * inv_batch;
    if (grad == nullptr) {
      continue;
    }

    // dL/dlogits = (p - onehot) / batch
    std::vector<double> dlogits = probs;
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    for (double& g : dlogits) g *= inv_batch;

    const std::size_t d = pooled.size();
    std::vector<double> dpooled(d, 0.0);
    for (int k = 0; k < config.head_classes; ++k) {
      const double g = dlogits[static_cast<std::size_t>(k)];
      grad->head_bias[static_cast<std::size_t>(k)] += g;
      for (std::size_t j = 0; j < d; ++j) {
        grad->head_weight[static_cast<std::size_t>(k) * d + j] += g * pooled[j];
        dpooled[j] += g * params.head_weight[static_cast<std::size_t>(k) * d + j];
      }
    }

    Tensor3 upstream(features.channels(), features.height(), features.width());
    const double inv_area = 1.0 / static_cast<double>(features.plane_size());
    for (std::size_t c = 0; c < d; ++c) {
      auto plane = upstream.channel(c);
      std::fill(plane.begin(), plane.end(), dpooled[c] * inv_area);
    }

    for (std::size_t l = config.blocks.size(); l-- > 0;) {
      const BlockTrace& bt = trace[l];
      Tensor3 dz(bt.activated.channels(), bt.activated.height(), bt.activated.width());
      if (config.blocks[l].pool) {
        const auto up = upstream.data();
        for (std::size_t k = 0; k < up.size(); ++k) {
          dz.data()[bt.argmax[k]] += up[k];
        }
      } else {
        dz = std::move(upstream);
      }
      const auto act = bt.activated.data();
      auto dzd = dz.data();
      for (std::size_t k = 0; k < dzd.size(); ++k) {
        if (act[k] <= 0.0) dzd[k] = 0.0;
      }
      Tensor3 dinput;
      conv3x3_backward(bt.input, params.layers[l], dz, grad->layers[l], l > 0 ? &dinput : nullptr);
      upstream = std::move(dinput);
    }
  }
  return loss;
}

namespace {

void rmsprop_update(ConvNetParams& params, const ConvNetParams& grad, ConvNetParams& cache,
                    const RmsPropHyper& hyper) {
  std::vector<std::span<double>> p_tensors;
  std::vector<std::span<const double>> g_tensors;
  std::vector<std::span<double>> c_tensors;
  params.for_each_tensor([&](std::span<double> t) { p_tensors.push_back(t); });
  grad.for_each_tensor([&](std::span<const double> t) { g_tensors.push_back(t); });
  cache.for_each_tensor([&](std::span<double> t) { c_tensors.push_back(t); });
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    for (std::size_t i = 0; i < p_tensors[t].size(); ++i) {
      const double g = g_tensors[t][i];
      double& c = c_tensors[t][i];
      c = hyper.decay * c + (1.0 - hyper.decay) * g * g;
      p_tensors[t][i] -= hyper.learning_rate * g / (std::sqrt(c) + hyper.epsilon);
    }
  }
}

}  // namespace

StreamTrainResult train_stream(const StreamDataset& data, const ConvNetConfig& config,
                               const RmsPropHyper& hyper) {
  SeededRng rng(hyper.seed);
  ConvNetParams initial = init_params(config, rng);
  return train_stream(data, config, hyper, std::move(initial));
}

StreamTrainResult train_stream(const StreamDataset& data, const ConvNetConfig& config,
                               const RmsPropHyper& hyper, ConvNetParams initial) {
  config.validate();
  if (data.size() == 0) {
    throw ConfigError("train_stream: empty dataset");
  }
  if (hyper.batch_size < 1 || hyper.iterations < 0) {
    throw ConfigError("train_stream: batch size must be >= 1 and iterations >= 0");
  }
  for (int label : data.labels) {
    if (label < 0 || label >= config.head_classes) {
      throw ConfigError("train_stream: label outside head classes");
    }
  }
  // Separate stream for batch order so it does not depend on init draws.
  SeededRng order_rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  StreamTrainResult result{std::move(initial), {}};
  ConvNetParams cache = result.params.zeros_like();
  ConvNetParams grad;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const auto batch = static_cast<std::size_t>(hyper.batch_size);
  std::vector<Tensor3> inputs;
  std::vector<int> labels;
  for (int iter = 0; iter < hyper.iterations; ++iter) {
    inputs.clear();
    labels.clear();
    while (inputs.size() < batch) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[order_rng.below(i)]);
        }
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      inputs.push_back(data.input(idx));
      labels.push_back(data.labels[idx]);
      if (inputs.size() == data.size()) break;
    }
    const double loss = loss_and_gradient(result.params, config, inputs, labels, &grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_stream: loss became non-finite at iteration " +
                           std::to_string(iter));
    }
    result.loss_history.push_back(loss);
    rmsprop_update(result.params, grad, cache, hyper);
  }
  if (!result.params.all_finite()) {
    throw NumericalError("train_stream: parameters became non-finite");
  }
  return result;
}

double gradient_check(const ConvNetParams& params, const ConvNetConfig& config,
                      std::span<const Tensor3> inputs, std::span<const int> labels, int samples,
                      std::uint64_t seed) {
  ConvNetParams analytic;
  loss_and_gradient(params, config, inputs, labels, &analytic);

  // Flat index space over all tensors.
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  std::size_t t = 0;
  params.for_each_tensor([&](std::span<const double> tensor) {
    for (std::size_t i = 0; i < tensor.size(); ++i) slots.emplace_back(t, i);
    ++t;
  });
  SeededRng rng(seed);
  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[rng.below(i)]);
  }
  const std::size_t count = std::min(slots.size(), static_cast<std::size_t>(samples));

  constexpr double kStep = 1e-5;
  ConvNetParams probe = params;
  std::vector<std::span<double>> probe_tensors;
  std::vector<std::span<const double>> analytic_tensors;
  probe.for_each_tensor([&](std::span<double> s) { probe_tensors.push_back(s); });
  std::as_const(analytic).for_each_tensor(
      [&](std::span<const double> s) { analytic_tensors.push_back(s); });

  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const auto [ti, ei] = slots[s];
    double& target = probe_tensors[ti][ei];
    const double original = target;
    target = original + kStep;
    const double plus = loss_and_gradient(probe, config, inputs, labels, nullptr);
    target = original - kStep;
    const double minus = loss_and_gradient(probe, config, inputs, labels, nullptr);
    target = original;
    const double numeric = (plus - minus) / (2.0 * kStep);
    worst = std::max(worst, gradient_relative_error(analytic_tensors[ti][ei], numeric));
  }
  return worst;
}

void save_params(const std::filesystem::path& path, const ConvNetConfig& config,
                 const ConvNetParams& params) {
  std::vector<std::span<const double>> tensors;
  params.for_each_tensor([&](std::span<const double> t) { tensors.push_back(t); });
  save_checkpoint(path, config.to_key_values(), tensors);
}

std::pair<ConvNetConfig, ConvNetParams> load_params(const std::filesystem::path& path) {
  CheckpointBlob blob = load_checkpoint(path);
  ConvNetConfig config = ConvNetConfig::from_key_values(blob.config);
  SeededRng unused(0);
  ConvNetParams params = init_params(config, unused);
  if (params.parameter_count() != blob.values.size()) {
    throw DataError("checkpoint " + path.string() + ": payload size does not match config");
  }
  std::size_t offset = 0;
  params.for_each_tensor([&](std::span<double> t) {
    std::copy_n(blob.values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  });
  return {std::move(config), std::move(params)};
}

}  // namespace tsfn

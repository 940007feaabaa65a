#include "tsfn/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "tsfn/container.hpp"
#include "tsfn/error.hpp"

namespace tsfn {

std::string_view to_string(SpectrumMode mode) {
  return mode == SpectrumMode::Magnitude ? "magnitude" : "packed";
}

SpectrumMode parse_spectrum_mode(std::string_view name) {
  if (name == "magnitude") return SpectrumMode::Magnitude;
  if (name == "packed") return SpectrumMode::Packed;
  throw ConfigError("unknown spectrum mode '" + std::string(name) + "' (magnitude or packed)");
}

std::vector<double> interval_concat(std::span<const CorrelationVector> vectors) {
  if (vectors.empty()) {
    throw ConfigError("interval_concat: need at least one vector");
  }
  const std::size_t d = vectors.front().size();
  std::vector<double> out;
  out.reserve(d * vectors.size());
  for (const auto& v : vectors) {
    if (v.size() != d) {
      throw ShapeError("interval_concat: correlation vectors differ in length");
    }
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

IntervalEncoding interval_encode(std::span<const double> v_sub, SpectrumMode mode, bool pad) {
  const std::size_t n = v_sub.size();
  if (n == 0) {
    throw ShapeError("interval_encode: empty input");
  }
  std::vector<double> buffer(v_sub.begin(), v_sub.end());
  if (!is_power_of_two(n)) {
    if (!pad) {
      throw ShapeError("interval_encode: length " + std::to_string(n) +
                       " is not a power of two and padding is disabled");
    }
    buffer.resize(next_power_of_two(n), 0.0);
  }
  const std::vector<Complex> spectrum = fft(std::span<const double>(buffer));
  const std::size_t len = spectrum.size();
  IntervalEncoding enc{std::vector<double>(len, 0.0), n};
  if (mode == SpectrumMode::Magnitude) {
    for (std::size_t k = 0; k < len; ++k) {
      enc.values[k] = std::abs(spectrum[k]);
    }
  } else {
    // Real input => X_{N-k} = conj(X_k); bins 0..N/2 carry everything.
    const std::size_t half = len / 2;
    std::size_t out = 0;
    for (std::size_t k = 0; k <= half && out < len; ++k) enc.values[out++] = spectrum[k].real();
    for (std::size_t k = 1; k < half; ++k) enc.values[out++] = spectrum[k].imag();
  }
  return enc;
}

LstmParams LstmParams::zeros(int input_size, int hidden_size, int classes) {
  if (input_size < 1 || hidden_size < 1 || classes < 1) {
    throw ConfigError("LstmParams: sizes must be positive");
  }
  const auto i = static_cast<std::size_t>(input_size);
  const auto h = static_cast<std::size_t>(hidden_size);
  const auto k = static_cast<std::size_t>(classes);
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.classes = classes;
  p.w_input.assign(4 * h * i, 0.0);
  p.w_hidden.assign(4 * h * h, 0.0);
  p.bias.assign(4 * h, 0.0);
  p.w_readout.assign(k * h, 0.0);
  p.b_readout.assign(k, 0.0);
  return p;
}

std::size_t LstmParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](std::span<const double> t) { n += t.size(); });
  return n;
}

bool LstmParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](std::span<const double> t) { ok = ok && tsfn::all_finite(t); });
  return ok;
}

LstmState LstmState::zeros(int hidden_size) {
  const auto h = static_cast<std::size_t>(hidden_size);
  return {std::vector<double>(h, 0.0), std::vector<double>(h, 0.0)};
}

LstmParams init_lstm(int input_size, int hidden_size, int classes, double init_std,
                     double forget_bias, SeededRng& rng) {
  LstmParams p = LstmParams::zeros(input_size, hidden_size, classes);
  p.for_each_tensor([&](std::span<double> t) {
    for (double& w : t) w = rng.normal(0.0, init_std);
  });
  const auto h = static_cast<std::size_t>(hidden_size);
  for (std::size_t j = h; j < 2 * h; ++j) {
    p.bias[j] += forget_bias;
  }
  return p;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_step_dims(const LstmParams& params, std::size_t x_len, const LstmState& state) {
  if (x_len != static_cast<std::size_t>(params.input_size)) {
    throw ShapeError("lstm_step: input length " + std::to_string(x_len) + " != " +
                     std::to_string(params.input_size));
  }
  const auto h = static_cast<std::size_t>(params.hidden_size);
  if (state.h.size() != h || state.c.size() != h) {
    throw ShapeError("lstm_step: state size does not match hidden size");
  }
}

// Everything the backward pass needs from one forward step.
struct StepTrace {
  std::vector<double> gates;  // activated i, f, o, g (4H)
  std::vector<double> c;
  std::vector<double> tanh_c;
  std::vector<double> h;
};

StepTrace forward_step(const LstmParams& p, std::span<const double> x, std::span<const double> h_prev,
                       std::span<const double> c_prev) {
  const auto hs = static_cast<std::size_t>(p.hidden_size);
  const auto is = static_cast<std::size_t>(p.input_size);
  StepTrace t;
  t.gates.assign(p.bias.begin(), p.bias.end());
  for (std::size_t r = 0; r < 4 * hs; ++r) {
    const double* wx = &p.w_input[r * is];
    const double* wh = &p.w_hidden[r * hs];
    double acc = 0.0;
    for (std::size_t j = 0; j < is; ++j) acc += wx[j] * x[j];
    for (std::size_t j = 0; j < hs; ++j) acc += wh[j] * h_prev[j];
    t.gates[r] += acc;
  }
  for (std::size_t r = 0; r < 3 * hs; ++r) t.gates[r] = sigmoid(t.gates[r]);
  for (std::size_t r = 3 * hs; r < 4 * hs; ++r) t.gates[r] = std::tanh(t.gates[r]);
  t.c.resize(hs);
  t.tanh_c.resize(hs);
  t.h.resize(hs);
  for (std::size_t j = 0; j < hs; ++j) {
    const double in = t.gates[j];
    const double forget = t.gates[hs + j];
    const double out = t.gates[2 * hs + j];
    const double cand = t.gates[3 * hs + j];
    t.c[j] = forget * c_prev[j] + in * cand;
    t.tanh_c[j] = std::tanh(t.c[j]);
    t.h[j] = out * t.tanh_c[j];
  }
  return t;
}

std::vector<double> readout(const LstmParams& p, std::span<const double> h) {
  const auto hs = static_cast<std::size_t>(p.hidden_size);
  std::vector<double> logits(p.b_readout);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    for (std::size_t j = 0; j < hs; ++j) {
      logits[k] += p.w_readout[k * hs + j] * h[j];
    }
  }
  return logits;
}

}  // namespace

LstmState lstm_step(const LstmParams& params, const LstmState& state, std::span<const double> x) {
  check_step_dims(params, x.size(), state);
  StepTrace t = forward_step(params, x, state.h, state.c);
  return {std::move(t.h), std::move(t.c)};
}

std::vector<double> classify_sequence(const LstmParams& params,
                                      std::span<const std::vector<double>> steps) {
  if (steps.empty()) {
    throw ConfigError("classify_sequence: empty sequence");
  }
  LstmState state = LstmState::zeros(params.hidden_size);
  for (const auto& x : steps) {
    state = lstm_step(params, state, x);
  }
  std::vector<double> probs = readout(params, state.h);
  softmax_inplace(probs);
  return probs;
}

double lstm_loss_and_gradient(const LstmParams& params, std::span<const SequenceExample> batch,
                              LstmParams* grad) {
  if (batch.empty()) {
    throw ConfigError("lstm_loss_and_gradient: empty batch");
  }
  const auto hs = static_cast<std::size_t>(params.hidden_size);
  const auto is = static_cast<std::size_t>(params.input_size);
  const auto ks = static_cast<std::size_t>(params.classes);
  if (grad != nullptr) {
    *grad = LstmParams::zeros(params.input_size, params.hidden_size, params.classes);
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const std::vector<double> zeros(hs, 0.0);
  double loss = 0.0;

  for (const SequenceExample& ex : batch) {
    if (ex.steps.empty()) {
      throw ConfigError("lstm_loss_and_gradient: empty sequence");
    }
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= ks) {
      throw ConfigError("lstm_loss_and_gradient: label out of range");
    }
    std::vector<StepTrace> trace;
    trace.reserve(ex.steps.size());
    for (std::size_t t = 0; t < ex.steps.size(); ++t) {
      if (ex.steps[t].size() != is) {
        throw ShapeError("lstm_loss_and_gradient: step length mismatch");
      }
      const std::vector<double>& h_prev = t == 0 ? zeros : trace.back().h;
      const std::vector<double>& c_prev = t == 0 ? zeros : trace.back().c;
      trace.push_back(forward_step(params, ex.steps[t], h_prev, c_prev));
    }
    std::vector<double> probs = readout(params, trace.back().h);
    softmax_inplace(probs);
    const auto label = static_cast<std::size_t>(ex.label);
    loss -= std::log(std::max(probs[label], 1e-300)) * inv_batch;
    if (grad == nullptr) {
      continue;
    }

    std::vector<double> dlogits = probs;
    dlogits[label] -= 1.0;
    for (double& g : dlogits) g *= inv_batch;

    std::vector<double> dh(hs, 0.0);
    for (std::size_t k = 0; k < ks; ++k) {
      grad->b_readout[k] += dlogits[k];
      for (std::size_t j = 0; j < hs; ++j) {
        grad->w_readout[k * hs + j] += dlogits[k] * trace.back().h[j];
        dh[j] += dlogits[k] * params.w_readout[k * hs + j];
      }
    }

    std::vector<double> dc(hs, 0.0);
    std::vector<double> dz(4 * hs, 0.0);
    for (std::size_t t = ex.steps.size(); t-- > 0;) {
      const StepTrace& st = trace[t];
      const std::vector<double>& h_prev = t == 0 ? zeros : trace[t - 1].h;
      const std::vector<double>& c_prev = t == 0 ? zeros : trace[t - 1].c;
      const std::vector<double>& x = ex.steps[t];
      for (std::size_t j = 0; j < hs; ++j) {
        const double in = st.gates[j];
        const double forget = st.gates[hs + j];
        const double out = st.gates[2 * hs + j];
        const double cand = st.gates[3 * hs + j];
        const double tc = st.tanh_c[j];
        dc[j] += dh[j] * out * (1.0 - tc * tc);
        dz[j] = dc[j] * cand * in * (1.0 - in);
        dz[hs + j] = dc[j] * c_prev[j] * forget * (1.0 - forget);
        dz[2 * hs + j] = dh[j] * tc * out * (1.0 - out);
        dz[3 * hs + j] = dc[j] * in * (1.0 - cand * cand);
        dc[j] *= forget;
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t r = 0; r < 4 * hs; ++r) {
        const double g = dz[r];
        grad->bias[r] += g;
        double* gwx = &grad->w_input[r * is];
        for (std::size_t j = 0; j < is; ++j) gwx[j] += g * x[j];
        double* gwh = &grad->w_hidden[r * hs];
        const double* wh = &params.w_hidden[r * hs];
        for (std::size_t j = 0; j < hs; ++j) {
          gwh[j] += g * h_prev[j];
          dh[j] += g * wh[j];
        }
      }
    }
  }
  return loss;
}

LstmTrainResult train_lstm(std::span<const SequenceExample> data, int hidden_size, int classes,
                           const LstmHyper& hyper) {
  if (data.empty()) {
    throw ConfigError("train_lstm: empty dataset");
  }
  if (data.front().steps.empty()) {
    throw ConfigError("train_lstm: empty sequence");
  }
  SeededRng rng(hyper.seed);
  const int input_size = static_cast<int>(data.front().steps.front().size());
  LstmParams initial =
      init_lstm(input_size, hidden_size, classes, hyper.init_std, hyper.forget_bias, rng);
  return train_lstm(data, hyper, std::move(initial));
}

LstmTrainResult train_lstm(std::span<const SequenceExample> data, const LstmHyper& hyper,
                           LstmParams initial) {
  if (data.empty()) {
    throw ConfigError("train_lstm: empty dataset");
  }
  if (hyper.iterations < 0 || hyper.batch_size < 0) {
    throw ConfigError("train_lstm: iterations and batch size must be nonnegative");
  }
  SeededRng order_rng(hyper.seed ^ 0x6a09e667f3bcc909ULL);
  LstmTrainResult result{std::move(initial), {}};

  const std::size_t batch = hyper.batch_size == 0
                                ? data.size()
                                : std::min(data.size(), static_cast<std::size_t>(hyper.batch_size));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<SequenceExample> picked;
  LstmParams grad;

  for (int iter = 0; iter < hyper.iterations; ++iter) {
    double loss = 0.0;
    if (batch == data.size()) {
      loss = lstm_loss_and_gradient(result.params, data, &grad);
    } else {
      picked.clear();
      while (picked.size() < batch) {
        if (cursor == order.size()) {
          for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[order_rng.below(i)]);
          }
          cursor = 0;
        }
        picked.push_back(data[order[cursor++]]);
      }
      loss = lstm_loss_and_gradient(result.params, picked, &grad);
    }
    if (!std::isfinite(loss)) {
      throw NumericalError("train_lstm: loss became non-finite at iteration " +
                           std::to_string(iter));
    }
    result.loss_history.push_back(loss);

    std::vector<std::span<double>> p_tensors;
    std::vector<std::span<const double>> g_tensors;
    result.params.for_each_tensor([&](std::span<double> t) { p_tensors.push_back(t); });
    std::as_const(grad).for_each_tensor([&](std::span<const double> t) { g_tensors.push_back(t); });
    for (std::size_t t = 0; t < p_tensors.size(); ++t) {
      for (std::size_t i = 0; i < p_tensors[t].size(); ++i) {
        p_tensors[t][i] -= hyper.learning_rate * g_tensors[t][i];
      }
    }
  }
  if (!result.params.all_finite()) {
    throw NumericalError("train_lstm: parameters became non-finite");
  }
  return result;
}

double lstm_gradient_check(const LstmParams& params, std::span<const SequenceExample> batch,
                           int samples, std::uint64_t seed) {
  LstmParams analytic;
  lstm_loss_and_gradient(params, batch, &analytic);

  std::vector<std::pair<std::size_t, std::size_t>> slots;
  std::size_t tensor_index = 0;
  params.for_each_tensor([&](std::span<const double> t) {
    for (std::size_t i = 0; i < t.size(); ++i) slots.emplace_back(tensor_index, i);
    ++tensor_index;
  });
  SeededRng rng(seed);
  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[rng.below(i)]);
  }
  const std::size_t count = std::min(slots.size(), static_cast<std::size_t>(samples));

  LstmParams probe = params;
  std::vector<std::span<double>> probe_tensors;
  std::vector<std::span<const double>> analytic_tensors;
  probe.for_each_tensor([&](std::span<double> t) { probe_tensors.push_back(t); });
  std::as_const(analytic).for_each_tensor(
      [&](std::span<const double> t) { analytic_tensors.push_back(t); });

  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const auto [ti, ei] = slots[s];
    double& target = probe_tensors[ti][ei];
    const double original = target;
    target = original + kStep;
    const double plus = lstm_loss_and_gradient(probe, batch, nullptr);
    target = original - kStep;
    const double minus = lstm_loss_and_gradient(probe, batch, nullptr);
    target = original;
    const double numeric = (plus - minus) / (2.0 * kStep);
    worst = std::max(worst, gradient_relative_error(analytic_tensors[ti][ei], numeric));
  }
  return worst;
}

void save_lstm(const std::filesystem::path& path, const LstmParams& params) {
  const KeyValues config{
      {"kind", "lstm"},
      {"input_size", std::to_string(params.input_size)},
      {"hidden_size", std::to_string(params.hidden_size)},
      {"classes", std::to_string(params.classes)},
  };
  std::vector<std::span<const double>> tensors;
  params.for_each_tensor([&](std::span<const double> t) { tensors.push_back(t); });
  save_checkpoint(path, config, tensors);
}

LstmParams load_lstm(const std::filesystem::path& path) {
  const CheckpointBlob blob = load_checkpoint(path);
  auto get = [&](const std::string& key) {
    auto it = blob.config.find(key);
    if (it == blob.config.end()) throw DataError("lstm checkpoint: missing key '" + key + "'");
    return it->second;
  };
  if (get("kind") != "lstm") {
    throw DataError("checkpoint " + path.string() + " is not an LSTM");
  }
  LstmParams p = LstmParams::zeros(std::stoi(get("input_size")), std::stoi(get("hidden_size")),
                                   std::stoi(get("classes")));
  if (p.parameter_count() != blob.values.size()) {
    throw DataError("lstm checkpoint: payload size does not match config");
  }
  std::size_t offset = 0;
  p.for_each_tensor([&](std::span<double> t) {
    std::copy_n(blob.values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  });
  return p;
}

}  // namespace tsfn

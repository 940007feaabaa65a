#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "tsfn/numlib.hpp"
#include "tsfn/tscf.hpp"

namespace tsfn {

// How the complex spectrum of a real interval vector is turned back into N reals.
enum class SpectrumMode {
  Magnitude,  // |X_k| for every bin
  Packed,     // Re X_0..X_{N/2}, then Im X_1..X_{N/2-1}
};

std::string_view to_string(SpectrumMode mode);
SpectrumMode parse_spectrum_mode(std::string_view name);

// Concatenates L+1 correlation vectors in temporal order.
std::vector<double> interval_concat(std::span<const CorrelationVector> vectors);

struct IntervalEncoding {
  std::vector<double> values;
  // Length of the concatenated vector before zero padding to a power of two.
  std::size_t source_length = 0;
};

// FFT of the concatenated interval vector. With `pad` set, lengths that are not
// a power of two are zero-padded; otherwise they raise ShapeError.
IntervalEncoding interval_encode(std::span<const double> v_sub,
                                 SpectrumMode mode = SpectrumMode::Magnitude, bool pad = false);

// Gate blocks are stacked in the order input, forget, output, candidate.
struct LstmParams {
  int input_size = 0;
  int hidden_size = 0;
  int classes = 0;
  std::vector<double> w_input;    // 4H x I
  std::vector<double> w_hidden;   // 4H x H
  std::vector<double> bias;       // 4H
  std::vector<double> w_readout;  // K x H
  std::vector<double> b_readout;  // K

  static LstmParams zeros(int input_size, int hidden_size, int classes);

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(std::span<double>(w_input));
    fn(std::span<double>(w_hidden));
    fn(std::span<double>(bias));
    fn(std::span<double>(w_readout));
    fn(std::span<double>(b_readout));
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(std::span<const double>(w_input));
    fn(std::span<const double>(w_hidden));
    fn(std::span<const double>(bias));
    fn(std::span<const double>(w_readout));
    fn(std::span<const double>(b_readout));
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(int hidden_size);
};

// Every weight and bias ~ N(0, init_std); the forget-gate biases are shifted by forget_bias.
LstmParams init_lstm(int input_size, int hidden_size, int classes, double init_std,
                     double forget_bias, SeededRng& rng);

LstmState lstm_step(const LstmParams& params, const LstmState& state, std::span<const double> x);

using Sequence = std::vector<std::vector<double>>;

// Runs the cell from the zero state and returns softmax(readout(h_final)).
std::vector<double> classify_sequence(const LstmParams& params, std::span<const std::vector<double>> steps);

struct SequenceExample {
  Sequence steps;
  int label = 0;
};

// Mean cross-entropy over the batch; full backpropagation through time when grad is set.
double lstm_loss_and_gradient(const LstmParams& params, std::span<const SequenceExample> batch,
                              LstmParams* grad);

struct LstmHyper {
  double learning_rate = 1e-4;
  double forget_bias = 0.9;
  double init_std = 0.05;
  int iterations = 1000;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 1;
};

struct LstmTrainResult {
  LstmParams params;
  std::vector<double> loss_history;
};

// Plain minibatch gradient descent on the cross-entropy.
LstmTrainResult train_lstm(std::span<const SequenceExample> data, int hidden_size, int classes,
                           const LstmHyper& hyper);
LstmTrainResult train_lstm(std::span<const SequenceExample> data, const LstmHyper& hyper,
                           LstmParams initial);

double lstm_gradient_check(const LstmParams& params, std::span<const SequenceExample> batch,
                           int samples = 200, std::uint64_t seed = 23);

void save_lstm(const std::filesystem::path& path, const LstmParams& params);
LstmParams load_lstm(const std::filesystem::path& path);

}  // namespace tsfn

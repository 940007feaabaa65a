#include "../fixture.hpp"
#include "../oracles.hpp"
#include "doctest.h"
#include "generators.hpp"
#include "tsfn/error.hpp"
#include "tsfn/temporal.hpp"

using namespace tsfn;

namespace {

// Direct evaluation of one LSTM step, gate blocks i, f, o, g.
LstmState step_oracle(const LstmParams& p, const LstmState& s, const std::vector<double>& x) {
  const auto h_size = static_cast<std::size_t>(p.hidden_size);
  const auto in = static_cast<std::size_t>(p.input_size);
  auto pre = [&](std::size_t row) {
    double z = p.bias[row];
    for (std::size_t j = 0; j < in; ++j) z += p.w_input[row * in + j] * x[j];
    for (std::size_t j = 0; j < h_size; ++j) z += p.w_hidden[row * h_size + j] * s.h[j];
    return z;
  };
  LstmState out = LstmState::zeros(p.hidden_size);
  for (std::size_t k = 0; k < h_size; ++k) {
    const double i = oracle::sigmoid(pre(k));
    const double f = oracle::sigmoid(pre(h_size + k));
    const double o = oracle::sigmoid(pre(2 * h_size + k));
    const double g = std::tanh(pre(3 * h_size + k));
    out.c[k] = f * s.c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

std::vector<double> readout_softmax(const LstmParams& p, const std::vector<double>& h) {
  std::vector<double> z(p.b_readout);
  const auto hs = static_cast<std::size_t>(p.hidden_size);
  for (std::size_t k = 0; k < z.size(); ++k)
    for (std::size_t j = 0; j < hs; ++j) z[k] += p.w_readout[k * hs + j] * h[j];
  softmax_inplace(z);
  return z;
}

LstmParams random_lstm(SeededRng& rng, int in, int hidden, int classes, double std = 0.5) {
  return init_lstm(in, hidden, classes, std, 0.9, rng);
}

std::vector<double> flat(const LstmParams& p) {
  std::vector<double> out;
  p.for_each_tensor([&](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

}  // namespace

TEST_SUITE("temporal") {

TEST_CASE("interval_concat") {
  CHECK(interval_concat(std::vector<CorrelationVector>{{1, 2}, {3, 4}}) == std::vector<double>{1, 2, 3, 4});
  const CorrelationVector v(512, 0.5);
  const auto tiled = interval_concat(std::vector<CorrelationVector>(4, v));
  CHECK(tiled.size() == 2048);
  for (double e : tiled) CHECK(e == 0.5);
  CHECK_THROWS_AS(interval_concat(std::vector<CorrelationVector>{{1, 2}, {3}}), ShapeError);
  CHECK_THROWS_AS(interval_concat(std::vector<CorrelationVector>{}), ConfigError);
}

TEST_CASE("interval_encode special inputs") {
  CHECK(interval_encode(std::vector<double>(8, 0.0)).values == std::vector<double>(8, 0.0));
  std::vector<double> impulse(16, 0.0);
  impulse[0] = 1.0;
  for (double e : interval_encode(impulse).values) CHECK(e == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(interval_encode(std::vector<double>(12, 1.0)), ShapeError);
  const IntervalEncoding padded = interval_encode(std::vector<double>(12, 1.0), SpectrumMode::Magnitude, true);
  CHECK(padded.values.size() == 16);
  CHECK(padded.source_length == 12);
  CHECK(padded.values[0] == doctest::Approx(12.0));
}

TEST_CASE("interval_encode matches |dft| at length 2048") {
  SeededRng rng(7);
  const auto x = gen::vec(rng, 2048, 0.0, 2.0);
  const auto enc = interval_encode(x).values;
  const auto ref = oracle::dft(x);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(enc[k] - std::abs(ref[k])) <= 1e-9 * std::abs(ref[k]));
}

TEST_CASE("packed spectrum holds the real and imaginary halves") {
  SeededRng rng(8);
  const auto x = gen::vec(rng, 16);
  const auto packed = interval_encode(x, SpectrumMode::Packed).values;
  const auto ref = oracle::dft(x);
  REQUIRE(packed.size() == 16);
  for (std::size_t k = 0; k <= 8; ++k) CHECK(std::abs(packed[k] - ref[k].real()) <= 1e-12);
  for (std::size_t k = 1; k < 8; ++k) CHECK(std::abs(packed[8 + k] - ref[k].imag()) <= 1e-12);
  CHECK(parse_spectrum_mode("packed") == SpectrumMode::Packed);
  CHECK_THROWS_AS(parse_spectrum_mode("phase"), ConfigError);
}

TEST_CASE("property: Parseval and spectral symmetry") {
  SeededRng rng(9);
  for (int c = 0; c < gen::kCases; ++c) {
    const std::size_t n = std::size_t{1} << (1 + rng.below(10));
    const auto x = gen::vec(rng, n, -2.0, 2.0);
    const auto v = interval_encode(x).values;
    double e_in = 0.0, e_out = 0.0;
    for (double e : x) e_in += e * e;
    for (double e : v) e_out += e * e;
    CHECK(std::abs(e_out - static_cast<double>(n) * e_in) <= 1e-9 * e_out);
    for (std::size_t k = 1; k < n; ++k) CHECK(std::abs(v[k] - v[n - k]) <= 1e-12 * std::max(1.0, v[k]));
  }
}

TEST_CASE("lstm step: zero parameters, saturated forget gate, oracle") {
  const LstmParams zero = LstmParams::zeros(3, 4, 2);
  const LstmState s = lstm_step(zero, LstmState::zeros(4), std::vector<double>{1, -2, 3});
  for (double e : s.c) CHECK(e == 0.0);
  for (double e : s.h) CHECK(e == 0.0);

  SeededRng rng(10);
  LstmParams p = random_lstm(rng, 3, 5, 2);
  for (std::size_t k = 0; k < 5; ++k) p.bias[5 + k] = 50.0;
  LstmState st{gen::vec(rng, 5), gen::vec(rng, 5)};
  const auto x = gen::vec(rng, 3);
  const LstmState next = lstm_step(p, st, x);
  // i o g is the cell update from a zero cell.
  const LstmState from_zero = step_oracle(p, LstmState{st.h, std::vector<double>(5, 0.0)}, x);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(next.c[k] - (st.c[k] + from_zero.c[k])) <= 1e-10);
  }

  for (int c = 0; c < 50; ++c) {
    const LstmParams q = random_lstm(rng, 4, 5, 3);
    const LstmState s0{gen::vec(rng, 5), gen::vec(rng, 5)};
    const auto xi = gen::vec(rng, 4);
    const LstmState a = lstm_step(q, s0, xi);
    const LstmState b = step_oracle(q, s0, xi);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(std::abs(a.c[k] - b.c[k]) <= 1e-12);
      CHECK(std::abs(a.h[k] - b.h[k]) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(lstm_step(p, LstmState::zeros(5), std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("classify_sequence") {
  const LstmParams zero = LstmParams::zeros(2, 3, 4);
  const Sequence seq{{1.0, 2.0}, {0.5, -1.0}};
  for (double p : classify_sequence(zero, seq)) CHECK(p == doctest::Approx(0.25));
  CHECK_THROWS_AS(classify_sequence(zero, Sequence{}), ConfigError);

  SeededRng rng(11);
  const LstmParams p = random_lstm(rng, 2, 3, 4);
  const auto one = classify_sequence(p, Sequence{{0.3, -0.7}});
  const auto ref1 = readout_softmax(p, lstm_step(p, LstmState::zeros(3), std::vector<double>{0.3, -0.7}).h);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(one[k] - ref1[k]) <= 1e-12);

  Sequence three;
  LstmState st = LstmState::zeros(3);
  for (int t = 0; t < 3; ++t) {
    three.push_back(gen::vec(rng, 2));
    st = step_oracle(p, st, three.back());
  }
  const auto probs = classify_sequence(p, three);
  const auto ref3 = readout_softmax(p, st.h);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(probs[k] - ref3[k]) <= 1e-12);
}

TEST_CASE("property: bounded hidden state and simplex outputs") {
  SeededRng rng(12);
  for (int c = 0; c < gen::kCases; ++c) {
    const int in = 1 + static_cast<int>(rng.below(5)), h = 1 + static_cast<int>(rng.below(6));
    const LstmParams p = random_lstm(rng, in, h, 2 + static_cast<int>(rng.below(4)), 2.0);
    LstmState s = LstmState::zeros(h);
    Sequence seq;
    for (int t = 0; t < 6; ++t) {
      seq.push_back(gen::vec(rng, static_cast<std::size_t>(in), -10.0, 10.0));
      s = lstm_step(p, s, seq.back());
      for (double e : s.h) CHECK(std::abs(e) <= 1.0);
    }
    const auto probs = classify_sequence(p, seq);
    double sum = 0.0;
    for (double e : probs) {
      CHECK(e >= 0.0);
      sum += e;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("initialisation") {
  SeededRng rng(13);
  const LstmParams p = init_lstm(6, 8, 3, 0.05, 0.9, rng);
  CHECK(p.w_input.size() == 32 * 6);
  CHECK(p.w_hidden.size() == 32 * 8);
  CHECK(p.w_readout.size() == 3 * 8);
  double forget_mean = 0.0, input_mean = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    forget_mean += p.bias[8 + k] / 8.0;
    input_mean += p.bias[k] / 8.0;
  }
  CHECK(forget_mean == doctest::Approx(0.9).epsilon(0.1));
  CHECK(std::abs(input_mean) < 0.1);
  CHECK(p.parameter_count() == 32 * 6 + 32 * 8 + 32 + 24 + 3);
}

TEST_CASE("BPTT gradients") {
  SeededRng rng(14);
  const LstmParams p = random_lstm(rng, 3, 4, 3);
  std::vector<SequenceExample> batch;
  for (int i = 0; i < 3; ++i) {
    SequenceExample ex;
    for (int t = 0; t < 3; ++t) ex.steps.push_back(gen::vec(rng, 3));
    ex.label = i;
    batch.push_back(ex);
  }
  CHECK(lstm_gradient_check(p, batch, 200, 3) < 1e-4);

  // Single step, readout bias: softmax - onehot.
  LstmParams g;
  const std::vector<SequenceExample> single{{{{0.2, 0.1, -0.3}}, 1}};
  lstm_loss_and_gradient(p, single, &g);
  auto probs = classify_sequence(p, single[0].steps);
  probs[1] -= 1.0;
  for (std::size_t k = 0; k < 3; ++k) CHECK(g.b_readout[k] == doctest::Approx(probs[k]).epsilon(1e-13));

  LstmParams g1, g2;
  const double l1 = lstm_loss_and_gradient(p, std::vector<SequenceExample>{batch[0]}, &g1);
  const double l2 = lstm_loss_and_gradient(p, std::vector<SequenceExample>{batch[0], batch[0]}, &g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
  const auto f1 = flat(g1), f2 = flat(g2);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == doctest::Approx(f2[i]).epsilon(1e-12));
}

TEST_CASE("training: separable data, determinism, zero learning rate") {
  SeededRng rng(15);
  std::vector<SequenceExample> data;
  for (int i = 0; i < 20; ++i) {
    SequenceExample ex;
    ex.label = i % 2;
    for (int t = 0; t < 3; ++t) {
      auto x = gen::vec(rng, 4, -0.3, 0.3);
      x[0] += ex.label == 1 ? 1.0 : -1.0;
      ex.steps.push_back(x);
    }
    data.push_back(ex);
  }
  LstmHyper hyper;
  hyper.learning_rate = 0.5;
  hyper.iterations = 2000;
  hyper.seed = 2;
  const LstmTrainResult a = train_lstm(data, 16, 2, hyper);
  int correct = 0;
  for (const auto& ex : data) {
    const auto p = classify_sequence(a.params, ex.steps);
    correct += (p[1] > p[0]) == (ex.label == 1);
  }
  CHECK(correct >= 19);
  CHECK(train_lstm(data, 16, 2, hyper).params == a.params);

  hyper.learning_rate = 0.0;
  hyper.iterations = 10;
  CHECK(train_lstm(data, hyper, a.params).params == a.params);
  CHECK_THROWS_AS(train_lstm(std::vector<SequenceExample>{}, 4, 2, hyper), ConfigError);
}

TEST_CASE("lstm checkpoints round-trip") {
  fixture::TempDir tmp("lstm");
  SeededRng rng(16);
  const LstmParams p = random_lstm(rng, 5, 3, 2);
  save_lstm(tmp.path() / "l.ckpt", p);
  CHECK(load_lstm(tmp.path() / "l.ckpt") == p);
}

}  // TEST_SUITE

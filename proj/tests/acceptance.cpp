// Acceptance suite: one PASS/FAIL line per criterion.
//   tsfn_acceptance [--only N[,M...]] [--verbose]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixture.hpp"
#include "oracles.hpp"
#include "tsfn/experiment.hpp"

namespace {

using namespace tsfn;

struct Outcome {
  bool pass = false;
  std::string detail;
  double limit_seconds = 0.0;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome fft_vs_dft() {
  SeededRng rng(101);
  double worst = 0.0;
  for (std::size_t n = 2; n <= 4096; n *= 2) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    const auto fast = fft(x);
    const auto slow = dft_naive(x);
    for (std::size_t k = 0; k < n; ++k) {
      worst = std::max(worst, std::abs(fast[k] - slow[k]) / std::abs(slow[k]));
    }
  }
  return {worst <= 1e-9, "max per-bin relative error " + fmt("%.2e", worst), 5.0};
}

Outcome rank1_eckart_young() {
  SeededRng rng(202);
  double worst = 0.0;
  int beaten = 0;
  for (int inst = 0; inst < 200; ++inst) {
    Matrix x(7, 7);
    for (double& v : x.data()) v = rng.normal();
    const Rank1Pair p = rank1_approx(x);
    Matrix residual = x;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j) residual(i, j) -= p.a[i] * p.b[j];
    const double ours = residual.frobenius_norm();
    const double tail = oracle::rank1_tail_energy(x);
    worst = std::max(worst, std::abs(ours - tail) / tail);
    // Competitors: random directions with their optimal scale.
    const double x2 = x.frobenius_norm() * x.frobenius_norm();
    for (int k = 0; k < 50; ++k) {
      std::vector<double> u(7), w(7);
      for (double& e : u) e = rng.normal();
      for (double& e : w) e = rng.normal();
      const auto xw = x.multiply(w);
      double uxw = 0.0;
      for (std::size_t i = 0; i < 7; ++i) uxw += u[i] * xw[i];
      const double uu = l2_norm(u), ww = l2_norm(w);
      const double competitor = std::sqrt(std::max(0.0, x2 - uxw * uxw / (uu * uu * ww * ww)));
      if (competitor < ours) ++beaten;
    }
  }
  return {worst <= 1e-6 && beaten == 0,
          "max relative deviation from SVD tail " + fmt("%.2e", worst) + ", " +
              std::to_string(beaten) + " of 10000 random rank-1 competitors did better",
          10.0};
}

Outcome gradient_checks() {
  const GradcheckSummary s = run_gradchecks(5);
  const bool ok = s.backbone_max_error < 1e-4 && s.lstm_max_error < 1e-4 &&
                  s.backbone_samples >= 100 && s.lstm_samples >= 100;
  return {ok,
          "backbone " + fmt("%.2e", s.backbone_max_error) + " over " +
              std::to_string(s.backbone_samples) + " params, lstm " +
              fmt("%.2e", s.lstm_max_error) + " over " + std::to_string(s.lstm_samples),
          60.0};
}

Outcome tscf_oracle() {
  SeededRng rng(404);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    StreamFeatures f{Tensor3(4, 3, 3), Tensor3(4, 3, 3), Tensor3(4, 3, 3)};
    for (Tensor3* t : {&f.app, &f.mot, &f.ego}) {
      for (double& v : t->data()) v = rng.uniform(0.0, 2.0);
    }
    const auto ours = tscf_fuse(f);
    const auto ref = oracle::tscf(f);
    for (std::size_t d = 0; d < ref.size(); ++d) {
      worst = std::max(worst, std::abs(ours[d] - ref[d]) / std::max(1.0, std::abs(ref[d])));
    }
  }
  return {worst <= 1e-9, "max deviation from straight-line oracle " + fmt("%.2e", worst), 5.0};
}

Outcome paper_shapes() {
  const ExperimentConfig cfg = ExperimentConfig::paper_shape();
  SeededRng rng(505);
  std::ostringstream detail;
  bool ok = true;
  std::vector<CorrelationVector> vectors;
  StreamFeatures features;
  for (StreamKind kind : kAllStreams) {
    const ConvNetConfig net = cfg.stream_config(kind, 2);
    const ConvNetParams params = init_params(net, rng);
    Tensor3 input(static_cast<std::size_t>(net.input_channels), 224, 224);
    for (double& v : input.data()) v = rng.uniform(-1.0, 1.0);
    Tensor3 maps = forward_features(params, net, input);
    detail << to_string(kind) << " " << maps.channels() << "x" << maps.height() << "x"
           << maps.width() << ", ";
    ok = ok && maps.channels() == 512 && maps.height() == 7 && maps.width() == 7;
    features.get(kind) = std::move(maps);
  }
  const CorrelationVector v = tscf_fuse(features);
  for (int k = 0; k < cfg.interval_length + 1; ++k) vectors.push_back(v);
  const auto v_sub = interval_concat(vectors);
  const auto enc = interval_encode(v_sub, cfg.spectrum, cfg.pad_intervals);
  SeededRng lstm_rng(506);
  const LstmParams lstm = init_lstm(static_cast<int>(enc.values.size()), cfg.lstm_hidden, 2,
                                    cfg.lstm.init_std, cfg.lstm.forget_bias, lstm_rng);
  const Sequence seq{enc.values};
  const auto probs = classify_sequence(lstm, seq);
  detail << "interval " << v_sub.size() << ", encoding " << enc.values.size() << ", lstm H "
         << lstm.hidden_size;
  ok = ok && v_sub.size() == 2048 && enc.values.size() == 2048 && lstm.hidden_size == 700 &&
       probs.size() == 2 && all_finite(probs);
  return {ok, detail.str(), 30.0};
}

Outcome desk_experiment() {
  fixture::TempDir tmp("accept6");
  SyntheticSpec spec;  // 6 classes x 24 clips, seed 1
  generate_dataset(spec, tmp.path() / "data");
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.dataset = tmp.path() / "data";
  cfg.output = tmp.path() / "run";
  const EvalReport r = run_experiment(cfg);
  return {r.accuracy >= 0.90,
          "tscf test accuracy " + fmt("%.4f", r.accuracy) + " on " + std::to_string(r.total()) +
              " clips",
          600.0};
}

Outcome ego_ablation() {
  constexpr int kClasses = 4;
  const double chance = 1.0 / kClasses;
  double sum_ego = 0.0, sum_zero = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double acc[2] = {0.0, 0.0};
    for (int zero = 0; zero < 2; ++zero) {
      fixture::TempDir tmp("accept7");
      SyntheticSpec spec;
      spec.preset = DatasetPreset::EgoBenchmark;
      spec.classes = kClasses;
      spec.clips_per_class = 12;
      spec.detector_dropout = 0.0;
      spec.ego_amplitude = zero ? 0.0 : 1.5;
      spec.seed = seed;
      generate_dataset(spec, tmp.path() / "data");
      ExperimentConfig cfg = ExperimentConfig::desk();
      cfg.dataset = tmp.path() / "data";
      cfg.output = tmp.path() / "run";
      cfg.seed = seed;
      cfg.split_seed = seed;
      acc[zero] = ablate(cfg, StreamSet::only(StreamKind::EgoMotion)).accuracy;
    }
    sum_ego += acc[0];
    sum_zero += acc[1];
    per_seed << (seed > 1 ? " " : "") << fmt("%.2f", acc[0]) << "/" << fmt("%.2f", acc[1]);
  }
  const double ego = sum_ego / 5.0, zero = sum_zero / 5.0;
  const bool ok = ego - chance >= 0.20 && std::abs(zero - chance) <= 0.10;
  return {ok,
          "ego-only mean accuracy " + fmt("%.3f", ego) + " (chance " + fmt("%.2f", chance) +
              "), zero-amplitude " + fmt("%.3f", zero) + "; per seed " + per_seed.str(),
          1800.0};
}

Outcome determinism() {
  fixture::TempDir tmp("accept8");
  generate_dataset(fixture::tiny_spec(), tmp.path() / "data");
  std::vector<EvalReport> reports;
  for (const char* run : {"a", "b"}) {
    const ExperimentConfig cfg = fixture::tiny_config(tmp.path() / "data", tmp.path() / run);
    run_experiment(cfg);
    reports.push_back(evaluate_saved(cfg));
  }
  const bool same = reports[0] == reports[1] && reports[0].to_json() == reports[1].to_json();
  return {same, same ? "two train+eval runs gave identical reports" : "reports differ", 0.0};
}

Outcome mask_partition() {
  SeededRng rng(909);
  int mismatches = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto h = 4 + rng.below(29), w = 4 + rng.below(29), pairs = 1 + rng.below(4);
    FlowStack stack{Tensor3(2 * pairs, h, w)};
    for (double& v : stack.planes.data()) v = rng.normal(0.0, 3.0);
    BoundingBox box;
    box.present = rng.uniform() > 0.05;
    box.x0 = static_cast<int>(rng.below(w + 8)) - 4;
    box.y0 = static_cast<int>(rng.below(h + 8)) - 4;
    box.x1 = box.x0 + static_cast<int>(rng.below(w + 2));
    box.y1 = box.y0 + static_cast<int>(rng.below(h + 2));
    const FlowStack in = zero_outside_box(stack, box);
    const FlowStack out = zero_inside_box(stack, box);
    for (std::size_t i = 0; i < stack.planes.size(); ++i) {
      if (in.planes.data()[i] + out.planes.data()[i] != stack.planes.data()[i]) {
        ++mismatches;
        break;
      }
    }
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " of 1000 random stacks failed to reconstruct", 5.0};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (arg == "--verbose") {
      set_progress_stream(&std::cerr);
    } else {
      std::cerr << "usage: tsfn_acceptance [--only N[,M...]] [--verbose]\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fft matches naive DFT, lengths 2..4096", fft_vs_dft},
      {"rank-1 attention equals SVD optimum (Eckart-Young)", rank1_eckart_young},
      {"backbone and LSTM gradients match finite differences", gradient_checks},
      {"tscf_fuse equals straight-line oracle", tscf_oracle},
      {"paper-shape preset: 512x7x7 maps, 2048 interval, H=700", paper_shapes},
      {"desk experiment reaches >= 90% test accuracy", desk_experiment},
      {"ego-only ablation: above chance on ego classes, chance at zero amplitude", ego_ablation},
      {"train+eval is bit-for-bit deterministic", determinism},
      {"inside mask + outside mask reconstructs the flow stack", mask_partition},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && only.count(id) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what(), 0.0};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.1f s", secs);
    if (o.limit_seconds > 0.0) {
      timing += fmt(" (limit %.0f s)", o.limit_seconds);
      if (secs >= o.limit_seconds) {
        o.pass = false;
        o.detail += "; over time limit";
      }
    }
    std::printf("%s [%d] %s: %s; %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

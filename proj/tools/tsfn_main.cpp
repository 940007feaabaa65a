#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "tsfn/error.hpp"
#include "tsfn/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct RunOptions {
  std::string config_path;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::string fusion;
  std::string streams;
  bool quiet = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_streams = true) {
  cmd->add_option("--config", o.config_path, "key = value experiment config");
  cmd->add_option("--dataset", o.dataset, "dataset directory (overrides the config)");
  cmd->add_option("--out", o.out, "run output directory");
  cmd->add_option("--seed", o.seed, "training and evaluation seed");
  cmd->add_option("--repeats", o.repeats, "evaluation repeats over interval sampling");
  cmd->add_option("--fusion", o.fusion, "tscf | sum | max | bilinear");
  if (with_streams) {
    cmd->add_option("--streams", o.streams, "stream subset, e.g. app,mot or all");
  }
  cmd->add_flag("-q,--quiet", o.quiet, "no progress messages");
}

tsfn::ExperimentConfig resolve(const RunOptions& o) {
  tsfn::KeyValues kv;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw tsfn::DataError("cannot read config " + o.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    kv = tsfn::parse_key_values(ss.str());
  }
  if (!o.dataset.empty()) kv["dataset"] = o.dataset;
  if (!o.out.empty()) kv["output"] = o.out;
  if (o.seed) kv["seed"] = std::to_string(*o.seed);
  if (o.repeats) kv["repeats"] = std::to_string(*o.repeats);
  if (!o.fusion.empty()) kv["fusion"] = o.fusion;
  if (!o.streams.empty()) kv["streams"] = o.streams;
  return tsfn::ExperimentConfig::from_key_values(kv);
}

void print_report(const tsfn::EvalReport& r) {
  std::printf("accuracy %.4f (%ld clips)", r.accuracy, r.total());
  if (r.repeat_accuracies.size() > 1) {
    std::printf(", mean over %zu repeats %.4f", r.repeat_accuracies.size(), r.mean_accuracy);
  }
  std::printf("\nconfusion [true x predicted]:\n");
  for (const auto& row : r.confusion) {
    for (long c : row) std::printf(" %4ld", c);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stream correlation fusion: synthetic data, training and evaluation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_config;
  std::string gen_out;
  std::optional<std::string> preset;
  std::optional<int> classes;
  std::optional<int> clips_per_class;
  std::optional<int> frames;
  std::optional<int> resolution;
  std::optional<double> ego_amplitude;
  std::optional<double> dropout;
  std::optional<std::uint64_t> gen_seed;
  bool no_cue = false;
  gen->add_option("--config", gen_config, "key = value generator spec");
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--preset", preset, "interaction | ego_benchmark");
  gen->add_option("--classes", classes);
  gen->add_option("--clips-per-class", clips_per_class);
  gen->add_option("--frames", frames);
  gen->add_option("--resolution", resolution);
  gen->add_option("--ego-amplitude", ego_amplitude, "camera motion in pixels per frame");
  gen->add_option("--dropout", dropout, "detector miss probability per frame");
  gen->add_option("--seed", gen_seed);
  gen->add_flag("--no-appearance-cue", no_cue, "target texture independent of the class");

  // train / eval / ablate / fusion-bench
  RunOptions train_opts;
  std::string phase = "all";
  auto* train = app.add_subcommand("train", "phase 1 (backbones), phase 2 (LSTM) or both");
  add_run_options(train, train_opts);
  train->add_option("--phase", phase, "1 | 2 | all")->check(CLI::IsMember({"1", "2", "all"}));

  RunOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "re-evaluate a saved run");
  add_run_options(eval, eval_opts, false);

  RunOptions ablate_opts;
  auto* abl = app.add_subcommand("ablate", "train and evaluate with a stream subset");
  add_run_options(abl, ablate_opts);

  RunOptions bench_opts;
  auto* bench = app.add_subcommand("fusion-bench", "compare sum, max, bilinear and tscf fusion");
  add_run_options(bench, bench_opts, false);

  std::uint64_t grad_seed = 5;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--seed", grad_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      tsfn::KeyValues kv;
      if (!gen_config.empty()) {
        std::ifstream in(gen_config);
        if (!in) throw tsfn::ConfigError("cannot read " + gen_config);
        std::stringstream ss;
        ss << in.rdbuf();
        kv = tsfn::parse_key_values(ss.str());
      }
      if (preset) kv["preset"] = *preset;
      if (classes) kv["classes"] = std::to_string(*classes);
      if (clips_per_class) kv["clips_per_class"] = std::to_string(*clips_per_class);
      if (frames) kv["frames"] = std::to_string(*frames);
      if (resolution) kv["resolution"] = std::to_string(*resolution);
      if (ego_amplitude) kv["ego_amplitude"] = std::to_string(*ego_amplitude);
      if (dropout) kv["detector_dropout"] = std::to_string(*dropout);
      if (gen_seed) kv["seed"] = std::to_string(*gen_seed);
      if (no_cue) kv["appearance_cue"] = "false";
      const auto spec = tsfn::SyntheticSpec::from_key_values(kv);
      const auto data = tsfn::generate_dataset(spec, gen_out);
      std::printf("wrote %zu clips (%d classes) to %s\n", data.clips.size(), data.classes,
                  gen_out.c_str());
      return kOk;
    }

    const RunOptions* run = *train ? &train_opts
                            : *eval ? &eval_opts
                            : *abl  ? &ablate_opts
                            : *bench ? &bench_opts
                                     : nullptr;
    if (run != nullptr && !run->quiet) tsfn::set_progress_stream(&std::cerr);

    if (*train) {
      const auto config = resolve(train_opts);
      if (phase == "1") {
        tsfn::run_phase1(config);
        std::printf("backbones written to %s\n", config.output.c_str());
      } else {
        print_report(phase == "2" ? tsfn::run_phase2(config) : tsfn::run_experiment(config));
      }
    } else if (*eval) {
      const auto config = resolve(eval_opts);
      const auto report = tsfn::evaluate_saved(config);
      print_report(report);
    } else if (*abl) {
      RunOptions o = ablate_opts;
      const std::string subset = o.streams.empty() ? "all" : o.streams;
      o.streams.clear();
      const auto config = resolve(o);
      print_report(tsfn::ablate(config, tsfn::parse_stream_set(subset)));
    } else if (*bench) {
      const auto rows = tsfn::fusion_bench(resolve(bench_opts));
      std::printf("%-10s %10s %14s\n", "method", "accuracy", "mean_accuracy");
      for (const auto& row : rows) {
        std::printf("%-10s %10.4f %14.4f\n", std::string(tsfn::to_string(row.method)).c_str(),
                    row.report.accuracy, row.report.mean_accuracy);
      }
    } else if (*grad) {
      const auto s = tsfn::run_gradchecks(grad_seed);
      std::printf("backbone: max relative error %.3e over %d parameters\n", s.backbone_max_error,
                  s.backbone_samples);
      std::printf("lstm:     max relative error %.3e over %d parameters\n", s.lstm_max_error,
                  s.lstm_samples);
      return s.backbone_max_error < 1e-4 && s.lstm_max_error < 1e-4 ? kOk : kNumerical;
    }
    return kOk;
  } catch (const tsfn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const tsfn::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const tsfn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const tsfn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const tsfn::DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

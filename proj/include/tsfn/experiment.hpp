#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsfn/backbone.hpp"
#include "tsfn/dataset.hpp"
#include "tsfn/report.hpp"
#include "tsfn/temporal.hpp"
#include "tsfn/tscf.hpp"

namespace tsfn {

struct ExperimentConfig {
  std::filesystem::path dataset;
  std::filesystem::path output = "runs/default";
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  double test_fraction = 0.25;
  FusionMethod fusion = FusionMethod::TSCF;
  StreamSet streams = StreamSet::all();

  // Backbone shape: input resolution and conv blocks ("8p" = 8 channels then pool).
  int input_size = 56;
  std::string conv_blocks = "8p,16p,16p,16";
  int flow_pairs = 3;        // T: flow stack holds 2T planes
  int interval_length = 3;   // L: one interval concatenates L+1 correlation vectors
  int sequence_length = 4;   // consecutive intervals fed to the LSTM per anchor
  int lstm_hidden = 32;
  SpectrumMode spectrum = SpectrumMode::Magnitude;
  bool pad_intervals = true;
  bool standardize = true;   // z-score encodings with training-set statistics
  int eval_anchors = 20;
  int train_anchor_stride = 1;
  int phase1_frame_stride = 1;
  int fallback_size = kFallbackMatrixSize;

  RmsPropHyper backbone{1e-3, 20, 0, 1, 0.9, 1e-8};
  int appearance_iterations = 150;
  int motion_iterations = 200;
  LstmHyper lstm{0.05, 0.9, 0.05, 1500, 32, 1};
  int repeats = 1;

  // Desk-scale defaults (D=16, S=7, T=3, L=3, H=32).
  static ExperimentConfig desk();
  // Paper-shape preset (224 input, D=512, S=7, T=10, H=700); meant for shape checks.
  static ExperimentConfig paper_shape();

  void validate() const;
  int feature_channels() const;
  int feature_spatial() const;
  std::size_t interval_width() const;   // D * (L + 1)
  std::size_t encoding_length() const;  // after optional power-of-two padding
  ConvNetConfig stream_config(StreamKind kind, int classes) const;

  KeyValues to_key_values() const;
  // Starts from desk() and overrides every key present. Unknown keys are errors.
  static ExperimentConfig from_key_values(const KeyValues& kv);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct StreamModel {
  ConvNetConfig config;
  ConvNetParams params;
};

struct ModelBundle {
  ExperimentConfig config;
  int classes = 0;
  std::array<std::optional<StreamModel>, 3> streams;  // indexed by StreamKind
  LstmParams lstm;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  const std::optional<StreamModel>& stream(StreamKind kind) const {
    return streams[static_cast<std::size_t>(kind)];
  }
};

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified per class; at least one test clip per class that has two or more clips.
DataSplit split_dataset(const Dataset& dataset, std::uint64_t seed, double test_fraction);

// Number of time steps with a complete flow window: frames - T.
std::size_t correlation_steps(const Clip& clip, const ExperimentConfig& config);
// Number of LSTM anchors in a clip (0 when it is too short).
std::size_t anchor_count(const Clip& clip, const ExperimentConfig& config);
// `count` anchors spread uniformly over [0, available).
std::vector<std::size_t> uniform_anchors(std::size_t available, std::size_t count);

// Backbone input of one stream at time t (applies the detection fallback).
Tensor3 stream_input(const Clip& clip, std::size_t t, StreamKind kind, const ExperimentConfig& config);

// Phase 1: trains one backbone per enabled stream on per-frame clip labels.
std::array<std::optional<StreamModel>, 3> train_backbones(const ExperimentConfig& config,
                                                          const Dataset& dataset,
                                                          const std::vector<std::size_t>& train);

// Feature maps for every correlation step; disabled streams give zero maps.
std::vector<StreamFeatures> extract_features(const ModelBundle& bundle, const Clip& clip);

// Magnitude (or packed) FFT of each interval of L+1 correlation vectors.
std::vector<std::vector<double>> interval_encodings(const std::vector<CorrelationVector>& vectors,
                                                    const ExperimentConfig& config);

// Phase 2 for one fusion method: fuses cached features, trains the LSTM, fills
// the bundle's temporal part. `features` is indexed by clip id.
void train_temporal(ModelBundle& bundle, const Dataset& dataset,
                    const std::vector<std::size_t>& train,
                    const std::vector<std::vector<StreamFeatures>>& features);

// Class probabilities per evaluation anchor of one clip.
std::vector<std::vector<double>> anchor_probabilities(const ModelBundle& bundle,
                                                      const std::vector<StreamFeatures>& features,
                                                      const std::vector<std::size_t>& anchors);

// Argmax of the mean probability vector.
int predict_clip(const std::vector<std::vector<double>>& anchor_probs);

// Evaluates `test` clips. Repeat 0 uses uniform anchors; repeat r > 0 draws
// anchors at random with seed config.seed + r.
EvalReport evaluate(const ModelBundle& bundle, const Dataset& dataset,
                    const std::vector<std::size_t>& test, int repeats = 1,
                    const std::vector<std::vector<StreamFeatures>>* cached = nullptr);

// Both phases plus evaluation; writes the bundle and report to config.output.
EvalReport run_experiment(const ExperimentConfig& config);
// Phase 1 only; writes backbone checkpoints to config.output.
void run_phase1(const ExperimentConfig& config);
// Phase 2 from backbones already in config.output, then evaluation.
EvalReport run_phase2(const ExperimentConfig& config);
// Reloads the bundle from config.output and evaluates the test split.
EvalReport evaluate_saved(const ExperimentConfig& config);

// run_experiment restricted to a stream subset; output under <output>/ablate_<streams>.
EvalReport ablate(const ExperimentConfig& config, const StreamSet& streams);

struct FusionBenchRow {
  FusionMethod method;
  EvalReport report;
};

// One phase-1 training, then phase 2 + evaluation for each fusion method.
// Writes per-method reports and fusion_bench.csv under config.output.
std::vector<FusionBenchRow> fusion_bench(const ExperimentConfig& config,
                                         const std::vector<FusionMethod>& methods = {
                                             FusionMethod::Sum, FusionMethod::Max,
                                             FusionMethod::Bilinear, FusionMethod::TSCF});

struct GradcheckSummary {
  double backbone_max_error = 0.0;
  double lstm_max_error = 0.0;
  int backbone_samples = 0;
  int lstm_samples = 0;
};

// Finite-difference checks on small random networks.
GradcheckSummary run_gradchecks(std::uint64_t seed);

// Progress messages go here (nullptr silences them).
void set_progress_stream(std::ostream* stream);

}  // namespace tsfn

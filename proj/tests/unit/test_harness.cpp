#include <cstring>

#include "../fixture.hpp"
#include "doctest.h"
#include "generators.hpp"
#include "tsfn/error.hpp"
#include "tsfn/experiment.hpp"

using namespace tsfn;
namespace fs = std::filesystem;

namespace {

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) return false;
  for (const auto& f : files) {
    if (!fs::exists(b / f) || fixture::read_text(a / f) != fixture::read_text(b / f)) return false;
  }
  return true;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.classes = 2;
  s.clips_per_class = 2;
  s.frames = 6;
  s.resolution = 20;
  return s;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("synthetic spec validation and key-values") {
  SyntheticSpec s;
  CHECK_NOTHROW(s.validate());
  CHECK(SyntheticSpec::from_key_values(s.to_key_values()).to_key_values() == s.to_key_values());
  s.classes = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.classes = 7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.preset = DatasetPreset::EgoBenchmark;
  s.classes = 5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.detector_dropout = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(SyntheticSpec::from_key_values({{"classes", "x"}}), ConfigError);
  CHECK(parse_dataset_preset("ego_benchmark") == DatasetPreset::EgoBenchmark);
}

TEST_CASE("clip structure and class design") {
  const SyntheticSpec spec;
  const auto clips = generate_clips(spec);
  REQUIRE(clips.size() == 144);
  for (std::size_t i = 0; i < clips.size(); i += 13) {
    const Clip& c = clips[i];
    CHECK(c.label == static_cast<int>(i) / 24);
    CHECK(c.frames.size() == 24);
    CHECK(c.flows.size() == c.frames.size() - 1);
    CHECK(c.boxes.size() == c.frames.size());
    CHECK(c.meta.target == static_cast<TargetPattern>(c.label % 3));
    CHECK(c.meta.ego == (c.label / 3 == 0 ? EgoPattern::Sway : EgoPattern::Shake));
    for (double v : c.frames[3].data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("zero ego amplitude gives exactly zero non-target flow") {
  SyntheticSpec spec = small_spec();
  spec.ego_amplitude = 0.0;
  spec.detector_dropout = 0.0;
  for (const Clip& c : generate_clips(spec)) {
    for (std::size_t t = 0; t < c.flows.size(); ++t) {
      const FlowField& f = c.flows[t];
      const BoundingBox& b = c.boxes[t];
      REQUIRE(b.present);
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
          if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) continue;
          const auto i = static_cast<std::size_t>(y * f.width + x);
          CHECK(f.u[i] == 0.0);
          CHECK(f.v[i] == 0.0);
        }
    }
  }
}

TEST_CASE("detector dropout rate") {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.clips_per_class = 25;
  spec.frames = 20;
  spec.resolution = 16;
  spec.detector_dropout = 0.3;
  std::size_t missed = 0, total = 0;
  for (const Clip& c : generate_clips(spec)) {
    for (const auto& b : c.boxes) {
      missed += !b.present;
      ++total;
    }
  }
  CHECK(total == 1000);
  const double rate = static_cast<double>(missed) / static_cast<double>(total);
  CHECK(rate >= 0.25);
  CHECK(rate <= 0.35);
}

TEST_CASE("datasets are deterministic and round-trip bit-exactly") {
  fixture::TempDir tmp("dataset");
  const SyntheticSpec spec = small_spec();
  const Dataset a = generate_dataset(spec, tmp.path() / "a");
  generate_dataset(spec, tmp.path() / "b");
  CHECK(same_tree(tmp.path() / "a", tmp.path() / "b"));
  SyntheticSpec other = spec;
  other.seed = 2;
  generate_dataset(other, tmp.path() / "c");
  CHECK_FALSE(same_tree(tmp.path() / "a", tmp.path() / "c"));

  const Dataset back = load_dataset(tmp.path() / "a");
  CHECK(back.classes == a.classes);
  REQUIRE(back.clips.size() == a.clips.size());
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    const Clip &x = a.clips[i], &y = back.clips[i];
    CHECK(x.label == y.label);
    CHECK(x.boxes == y.boxes);
    for (std::size_t t = 0; t < x.frames.size(); ++t) CHECK(x.frames[t].data == y.frames[t].data);
    for (std::size_t t = 0; t < x.flows.size(); ++t) {
      CHECK(x.flows[t].u == y.flows[t].u);
      CHECK(x.flows[t].v == y.flows[t].v);
    }
    CHECK(x.meta.seed == y.meta.seed);
    CHECK(x.meta.ego == y.meta.ego);
  }
  CHECK(fs::exists(tmp.path() / "a" / "clip_00000" / "meta.json"));
  CHECK(fixture::read_text(tmp.path() / "a" / "clip_00000" / "frames.bin").substr(0, 4) == "TSTN");

  CHECK_THROWS_AS(load_dataset(tmp.path() / "missing"), DataError);
  fs::remove(tmp.path() / "a" / "clip_00001" / "flows.bin");
  CHECK_THROWS_AS(load_dataset(tmp.path() / "a"), DataError);
}

TEST_CASE("eval reports") {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  const EvalReport always0 = EvalReport::from_predictions(3, truth, std::vector<int>(6, 0));
  CHECK(always0.accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(always0.confusion[1][0] == 2);
  CHECK(always0.confusion[2][0] == 2);
  CHECK(always0.per_class_recall == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(always0.consistent());
  const EvalReport perfect = EvalReport::from_predictions(3, truth, truth);
  CHECK(perfect.accuracy == 1.0);
  for (int k = 0; k < 3; ++k) CHECK(perfect.confusion[k][k] == 2);
  CHECK_THROWS_AS(EvalReport::from_predictions(3, truth, std::vector<int>{0}), ShapeError);
  CHECK_THROWS_AS(EvalReport::from_predictions(2, truth, truth), DataError);

  EvalReport r = always0;
  r.repeat_accuracies = {1.0 / 3.0, 0.5};
  r.mean_accuracy = 5.0 / 12.0;
  r.metadata = {{"fusion", "tscf"}};
  CHECK(EvalReport::parse_json(r.to_json()) == r);
  EvalReport broken = r;
  broken.confusion[0][0] = 5;
  CHECK_FALSE(broken.consistent());

  fixture::TempDir tmp("report");
  write_report(tmp.path(), r);
  CHECK(read_report(tmp.path()) == r);
  CHECK(fixture::read_text(tmp.path() / "confusion.csv").rfind("true\\pred", 0) == 0);
  CHECK(fs::exists(tmp.path() / "per_class_recall.csv"));
}

TEST_CASE("property: reports from random predictions are consistent") {
  SeededRng rng(21);
  for (int c = 0; c < gen::kCases; ++c) {
    const int k = 2 + static_cast<int>(rng.below(6));
    const std::size_t n = 1 + rng.below(40);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
      pred[i] = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
    }
    const EvalReport r = EvalReport::from_predictions(k, truth, pred);
    CHECK(r.consistent());
    CHECK(r.total() == static_cast<long>(n));
    CHECK(EvalReport::parse_json(r.to_json()) == r);
  }
}

TEST_CASE("experiment config") {
  const ExperimentConfig desk = ExperimentConfig::desk();
  CHECK(desk.feature_channels() == 16);
  CHECK(desk.feature_spatial() == 7);
  CHECK(desk.interval_width() == 64);
  CHECK(desk.encoding_length() == 64);
  CHECK(ExperimentConfig::from_key_values(desk.to_key_values()).to_key_values() == desk.to_key_values());
  const ExperimentConfig paper = ExperimentConfig::from_key_values({{"preset", "paper"}});
  CHECK(paper.feature_channels() == 512);
  CHECK(paper.interval_width() == 2048);
  CHECK(paper.lstm_hidden == 700);
  CHECK(paper.backbone.learning_rate == 1e-5);
  CHECK(paper.stream_config(StreamKind::TargetMotion, 6).input_channels == 20);

  CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"bogus", "1"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"test_fraction", "1.0"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"seed", "-3"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"fusion", "avg"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"interval_length", "2"}, {"pad_intervals", "false"}}),
                  ConfigError);
  const auto padded = ExperimentConfig::from_key_values({{"interval_length", "2"}});
  CHECK(padded.interval_width() == 48);
  CHECK(padded.encoding_length() == 64);
}

TEST_CASE("split and anchors") {
  Dataset d;
  d.classes = 3;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 8; ++i) {
      Clip c;
      c.label = k;
      d.clips.push_back(c);
    }
  const DataSplit s = split_dataset(d, 4, 0.25);
  CHECK(s.test.size() == 6);
  CHECK(s.train.size() == 18);
  std::vector<int> per_class(3, 0);
  for (auto i : s.test) per_class[static_cast<std::size_t>(d.clips[i].label)]++;
  CHECK(per_class == std::vector<int>{2, 2, 2});
  const DataSplit again = split_dataset(d, 4, 0.25);
  CHECK(again.test == s.test);

  CHECK(uniform_anchors(15, 20).size() == 20);
  CHECK(uniform_anchors(15, 20).front() == 0);
  CHECK(uniform_anchors(15, 20).back() == 14);
  CHECK(uniform_anchors(1, 3) == std::vector<std::size_t>{0, 0, 0});

  const ExperimentConfig cfg = ExperimentConfig::desk();
  Clip c;
  c.frames.resize(24);
  c.flows.resize(23);
  CHECK(correlation_steps(c, cfg) == 21);
  CHECK(anchor_count(c, cfg) == 15);
  c.frames.resize(7);
  c.flows.resize(6);
  CHECK(anchor_count(c, cfg) == 0);
}

TEST_CASE("clip prediction averages anchor probabilities") {
  CHECK(predict_clip({{0.6, 0.4}, {0.1, 0.9}}) == 1);
  CHECK(predict_clip({{0.5, 0.5}}) == 0);
  CHECK_THROWS_AS(predict_clip({}), DataError);
}

TEST_CASE("stream inputs fall back on missed detections") {
  SyntheticSpec spec = small_spec();
  spec.detector_dropout = 0.5;
  const auto clips = generate_clips(spec);
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.input_size = 16;
  bool saw_miss = false;
  for (const Clip& c : clips) {
    for (std::size_t t = 0; t + 3 < c.frames.size(); ++t) {
      const Tensor3 app = stream_input(c, t, StreamKind::Appearance, cfg);
      const Tensor3 mot = stream_input(c, t, StreamKind::TargetMotion, cfg);
      const Tensor3 ego = stream_input(c, t, StreamKind::EgoMotion, cfg);
      CHECK(app.channels() == 3);
      CHECK(mot.channels() == 6);
      CHECK(ego.height() == 16);
      if (!c.boxes[t].present) {
        saw_miss = true;
        CHECK(l2_norm(app.data()) == 0.0);
        CHECK(l2_norm(mot.data()) == 0.0);
        CHECK(ego == mask_flow_nontarget(build_flow_stack(c.flows, t, 3), BoundingBox::absent(), 16));
      }
    }
  }
  CHECK(saw_miss);
}

TEST_CASE("experiment pipeline on the tiny fixture") {
  fixture::TempDir tmp("pipeline");
  const Dataset data = generate_dataset(fixture::tiny_spec(), tmp.path() / "data");
  const ExperimentConfig cfg = fixture::tiny_config(tmp.path() / "data", tmp.path() / "run");

  const EvalReport r = run_experiment(cfg);
  CHECK(r.consistent());
  CHECK(r.total() == 4);
  CHECK(r.repeat_accuracies.size() == 3);
  CHECK(fs::exists(cfg.output / "report.json"));
  CHECK(fs::exists(cfg.output / "lstm.ckpt"));
  CHECK(fs::exists(cfg.output / "backbone_ego.ckpt"));

  SUBCASE("reloaded evaluation is identical") { CHECK(evaluate_saved(cfg) == r); }

  SUBCASE("golden report") {
    const std::string golden = fixture::read_text(fixture::dir() / "golden_report.json");
    CHECK(r.to_json() == golden);
  }

  SUBCASE("ablation with all streams equals the plain run") {
    const EvalReport all = ablate(cfg, StreamSet::all());
    CHECK(all == r);
  }

  SUBCASE("phases can run separately") {
    ExperimentConfig split = cfg;
    split.output = tmp.path() / "phased";
    run_phase1(split);
    CHECK(fs::exists(split.output / "backbone_app.ckpt"));
    CHECK(run_phase2(split) == r);
  }

  SUBCASE("model and data class counts must agree") {
    ModelBundle bundle = load_bundle(cfg.output);
    bundle.classes = 3;
    CHECK_THROWS_AS(evaluate(bundle, data, {0}), DataError);
  }

  SUBCASE("constant model scores 1/K on a balanced split") {
    ModelBundle bundle = load_bundle(cfg.output);
    std::fill(bundle.lstm.w_readout.begin(), bundle.lstm.w_readout.end(), 0.0);
    bundle.lstm.b_readout = {5.0, 0.0};
    const DataSplit s = split_dataset(data, cfg.split_seed, cfg.test_fraction);
    const EvalReport c = evaluate(bundle, data, s.test);
    CHECK(c.accuracy == 0.5);
    CHECK(c.confusion[0][0] == 2);
    CHECK(c.confusion[1][0] == 2);
  }

  SUBCASE("single-stream ablation trains only that backbone") {
    const EvalReport app = ablate(cfg, StreamSet::only(StreamKind::Appearance));
    CHECK(app.consistent());
    CHECK(fs::exists(cfg.output / "ablate_app" / "backbone_app.ckpt"));
    CHECK_FALSE(fs::exists(cfg.output / "ablate_app" / "backbone_mot.ckpt"));
    CHECK_THROWS_AS(ablate(cfg, StreamSet{false, false, false}), ConfigError);
  }
}

TEST_CASE("fusion bench writes a comparison table") {
  fixture::TempDir tmp("bench");
  generate_dataset(fixture::tiny_spec(), tmp.path() / "data");
  ExperimentConfig cfg = fixture::tiny_config(tmp.path() / "data", tmp.path() / "run");
  cfg.repeats = 1;
  const auto rows = fusion_bench(cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == FusionMethod::Sum);
  CHECK(rows[3].method == FusionMethod::TSCF);
  const std::string csv = fixture::read_text(cfg.output / "fusion_bench.csv");
  CHECK(csv.find("bilinear,") != std::string::npos);
  CHECK(fs::exists(cfg.output / "fusion_max" / "report.json"));
}

TEST_CASE("missing dataset is a data error") {
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.dataset = "/nonexistent/tsfn";
  CHECK_THROWS_AS(run_experiment(cfg), DataError);
  cfg.dataset.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

}  // TEST_SUITE

#ifdef TSFN_CLI
#include <sys/wait.h>

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(TSFN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("command-line exit codes") {
  fixture::TempDir tmp("cli");
  const std::string data = (tmp.path() / "data").string();
  CHECK(cli("gen --config " + (fixture::dir() / "tiny_dataset.cfg").string() + " --out " + data) == 0);
  CHECK(fs::exists(tmp.path() / "data" / "dataset.json"));
  CHECK(cli("train --dataset " + data + " --fusion avg") == 2);
  CHECK(cli("train --dataset " + data + " --streams none") == 2);
  CHECK(cli("train --dataset /nonexistent/tsfn --out " + (tmp.path() / "o").string()) == 3);
  CHECK(cli("eval --dataset " + data + " --out " + (tmp.path() / "empty").string()) == 3);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("train --config /nonexistent.cfg") == 3);
}

}  // TEST_SUITE
#endif

#include "tsfn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsfn/error.hpp"
#include "tsfn/numlib.hpp"

namespace tsfn {

std::string_view to_string(TargetPattern p) {
  switch (p) {
    case TargetPattern::Oscillate:
      return "oscillate";
    case TargetPattern::Approach:
      return "approach";
    case TargetPattern::Swing:
      return "swing";
  }
  return "?";
}

std::string_view to_string(EgoPattern p) {
  switch (p) {
    case EgoPattern::Sway:
      return "sway";
    case EgoPattern::Shake:
      return "shake";
    case EgoPattern::ShakeHorizontal:
      return "shake_horizontal";
    case EgoPattern::ShakeVertical:
      return "shake_vertical";
  }
  return "?";
}

std::string_view to_string(DatasetPreset preset) {
  return preset == DatasetPreset::Interaction ? "interaction" : "ego_benchmark";
}

DatasetPreset parse_dataset_preset(std::string_view name) {
  if (name == "interaction") return DatasetPreset::Interaction;
  if (name == "ego_benchmark" || name == "ego-benchmark") return DatasetPreset::EgoBenchmark;
  throw ConfigError("unknown dataset preset '" + std::string(name) +
                    "' (interaction or ego_benchmark)");
}

void SyntheticSpec::validate() const {
  if (classes < 2) {
    throw ConfigError("synthetic dataset needs at least 2 classes");
  }
  const int max_classes = preset == DatasetPreset::Interaction ? 6 : 4;
  if (classes > max_classes) {
    throw ConfigError("preset " + std::string(to_string(preset)) + " supports at most " +
                      std::to_string(max_classes) + " classes");
  }
  if (clips_per_class < 1) throw ConfigError("clips_per_class must be positive");
  if (frames < 2) throw ConfigError("clips need at least 2 frames");
  if (resolution < 16) throw ConfigError("resolution must be at least 16");
  if (!(ego_amplitude >= 0.0)) throw ConfigError("ego_amplitude must be nonnegative");
  if (!(detector_dropout >= 0.0 && detector_dropout <= 1.0)) {
    throw ConfigError("detector_dropout must lie in [0, 1]");
  }
}

KeyValues SyntheticSpec::to_key_values() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  return {
      {"preset", std::string(to_string(preset))},
      {"classes", std::to_string(classes)},
      {"clips_per_class", std::to_string(clips_per_class)},
      {"frames", std::to_string(frames)},
      {"resolution", std::to_string(resolution)},
      {"ego_amplitude", num(ego_amplitude)},
      {"detector_dropout", num(detector_dropout)},
      {"appearance_cue", appearance_cue ? "true" : "false"},
      {"seed", std::to_string(seed)},
  };
}

SyntheticSpec SyntheticSpec::from_key_values(const KeyValues& kv) {
  SyntheticSpec s;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  try {
    if (auto v = get("preset")) s.preset = parse_dataset_preset(*v);
    if (auto v = get("classes")) s.classes = std::stoi(*v);
    if (auto v = get("clips_per_class")) s.clips_per_class = std::stoi(*v);
    if (auto v = get("frames")) s.frames = std::stoi(*v);
    if (auto v = get("resolution")) s.resolution = std::stoi(*v);
    if (auto v = get("ego_amplitude")) s.ego_amplitude = std::stod(*v);
    if (auto v = get("detector_dropout")) s.detector_dropout = std::stod(*v);
    if (auto v = get("appearance_cue")) s.appearance_cue = *v == "true" || *v == "1";
    if (auto v = get("seed")) s.seed = std::stoull(*v);
  } catch (const std::invalid_argument&) {
    throw ConfigError("synthetic spec: malformed number");
  } catch (const std::out_of_range&) {
    throw ConfigError("synthetic spec: number out of range");
  }
  s.validate();
  return s;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Parametric description of one clip; everything rendered is a function of this.
struct Scene {
  double resolution = 56.0;
  TargetPattern target = TargetPattern::Oscillate;
  EgoPattern ego = EgoPattern::Sway;
  bool cue = true;

  Vec2 world_center;
  double half_w = 9.0;
  double half_h = 12.0;
  double motion_amp = 4.0;
  double period = 8.0;
  double phase = 0.0;
  double approach_rate = 0.025;
  double color[3] = {0.5, 0.5, 0.5};
  double bg_phase[3] = {0.0, 0.0, 0.0};
  std::vector<Vec2> camera;  // image-space background offset per frame

  double scale(int t) const {
    return target == TargetPattern::Approach ? 1.0 + approach_rate * t : 1.0;
  }

  Vec2 center(int t) const {
    Vec2 c = world_center;
    const double s = std::sin(kTwoPi * t / period + phase);
    if (target == TargetPattern::Oscillate) c.x += motion_amp * s;
    if (target == TargetPattern::Swing) c.y += motion_amp * s;
    c.x += camera[static_cast<std::size_t>(t)].x;
    c.y += camera[static_cast<std::size_t>(t)].y;
    return c;
  }

  bool inside(int t, double px, double py) const {
    const Vec2 c = center(t);
    const double s = scale(t);
    return std::abs(px - c.x) <= half_w * s && std::abs(py - c.y) <= half_h * s;
  }

  double texture(int t, double px, double py, int ch) const {
    const Vec2 c = center(t);
    const double s = scale(t);
    const double u = (px - c.x) / (half_w * s);
    const double v = (py - c.y) / (half_h * s);
    double q = 0.0;
    if (cue) {
      switch (target) {
        case TargetPattern::Oscillate:
          q = std::sin(3.0 * std::numbers::pi * u);
          break;
        case TargetPattern::Approach:
          q = std::sin(3.0 * std::numbers::pi * v);
          break;
        case TargetPattern::Swing:
          q = std::sin(3.0 * std::numbers::pi * u) * std::sin(3.0 * std::numbers::pi * v);
          break;
      }
    }
    return std::clamp(color[ch] * (0.75 + 0.25 * q), 0.0, 1.0);
  }

  double background(int t, double px, double py, int ch) const {
    const Vec2 cam = camera[static_cast<std::size_t>(t)];
    const double x = px - cam.x;
    const double y = py - cam.y;
    const double p = bg_phase[ch];
    const double g = 0.5 + 0.2 * std::sin(0.45 * x + 0.3 * y + p) +
                     0.15 * std::sin(-0.25 * x + 0.55 * y + 2.0 * p + 0.7 * ch);
    return std::clamp(g, 0.0, 1.0);
  }
};

Scene make_scene(const SyntheticSpec& spec, int label, SeededRng& rng) {
  Scene s;
  const double r = spec.resolution;
  s.resolution = r;
  s.cue = spec.appearance_cue;
  if (spec.preset == DatasetPreset::Interaction) {
    s.target = static_cast<TargetPattern>(label % 3);
    s.ego = label / 3 == 0 ? EgoPattern::Sway : EgoPattern::Shake;
  } else {
    s.target = static_cast<TargetPattern>(rng.below(3));
    static constexpr EgoPattern kEgo[] = {EgoPattern::Sway, EgoPattern::ShakeHorizontal,
                                          EgoPattern::ShakeVertical, EgoPattern::Shake};
    s.ego = kEgo[label];
  }
  s.world_center = {r / 2.0 + rng.uniform(-0.08, 0.08) * r, r / 2.0 + rng.uniform(-0.05, 0.05) * r};
  s.half_w = r * rng.uniform(0.14, 0.18);
  s.half_h = r * rng.uniform(0.19, 0.23);
  s.motion_amp = r * 0.07;
  s.period = rng.uniform(7.0, 9.0);
  s.phase = rng.uniform(0.0, kTwoPi);
  s.approach_rate = rng.uniform(0.02, 0.03);
  for (double& c : s.color) c = rng.uniform(0.25, 0.9);
  for (double& p : s.bg_phase) p = rng.uniform(0.0, kTwoPi);

  const double amp = spec.ego_amplitude;
  const double sway_dir = rng.uniform(0.0, kTwoPi);
  const double sway_period = 16.0;
  s.camera.resize(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t) {
    Vec2& cam = s.camera[static_cast<std::size_t>(t)];
    switch (s.ego) {
      case EgoPattern::Sway: {
        // Integral of a 0.4*amp sinusoidal velocity: bounded slow drift.
        const double offset =
            0.4 * amp * sway_period / kTwoPi * (1.0 - std::cos(kTwoPi * t / sway_period));
        cam = {offset * std::cos(sway_dir), offset * std::sin(sway_dir)};
        break;
      }
      case EgoPattern::Shake:
        cam = {amp * rng.uniform(-1.0, 1.0), amp * rng.uniform(-1.0, 1.0)};
        break;
      case EgoPattern::ShakeHorizontal:
        cam = {amp * rng.uniform(-1.0, 1.0), 0.0};
        break;
      case EgoPattern::ShakeVertical:
        cam = {0.0, amp * rng.uniform(-1.0, 1.0)};
        break;
    }
  }
  return s;
}

}  // namespace

Clip generate_clip(const SyntheticSpec& spec, int label, std::size_t clip_index) {
  spec.validate();
  if (label < 0 || label >= spec.classes) {
    throw ConfigError("generate_clip: label out of range");
  }
  const std::uint64_t clip_seed = splitmix64(spec.seed ^ splitmix64(clip_index + 1));
  SeededRng rng(clip_seed);
  const Scene scene = make_scene(spec, label, rng);
  const int n = spec.resolution;

  Clip clip;
  clip.label = label;
  clip.meta = {scene.target, scene.ego, spec.ego_amplitude, spec.appearance_cue, clip_seed};

  for (int t = 0; t < spec.frames; ++t) {
    Frame frame(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        const bool on_target = scene.inside(t, px, py);
        for (int c = 0; c < 3; ++c) {
          frame.at(y, x, c) =
              on_target ? scene.texture(t, px, py, c) : scene.background(t, px, py, c);
        }
      }
    }
    clip.frames.push_back(std::move(frame));

    const Vec2 c = scene.center(t);
    const double s = scene.scale(t);
    BoundingBox box{static_cast<int>(std::floor(c.x - scene.half_w * s)) - 1,
                    static_cast<int>(std::floor(c.y - scene.half_h * s)) - 1,
                    static_cast<int>(std::ceil(c.x + scene.half_w * s)) + 1,
                    static_cast<int>(std::ceil(c.y + scene.half_h * s)) + 1, true};
    box = clamp_box(box, n, n);
    if (rng.bernoulli(spec.detector_dropout)) {
      box = BoundingBox::absent();
    }
    clip.boxes.push_back(box);
  }

  for (int t = 0; t + 1 < spec.frames; ++t) {
    FlowField flow(n, n);
    const Vec2 c0 = scene.center(t);
    const Vec2 c1 = scene.center(t + 1);
    const double growth = scene.scale(t + 1) / scene.scale(t) - 1.0;
    const Vec2 cam0 = scene.camera[static_cast<std::size_t>(t)];
    const Vec2 cam1 = scene.camera[static_cast<std::size_t>(t + 1)];
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        const std::size_t idx = static_cast<std::size_t>(y) * n + x;
        if (scene.inside(t, px, py)) {
          flow.u[idx] = (c1.x - c0.x) + (px - c0.x) * growth;
          flow.v[idx] = (c1.y - c0.y) + (py - c0.y) * growth;
        } else {
          flow.u[idx] = cam1.x - cam0.x;
          flow.v[idx] = cam1.y - cam0.y;
        }
      }
    }
    clip.flows.push_back(std::move(flow));
  }
  return clip;
}

std::vector<Clip> generate_clips(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Clip> clips;
  clips.reserve(static_cast<std::size_t>(spec.classes) * spec.clips_per_class);
  for (int label = 0; label < spec.classes; ++label) {
    for (int k = 0; k < spec.clips_per_class; ++k) {
      clips.push_back(generate_clip(spec, label, clips.size()));
    }
  }
  return clips;
}

}  // namespace tsfn

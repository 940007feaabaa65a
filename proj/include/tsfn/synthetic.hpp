#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tsfn/container.hpp"
#include "tsfn/regionprep.hpp"

namespace tsfn {

// Target motion patterns rendered inside the person rectangle.
enum class TargetPattern { Oscillate, Approach, Swing };
// Camera motion applied to the whole frame.
enum class EgoPattern { Sway, Shake, ShakeHorizontal, ShakeVertical };

std::string_view to_string(TargetPattern p);
std::string_view to_string(EgoPattern p);

enum class DatasetPreset {
  // Class = target pattern x {sway, shake}: labels y%3 and y/3.
  Interaction,
  // Classes differ only in camera motion; the target pattern is random per clip.
  EgoBenchmark,
};

std::string_view to_string(DatasetPreset preset);
DatasetPreset parse_dataset_preset(std::string_view name);

struct SyntheticSpec {
  DatasetPreset preset = DatasetPreset::Interaction;
  int classes = 6;
  int clips_per_class = 24;
  int frames = 24;
  int resolution = 56;
  double ego_amplitude = 1.5;   // pixels per frame at full shake
  double detector_dropout = 0.05;
  bool appearance_cue = true;   // target texture depends on its motion pattern
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;
  static SyntheticSpec from_key_values(const KeyValues& kv);
};

struct ClipMeta {
  TargetPattern target = TargetPattern::Oscillate;
  EgoPattern ego = EgoPattern::Sway;
  double ego_amplitude = 0.0;
  bool appearance_cue = true;
  std::uint64_t seed = 0;
};

struct Clip {
  std::vector<Frame> frames;
  std::vector<FlowField> flows;  // frames.size() - 1 fields
  std::vector<BoundingBox> boxes;
  int label = 0;
  ClipMeta meta;
};

// Deterministic given (spec.seed, clip index).
Clip generate_clip(const SyntheticSpec& spec, int label, std::size_t clip_index);

// All clips ordered by clip id: class-major, clips_per_class per class.
std::vector<Clip> generate_clips(const SyntheticSpec& spec);

}  // namespace tsfn

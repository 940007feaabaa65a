#include "tsfn/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "tsfn/container.hpp"
#include "tsfn/error.hpp"

namespace tsfn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string clip_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05zu", index);
  return buf;
}

TargetPattern parse_target_pattern(const std::string& name) {
  for (auto p : {TargetPattern::Oscillate, TargetPattern::Approach, TargetPattern::Swing}) {
    if (to_string(p) == name) return p;
  }
  throw DataError("unknown target pattern '" + name + "'");
}

EgoPattern parse_ego_pattern(const std::string& name) {
  for (auto p : {EgoPattern::Sway, EgoPattern::Shake, EgoPattern::ShakeHorizontal,
                 EgoPattern::ShakeVertical}) {
    if (to_string(p) == name) return p;
  }
  throw DataError("unknown ego pattern '" + name + "'");
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
}

void save_clip(const fs::path& dir, const Clip& clip) {
  fs::create_directories(dir);
  if (clip.frames.empty()) throw DataError("cannot save an empty clip");
  const auto f = static_cast<std::uint64_t>(clip.frames.size());
  const auto h = static_cast<std::uint64_t>(clip.frames.front().height);
  const auto w = static_cast<std::uint64_t>(clip.frames.front().width);

  json boxes = json::array();
  for (const auto& b : clip.boxes) {
    boxes.push_back(b.present ? json::array({b.x0, b.y0, b.x1, b.y1}) : json(nullptr));
  }
  json meta = {
      {"label", clip.label},
      {"frames", f},
      {"height", h},
      {"width", w},
      {"boxes", boxes},
      {"generator",
       {{"target_pattern", std::string(to_string(clip.meta.target))},
        {"ego_pattern", std::string(to_string(clip.meta.ego))},
        {"ego_amplitude", clip.meta.ego_amplitude},
        {"appearance_cue", clip.meta.appearance_cue},
        {"seed", clip.meta.seed}}},
  };
  write_json(dir / "meta.json", meta);

  TensorRecord frames{{f, h, w, 3}, {}};
  frames.values.reserve(f * h * w * 3);
  for (const auto& fr : clip.frames) {
    frames.values.insert(frames.values.end(), fr.data.begin(), fr.data.end());
  }
  save_tensors(dir / "frames.bin", {frames});

  TensorRecord flows{{f - 1, 2, h, w}, {}};
  flows.values.reserve((f - 1) * 2 * h * w);
  for (const auto& fl : clip.flows) {
    flows.values.insert(flows.values.end(), fl.u.begin(), fl.u.end());
    flows.values.insert(flows.values.end(), fl.v.begin(), fl.v.end());
  }
  save_tensors(dir / "flows.bin", {flows});
}

Clip load_clip(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  Clip clip;
  try {
    clip.label = meta.at("label").get<int>();
    const auto f = meta.at("frames").get<std::size_t>();
    const auto h = meta.at("height").get<int>();
    const auto w = meta.at("width").get<int>();
    for (const auto& b : meta.at("boxes")) {
      if (b.is_null()) {
        clip.boxes.push_back(BoundingBox::absent());
      } else {
        clip.boxes.push_back(clamp_box({b.at(0).get<int>(), b.at(1).get<int>(),
                                        b.at(2).get<int>(), b.at(3).get<int>(), true},
                                       w, h));
      }
    }
    if (meta.contains("generator")) {
      const json& g = meta.at("generator");
      clip.meta.target = parse_target_pattern(g.value("target_pattern", "oscillate"));
      clip.meta.ego = parse_ego_pattern(g.value("ego_pattern", "sway"));
      clip.meta.ego_amplitude = g.value("ego_amplitude", 0.0);
      clip.meta.appearance_cue = g.value("appearance_cue", true);
      clip.meta.seed = g.value("seed", std::uint64_t{0});
    }

    const auto frames = load_tensors(dir / "frames.bin");
    const auto flows = load_tensors(dir / "flows.bin");
    const std::vector<std::uint64_t> frame_dims{f, static_cast<std::uint64_t>(h),
                                                static_cast<std::uint64_t>(w), 3};
    const std::vector<std::uint64_t> flow_dims{f - 1, 2, static_cast<std::uint64_t>(h),
                                               static_cast<std::uint64_t>(w)};
    if (frames.size() != 1 || frames[0].dims != frame_dims) {
      throw DataError(dir.string() + "/frames.bin: dims disagree with meta.json");
    }
    if (flows.size() != 1 || flows[0].dims != flow_dims) {
      throw DataError(dir.string() + "/flows.bin: dims disagree with meta.json");
    }
    if (clip.boxes.size() != f) {
      throw DataError(dir.string() + ": box count differs from frame count");
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t t = 0; t < f; ++t) {
      Frame fr(h, w);
      std::copy_n(frames[0].values.begin() + static_cast<std::ptrdiff_t>(t * plane * 3), plane * 3,
                  fr.data.begin());
      clip.frames.push_back(std::move(fr));
    }
    for (std::size_t t = 0; t + 1 < f; ++t) {
      FlowField fl(h, w);
      auto base = flows[0].values.begin() + static_cast<std::ptrdiff_t>(t * plane * 2);
      std::copy_n(base, plane, fl.u.begin());
      std::copy_n(base + static_cast<std::ptrdiff_t>(plane), plane, fl.v.begin());
      clip.flows.push_back(std::move(fl));
    }
  } catch (const json::exception& e) {
    throw DataError(dir.string() + "/meta.json: " + e.what());
  }
  return clip;
}

}  // namespace

void save_dataset(const fs::path& root, const Dataset& dataset) {
  fs::create_directories(root);
  json generator = json::object();
  for (const auto& [k, v] : dataset.generator) generator[k] = v;
  json index = {
      {"format", "tsfn-dataset"},
      {"version", 1},
      {"classes", dataset.classes},
      {"clips", dataset.clips.size()},
      {"generator", generator},
  };
  write_json(root / "dataset.json", index);
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    save_clip(root / clip_dir_name(i), dataset.clips[i]);
  }
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::exists(root / "dataset.json")) {
    throw DataError("no dataset at " + root.string() + " (dataset.json missing)");
  }
  const json index = read_json(root / "dataset.json");
  Dataset ds;
  std::size_t count = 0;
  try {
    if (index.at("format") != "tsfn-dataset" || index.at("version") != 1) {
      throw DataError(root.string() + ": unsupported dataset format");
    }
    ds.classes = index.at("classes").get<int>();
    count = index.at("clips").get<std::size_t>();
    if (index.contains("generator")) {
      for (const auto& [k, v] : index.at("generator").items()) {
        ds.generator[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const json::exception& e) {
    throw DataError(root.string() + "/dataset.json: " + e.what());
  }
  for (std::size_t i = 0; i < count; ++i) {
    Clip clip = load_clip(root / clip_dir_name(i));
    if (clip.label < 0 || clip.label >= ds.classes) {
      throw DataError(clip_dir_name(i) + ": label outside class range");
    }
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

Dataset generate_dataset(const SyntheticSpec& spec, const fs::path& root) {
  Dataset ds{spec.classes, generate_clips(spec), spec.to_key_values()};
  save_dataset(root, ds);
  return ds;
}

}  // namespace tsfn

#pragma once

#include <filesystem>
#include <vector>

#include "tsfn/synthetic.hpp"

namespace tsfn {

// On disk:
//   <root>/dataset.json            class count, clip count, generator parameters
//   <root>/clip_NNNNN/meta.json    label, sizes, per-frame boxes (null = missed), generator params
//   <root>/clip_NNNNN/frames.bin   one tensor record, dims [F, H, W, 3]
//   <root>/clip_NNNNN/flows.bin    one tensor record, dims [F-1, 2, H, W] (u plane then v plane)
struct Dataset {
  int classes = 0;
  std::vector<Clip> clips;
  KeyValues generator;  // free-form description of how the clips were produced
};

void save_dataset(const std::filesystem::path& root, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& root);

// Generates with `spec` and writes the result under `root`.
Dataset generate_dataset(const SyntheticSpec& spec, const std::filesystem::path& root);

}  // namespace tsfn

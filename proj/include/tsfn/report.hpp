#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfn/container.hpp"

namespace tsfn {

struct EvalReport {
  int classes = 0;
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<double> per_class_recall;      // 0 for classes absent from the split
  // Accuracy of every evaluation repeat (repeat 0 is the one summarised above).
  std::vector<double> repeat_accuracies;
  double mean_accuracy = 0.0;
  KeyValues metadata;

  static EvalReport from_predictions(int classes, std::span<const int> truth,
                                     std::span<const int> predicted);

  long total() const;
  // Row sums equal per-class counts and accuracy == trace / total.
  bool consistent() const;

  std::string to_json() const;
  static EvalReport parse_json(std::string_view text);

  bool operator==(const EvalReport&) const = default;
};

// report.json, confusion.csv and per_class_recall.csv under `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& dir);

}  // namespace tsfn

#include "tsfn/report.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tsfn/error.hpp"

namespace tsfn {

using nlohmann::json;

EvalReport EvalReport::from_predictions(int classes, std::span<const int> truth,
                                        std::span<const int> predicted) {
  if (classes < 1) throw ConfigError("EvalReport: need at least one class");
  if (truth.size() != predicted.size()) {
    throw ShapeError("EvalReport: truth and prediction counts differ");
  }
  EvalReport r;
  r.classes = classes;
  const auto k = static_cast<std::size_t>(classes);
  r.confusion.assign(k, std::vector<long>(k, 0));
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw DataError("EvalReport: class id out of range");
    }
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  r.per_class_recall.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const long row = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), 0L);
    if (row > 0) r.per_class_recall[c] = static_cast<double>(r.confusion[c][c]) / row;
  }
  r.repeat_accuracies = {r.accuracy};
  r.mean_accuracy = r.accuracy;
  return r;
}

long EvalReport::total() const {
  long n = 0;
  for (const auto& row : confusion) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

bool EvalReport::consistent() const {
  if (confusion.size() != static_cast<std::size_t>(classes)) return false;
  long trace = 0;
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    if (confusion[c].size() != confusion.size()) return false;
    const long row = std::accumulate(confusion[c].begin(), confusion[c].end(), 0L);
    const double recall = row > 0 ? static_cast<double>(confusion[c][c]) / row : 0.0;
    if (recall != per_class_recall[c]) return false;
    trace += confusion[c][c];
  }
  const long n = total();
  const double expected = n > 0 ? static_cast<double>(trace) / static_cast<double>(n) : 0.0;
  return expected == accuracy;
}

std::string EvalReport::to_json() const {
  json meta = json::object();
  for (const auto& [k, v] : metadata) meta[k] = v;
  const json j = {
      {"classes", classes},
      {"accuracy", accuracy},
      {"mean_accuracy", mean_accuracy},
      {"repeat_accuracies", repeat_accuracies},
      {"confusion", confusion},
      {"per_class_recall", per_class_recall},
      {"metadata", meta},
  };
  return j.dump(2) + "\n";
}

EvalReport EvalReport::parse_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.classes = j.at("classes").get<int>();
    r.accuracy = j.at("accuracy").get<double>();
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.repeat_accuracies = j.at("repeat_accuracies").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
    r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
    for (const auto& [k, v] : j.at("metadata").items()) r.metadata[k] = v.get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw DataError("cannot write report in " + dir.string());
    out << report.to_json();
  }
  {
    std::ofstream out(dir / "confusion.csv");
    out << "true\\predicted";
    for (int c = 0; c < report.classes; ++c) out << "," << c;
    out << "\n";
    for (int r = 0; r < report.classes; ++r) {
      out << r;
      for (long v : report.confusion[static_cast<std::size_t>(r)]) out << "," << v;
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "per_class_recall.csv");
    out << "class,recall\n";
    char buf[64];
    for (int c = 0; c < report.classes; ++c) {
      std::snprintf(buf, sizeof buf, "%d,%.17g\n", c,
                    report.per_class_recall[static_cast<std::size_t>(c)]);
      out << buf;
    }
  }
}

EvalReport read_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "report.json");
  if (!in) throw DataError("no report.json in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return EvalReport::parse_json(ss.str());
}

}  // namespace tsfn

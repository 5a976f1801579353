#pragma once

// Oxford-protocol average precision, mAP, and localization accuracy.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifs/search.hpp"
#include "ifs/tensor_store.hpp"

namespace ifs {

struct QueryReport {
  std::string query_id;
  double ap = 0.0;
  std::size_t num_relevant = 0;
  bool zero_positives = false;
};

struct LocalizationStats {
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  double threshold = 0.5;

  double rate() const { return evaluated ? static_cast<double>(hits) / static_cast<double>(evaluated) : 0.0; }
};

struct EvalReport {
  std::vector<QueryReport> per_query;
  double map = 0.0;
  Stage stage = Stage::filtering;
  std::optional<LocalizationStats> localization;

  bool has_zero_positive_query() const;
};

// Junk entries are dropped, good and ok count as positives, and the
// precision/recall curve is integrated with the trapezoidal rule of the
// Oxford evaluation script. Zero positives yields 0.
double average_precision(const Ranking& ranking, const GroundTruth& gt);

// One ground truth per ranking, matched by query id. Missing ground truths
// are reported all at once.
EvalReport mean_ap(std::span<const Ranking> rankings, std::span<const GroundTruth> gts);

double iou(const BoundingBox& a, const BoundingBox& b);

inline constexpr double kDefaultIouThreshold = 0.5;

// query id -> image id -> reference box.
using PlantedBoxes = std::map<std::string, std::map<std::string, BoundingBox>>;

// Counts localized entries whose image has a reference box for that query.
LocalizationStats localization_accuracy(std::span<const Ranking> rankings, const PlantedBoxes& boxes,
                                        double threshold = kDefaultIouThreshold);

PlantedBoxes load_planted_boxes(const std::filesystem::path& path);
void save_planted_boxes(const PlantedBoxes& boxes, const std::filesystem::path& path);

std::string format_report_text(const EvalReport& report);
std::string format_report_json(const EvalReport& report);

}  // namespace ifs

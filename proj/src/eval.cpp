#include "ifs/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "ifs/error.hpp"

namespace ifs {

bool EvalReport::has_zero_positive_query() const {
  return std::any_of(per_query.begin(), per_query.end(), [](const QueryReport& q) { return q.zero_positives; });
}

double average_precision(const Ranking& ranking, const GroundTruth& gt) {
  if (ranking.query_id != gt.query_id) {
    throw Error(ErrorCode::UnmatchedQuery,
                "ranking for '" + ranking.query_id + "' evaluated against ground truth of '" + gt.query_id + "'");
  }
  const std::size_t positives = gt.num_positives();
  if (positives == 0) return 0.0;

  double ap = 0.0;
  double old_recall = 0.0;
  double old_precision = 1.0;
  std::size_t hits = 0;
  std::size_t seen = 0;  // non-junk entries walked so far
  for (const auto& e : ranking.entries) {
    if (gt.is_junk(e.image_id)) continue;
    if (gt.is_positive(e.image_id)) ++hits;
    const double recall = static_cast<double>(hits) / static_cast<double>(positives);
    const double precision = static_cast<double>(hits) / static_cast<double>(seen + 1);
    ap += (recall - old_recall) * ((old_precision + precision) / 2.0);
    old_recall = recall;
    old_precision = precision;
    ++seen;
  }
  return ap;
}

EvalReport mean_ap(std::span<const Ranking> rankings, std::span<const GroundTruth> gts) {
  std::unordered_map<std::string, const GroundTruth*> by_id;
  for (const auto& gt : gts) by_id.emplace(gt.query_id, &gt);

  std::vector<std::string> missing;
  for (const auto& r : rankings) {
    if (!by_id.count(r.query_id)) missing.push_back(r.query_id);
  }
  if (!missing.empty()) {
    std::string msg = "no ground truth for " + std::to_string(missing.size()) + " queries:";
    for (const auto& q : missing) msg += " " + q;
    throw Error(ErrorCode::MissingGroundTruth, msg);
  }

  EvalReport report;
  if (!rankings.empty()) report.stage = rankings.front().stage;
  double total = 0.0;
  for (const auto& r : rankings) {
    const auto& gt = *by_id.at(r.query_id);
    QueryReport q;
    q.query_id = r.query_id;
    q.num_relevant = gt.num_positives();
    q.zero_positives = q.num_relevant == 0;
    q.ap = average_precision(r, gt);
    total += q.ap;
    report.per_query.push_back(std::move(q));
  }
  if (!rankings.empty()) report.map = total / static_cast<double>(rankings.size());
  return report;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

LocalizationStats localization_accuracy(std::span<const Ranking> rankings, const PlantedBoxes& boxes,
                                        double threshold) {
  LocalizationStats stats;
  stats.threshold = threshold;
  for (const auto& r : rankings) {
    auto q = boxes.find(r.query_id);
    if (q == boxes.end()) continue;
    for (const auto& e : r.entries) {
      if (!e.localization) continue;
      auto b = q->second.find(e.image_id);
      if (b == q->second.end()) continue;
      ++stats.evaluated;
      if (iou(*e.localization, b->second) >= threshold) ++stats.hits;
    }
  }
  return stats;
}

PlantedBoxes load_planted_boxes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  PlantedBoxes out;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& [qid, images] : doc.items()) {
      for (const auto& [iid, box] : images.items()) {
        const BoundingBox b{box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
                            box.at(3).get<double>()};
        if (!b.valid()) throw Error(ErrorCode::Schema, path.string() + ": invalid box for " + qid + "/" + iid);
        out[qid][iid] = b;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
  }
  return out;
}

void save_planted_boxes(const PlantedBoxes& boxes, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [qid, images] : boxes) {
    auto& q = doc[qid];
    q = nlohmann::ordered_json::object();
    for (const auto& [iid, b] : images) q[iid] = {b.x_min, b.y_min, b.x_max, b.y_max};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::string format_report_text(const EvalReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "stage: %s\n", std::string(to_string(report.stage)).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-24s %10s %8s\n", "query", "AP", "relevant");
  out += buf;
  for (const auto& q : report.per_query) {
    std::snprintf(buf, sizeof buf, "%-24s %10.6f %8zu%s\n", q.query_id.c_str(), q.ap, q.num_relevant,
                  q.zero_positives ? "  (no positives)" : "");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-24s %10.6f %8zu\n", "mAP", report.map, report.per_query.size());
  out += buf;
  if (report.localization) {
    const auto& l = *report.localization;
    std::snprintf(buf, sizeof buf, "localization: %zu / %zu at IoU >= %.2f (%.4f)\n", l.hits, l.evaluated,
                  l.threshold, l.rate());
    out += buf;
  }
  return out;
}

std::string format_report_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  doc["stage"] = std::string(to_string(report.stage));
  doc["map"] = report.map;
  auto per = nlohmann::ordered_json::array();
  for (const auto& q : report.per_query) {
    per.push_back({{"query_id", q.query_id},
                   {"ap", q.ap},
                   {"num_relevant", q.num_relevant},
                   {"zero_positives", q.zero_positives}});
  }
  doc["per_query"] = std::move(per);
  if (report.localization) {
    doc["localization"] = {{"hits", report.localization->hits},
                           {"evaluated", report.localization->evaluated},
                           {"threshold", report.localization->threshold}};
  }
  return doc.dump(2) + "\n";
}

}  // namespace ifs

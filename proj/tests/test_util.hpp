#pragma once

// Shared test fixtures and the independent oracles the unit and acceptance
// suites compare against. Nothing here calls into the code under test.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "ifs/search.hpp"
#include "ifs/tensor_store.hpp"

namespace ifs::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ifs") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline FeatureMap random_map(std::mt19937_64& rng, std::uint32_t c, std::uint32_t h, std::uint32_t w,
                             std::uint32_t stride = 16, bool non_negative = false) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  FeatureMap m;
  m.image_id = "rand";
  m.channels = c;
  m.height = h;
  m.width = w;
  m.stride = stride;
  m.data.resize(static_cast<std::size_t>(c) * h * w);
  for (float& x : m.data) x = non_negative ? std::abs(dist(rng)) : dist(rng);
  return m;
}

// Naive triple loop; sum accumulates in double in row-major cell order.
inline std::vector<double> oracle_pool(const FeatureMap& m, std::size_t r0, std::size_t r1, std::size_t c0,
                                       std::size_t c1, bool use_max) {
  std::vector<double> out(m.channels);
  for (std::size_t ch = 0; ch < m.channels; ++ch) {
    if (use_max) {
      float best = -INFINITY;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) {
          const float v = m.data[ch * m.height * m.width + r * m.width + c];
          if (v > best) best = v;
        }
      out[ch] = best;
    } else {
      double s = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) s += m.data[ch * m.height * m.width + r * m.width + c];
      out[ch] = s;
    }
  }
  return out;
}

inline double oracle_dot(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Brute-force ranking: double loop over rows and dimensions, then a stable
// insertion sort on (score desc, id asc).
inline std::vector<std::pair<std::string, double>> oracle_ranking(const std::vector<std::string>& ids,
                                                                  const std::vector<std::vector<double>>& rows,
                                                                  const std::vector<double>& q) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) s += q[d] * rows[i][d];
    out.emplace_back(ids[i], s);
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    for (std::size_t j = i; j > 0; --j) {
      const auto& a = out[j - 1];
      const auto& b = out[j];
      const bool swap = b.second > a.second || (b.second == a.second && b.first < a.first);
      if (!swap) break;
      std::swap(out[j - 1], out[j]);
    }
  }
  return out;
}

// Reference trapezoidal AP written from the positions of the hits: the k-th
// positive at non-junk position p contributes (1/P) * (prec_before + prec_at) / 2,
// where prec_before is the precision at position p - 1 (1 at the top).
inline double oracle_ap(const std::vector<std::string>& ranked, const std::vector<std::string>& positives,
                        const std::vector<std::string>& junk) {
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  if (positives.empty()) return 0.0;
  std::vector<std::size_t> hit_positions;  // 1-based among non-junk
  std::size_t pos = 0;
  for (const auto& id : ranked) {
    if (contains(junk, id)) continue;
    ++pos;
    if (contains(positives, id)) hit_positions.push_back(pos);
  }
  const double P = static_cast<double>(positives.size());
  double ap = 0.0;
  for (std::size_t k = 0; k < hit_positions.size(); ++k) {
    const double p = static_cast<double>(hit_positions[k]);
    const double before = hit_positions[k] == 1 ? 1.0 : static_cast<double>(k) / (p - 1.0);
    const double at = static_cast<double>(k + 1) / p;
    ap += (1.0 / P) * (before + at) / 2.0;
  }
  return ap;
}

// Two-pass 1/n covariance of the rows, straight from the definition.
inline std::vector<std::vector<double>> oracle_covariance(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) mean[k] += r[k] / static_cast<double>(n);
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& r : rows)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / static_cast<double>(n);
  return cov;
}

// Naive y = P (x - mu) for a row-major D x D matrix.
inline std::vector<double> oracle_affine(const std::vector<double>& P, const std::vector<double>& mu,
                                         const std::vector<double>& x) {
  const std::size_t d = x.size();
  std::vector<double> y(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) y[i] += P[i * d + k] * (x[k] - mu[k]);
  return y;
}

// Writes maps (and optional proposal tables) plus a manifest into `dir`.
// Maps whose id is listed in `external` become query-only images.
inline DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<FeatureMap>& maps,
                                     const std::vector<std::vector<RegionProposal>>& proposals,
                                     std::vector<std::string> class_names, std::vector<QueryDef> queries,
                                     const std::vector<std::string>& external = {}) {
  DatasetManifest m;
  m.dataset_name = "test";
  m.feature_dim = maps.front().channels;
  m.stride = maps.front().stride;
  m.class_names = std::move(class_names);
  m.queries = std::move(queries);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& map = maps[i];
    ImageEntry e;
    e.id = map.image_id;
    e.features = dir / (map.image_id + ".ifsm");
    write_feature_map(map, e.features);
    if (i < proposals.size()) {
      e.proposals = dir / (map.image_id + ".ifsp");
      write_proposals(proposals[i], m.class_names.size(), e.proposals);
    }
    e.external = std::find(external.begin(), external.end(), map.image_id) != external.end();
    if (!e.external) m.image_ids.push_back(map.image_id);
    m.images.emplace(e.id, e);
  }
  save_manifest(m, dir / "manifest.json");
  return load_manifest(dir / "manifest.json");
}

inline Ranking make_ranking(const std::string& qid, const std::vector<std::string>& ids) {
  Ranking r;
  r.query_id = qid;
  double s = 1.0;
  for (const auto& id : ids) {
    r.entries.push_back(RankEntry{id, s, std::nullopt});
    s -= 1e-3;
  }
  return r;
}

}  // namespace ifs::test

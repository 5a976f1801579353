#pragma once

// In-process runs of the retrieval stages over a synthetic dataset, shared by
// the synth unit tests and the acceptance binary.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "ifs/eval.hpp"
#include "ifs/rerank.hpp"
#include "ifs/search.hpp"
#include "ifs/synth.hpp"

namespace ifs::test {

struct StageResult {
  std::vector<Ranking> rankings;
  double map = 0.0;
  LocalizationStats localization;
};

class SynthRun {
 public:
  SynthRun(const SynthDataset& ds, const Exec& exec = {}) : ds_(ds), exec_(exec) {
    BuildOptions o;
    o.exec = exec;
    index_ = build_index(ds.manifest, o);
  }

  const Index& index() const { return index_; }

  StageResult filtering() const {
    std::vector<Ranking> out;
    SearchOptions o;
    o.exec = exec_;
    for (const auto& q : ds_.manifest.queries) out.push_back(filter_search(index_, q, ds_.manifest, o));
    return score(std::move(out));
  }

  StageResult rerank(const std::vector<Ranking>& input, RerankMode mode, Pooling pooling,
                     std::size_t depth_n) const {
    RerankConfig cfg;
    cfg.depth_n = depth_n;
    cfg.pooling = pooling;
    cfg.mode = mode;
    cfg.exec = exec_;
    std::vector<Ranking> out;
    for (std::size_t i = 0; i < input.size(); ++i) {
      const auto& q = ds_.manifest.queries[i];
      if (mode == RerankMode::ca_sr) {
        const auto desc = query_region_descriptor(q, ds_.manifest, pooling, index_.whitening());
        out.push_back(ca_sr(input[i], desc, cfg, ds_.manifest, index_.whitening()));
      } else {
        out.push_back(cs_sr(input[i], q, cfg, ds_.manifest));
      }
    }
    return score(std::move(out));
  }

  StageResult expand(const std::vector<Ranking>& input, std::size_t depth_m) const {
    std::vector<Ranking> out;
    for (std::size_t i = 0; i < input.size(); ++i) {
      const auto desc = query_image_descriptor(index_, ds_.manifest.queries[i], ds_.manifest);
      out.push_back(query_expansion(index_, input[i], desc, QeConfig{depth_m}, exec_));
    }
    return score(std::move(out));
  }

 private:
  StageResult score(std::vector<Ranking> rankings) const {
    StageResult r;
    r.map = mean_ap(rankings, ds_.ground_truth).map;
    r.localization = localization_accuracy(rankings, ds_.planted);
    r.rankings = std::move(rankings);
    return r;
  }

  const SynthDataset& ds_;
  Exec exec_;
  Index index_;
};

// Small, fast dataset shape used by tests.
inline SynthSpec small_spec(std::uint64_t seed, double gain) {
  SynthSpec s;
  s.seed = seed;
  s.signal_gain = gain;
  s.channels = 64;
  s.grid_height = 24;
  s.grid_width = 32;
  return s;
}

// Every regular file under `root`, keyed by relative path.
inline std::map<std::string, std::string> read_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[std::filesystem::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace ifs::test

#include "ifs/rerank.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "ifs/error.hpp"

namespace ifs {

std::string_view to_string(RerankMode m) { return m == RerankMode::ca_sr ? "ca-sr" : "cs-sr"; }

RerankMode parse_rerank_mode(std::string_view s) {
  if (s == "ca-sr") return RerankMode::ca_sr;
  if (s == "cs-sr") return RerankMode::cs_sr;
  throw Error(ErrorCode::InvalidArgument, "unknown rerank mode '" + std::string(s) + "' (expected ca-sr or cs-sr)");
}

namespace {

void check_rerank_input(const Ranking& ranking, const RerankConfig& cfg) {
  if (cfg.depth_n < 1) throw Error(ErrorCode::InvalidArgument, "rerank depth N must be at least 1");
  if (ranking.stage != Stage::filtering && ranking.stage != Stage::qe) {
    throw Error(ErrorCode::InvalidArgument, "query '" + ranking.query_id + "': cannot rerank a " +
                                                std::string(to_string(ranking.stage)) + " ranking");
  }
}

// Top block re-sorted by the new scores, tail appended in its original order.
Ranking assemble(const Ranking& ranking, std::vector<RankEntry> block, Stage stage) {
  sort_entries(block);
  Ranking out;
  out.query_id = ranking.query_id;
  out.stage = stage;
  out.entries = std::move(block);
  out.entries.insert(out.entries.end(), ranking.entries.begin() + static_cast<std::ptrdiff_t>(out.entries.size()),
                     ranking.entries.end());
  return out;
}

}  // namespace

Descriptor query_region_descriptor(const QueryDef& query, const DatasetManifest& manifest,
                                   Pooling pooling, const WhiteningModel* model) {
  const auto map = load_image_features(manifest, query.image_id);
  return finalize(pool_region(map, warp_box(query.box, map), pooling), model);
}

RegionMatch best_region_match(const FeatureMap& map, std::span<const RegionProposal> proposals,
                              const Descriptor& query_desc, Pooling pooling,
                              const WhiteningModel* model) {
  RegionMatch best;
  const auto pooled = pool_all_proposals(map, proposals, pooling);
  for (std::size_t i = 0; i < pooled.descriptors.size(); ++i) {
    if (!pooled.descriptors[i]) continue;
    const double s = cosine(query_desc, finalize(*pooled.descriptors[i], model));
    if (!best.proposal || s > best.score) {
      best.score = s;
      best.box = proposals[i].box;
      best.proposal = i;
    }
  }
  return best;
}

Ranking ca_sr(const Ranking& ranking, const Descriptor& query_desc, const RerankConfig& cfg,
              const DatasetManifest& manifest, const WhiteningModel* model) {
  check_rerank_input(ranking, cfg);
  const std::size_t depth = std::min(cfg.depth_n, ranking.entries.size());
  std::vector<RankEntry> block(depth);
  parallel_for(depth, 1, cfg.exec, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& id = ranking.entries[i].image_id;
      const auto map = load_image_features(manifest, id);
      const auto proposals = load_image_proposals(manifest, id);
      const auto match = best_region_match(map, proposals, query_desc, cfg.pooling, model);
      block[i] = RankEntry{id, match.score, match.box};
    }
  });
  return assemble(ranking, std::move(block), Stage::ca_sr);
}

Ranking cs_sr(const Ranking& ranking, const QueryDef& query, const RerankConfig& cfg,
              const DatasetManifest& manifest) {
  check_rerank_input(ranking, cfg);
  if (!query.class_index) {
    throw Error(ErrorCode::MissingClassIndex, "query '" + query.query_id + "' has no class_index");
  }
  const auto cls = static_cast<std::size_t>(*query.class_index);
  if (cls >= manifest.num_classes()) {
    throw Error(ErrorCode::InvalidArgument, "query '" + query.query_id + "' class_index out of range");
  }
  const std::size_t depth = std::min(cfg.depth_n, ranking.entries.size());
  std::vector<RankEntry> block(depth);
  std::vector<char> lacks_scores(depth, 0);
  parallel_for(depth, 1, cfg.exec, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& id = ranking.entries[i].image_id;
      const auto proposals = load_image_proposals(manifest, id);
      RankEntry entry{id, kNoProposalScore, std::nullopt};
      bool have = false;
      for (const auto& p : proposals) {
        if (!p.class_scores) {
          lacks_scores[i] = 1;
          break;
        }
        const double s = (*p.class_scores)[cls];
        if (!have || s > entry.score) {
          entry.score = s;
          entry.localization = p.box;
          have = true;
        }
      }
      block[i] = std::move(entry);
    }
  });
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < depth; ++i) {
    if (lacks_scores[i]) missing.push_back(ranking.entries[i].image_id);
  }
  if (!missing.empty()) {
    std::string msg = "query '" + query.query_id + "': proposals without class scores in";
    for (const auto& id : missing) msg += " " + id;
    throw Error(ErrorCode::MissingClassScores, msg);
  }
  return assemble(ranking, std::move(block), Stage::cs_sr);
}

Descriptor expand_query(const Index& index, const Ranking& ranking, const Descriptor& query_desc,
                        const QeConfig& cfg) {
  if (cfg.depth_m < 1) throw Error(ErrorCode::InvalidArgument, "QE depth M must be at least 1");
  if (ranking.entries.empty()) {
    throw Error(ErrorCode::InvalidArgument, "query '" + ranking.query_id + "': cannot expand an empty ranking");
  }
  if (query_desc.dim() != index.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "query descriptor dimension differs from the index");
  }
  // Running mean: exact when every added row equals the current mean.
  std::vector<double> mean = query_desc.values;
  const std::size_t m = std::min(cfg.depth_m, ranking.entries.size());
  for (std::size_t k = 0; k < m; ++k) {
    const auto& id = ranking.entries[k].image_id;
    const auto row_index = index.find(id);
    if (!row_index) throw Error(ErrorCode::DanglingReference, "image '" + id + "' is not indexed");
    const auto row = index.row(*row_index);
    const double count = static_cast<double>(k + 2);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += (row[d] - mean[d]) / count;
  }
  auto out = l2_normalize(mean);
  out.state = query_desc.state;
  return out;
}

Ranking query_expansion(const Index& index, const Ranking& ranking, const Descriptor& query_desc,
                        const QeConfig& cfg, const Exec& exec) {
  const auto expanded = expand_query(index, ranking, query_desc, cfg);
  auto out = rank_index(index, expanded, ranking.query_id, Stage::qe, nullptr, exec);
  // Keep exactly the images the input ranking covered (e.g. a query-image exclusion).
  if (out.entries.size() != ranking.entries.size()) {
    std::unordered_set<std::string> keep;
    for (const auto& e : ranking.entries) keep.insert(e.image_id);
    std::erase_if(out.entries, [&](const RankEntry& e) { return !keep.count(e.image_id); });
  }
  return out;
}

}  // namespace ifs

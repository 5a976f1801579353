#pragma once

// Spatial reranking of the top-N filtering results and query expansion.

#include <cstddef>
#include <optional>

#include "ifs/descriptor.hpp"
#include "ifs/search.hpp"

namespace ifs {

enum class RerankMode { ca_sr, cs_sr };

std::string_view to_string(RerankMode m);
RerankMode parse_rerank_mode(std::string_view s);

struct RerankConfig {
  std::size_t depth_n = 100;
  Pooling pooling = Pooling::max;
  RerankMode mode = RerankMode::ca_sr;
  Exec exec;
};

struct QeConfig {
  std::size_t depth_m = 5;
};

// Score given to images without any usable proposal; sinks them within the
// reranked block.
inline constexpr double kNoProposalScore = -1.0;

// finalize(pool_region(map, warp_box(query box))) on the query image.
Descriptor query_region_descriptor(const QueryDef& query, const DatasetManifest& manifest,
                                   Pooling pooling, const WhiteningModel* model);

struct RegionMatch {
  double score = kNoProposalScore;
  std::optional<BoundingBox> box;
  std::optional<std::size_t> proposal;
};

// Best cosine match between the query region and the image's proposals;
// ties go to the lowest proposal index.
RegionMatch best_region_match(const FeatureMap& map, std::span<const RegionProposal> proposals,
                              const Descriptor& query_desc, Pooling pooling,
                              const WhiteningModel* model);

// Class-agnostic: rescoring by region descriptor similarity.
Ranking ca_sr(const Ranking& ranking, const Descriptor& query_desc, const RerankConfig& cfg,
              const DatasetManifest& manifest, const WhiteningModel* model);

// Class-specific: rescoring by the proposals' score for the query class.
Ranking cs_sr(const Ranking& ranking, const QueryDef& query, const RerankConfig& cfg,
              const DatasetManifest& manifest);

// Averages query_desc with the index rows of the top-M entries, renormalizes
// and re-ranks the images present in `ranking`.
Descriptor expand_query(const Index& index, const Ranking& ranking, const Descriptor& query_desc,
                        const QeConfig& cfg);
Ranking query_expansion(const Index& index, const Ranking& ranking, const Descriptor& query_desc,
                        const QeConfig& cfg, const Exec& exec = {});

}  // namespace ifs

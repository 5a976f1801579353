#pragma once

// Image-wise and region-wise pooling of conv activations (IPA / RPA).

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ifs/tensor_store.hpp"

namespace ifs {

enum class Pooling { sum, max };
enum class PoolScope { image, region };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view s);

struct RawDescriptor {
  std::vector<double> values;
  Pooling pooling = Pooling::sum;
  PoolScope scope = PoolScope::image;
};

// Half-open cell indices on the feature grid.
struct GridRegion {
  std::size_t col_start = 0;
  std::size_t col_end = 0;
  std::size_t row_start = 0;
  std::size_t row_end = 0;

  bool valid_for(const FeatureMap& map) const {
    return col_start < col_end && col_end <= map.width && row_start < row_end &&
           row_end <= map.height;
  }
  friend bool operator==(const GridRegion&, const GridRegion&) = default;
};

RawDescriptor pool_image(const FeatureMap& map, Pooling pooling);

// Maps a pixel box onto the feature grid: floor on the start edges, ceil on
// the end edges, clamped to the grid and widened to at least one cell.
// Throws DisjointBox when the box misses the grid's image area.
GridRegion warp_box(const BoundingBox& box, const FeatureMap& map);

RawDescriptor pool_region(const FeatureMap& map, const GridRegion& region, Pooling pooling);

struct PooledProposals {
  // descriptors[i] is empty iff proposal i was disjoint from the grid.
  std::vector<std::optional<RawDescriptor>> descriptors;
  std::vector<std::size_t> disjoint;
};

PooledProposals pool_all_proposals(const FeatureMap& map, std::span<const RegionProposal> proposals,
                                   Pooling pooling);

}  // namespace ifs

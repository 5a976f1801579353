#include "ifs/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ifs/error.hpp"
#include "ifs/simd/kernels.hpp"

namespace ifs {

std::string_view to_string(Pooling p) { return p == Pooling::sum ? "sum" : "max"; }

Pooling parse_pooling(std::string_view s) {
  if (s == "sum") return Pooling::sum;
  if (s == "max") return Pooling::max;
  throw Error(ErrorCode::InvalidArgument, "unknown pooling '" + std::string(s) + "' (expected sum or max)");
}

namespace {

RawDescriptor run_pool(const FeatureMap& map, const GridRegion& region, Pooling pooling,
                       PoolScope scope) {
  RawDescriptor d;
  d.pooling = pooling;
  d.scope = scope;
  d.values.resize(map.channels);
  const simd::CellWindow window{region.row_start, region.row_end, region.col_start, region.col_end};
  const auto& k = simd::active_kernels();
  const auto fn = pooling == Pooling::sum ? k.pool_sum : k.pool_max;
  fn(map.data.data(), map.channels, map.height, map.width, window, d.values.data());
  return d;
}

void check_map(const FeatureMap& map) {
  if (map.data.size() != static_cast<std::size_t>(map.channels) * map.height * map.width ||
      map.channels == 0 || map.height == 0 || map.width == 0 || map.stride == 0) {
    throw Error(ErrorCode::InvalidArgument, "feature map '" + map.image_id + "' is malformed");
  }
}

// floor/ceil of one axis, clamped and widened to a non-empty cell range.
std::pair<std::size_t, std::size_t> warp_axis(double lo, double hi, double stride, std::size_t cells) {
  const double start = std::floor(lo / stride);
  const double end = std::ceil(hi / stride);
  const double n = static_cast<double>(cells);
  auto s = static_cast<std::size_t>(std::clamp(start, 0.0, n));
  auto e = static_cast<std::size_t>(std::clamp(end, 0.0, n));
  if (s >= e) {
    if (s >= cells) s = cells - 1;
    e = s + 1;
  }
  return {s, e};
}

}  // namespace

RawDescriptor pool_image(const FeatureMap& map, Pooling pooling) {
  check_map(map);
  return run_pool(map, GridRegion{0, map.width, 0, map.height}, pooling, PoolScope::image);
}

GridRegion warp_box(const BoundingBox& box, const FeatureMap& map) {
  if (!box.valid()) throw Error(ErrorCode::InvalidArgument, "cannot warp an invalid box");
  check_map(map);
  if (box.x_min >= map.image_width() || box.y_min >= map.image_height()) {
    throw Error(ErrorCode::DisjointBox, "box lies outside the " + std::to_string(map.width) + "x" +
                                            std::to_string(map.height) + " feature grid of '" +
                                            map.image_id + "'");
  }
  const double stride = map.stride;
  const auto [c0, c1] = warp_axis(box.x_min, box.x_max, stride, map.width);
  const auto [r0, r1] = warp_axis(box.y_min, box.y_max, stride, map.height);
  return GridRegion{c0, c1, r0, r1};
}

RawDescriptor pool_region(const FeatureMap& map, const GridRegion& region, Pooling pooling) {
  check_map(map);
  if (!region.valid_for(map)) {
    throw Error(ErrorCode::InvalidArgument, "grid region out of bounds for '" + map.image_id + "'");
  }
  return run_pool(map, region, pooling, PoolScope::region);
}

PooledProposals pool_all_proposals(const FeatureMap& map, std::span<const RegionProposal> proposals,
                                   Pooling pooling) {
  PooledProposals out;
  out.descriptors.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    try {
      out.descriptors.emplace_back(pool_region(map, warp_box(proposals[i].box, map), pooling));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DisjointBox) throw;
      out.descriptors.emplace_back(std::nullopt);
      out.disjoint.push_back(i);
    }
  }
  return out;
}

}  // namespace ifs

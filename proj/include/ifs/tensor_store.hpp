#pragma once

// On-disk interchange formats and their in-memory forms.
//
//   IFSM  feature tensor: "IFSM" u16 version, u16 dtype (0 = f32), u32 C, H, W,
//         u32 stride, u32 id length + UTF-8 id, C*H*W f32 channel-major.
//   proposal table: u32 count, then per proposal 4 f32 box coords, f32
//         objectness, u16 flags (bit 0: K f32 class scores follow, bit 1:
//         objectness present).
//   manifest: JSON document, paths relative to the manifest's directory.
//   ground truth: Oxford-style <query>_{good,ok,junk}.txt lists or one
//         sectioned text file.
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ifs {

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  // Non-degenerate, non-negative, finite.
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct FeatureMapHeader {
  std::string image_id;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t stride = 0;
};

struct FeatureMap {
  std::string image_id;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t stride = 1;
  std::vector<float> data;  // [c][row][col]

  std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
  float at(std::size_t c, std::size_t row, std::size_t col) const {
    return data[c * cells() + row * width + col];
  }
  float& at(std::size_t c, std::size_t row, std::size_t col) {
    return data[c * cells() + row * width + col];
  }
  // Pixel extent implied by the grid.
  double image_width() const { return static_cast<double>(width) * stride; }
  double image_height() const { return static_cast<double>(height) * stride; }

  // Throws InvalidArgument / NonFiniteData on invariant violations.
  void validate() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct RegionProposal {
  BoundingBox box;
  std::optional<float> objectness;
  std::optional<std::vector<float>> class_scores;
};

struct QueryDef {
  std::string query_id;
  std::string image_id;
  BoundingBox box;
  std::optional<int> class_index;
};

struct ImageEntry {
  std::string id;
  std::filesystem::path features;
  std::filesystem::path proposals;  // empty when the image has no proposal table
  bool external = false;            // query-only image, not part of the database
  std::optional<double> width;      // pixel size; defaults to grid * stride
  std::optional<double> height;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<std::string> image_ids;  // database images, in index order
  std::uint32_t feature_dim = 0;
  std::uint32_t stride = 16;
  std::vector<std::string> class_names;
  std::vector<QueryDef> queries;
  std::map<std::string, ImageEntry> images;  // database and external images

  std::size_t num_classes() const { return class_names.size(); }
  const ImageEntry& entry(const std::string& image_id) const;
};

struct GroundTruth {
  std::string query_id;
  std::set<std::string> good;
  std::set<std::string> ok;
  std::set<std::string> junk;

  bool is_positive(const std::string& id) const { return good.count(id) || ok.count(id); }
  bool is_junk(const std::string& id) const { return junk.count(id) != 0; }
  std::size_t num_positives() const { return good.size() + ok.size(); }
  void validate() const;
};

inline constexpr std::uint16_t kFeatureMapVersion = 1;
inline constexpr std::uint16_t kDtypeF32 = 0;
inline constexpr std::uint16_t kProposalHasClassScores = 1u << 0;
inline constexpr std::uint16_t kProposalHasObjectness = 1u << 1;

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map);
FeatureMap decode_feature_map(const std::vector<std::uint8_t>& bytes, const std::string& context);

void write_feature_map(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap read_feature_map(const std::filesystem::path& path);
// Reads and validates only the header; the payload size is still checked.
FeatureMapHeader read_feature_map_header(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_proposals(std::span<const RegionProposal> proposals,
                                           std::size_t num_classes);
std::vector<RegionProposal> decode_proposals(const std::vector<std::uint8_t>& bytes,
                                             std::size_t num_classes, const std::string& context);
void write_proposals(std::span<const RegionProposal> proposals, std::size_t num_classes,
                     const std::filesystem::path& path);
std::vector<RegionProposal> load_proposals(const std::filesystem::path& path,
                                           std::size_t num_classes);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Accepts a directory of <query>_{good,ok,junk}.txt files or a single
// sectioned file with "[<query_id> good]" style headers.
std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path);
void write_ground_truth_dir(std::span<const GroundTruth> gts, const std::filesystem::path& dir);

// Loaders used by the search stages; resolve through the manifest.
FeatureMap load_image_features(const DatasetManifest& manifest, const std::string& image_id);
std::vector<RegionProposal> load_image_proposals(const DatasetManifest& manifest,
                                                 const std::string& image_id);

}  // namespace ifs

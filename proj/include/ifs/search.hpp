#pragma once

// Filtering stage: an immutable index of finalized image descriptors ranked
// by cosine similarity against the query image's whole-image descriptor.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ifs/descriptor.hpp"
#include "ifs/parallel.hpp"
#include "ifs/pooling.hpp"
#include "ifs/tensor_store.hpp"

namespace ifs {

enum class Stage { filtering, ca_sr, cs_sr, qe };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

struct RankEntry {
  std::string image_id;
  double score = 0.0;
  std::optional<BoundingBox> localization;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

struct Ranking {
  std::string query_id;
  std::vector<RankEntry> entries;
  Stage stage = Stage::filtering;

  friend bool operator==(const Ranking&, const Ranking&) = default;
};

// Score descending, then image id ascending.
bool rank_before(const RankEntry& a, const RankEntry& b);
void sort_entries(std::vector<RankEntry>& entries);

class Index {
 public:
  Index() = default;
  Index(std::vector<std::string> image_ids, std::size_t dim, std::vector<double> matrix,
        Pooling pooling, std::optional<WhiteningModel> whitening);

  std::size_t size() const { return image_ids_.size(); }
  std::size_t dim() const { return dim_; }
  Pooling pooling() const { return pooling_; }
  const std::vector<std::string>& image_ids() const { return image_ids_; }
  const std::vector<double>& matrix() const { return matrix_; }
  const WhiteningModel* whitening() const { return whitening_ ? &*whitening_ : nullptr; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(matrix_).subspan(i * dim_, dim_);
  }
  std::optional<std::size_t> find(const std::string& image_id) const;

  friend bool operator==(const Index& a, const Index& b) {
    return a.image_ids_ == b.image_ids_ && a.dim_ == b.dim_ && a.matrix_ == b.matrix_ &&
           a.pooling_ == b.pooling_ && a.whitening_ == b.whitening_;
  }

 private:
  std::vector<std::string> image_ids_;
  std::size_t dim_ = 0;
  std::vector<double> matrix_;  // N x D row-major
  Pooling pooling_ = Pooling::sum;
  std::optional<WhiteningModel> whitening_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

struct BuildOptions {
  Pooling pooling = Pooling::sum;
  double epsilon = kDefaultRelativeEpsilon;
  EpsilonScale epsilon_scale = EpsilonScale::relative;
  // Use this model instead of fitting one on the database (sum pooling only).
  std::optional<WhiteningModel> whitening;
  Exec exec;
};

// All-or-nothing: any unreadable image aborts the build, naming the image.
Index build_index(const DatasetManifest& manifest, const BuildOptions& options = {});

// Dot product of unit-norm descriptors.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const Descriptor& a, const Descriptor& b);

struct SearchOptions {
  bool exclude_query_image = false;
  Exec exec;
};

// Whole-image descriptor of the query's image, finalized with the index's
// pooling and whitening.
Descriptor query_image_descriptor(const Index& index, const QueryDef& query,
                                  const DatasetManifest& manifest);

// Scores every indexed image against `query_desc` and sorts.
Ranking rank_index(const Index& index, const Descriptor& query_desc, const std::string& query_id,
                   Stage stage, const std::string* excluded_image, const Exec& exec = {});

Ranking filter_search(const Index& index, const QueryDef& query, const DatasetManifest& manifest,
                      const SearchOptions& options = {});

// IFSI: "IFSI" u16 version, u32 N, u32 D, u16 pooling (0 sum, 1 max),
// N length-prefixed ids, N*D f64 row-major, u8 has_whitening [+ IFSW].
std::vector<std::uint8_t> encode_index(const Index& index);
Index decode_index(const std::vector<std::uint8_t>& bytes, const std::string& context);
void write_index(const Index& index, const std::filesystem::path& path);
Index read_index(const std::filesystem::path& path);

// Tab-separated ranking records:
//   query_id  rank  image_id  score  stage  [x_min y_min x_max y_max]
std::string format_rankings(std::span<const Ranking> rankings);
std::vector<Ranking> parse_rankings(const std::string& text, const std::string& context);
void write_rankings(std::span<const Ranking> rankings, const std::filesystem::path& path);
std::vector<Ranking> read_rankings(const std::filesystem::path& path);

}  // namespace ifs

#include "ifs/search.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "ifs/error.hpp"
#include "ifs/simd/kernels.hpp"
#include "whitening_codec.hpp"

namespace ifs {

namespace {

constexpr std::string_view kIndexMagic = "IFSI";
constexpr std::uint16_t kIndexVersion = 1;
constexpr std::size_t kScoreChunk = 1024;
constexpr std::size_t kBuildChunk = 8;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::Schema, where + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::filtering: return "filtering";
    case Stage::ca_sr: return "ca-sr";
    case Stage::cs_sr: return "cs-sr";
    case Stage::qe: return "qe";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  if (s == "filtering") return Stage::filtering;
  if (s == "ca-sr") return Stage::ca_sr;
  if (s == "cs-sr") return Stage::cs_sr;
  if (s == "qe") return Stage::qe;
  throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(s) + "'");
}

bool rank_before(const RankEntry& a, const RankEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.image_id < b.image_id;
}

void sort_entries(std::vector<RankEntry>& entries) {
  std::sort(entries.begin(), entries.end(), rank_before);
}

Index::Index(std::vector<std::string> image_ids, std::size_t dim, std::vector<double> matrix,
             Pooling pooling, std::optional<WhiteningModel> whitening)
    : image_ids_(std::move(image_ids)),
      dim_(dim),
      matrix_(std::move(matrix)),
      pooling_(pooling),
      whitening_(std::move(whitening)) {
  if (matrix_.size() != image_ids_.size() * dim_) {
    throw Error(ErrorCode::DimensionMismatch, "index matrix does not match N x D");
  }
  if (whitening_ && whitening_->dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "index whitening model dimension differs from D");
  }
  row_of_.reserve(image_ids_.size());
  for (std::size_t i = 0; i < image_ids_.size(); ++i) {
    if (!row_of_.emplace(image_ids_[i], i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate image id '" + image_ids_[i] + "' in index");
    }
  }
}

std::optional<std::size_t> Index::find(const std::string& image_id) const {
  auto it = row_of_.find(image_id);
  if (it == row_of_.end()) return std::nullopt;
  return it->second;
}

Index build_index(const DatasetManifest& manifest, const BuildOptions& options) {
  const std::size_t n = manifest.image_ids.size();
  const std::size_t dim = manifest.feature_dim;
  std::vector<RawDescriptor> raw(n);
  parallel_for(n, kBuildChunk, options.exec, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& id = manifest.image_ids[i];
      try {
        raw[i] = pool_image(load_image_features(manifest, id), options.pooling);
      } catch (const Error& err) {
        throw Error(err.code(), "image '" + id + "': " + err.what(), err.offset());
      }
    }
  });

  std::optional<WhiteningModel> model;
  if (options.pooling == Pooling::sum) {
    if (options.whitening) {
      if (options.whitening->dim() != dim) {
        throw Error(ErrorCode::DimensionMismatch, "external whitening model is " +
                                                      std::to_string(options.whitening->dim()) +
                                                      "-D, manifest feature_dim is " + std::to_string(dim));
      }
      model = *options.whitening;
    } else {
      std::vector<Descriptor> l2(n);
      for (std::size_t i = 0; i < n; ++i) l2[i] = l2_normalize(raw[i]);
      model = learn_whitening(l2, options.epsilon, options.epsilon_scale, options.exec);
    }
  }

  std::vector<double> matrix(n * dim);
  parallel_for(n, kBuildChunk, options.exec, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto d = finalize(raw[i], model ? &*model : nullptr);
      std::copy(d.values.begin(), d.values.end(), matrix.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
  });
  return Index(manifest.image_ids, dim, std::move(matrix), options.pooling, std::move(model));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of " + std::to_string(a.size()) + "-D and " + std::to_string(b.size()) + "-D vectors");
  }
  double out = 0.0;
  simd::active_kernels().dot_rows(b.data(), 1, b.size(), a.data(), &out);
  return out;
}

double cosine(const Descriptor& a, const Descriptor& b) { return cosine(a.values, b.values); }

Descriptor query_image_descriptor(const Index& index, const QueryDef& query,
                                  const DatasetManifest& manifest) {
  FeatureMap map;
  try {
    map = load_image_features(manifest, query.image_id);
  } catch (const Error& err) {
    throw Error(err.code(), "query '" + query.query_id + "': " + err.what(), err.offset());
  }
  return finalize(pool_image(map, index.pooling()), index.whitening());
}

Ranking rank_index(const Index& index, const Descriptor& query_desc, const std::string& query_id,
                   Stage stage, const std::string* excluded_image, const Exec& exec) {
  if (query_desc.dim() != index.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "query descriptor is " + std::to_string(query_desc.dim()) +
                                                  "-D, index is " + std::to_string(index.dim()) + "-D");
  }
  const std::size_t n = index.size();
  std::vector<double> scores(n);
  const auto dot = simd::active_kernels().dot_rows;
  parallel_for(n, kScoreChunk, exec, [&](std::size_t b, std::size_t e) {
    dot(index.matrix().data() + b * index.dim(), e - b, index.dim(), query_desc.values.data(),
        scores.data() + b);
  });

  Ranking r;
  r.query_id = query_id;
  r.stage = stage;
  r.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (excluded_image && index.image_ids()[i] == *excluded_image) continue;
    r.entries.push_back(RankEntry{index.image_ids()[i], scores[i], std::nullopt});
  }
  sort_entries(r.entries);
  return r;
}

Ranking filter_search(const Index& index, const QueryDef& query, const DatasetManifest& manifest,
                      const SearchOptions& options) {
  const auto desc = query_image_descriptor(index, query, manifest);
  return rank_index(index, desc, query.query_id, Stage::filtering,
                    options.exclude_query_image ? &query.image_id : nullptr, options.exec);
}

// ---------------------------------------------------------------- IFSI

std::vector<std::uint8_t> encode_index(const Index& index) {
  detail::ByteWriter out;
  out.reserve(32 + index.matrix().size() * 8);
  out.raw(kIndexMagic);
  out.u16(kIndexVersion);
  out.u32(static_cast<std::uint32_t>(index.size()));
  out.u32(static_cast<std::uint32_t>(index.dim()));
  out.u16(index.pooling() == Pooling::sum ? 0 : 1);
  for (const auto& id : index.image_ids()) out.string(id);
  for (double v : index.matrix()) out.f64(v);
  out.u8(index.whitening() ? 1 : 0);
  if (index.whitening()) detail::put_whitening(out, *index.whitening());
  return out.bytes();
}

Index decode_index(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader in(bytes, context);
  const std::string magic = in.raw(4);
  if (magic != kIndexMagic) throw Error(ErrorCode::BadMagic, context + ": expected IFSI, found '" + magic + "'", 0);
  const auto version = in.u16();
  if (version != kIndexVersion) {
    throw Error(ErrorCode::UnsupportedVersion, context + ": index version " + std::to_string(version), 4);
  }
  const std::size_t n = in.u32();
  const std::size_t dim = in.u32();
  const auto pooling_offset = in.position();
  const auto pooling_code = in.u16();
  if (pooling_code > 1) throw Error(ErrorCode::Schema, context + ": unknown pooling code", pooling_offset);
  std::vector<std::string> ids;
  ids.reserve(std::min<std::size_t>(n, in.remaining() / 4));
  for (std::size_t i = 0; i < n; ++i) ids.push_back(in.string());
  in.need(8 * n * dim);
  std::vector<double> matrix(n * dim);
  for (double& v : matrix) v = in.f64();
  const auto has_w = in.u8();
  std::optional<WhiteningModel> model;
  if (has_w) model = detail::parse_whitening(in);
  if (in.remaining() != 0) throw Error(ErrorCode::Schema, context + ": trailing bytes", in.position());
  return Index(std::move(ids), dim, std::move(matrix), pooling_code == 0 ? Pooling::sum : Pooling::max,
               std::move(model));
}

void write_index(const Index& index, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_index(index));
}

Index read_index(const std::filesystem::path& path) {
  return decode_index(detail::read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------- ranking text

std::string format_rankings(std::span<const Ranking> rankings) {
  std::string out = "# query_id\trank\timage_id\tscore\tstage\t[x_min\ty_min\tx_max\ty_max]\n";
  for (const auto& r : rankings) {
    const std::string stage(to_string(r.stage));
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
      const auto& e = r.entries[i];
      out += r.query_id;
      out += '\t' + std::to_string(i + 1) + '\t' + e.image_id + '\t' + fmt17(e.score) + '\t' + stage;
      if (e.localization) {
        const auto& b = *e.localization;
        out += '\t' + fmt17(b.x_min) + '\t' + fmt17(b.y_min) + '\t' + fmt17(b.x_max) + '\t' + fmt17(b.y_max);
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<Ranking> parse_rankings(const std::string& text, const std::string& context) {
  std::vector<Ranking> out;
  std::unordered_map<std::string, std::size_t> slot;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = context + ":" + std::to_string(line_no);
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 5 && f.size() != 9) {
      throw Error(ErrorCode::Schema, where + ": expected 5 or 9 tab-separated fields, got " + std::to_string(f.size()));
    }
    auto [it, fresh] = slot.emplace(f[0], out.size());
    if (fresh) {
      Ranking r;
      r.query_id = f[0];
      r.stage = parse_stage(f[4]);
      out.push_back(std::move(r));
    } else if (it->second != out.size() - 1) {
      throw Error(ErrorCode::Schema, where + ": records of query '" + f[0] + "' are not contiguous");
    }
    auto& r = out[it->second];
    if (to_string(r.stage) != f[4]) throw Error(ErrorCode::Schema, where + ": stage changes within a query");
    if (f[1] != std::to_string(r.entries.size() + 1)) {
      throw Error(ErrorCode::Schema, where + ": field 'rank' is " + f[1] + ", expected " +
                                         std::to_string(r.entries.size() + 1));
    }
    RankEntry e;
    e.image_id = f[2];
    e.score = parse_double(f[3], where);
    if (f.size() == 9) {
      e.localization = BoundingBox{parse_double(f[5], where), parse_double(f[6], where),
                                   parse_double(f[7], where), parse_double(f[8], where)};
    }
    r.entries.push_back(std::move(e));
  }
  return out;
}

void write_rankings(std::span<const Ranking> rankings, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write rankings to " + path.string());
  out << format_rankings(rankings);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<Ranking> read_rankings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open rankings " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rankings(ss.str(), path.string());
}

}  // namespace ifs

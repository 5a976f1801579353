#include "ifs/tensor_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "ifs/error.hpp"

namespace ifs {

namespace fs = std::filesystem;
using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::string_view kFeatureMagic = "IFSM";
// magic + version + dtype + C + H + W + stride + id length
constexpr std::size_t kFixedHeaderBytes = 4 + 2 + 2 + 4 * 4 + 4;

std::string box_string(const BoundingBox& b) {
  std::ostringstream os;
  os << "(" << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max << ")";
  return os.str();
}

FeatureMapHeader parse_header(ByteReader& in) {
  const std::string magic = in.raw(4);
  if (magic != kFeatureMagic) {
    throw Error(ErrorCode::BadMagic, in.context() + ": expected IFSM, found '" + magic + "'", 0);
  }
  const auto version = in.u16();
  if (version != kFeatureMapVersion) {
    throw Error(ErrorCode::UnsupportedVersion,
                in.context() + ": feature map version " + std::to_string(version), 4);
  }
  const auto dtype_offset = in.position();
  const auto dtype = in.u16();
  if (dtype != kDtypeF32) {
    throw Error(ErrorCode::UnsupportedVersion,
                in.context() + ": unsupported dtype code " + std::to_string(dtype), dtype_offset);
  }
  FeatureMapHeader h;
  h.channels = in.u32();
  h.height = in.u32();
  h.width = in.u32();
  h.stride = in.u32();
  h.image_id = in.string();
  if (h.channels == 0 || h.height == 0 || h.width == 0 || h.stride == 0) {
    throw Error(ErrorCode::Schema,
                in.context() + ": channels, height, width and stride must be positive", 8);
  }
  return h;
}

std::size_t payload_floats(const FeatureMapHeader& h) {
  return static_cast<std::size_t>(h.channels) * h.height * h.width;
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::Schema, where + ": missing field '" + key + "'");
  return *it;
}

BoundingBox parse_box(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::Schema, where + ": field 'box' must be an array of 4 numbers");
  }
  BoundingBox b;
  try {
    b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::Schema, where + ": field 'box' must be an array of 4 numbers");
  }
  if (!b.valid()) throw Error(ErrorCode::Schema, where + ": field 'box' is degenerate " + box_string(b));
  return b;
}

template <typename T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return require(obj, key, where).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::Schema, where + ": field '" + key + "' has the wrong type");
  }
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::set<std::string>& gt_section(GroundTruth& gt, const std::string& label, const std::string& where) {
  if (label == "good") return gt.good;
  if (label == "ok") return gt.ok;
  if (label == "junk") return gt.junk;
  throw Error(ErrorCode::Schema, where + ": unknown ground-truth label '" + label + "'");
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty() && t[0] != '#') ids.push_back(std::move(t));
  }
  return ids;
}

}  // namespace

bool BoundingBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min >= 0.0 && y_min >= 0.0 && x_min < x_max && y_min < y_max;
}

void FeatureMap::validate() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw Error(ErrorCode::InvalidArgument, "feature map '" + image_id + "' has an empty dimension");
  }
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, "feature map '" + image_id + "' has stride 0");
  if (data.size() != static_cast<std::size_t>(channels) * height * width) {
    throw Error(ErrorCode::InvalidArgument,
                "feature map '" + image_id + "' holds " + std::to_string(data.size()) +
                    " values, expected C*H*W = " +
                    std::to_string(static_cast<std::size_t>(channels) * height * width));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::NonFiniteData,
                  "feature map '" + image_id + "' value " + std::to_string(i) + " is not finite");
    }
  }
}

const ImageEntry& DatasetManifest::entry(const std::string& image_id) const {
  auto it = images.find(image_id);
  if (it == images.end()) {
    throw Error(ErrorCode::DanglingReference, "image '" + image_id + "' is not in the manifest");
  }
  return it->second;
}

void GroundTruth::validate() const {
  std::vector<std::string> clashes;
  for (const auto& id : good) {
    if (ok.count(id)) clashes.push_back(id + " (good, ok)");
    if (junk.count(id)) clashes.push_back(id + " (good, junk)");
  }
  for (const auto& id : ok) {
    if (junk.count(id)) clashes.push_back(id + " (ok, junk)");
  }
  if (!clashes.empty()) {
    std::string msg = "query '" + query_id + "' lists images under more than one label:";
    for (const auto& c : clashes) msg += " " + c;
    throw Error(ErrorCode::Schema, msg);
  }
}

// ---------------------------------------------------------------- IFSM

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map) {
  map.validate();
  ByteWriter out;
  out.reserve(kFixedHeaderBytes + map.image_id.size() + 4 * map.data.size());
  out.raw(kFeatureMagic);
  out.u16(kFeatureMapVersion);
  out.u16(kDtypeF32);
  out.u32(map.channels);
  out.u32(map.height);
  out.u32(map.width);
  out.u32(map.stride);
  out.string(map.image_id);
  for (float v : map.data) out.f32(v);
  return out.bytes();
}

FeatureMap decode_feature_map(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  ByteReader in(bytes, context);
  const auto h = parse_header(in);
  FeatureMap map;
  map.image_id = h.image_id;
  map.channels = h.channels;
  map.height = h.height;
  map.width = h.width;
  map.stride = h.stride;
  const std::size_t n = payload_floats(h);
  in.need(n * 4);
  map.data.resize(n);
  const std::size_t payload_start = in.position();
  for (std::size_t i = 0; i < n; ++i) {
    const float v = in.f32();
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteData, context + ": non-finite value at index " + std::to_string(i),
                  payload_start + 4 * i);
    }
    map.data[i] = v;
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::Schema,
                context + ": " + std::to_string(in.remaining()) + " trailing bytes after payload",
                in.position());
  }
  return map;
}

void write_feature_map(const FeatureMap& map, const fs::path& path) {
  const auto bytes = encode_feature_map(map);  // validates before touching the file
  detail::write_file_bytes(path, bytes);
}

FeatureMap read_feature_map(const fs::path& path) {
  return decode_feature_map(detail::read_file_bytes(path), path.string());
}

FeatureMapHeader read_feature_map_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> head(kFixedHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  std::uint32_t id_len = 0;
  if (head.size() == kFixedHeaderBytes) {
    ByteReader peek(head, path.string());
    (void)peek.raw(kFixedHeaderBytes - 4);
    id_len = peek.u32();
  }
  std::vector<std::uint8_t> id_bytes(id_len);
  if (id_len > 0) {
    in.read(reinterpret_cast<char*>(id_bytes.data()), id_len);
    id_bytes.resize(static_cast<std::size_t>(in.gcount()));
  }
  head.insert(head.end(), id_bytes.begin(), id_bytes.end());
  ByteReader reader(head, path.string());
  auto h = parse_header(reader);

  const auto file_size = fs::file_size(path);
  const auto expected = head.size() + 4 * payload_floats(h);
  if (file_size < expected) {
    throw Error(ErrorCode::TruncatedFile,
                path.string() + ": payload needs " + std::to_string(expected) + " bytes, file has " +
                    std::to_string(file_size),
                file_size);
  }
  if (file_size > expected) {
    throw Error(ErrorCode::Schema, path.string() + ": trailing bytes after payload", expected);
  }
  return h;
}

// ---------------------------------------------------------------- proposals

std::vector<std::uint8_t> encode_proposals(std::span<const RegionProposal> proposals,
                                           std::size_t num_classes) {
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(proposals.size()));
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    const std::string where = "proposal " + std::to_string(i);
    if (!p.box.valid()) throw Error(ErrorCode::InvalidArgument, where + ": invalid box " + box_string(p.box));
    std::uint16_t flags = 0;
    if (p.class_scores) {
      if (p.class_scores->size() != num_classes || num_classes == 0) {
        throw Error(ErrorCode::Schema, where + ": class_scores length " +
                                           std::to_string(p.class_scores->size()) + " but K = " +
                                           std::to_string(num_classes));
      }
      flags |= kProposalHasClassScores;
    }
    if (p.objectness) flags |= kProposalHasObjectness;
    out.f32(static_cast<float>(p.box.x_min));
    out.f32(static_cast<float>(p.box.y_min));
    out.f32(static_cast<float>(p.box.x_max));
    out.f32(static_cast<float>(p.box.y_max));
    out.f32(p.objectness.value_or(0.0f));
    out.u16(flags);
    if (p.class_scores) {
      for (float s : *p.class_scores) out.f32(s);
    }
  }
  return out.bytes();
}

std::vector<RegionProposal> decode_proposals(const std::vector<std::uint8_t>& bytes,
                                             std::size_t num_classes, const std::string& context) {
  ByteReader in(bytes, context);
  const std::uint32_t count = in.u32();
  std::vector<RegionProposal> out;
  out.reserve(std::min<std::size_t>(count, bytes.size() / 22));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto record_offset = in.position();
    const std::string where = context + ": proposal " + std::to_string(i);
    RegionProposal p;
    p.box.x_min = in.f32();
    p.box.y_min = in.f32();
    p.box.x_max = in.f32();
    p.box.y_max = in.f32();
    const float objectness = in.f32();
    const auto flags_offset = in.position();
    const std::uint16_t flags = in.u16();
    if (!p.box.valid()) {
      throw Error(ErrorCode::Schema, where + ": field 'box' invalid " + box_string(p.box), record_offset);
    }
    if (flags & ~(kProposalHasClassScores | kProposalHasObjectness)) {
      throw Error(ErrorCode::Schema, where + ": field 'flags' has unknown bits", flags_offset);
    }
    if (flags & kProposalHasObjectness) {
      if (!(objectness >= 0.0f && objectness <= 1.0f)) {
        throw Error(ErrorCode::Schema, where + ": field 'objectness' outside [0,1]", record_offset + 16);
      }
      p.objectness = objectness;
    }
    if (flags & kProposalHasClassScores) {
      if (num_classes == 0) {
        throw Error(ErrorCode::Schema,
                    where + ": field 'flags' announces class scores but the manifest declares K = 0",
                    flags_offset);
      }
      std::vector<float> scores(num_classes);
      for (auto& s : scores) {
        const auto off = in.position();
        s = in.f32();
        if (!std::isfinite(s)) throw Error(ErrorCode::NonFiniteData, where + ": field 'class_scores'", off);
      }
      p.class_scores = std::move(scores);
    }
    out.push_back(std::move(p));
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::Schema, context + ": trailing bytes after " + std::to_string(count) + " proposals",
                in.position());
  }
  return out;
}

void write_proposals(std::span<const RegionProposal> proposals, std::size_t num_classes,
                     const fs::path& path) {
  detail::write_file_bytes(path, encode_proposals(proposals, num_classes));
}

std::vector<RegionProposal> load_proposals(const fs::path& path, std::size_t num_classes) {
  return decode_proposals(detail::read_file_bytes(path), num_classes, path.string());
}

// ---------------------------------------------------------------- manifest

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
  }
  const std::string where = path.string();
  if (!doc.is_object()) throw Error(ErrorCode::Schema, where + ": top level must be an object");
  const fs::path root = path.parent_path();

  DatasetManifest m;
  m.dataset_name = get_field<std::string>(doc, "dataset_name", where);
  m.feature_dim = get_field<std::uint32_t>(doc, "feature_dim", where);
  m.stride = get_field<std::uint32_t>(doc, "stride", where);
  if (m.feature_dim == 0) throw Error(ErrorCode::Schema, where + ": field 'feature_dim' must be positive");
  if (m.stride == 0) throw Error(ErrorCode::Schema, where + ": field 'stride' must be positive");
  if (doc.contains("class_names")) {
    m.class_names = get_field<std::vector<std::string>>(doc, "class_names", where);
  }

  const auto& images = require(doc, "images", where);
  if (!images.is_array()) throw Error(ErrorCode::Schema, where + ": field 'images' must be an array");
  std::vector<std::string> missing_files;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& j = images[i];
    const std::string w = where + ": images[" + std::to_string(i) + "]";
    ImageEntry e;
    e.id = get_field<std::string>(j, "id", w);
    e.features = root / get_field<std::string>(j, "features", w);
    if (j.contains("proposals")) e.proposals = root / get_field<std::string>(j, "proposals", w);
    if (j.contains("external")) e.external = get_field<bool>(j, "external", w);
    if (j.contains("width")) e.width = get_field<double>(j, "width", w);
    if (j.contains("height")) e.height = get_field<double>(j, "height", w);
    if (m.images.count(e.id)) throw Error(ErrorCode::Schema, w + ": duplicate image id '" + e.id + "'");
    if (!fs::exists(e.features)) missing_files.push_back(e.features.string());
    if (!e.proposals.empty() && !fs::exists(e.proposals)) missing_files.push_back(e.proposals.string());
    if (!e.external) m.image_ids.push_back(e.id);
    m.images.emplace(e.id, std::move(e));
  }
  if (!missing_files.empty()) {
    std::string msg = where + ": " + std::to_string(missing_files.size()) + " referenced files missing:";
    for (const auto& f : missing_files) msg += " " + f;
    throw Error(ErrorCode::DanglingReference, msg);
  }

  // Tensor headers are checked eagerly so later stages never meet a bad file.
  std::map<std::string, FeatureMapHeader> headers;
  for (const auto& [id, e] : m.images) {
    auto h = read_feature_map_header(e.features);
    if (h.channels != m.feature_dim) {
      throw Error(ErrorCode::Schema, e.features.string() + ": channels " + std::to_string(h.channels) +
                                         " but manifest feature_dim is " + std::to_string(m.feature_dim));
    }
    if (h.stride != m.stride) {
      throw Error(ErrorCode::Schema, e.features.string() + ": stride " + std::to_string(h.stride) +
                                         " but manifest stride is " + std::to_string(m.stride));
    }
    if (h.image_id != id) {
      throw Error(ErrorCode::Schema,
                  e.features.string() + ": tensor image_id '" + h.image_id + "' but manifest id '" + id + "'");
    }
    headers.emplace(id, std::move(h));
  }

  if (doc.contains("queries")) {
    const auto& queries = doc["queries"];
    if (!queries.is_array()) throw Error(ErrorCode::Schema, where + ": field 'queries' must be an array");
    std::vector<std::string> dangling;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& j = queries[i];
      const std::string w = where + ": queries[" + std::to_string(i) + "]";
      QueryDef q;
      q.query_id = get_field<std::string>(j, "query_id", w);
      q.image_id = get_field<std::string>(j, "image_id", w);
      q.box = parse_box(require(j, "box", w), w);
      if (j.contains("class_index") && !j["class_index"].is_null()) {
        q.class_index = get_field<int>(j, "class_index", w);
        if (*q.class_index < 0 || static_cast<std::size_t>(*q.class_index) >= m.num_classes()) {
          throw Error(ErrorCode::Schema, w + ": field 'class_index' " + std::to_string(*q.class_index) +
                                             " outside [0, " + std::to_string(m.num_classes()) + ")");
        }
      }
      if (!seen.insert(q.query_id).second) {
        throw Error(ErrorCode::Schema, w + ": duplicate query id '" + q.query_id + "'");
      }
      auto it = m.images.find(q.image_id);
      if (it == m.images.end()) {
        dangling.push_back(q.query_id + " -> " + q.image_id);
      } else {
        const auto& h = headers.at(q.image_id);
        const double w_px = it->second.width.value_or(static_cast<double>(h.width) * h.stride);
        const double h_px = it->second.height.value_or(static_cast<double>(h.height) * h.stride);
        if (q.box.x_max > w_px || q.box.y_max > h_px) {
          throw Error(ErrorCode::Schema, w + ": field 'box' " + box_string(q.box) +
                                             " exceeds image bounds " + std::to_string(w_px) + "x" +
                                             std::to_string(h_px));
        }
      }
      m.queries.push_back(std::move(q));
    }
    if (!dangling.empty()) {
      std::string msg = where + ": queries reference unknown images:";
      for (const auto& d : dangling) msg += " " + d;
      throw Error(ErrorCode::DanglingReference, msg);
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path root = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(root.empty() ? "." : root).generic_string(); };

  nlohmann::ordered_json doc;
  doc["dataset_name"] = manifest.dataset_name;
  doc["feature_dim"] = manifest.feature_dim;
  doc["stride"] = manifest.stride;
  doc["class_names"] = manifest.class_names;
  auto images = nlohmann::ordered_json::array();
  auto emit = [&](const ImageEntry& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["features"] = rel(e.features);
    if (!e.proposals.empty()) j["proposals"] = rel(e.proposals);
    if (e.external) j["external"] = true;
    if (e.width) j["width"] = *e.width;
    if (e.height) j["height"] = *e.height;
    images.push_back(std::move(j));
  };
  for (const auto& id : manifest.image_ids) emit(manifest.entry(id));
  for (const auto& [id, e] : manifest.images) {
    if (e.external) emit(e);
  }
  doc["images"] = std::move(images);
  auto queries = nlohmann::ordered_json::array();
  for (const auto& q : manifest.queries) {
    nlohmann::ordered_json j;
    j["query_id"] = q.query_id;
    j["image_id"] = q.image_id;
    j["box"] = {q.box.x_min, q.box.y_min, q.box.x_max, q.box.y_max};
    if (q.class_index) j["class_index"] = *q.class_index;
    queries.push_back(std::move(j));
  }
  doc["queries"] = std::move(queries);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest " + path.string());
  out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------- ground truth

std::vector<GroundTruth> load_ground_truth(const fs::path& path) {
  std::map<std::string, GroundTruth> by_query;

  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(path)) {
      if (de.is_regular_file() && de.path().extension() == ".txt") files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const auto us = stem.rfind('_');
      if (us == std::string::npos) continue;
      const std::string label = stem.substr(us + 1);
      if (label != "good" && label != "ok" && label != "junk") continue;  // e.g. *_query.txt
      const std::string qid = stem.substr(0, us);
      auto& gt = by_query[qid];
      gt.query_id = qid;
      auto& section = gt_section(gt, label, f.string());
      for (auto& id : read_id_list(f)) section.insert(std::move(id));
    }
  } else {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open ground truth " + path.string());
    std::string line;
    std::set<std::string>* current = nullptr;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (t.front() == '[') {
        if (t.back() != ']') throw Error(ErrorCode::Schema, where + ": malformed section header");
        std::istringstream hs(t.substr(1, t.size() - 2));
        std::string qid, label, extra;
        hs >> qid >> label;
        if (qid.empty() || label.empty() || (hs >> extra)) {
          throw Error(ErrorCode::Schema, where + ": section header must be '[<query_id> good|ok|junk]'");
        }
        auto& gt = by_query[qid];
        gt.query_id = qid;
        current = &gt_section(gt, label, where);
      } else {
        if (!current) throw Error(ErrorCode::Schema, where + ": image id before any section header");
        current->insert(t);
      }
    }
  }

  std::vector<GroundTruth> out;
  out.reserve(by_query.size());
  for (auto& [qid, gt] : by_query) {
    gt.validate();
    out.push_back(std::move(gt));
  }
  return out;
}

void write_ground_truth_dir(std::span<const GroundTruth> gts, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& gt : gts) {
    gt.validate();
    auto dump = [&](const std::set<std::string>& ids, const char* label) {
      std::ofstream out(dir / (gt.query_id + "_" + label + ".txt"), std::ios::trunc);
      if (!out) throw Error(ErrorCode::Io, "cannot write ground truth for " + gt.query_id);
      for (const auto& id : ids) out << id << "\n";
    };
    dump(gt.good, "good");
    dump(gt.ok, "ok");
    dump(gt.junk, "junk");
  }
}

FeatureMap load_image_features(const DatasetManifest& manifest, const std::string& image_id) {
  const auto& e = manifest.entry(image_id);
  auto map = read_feature_map(e.features);
  if (map.channels != manifest.feature_dim) {
    throw Error(ErrorCode::Schema, "image '" + image_id + "': channels " + std::to_string(map.channels) +
                                       " != feature_dim " + std::to_string(manifest.feature_dim));
  }
  return map;
}

std::vector<RegionProposal> load_image_proposals(const DatasetManifest& manifest,
                                                 const std::string& image_id) {
  const auto& e = manifest.entry(image_id);
  if (e.proposals.empty()) return {};
  return load_proposals(e.proposals, manifest.num_classes());
}

}  // namespace ifs

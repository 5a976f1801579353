#include "ifs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "ifs/error.hpp"

namespace ifs {

namespace fs = std::filesystem;

namespace {

// Distribution code is written out here rather than taken from <random> so
// the output is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (purpose, item) so that e.g. the noise of an image
// does not depend on the signal gain or on other images.
Rng stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t item = 0) {
  return Rng(mix(mix(mix(seed) ^ purpose) ^ item));
}

enum Purpose : std::uint64_t { kLayout = 1, kNoise = 2, kProposals = 3, kClassNoise = 4, kClutter = 5, kView = 6 };

// Blob width of each signature part, in cells.
constexpr double kPartSigma = 0.8;
// Part centres relative to the box; parts reach close to every edge.
constexpr std::pair<double, double> kPartSpan{0.1, 0.9};
// Junk instances are faint, partial views of the object.
constexpr double kJunkGainFactor = 0.35;
// Database instances are seen from other viewpoints: each part loses up to
// this much amplitude (in units of the noise scale, before the part weight).
// The loss does not grow with the gain, so high-gain instances converge to
// the query's view.
constexpr double kViewNuisance = 5.6;
constexpr std::size_t kJitteredPerPlant = 3;
constexpr double kClassNoiseLevel = 0.1;
constexpr double kBackgroundMass = 0.5;
// Planted objects occlude the background: clutter inside the box is damped.
constexpr double kOcclusion = 0.3;
constexpr std::size_t kClutterBlobs = 24;
constexpr std::pair<double, double> kClutterContrast{4.0, 8.0};

struct Signature {
  std::vector<std::uint32_t> channels;
  std::vector<double> weights;
  std::vector<double> u;  // part position inside the box, relative
  std::vector<double> v;
};

struct Plant {
  std::size_t query;
  BoundingBox box;
  double gain_factor;
  bool full_view = false;
};

struct ImagePlan {
  std::string id;
  bool external = false;
  std::optional<Plant> plant;
};

std::string padded(const char* prefix, std::size_t i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

BoundingBox random_box(Rng& rng, double img_w, double img_h, double lo, double hi, double inset = 0.0) {
  const double w = img_w * rng.uniform(lo, hi);
  const double h = img_h * rng.uniform(lo, hi);
  const double x = rng.uniform(inset, std::max(inset, img_w - w - inset));
  const double y = rng.uniform(inset, std::max(inset, img_h - h - inset));
  return {x, y, x + w, y + h};
}


// Boxes are stored as f32 in proposal tables; keep plants on that grid too.
BoundingBox to_f32(const BoundingBox& b) {
  return {static_cast<float>(b.x_min), static_cast<float>(b.y_min), static_cast<float>(b.x_max),
          static_cast<float>(b.y_max)};
}

// Planted objects stay a blob reach away from the border so every part is
// rendered whole (small images get a proportionally smaller inset).
BoundingBox plant_box(Rng& rng, const SynthSpec& spec, double img_w, double img_h) {
  const double inset = std::min(3.0 * kPartSigma * spec.stride, 0.3 * std::min(img_w, img_h));
  return to_f32(random_box(rng, img_w, img_h, 0.2, 0.35, inset));
}

BoundingBox jitter(Rng& rng, const BoundingBox& b, double amount, double img_w, double img_h) {
  const double w = b.width();
  const double h = b.height();
  BoundingBox j{b.x_min + rng.uniform(-amount, amount) * w, b.y_min + rng.uniform(-amount, amount) * h,
                b.x_max + rng.uniform(-amount, amount) * w, b.y_max + rng.uniform(-amount, amount) * h};
  j.x_min = std::clamp(j.x_min, 0.0, img_w - 1.0);
  j.y_min = std::clamp(j.y_min, 0.0, img_h - 1.0);
  j.x_max = std::clamp(j.x_max, j.x_min + 1.0, img_w);
  j.y_max = std::clamp(j.y_max, j.y_min + 1.0, img_h);
  return j;
}

void add_blob(FeatureMap& map, std::uint32_t channel, double cx, double cy, double amplitude) {
  const double reach = 3.0 * kPartSigma;
  const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - reach)));
  const auto r1 = static_cast<std::size_t>(std::clamp<double>(std::ceil(cy + reach), 0.0, map.height));
  const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - reach)));
  const auto c1 = static_cast<std::size_t>(std::clamp<double>(std::ceil(cx + reach), 0.0, map.width));
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = static_cast<double>(c) + 0.5 - cx;
      const double dy = static_cast<double>(r) + 0.5 - cy;
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * kPartSigma * kPartSigma));
      map.at(channel, r, c) += static_cast<float>(amplitude * g);
    }
  }
}

// Unrelated structure in the scene: single-cell spikes on random channels, kept clear of
// the planted object. Part of the background, so independent of the gain.
void add_clutter(FeatureMap& map, const SynthSpec& spec, const ImagePlan& plan, std::size_t item) {
  const double scale = spec.noise_scale;
  auto rng = stream(spec.seed, kClutter, item);
  const double stride = spec.stride;
  const double margin = 3.0 * kPartSigma;
  for (std::size_t k = 0; k < kClutterBlobs; ++k) {
    const auto channel = static_cast<std::uint32_t>(rng.below(map.channels));
    const double amplitude = scale * rng.uniform(kClutterContrast.first, kClutterContrast.second);
    double cx = 0.0;
    double cy = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
      cx = rng.uniform(0.0, map.width);
      cy = rng.uniform(0.0, map.height);
      placed = !plan.plant || cx < plan.plant->box.x_min / stride - margin ||
               cx > plan.plant->box.x_max / stride + margin || cy < plan.plant->box.y_min / stride - margin ||
               cy > plan.plant->box.y_max / stride + margin;
    }
    if (placed) {
      map.at(channel, static_cast<std::size_t>(cy), static_cast<std::size_t>(cx)) += static_cast<float>(amplitude);
    }
  }
}

// Relative strength of each signature part in [0, 1].
std::vector<double> view_strengths(const SynthSpec& spec, const Plant& plant, std::size_t item) {
  std::vector<double> out(spec.signature_channels, 1.0);
  if (plant.full_view) return out;
  auto rng = stream(spec.seed, kView, item);
  for (double& s : out) {
    const double loss = kViewNuisance * rng.uniform();
    s = spec.signal_gain > 0.0 ? std::max(0.0, 1.0 - loss / spec.signal_gain) : 0.0;
  }
  return out;
}

FeatureMap render(const SynthSpec& spec, const ImagePlan& plan, std::size_t item,
                  const std::vector<Signature>& signatures) {
  FeatureMap map;
  map.image_id = plan.id;
  map.channels = spec.channels;
  map.height = spec.grid_height;
  map.width = spec.grid_width;
  map.stride = spec.stride;
  map.data.resize(static_cast<std::size_t>(spec.channels) * spec.grid_height * spec.grid_width);
  auto rng = stream(spec.seed, kNoise, item);
  for (float& x : map.data) x = static_cast<float>(std::abs(rng.normal()) * spec.noise_scale);

  const double amplitude =
      plan.plant ? spec.signal_gain * spec.noise_scale * plan.plant->gain_factor : 0.0;
  if (amplitude > 0.0) {
    const auto& p = *plan.plant;
    const double stride = spec.stride;
    for (std::size_t r = 0; r < map.height; ++r) {
      const double y = (static_cast<double>(r) + 0.5) * stride;
      if (y < p.box.y_min || y > p.box.y_max) continue;
      for (std::size_t c = 0; c < map.width; ++c) {
        const double x = (static_cast<double>(c) + 0.5) * stride;
        if (x < p.box.x_min || x > p.box.x_max) continue;
        for (std::size_t ch = 0; ch < map.channels; ++ch) map.at(ch, r, c) *= static_cast<float>(kOcclusion);
      }
    }
    const auto& sig = signatures[p.query];
    const auto strengths = view_strengths(spec, p, item);
    for (std::size_t k = 0; k < sig.channels.size(); ++k) {
      const double strength = strengths[k];
      add_blob(map, sig.channels[k], (p.box.x_min + sig.u[k] * p.box.width()) / stride,
               (p.box.y_min + sig.v[k] * p.box.height()) / stride, amplitude * sig.weights[k] * strength);
    }
  }
  add_clutter(map, spec, plan, item);
  return map;
}

std::vector<RegionProposal> make_proposals(const SynthSpec& spec, const ImagePlan& plan,
                                           std::size_t item) {
  const double img_w = static_cast<double>(spec.grid_width) * spec.stride;
  const double img_h = static_cast<double>(spec.grid_height) * spec.stride;
  auto rng = stream(spec.seed, kProposals, item);
  std::vector<BoundingBox> boxes;
  if (plan.plant) {
    for (std::size_t k = 0; k < kJitteredPerPlant && boxes.size() < spec.proposals_per_image; ++k) {
      boxes.push_back(jitter(rng, plan.plant->box, spec.proposal_jitter, img_w, img_h));
    }
  }
  while (boxes.size() < spec.proposals_per_image) boxes.push_back(random_box(rng, img_w, img_h, 0.1, 0.5));
  rng.shuffle(boxes);

  // The detector is more confident on clearer views of the instance.
  double clarity = 0.0;
  if (plan.plant) {
    const auto strengths = view_strengths(spec, *plan.plant, item);
    for (double v : strengths) clarity += v;
    clarity /= static_cast<double>(strengths.size());
  }
  auto noise = stream(spec.seed, kClassNoise, item);
  std::vector<RegionProposal> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    RegionProposal p;
    p.box = to_f32(b);
    const double overlap = plan.plant ? iou(p.box, plan.plant->box) : 0.0;
    p.objectness = static_cast<float>(0.2 + 0.8 * overlap);
    std::vector<double> raw(spec.num_queries);
    double total = kBackgroundMass;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      raw[k] = kClassNoiseLevel * noise.uniform();
      if (plan.plant && plan.plant->query == k) {
        raw[k] += std::pow(overlap, spec.class_score_sharpness) * plan.plant->gain_factor * clarity;
      }
      total += raw[k];
    }
    std::vector<float> scores(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) scores[k] = static_cast<float>(raw[k] / total);
    p.class_scores = std::move(scores);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, "synth spec: " + m); };
  if (num_images == 0 || num_queries == 0 || channels == 0 || grid_height == 0 || grid_width == 0 ||
      stride == 0 || instances_per_query == 0 || proposals_per_image == 0 || signature_channels == 0) {
    fail("all counts must be positive");
  }
  if (!(signal_gain >= 0.0) || !std::isfinite(signal_gain)) fail("signal_gain must be finite and >= 0");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) fail("noise_scale must be positive");
  if (signature_channels > channels) fail("signature_channels exceeds channels");
  if (static_cast<std::uint64_t>(num_queries) * (instances_per_query + junk_per_query) > num_images) {
    fail("num_images too small for num_queries * (instances_per_query + junk_per_query)");
  }
  if (!(proposal_jitter >= 0.0 && proposal_jitter < 0.5)) fail("proposal_jitter must be in [0, 0.5)");
  if (!(class_score_sharpness > 0.0)) fail("class_score_sharpness must be positive");
  if (grid_height * static_cast<double>(stride) < 8.0 || grid_width * static_cast<double>(stride) < 8.0) {
    fail("image area too small");
  }
}

SynthDataset generate(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const double img_w = static_cast<double>(spec.grid_width) * spec.stride;
  const double img_h = static_cast<double>(spec.grid_height) * spec.stride;

  auto layout = stream(spec.seed, kLayout);
  std::vector<Signature> signatures(spec.num_queries);
  for (auto& sig : signatures) {
    std::vector<std::uint32_t> all(spec.channels);
    for (std::uint32_t c = 0; c < spec.channels; ++c) all[c] = c;
    layout.shuffle(all);
    sig.channels.assign(all.begin(), all.begin() + spec.signature_channels);
    std::sort(sig.channels.begin(), sig.channels.end());
    for (std::size_t k = 0; k < sig.channels.size(); ++k) {
      sig.weights.push_back(layout.uniform(0.5, 1.5));
      sig.u.push_back(layout.uniform(kPartSpan.first, kPartSpan.second));
      sig.v.push_back(layout.uniform(kPartSpan.first, kPartSpan.second));
    }
  }

  std::vector<ImagePlan> database(spec.num_images);
  for (std::size_t i = 0; i < database.size(); ++i) database[i].id = padded("img_", i, 5);
  std::vector<std::size_t> order(spec.num_images);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  layout.shuffle(order);
  std::size_t cursor = 0;
  std::vector<GroundTruth> gts(spec.num_queries);
  PlantedBoxes planted;
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    gts[q].query_id = padded("q", q, 3);
    for (std::size_t k = 0; k < spec.instances_per_query + spec.junk_per_query; ++k) {
      auto& img = database[order[cursor++]];
      const bool junk = k >= spec.instances_per_query;
      img.plant = Plant{q, plant_box(layout, spec, img_w, img_h), junk ? kJunkGainFactor : 1.0};
      if (junk) {
        gts[q].junk.insert(img.id);
      } else {
        gts[q].good.insert(img.id);
        planted[gts[q].query_id][img.id] = img.plant->box;
      }
    }
  }
  std::vector<ImagePlan> query_images(spec.num_queries);
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    query_images[q].id = padded("query_", q, 3);
    query_images[q].external = true;
    query_images[q].plant = Plant{q, plant_box(layout, spec, img_w, img_h), 1.0, true};
  }

  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "proposals");

  SynthDataset ds;
  auto& m = ds.manifest;
  m.dataset_name = "synth-" + std::to_string(spec.seed);
  m.feature_dim = spec.channels;
  m.stride = spec.stride;
  for (const auto& gt : gts) m.class_names.push_back(gt.query_id);

  auto emit = [&](const ImagePlan& plan, std::size_t item) {
    ImageEntry e;
    e.id = plan.id;
    e.external = plan.external;
    e.features = out_dir / "features" / (plan.id + ".ifsm");
    e.proposals = out_dir / "proposals" / (plan.id + ".ifsp");
    write_feature_map(render(spec, plan, item, signatures), e.features);
    write_proposals(make_proposals(spec, plan, item), m.num_classes(), e.proposals);
    if (!plan.external) m.image_ids.push_back(plan.id);
    m.images.emplace(plan.id, std::move(e));
  };
  for (std::size_t i = 0; i < database.size(); ++i) emit(database[i], i);
  for (std::size_t q = 0; q < query_images.size(); ++q) emit(query_images[q], spec.num_images + q);

  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    QueryDef def;
    def.query_id = gts[q].query_id;
    def.image_id = query_images[q].id;
    def.box = query_images[q].plant->box;
    def.class_index = static_cast<int>(q);
    m.queries.push_back(std::move(def));
  }

  ds.manifest_path = out_dir / "manifest.json";
  ds.ground_truth_dir = out_dir / "gt";
  ds.planted_path = out_dir / "planted.json";
  save_manifest(m, ds.manifest_path);
  write_ground_truth_dir(gts, ds.ground_truth_dir);
  save_planted_boxes(planted, ds.planted_path);
  save_synth_spec(spec, out_dir / "synth_spec.json");
  ds.ground_truth = std::move(gts);
  ds.planted = std::move(planted);
  return ds;
}

SynthSpec load_synth_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open synth spec " + path.string());
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(in);
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    opt("seed", s.seed);
    opt("num_images", s.num_images);
    opt("num_queries", s.num_queries);
    opt("channels", s.channels);
    opt("grid_height", s.grid_height);
    opt("grid_width", s.grid_width);
    opt("stride", s.stride);
    opt("instances_per_query", s.instances_per_query);
    opt("junk_per_query", s.junk_per_query);
    opt("signature_channels", s.signature_channels);
    opt("signal_gain", s.signal_gain);
    opt("noise_scale", s.noise_scale);
    opt("proposals_per_image", s.proposals_per_image);
    opt("proposal_jitter", s.proposal_jitter);
    opt("class_score_sharpness", s.class_score_sharpness);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_synth_spec(const SynthSpec& s, const fs::path& path) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["num_images"] = s.num_images;
  j["num_queries"] = s.num_queries;
  j["channels"] = s.channels;
  j["grid_height"] = s.grid_height;
  j["grid_width"] = s.grid_width;
  j["stride"] = s.stride;
  j["instances_per_query"] = s.instances_per_query;
  j["junk_per_query"] = s.junk_per_query;
  j["signature_channels"] = s.signature_channels;
  j["signal_gain"] = s.signal_gain;
  j["noise_scale"] = s.noise_scale;
  j["proposals_per_image"] = s.proposals_per_image;
  j["proposal_jitter"] = s.proposal_jitter;
  j["class_score_sharpness"] = s.class_score_sharpness;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace ifs

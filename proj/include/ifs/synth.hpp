#pragma once

// Deterministic synthetic datasets: query "signatures" planted into
// non-negative noise feature maps, with proposals, class scores and
// Oxford-style ground truth written in the interchange formats.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ifs/eval.hpp"
#include "ifs/tensor_store.hpp"

namespace ifs {

struct SynthSpec {
  std::uint64_t seed = 1;
  std::uint32_t num_images = 200;
  std::uint32_t num_queries = 10;
  std::uint32_t channels = 256;
  std::uint32_t grid_height = 38;
  std::uint32_t grid_width = 50;
  std::uint32_t stride = 16;
  std::uint32_t instances_per_query = 8;
  std::uint32_t junk_per_query = 1;
  std::uint32_t signature_channels = 32;  // channels carrying each query's pattern
  double signal_gain = 4.0;
  double noise_scale = 1.0;
  std::uint32_t proposals_per_image = 40;
  double proposal_jitter = 0.08;
  double class_score_sharpness = 2.0;

  void validate() const;
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

struct SynthDataset {
  std::filesystem::path manifest_path;
  std::filesystem::path ground_truth_dir;
  std::filesystem::path planted_path;
  DatasetManifest manifest;
  std::vector<GroundTruth> ground_truth;
  PlantedBoxes planted;  // relevant (good) images only
};

SynthDataset generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

SynthSpec load_synth_spec(const std::filesystem::path& path);
void save_synth_spec(const SynthSpec& spec, const std::filesystem::path& path);

}  // namespace ifs

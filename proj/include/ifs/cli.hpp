#pragma once

// Command implementations behind the `ifs` tool. Each command maps input
// files to output files; `pipeline` runs the same functions in sequence.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ifs/parallel.hpp"
#include "ifs/pooling.hpp"
#include "ifs/rerank.hpp"
#include "ifs/search.hpp"
#include "ifs/synth.hpp"

namespace ifs::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kEvalWarning = 3 };

struct BuildArgs {
  fs::path manifest;
  Pooling pooling = Pooling::sum;
  std::optional<fs::path> whitening_model;
  fs::path out;
};

struct SearchArgs {
  fs::path index;
  fs::path manifest;
  bool exclude_query_image = false;
  fs::path out;
};

struct RerankArgs {
  fs::path index;
  fs::path manifest;
  fs::path rankings;
  RerankMode mode = RerankMode::ca_sr;
  std::size_t depth_n = 100;
  Pooling pooling = Pooling::max;
  fs::path out;
};

struct QeArgs {
  fs::path index;
  fs::path manifest;
  fs::path rankings;
  std::size_t depth_m = 5;
  fs::path out;
};

struct EvalArgs {
  fs::path rankings;
  fs::path ground_truth;
  fs::path out;  // text table
  std::optional<fs::path> json_out;
  std::optional<fs::path> boxes;
  double iou_threshold = 0.5;
};

struct PipelineArgs {
  fs::path manifest;
  fs::path ground_truth;
  std::vector<Stage> stages{Stage::filtering};
  Pooling filter_pooling = Pooling::sum;
  Pooling rerank_pooling = Pooling::max;
  std::size_t depth_n = 100;
  std::size_t depth_m = 5;
  bool exclude_query_image = false;
  std::optional<fs::path> boxes;
  double iou_threshold = 0.5;
  fs::path out_dir;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "filtering,ca-sr,qe" -> stages; filtering first, at most one rerank, then
// optional qe. Throws UsageError otherwise.
std::vector<Stage> parse_stage_list(const std::string& text);

int cmd_build(const BuildArgs& args, const Exec& exec);
int cmd_search(const SearchArgs& args, const Exec& exec);
int cmd_rerank(const RerankArgs& args, const Exec& exec);
int cmd_qe(const QeArgs& args, const Exec& exec);
int cmd_eval(const EvalArgs& args);
int cmd_synth(const SynthSpec& spec, const fs::path& out_dir);
int cmd_pipeline(const PipelineArgs& args, const Exec& exec);

// Full command-line entry point; never throws.
int run(int argc, char** argv);

}  // namespace ifs::cli

#include "ifs/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ifs/error.hpp"
#include "ifs/eval.hpp"

namespace ifs::cli {

namespace {

int g_verbosity = 0;

void log(const std::string& msg) {
  if (g_verbosity > 0) std::cerr << "[ifs] " << msg << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::map<std::string, const QueryDef*> queries_by_id(const DatasetManifest& m) {
  std::map<std::string, const QueryDef*> out;
  for (const auto& q : m.queries) out.emplace(q.query_id, &q);
  return out;
}

const QueryDef& lookup_query(const std::map<std::string, const QueryDef*>& by_id, const std::string& id) {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw Error(ErrorCode::UnmatchedQuery, "query '" + id + "' is not in the manifest");
  return *it->second;
}

}  // namespace

std::vector<Stage> parse_stage_list(const std::string& text) {
  std::vector<Stage> stages;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      stages.push_back(parse_stage(item));
    } catch (const Error&) {
      throw UsageError("unknown stage '" + item + "' (expected filtering, ca-sr, cs-sr, qe)");
    }
  }
  if (stages.empty() || stages.front() != Stage::filtering) {
    throw UsageError("stage list must start with 'filtering'");
  }
  std::size_t i = 1;
  if (i < stages.size() && (stages[i] == Stage::ca_sr || stages[i] == Stage::cs_sr)) ++i;
  if (i < stages.size() && stages[i] == Stage::qe) ++i;
  if (i != stages.size()) {
    throw UsageError("stages must be: filtering[,ca-sr|cs-sr][,qe]");
  }
  return stages;
}

int cmd_build(const BuildArgs& args, const Exec& exec) {
  const auto manifest = load_manifest(args.manifest);
  BuildOptions opts;
  opts.pooling = args.pooling;
  opts.exec = exec;
  if (args.whitening_model) opts.whitening = read_whitening(*args.whitening_model);
  log("building " + std::string(to_string(args.pooling)) + " index over " +
      std::to_string(manifest.image_ids.size()) + " images");
  write_index(build_index(manifest, opts), args.out);
  return kOk;
}

int cmd_search(const SearchArgs& args, const Exec& exec) {
  const auto index = read_index(args.index);
  const auto manifest = load_manifest(args.manifest);
  SearchOptions opts;
  opts.exclude_query_image = args.exclude_query_image;
  opts.exec = exec;
  std::vector<Ranking> rankings;
  rankings.reserve(manifest.queries.size());
  for (const auto& q : manifest.queries) rankings.push_back(filter_search(index, q, manifest, opts));
  log("searched " + std::to_string(rankings.size()) + " queries");
  write_rankings(rankings, args.out);
  return kOk;
}

int cmd_rerank(const RerankArgs& args, const Exec& exec) {
  const auto index = read_index(args.index);
  const auto manifest = load_manifest(args.manifest);
  const auto by_id = queries_by_id(manifest);
  const auto input = read_rankings(args.rankings);
  RerankConfig cfg;
  cfg.depth_n = args.depth_n;
  cfg.pooling = args.pooling;
  cfg.mode = args.mode;
  cfg.exec = exec;
  std::vector<Ranking> out;
  out.reserve(input.size());
  for (const auto& r : input) {
    const auto& q = lookup_query(by_id, r.query_id);
    if (cfg.mode == RerankMode::ca_sr) {
      const auto desc = query_region_descriptor(q, manifest, cfg.pooling, index.whitening());
      out.push_back(ca_sr(r, desc, cfg, manifest, index.whitening()));
    } else {
      out.push_back(cs_sr(r, q, cfg, manifest));
    }
  }
  log("reranked " + std::to_string(out.size()) + " queries with " + std::string(to_string(cfg.mode)));
  write_rankings(out, args.out);
  return kOk;
}

int cmd_qe(const QeArgs& args, const Exec& exec) {
  const auto index = read_index(args.index);
  const auto manifest = load_manifest(args.manifest);
  const auto by_id = queries_by_id(manifest);
  const auto input = read_rankings(args.rankings);
  QeConfig cfg;
  cfg.depth_m = args.depth_m;
  std::vector<Ranking> out;
  out.reserve(input.size());
  for (const auto& r : input) {
    const auto& q = lookup_query(by_id, r.query_id);
    out.push_back(query_expansion(index, r, query_image_descriptor(index, q, manifest), cfg, exec));
  }
  write_rankings(out, args.out);
  return kOk;
}

int cmd_eval(const EvalArgs& args) {
  const auto rankings = read_rankings(args.rankings);
  const auto gts = load_ground_truth(args.ground_truth);
  auto report = mean_ap(rankings, gts);
  if (args.boxes) {
    report.localization = localization_accuracy(rankings, load_planted_boxes(*args.boxes), args.iou_threshold);
  }
  const auto text = format_report_text(report);
  write_text(args.out, text);
  if (args.json_out) write_text(*args.json_out, format_report_json(report));
  if (g_verbosity > 0) std::cerr << text;
  if (report.has_zero_positive_query()) {
    std::cerr << "warning: some queries have no positive images; their AP is 0\n";
    return kEvalWarning;
  }
  return kOk;
}

int cmd_synth(const SynthSpec& spec, const fs::path& out_dir) {
  const auto ds = generate(spec, out_dir);
  log("wrote " + ds.manifest_path.string());
  return kOk;
}

int cmd_pipeline(const PipelineArgs& args, const Exec& exec) {
  fs::create_directories(args.out_dir);
  const auto index_path = args.out_dir / "index.ifsi";
  cmd_build(BuildArgs{args.manifest, args.filter_pooling, std::nullopt, index_path}, exec);

  int status = kOk;
  fs::path previous;
  for (const Stage stage : args.stages) {
    const std::string name(to_string(stage));
    const auto rankings_path = args.out_dir / ("rankings." + name + ".tsv");
    switch (stage) {
      case Stage::filtering:
        cmd_search(SearchArgs{index_path, args.manifest, args.exclude_query_image, rankings_path}, exec);
        break;
      case Stage::ca_sr:
      case Stage::cs_sr:
        cmd_rerank(RerankArgs{index_path, args.manifest, previous,
                              stage == Stage::ca_sr ? RerankMode::ca_sr : RerankMode::cs_sr, args.depth_n,
                              args.rerank_pooling, rankings_path},
                   exec);
        break;
      case Stage::qe:
        cmd_qe(QeArgs{index_path, args.manifest, previous, args.depth_m, rankings_path}, exec);
        break;
    }
    EvalArgs eval{rankings_path, args.ground_truth, args.out_dir / ("report." + name + ".txt"),
                  args.out_dir / ("report." + name + ".json"), args.boxes, args.iou_threshold};
    status = std::max(status, cmd_eval(eval));
    previous = rankings_path;
  }
  return status;
}

template <typename E>
CLI::Option* add_enum_option(CLI::App* app, const std::string& name, E& target,
                             const std::map<std::string, E>& names, const std::string& help = "") {
  return app
      ->add_option_function<std::string>(
          name, [&target, names](const std::string& v) { target = names.at(v); }, help)
      ->check(CLI::IsMember(names));
}

int run(int argc, char** argv) {
  CLI::App app{"Instance search over convolutional feature maps", "ifs"};
  app.require_subcommand(1);

  unsigned threads = default_thread_count();
  bool deterministic = true;
  app.add_option("--threads", threads, "Worker threads (default: IFS_THREADS or 1)")->check(CLI::Range(1u, 1024u));
  app.add_flag("--deterministic,!--no-deterministic", deterministic,
               "Thread-count independent reductions (default on)");
  app.add_flag("-v,--verbose", g_verbosity, "Log progress to stderr");

  const std::map<std::string, Pooling> poolings{{"sum", Pooling::sum}, {"max", Pooling::max}};
  const std::map<std::string, RerankMode> modes{{"ca-sr", RerankMode::ca_sr}, {"cs-sr", RerankMode::cs_sr}};

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Build a filtering index from a manifest");
  b->add_option("--manifest", build.manifest)->required();
  add_enum_option(b, "--pooling", build.pooling, poolings);
  b->add_option("--whitening-model", build.whitening_model, "Pre-learned IFSW model (sum pooling)");
  b->add_option("--out", build.out)->required();

  SearchArgs search;
  auto* s = app.add_subcommand("search", "Filtering stage for every manifest query");
  s->add_option("--index", search.index)->required();
  s->add_option("--manifest", search.manifest)->required();
  s->add_flag("--exclude-query-image", search.exclude_query_image);
  s->add_option("--out", search.out)->required();

  RerankArgs rerank;
  auto* r = app.add_subcommand("rerank", "Spatial reranking of the top N entries");
  r->add_option("--index", rerank.index)->required();
  r->add_option("--manifest", rerank.manifest)->required();
  r->add_option("--rankings", rerank.rankings)->required();
  add_enum_option(r, "--mode", rerank.mode, modes);
  r->add_option("--depth-n", rerank.depth_n)->check(CLI::PositiveNumber);
  add_enum_option(r, "--pooling", rerank.pooling, poolings);
  r->add_option("--out", rerank.out)->required();

  QeArgs qe;
  auto* e = app.add_subcommand("qe", "Query expansion with the top M entries");
  e->add_option("--index", qe.index)->required();
  e->add_option("--manifest", qe.manifest)->required();
  e->add_option("--rankings", qe.rankings)->required();
  e->add_option("--depth-m", qe.depth_m)->check(CLI::PositiveNumber);
  e->add_option("--out", qe.out)->required();

  EvalArgs eval;
  auto* v = app.add_subcommand("eval", "Mean average precision against ground truth");
  v->add_option("--rankings", eval.rankings)->required();
  v->add_option("--gt", eval.ground_truth, "Ground-truth directory or sectioned file")->required();
  v->add_option("--out", eval.out)->required();
  v->add_option("--json", eval.json_out);
  v->add_option("--boxes", eval.boxes, "Reference boxes for localization accuracy");
  v->add_option("--iou", eval.iou_threshold)->check(CLI::Range(0.0, 1.0));

  SynthSpec synth_spec;
  std::optional<fs::path> synth_spec_file;
  fs::path synth_out;
  auto* y = app.add_subcommand("synth", "Generate a synthetic dataset");
  y->add_option("--spec", synth_spec_file, "JSON spec; flags below override it");
  y->add_option("--out", synth_out)->required();
  auto* seed_opt = y->add_option("--seed", synth_spec.seed);
  auto* gain_opt = y->add_option("--signal-gain", synth_spec.signal_gain);
  auto* images_opt = y->add_option("--images", synth_spec.num_images);
  auto* queries_opt = y->add_option("--queries", synth_spec.num_queries);
  auto* channels_opt = y->add_option("--channels", synth_spec.channels);

  PipelineArgs pipe;
  std::string stages_text = "filtering";
  auto* p = app.add_subcommand("pipeline", "Build, search, rerank, expand and evaluate in one run");
  p->add_option("--manifest", pipe.manifest)->required();
  p->add_option("--gt", pipe.ground_truth)->required();
  p->add_option("--stages", stages_text, "filtering[,ca-sr|cs-sr][,qe]");
  add_enum_option(p, "--pooling", pipe.filter_pooling, poolings, "Filtering pooling");
  add_enum_option(p, "--rerank-pooling", pipe.rerank_pooling, poolings);
  p->add_option("--depth-n", pipe.depth_n)->check(CLI::PositiveNumber);
  p->add_option("--depth-m", pipe.depth_m)->check(CLI::PositiveNumber);
  p->add_flag("--exclude-query-image", pipe.exclude_query_image);
  p->add_option("--boxes", pipe.boxes);
  p->add_option("--iou", pipe.iou_threshold)->check(CLI::Range(0.0, 1.0));
  p->add_option("--out", pipe.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  const Exec exec{threads, deterministic};
  try {
    if (*b) return cmd_build(build, exec);
    if (*s) return cmd_search(search, exec);
    if (*r) return cmd_rerank(rerank, exec);
    if (*e) return cmd_qe(qe, exec);
    if (*v) return cmd_eval(eval);
    if (*y) {
      SynthSpec spec = synth_spec_file ? load_synth_spec(*synth_spec_file) : SynthSpec{};
      if (*seed_opt) spec.seed = synth_spec.seed;
      if (*gain_opt) spec.signal_gain = synth_spec.signal_gain;
      if (*images_opt) spec.num_images = synth_spec.num_images;
      if (*queries_opt) spec.num_queries = synth_spec.num_queries;
      if (*channels_opt) spec.channels = synth_spec.channels;
      spec.signature_channels = std::min(spec.signature_channels, spec.channels);
      return cmd_synth(spec, synth_out);
    }
    if (*p) {
      pipe.stages = parse_stage_list(stages_text);
      return cmd_pipeline(pipe, exec);
    }
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << p->help();
    return kUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kDataError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace ifs::cli

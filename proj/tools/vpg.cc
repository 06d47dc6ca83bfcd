// Copyright 2026 The VPG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// vpg: command-line front end for the visual product graph engine.

#include <pthread.h>
#include <signal.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "vpg/catalog.h"
#include "vpg/engine.h"
#include "vpg/errors.h"
#include "vpg/eval.h"
#include "vpg/log.h"
#include "vpg/nms.h"
#include "vpg/server.h"
#include "vpg/triplet_miner.h"

namespace vpg {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct GlobalOptions {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::string> store_dir;
  std::optional<std::string> index_dir;
  std::optional<std::string> log_level;
};

EngineConfig load_config(const GlobalOptions& g) {
  std::vector<std::string> overrides = g.overrides;
  if (g.store_dir) overrides.push_back("store_dir=" + *g.store_dir);
  if (g.index_dir) overrides.push_back("index_dir=" + *g.index_dir);
  if (g.log_level) overrides.push_back("log_level=" + *g.log_level);
  std::optional<std::filesystem::path> file;
  if (g.config) file = *g.config;
  EngineConfig c = EngineConfig::load(file, overrides);
  set_log_level(log_level_from_name(c.log_level));
  return c;
}

// Writes JSON lines to --out, or to stdout when no path is given.
class LineSink {
 public:
  explicit LineSink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::trunc);
      if (!file_) throw StoreError("cannot write " + path);
    }
  }
  void write(const nlohmann::json& j) { (file_.is_open() ? file_ : std::cout) << j.dump() << '\n'; }

 private:
  std::ofstream file_;
};

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

std::vector<ImageSignature> parse_signatures(const std::vector<std::string>& hex) {
  std::vector<ImageSignature> out;
  for (const auto& h : hex) {
    try {
      out.push_back(ImageSignature::from_hex(h));
    } catch (const InvalidArgument& e) {
      throw CLI::ValidationError("signature", e.what());
    }
  }
  return out;
}

std::vector<size_t> parse_ks(const std::string& text) {
  std::vector<size_t> out;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    size_t used = 0;
    size_t k = 0;
    try {
      k = std::stoul(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || k == 0) throw CLI::ValidationError("--k", "expected positive integers, got '" + text + "'");
    out.push_back(k);
  }
  return out;
}

// --- synth -----------------------------------------------------------------

int synth_generate(const GlobalOptions& g, const std::string& out_dir) {
  Engine engine(load_config(g));
  const SyntheticWorld& world = engine.world();
  std::filesystem::create_directories(out_dir);
  LineSink scenes(out_dir + "/scenes.jsonl");
  for (const auto& s : world.scenes()) scenes.write(scene_to_json(world.scene_entry(s)));
  const auto products = world.product_entries();
  write_products_jsonl(out_dir + "/products.jsonl", products);
  world.write_truth_jsonl(out_dir + "/truth.jsonl");
  print({{"scenes", world.scenes().size()}, {"products", products.size()}, {"out", out_dir}});
  return kExitOk;
}

int synth_logs(const GlobalOptions& g, const std::string& out, const EngagementLogConfig& cfg) {
  Engine engine(load_config(g));
  engine.load();
  const auto rows = synthesize_engagement_logs(engine.world(), engine.index(), cfg);
  write_engagement_jsonl(out, rows);
  print({{"rows", rows.size()}, {"queries", cfg.queries}, {"out", out}});
  return kExitOk;
}

int synth_detections(const GlobalOptions& g, const std::string& out, size_t scenes, double nms_threshold) {
  Engine engine(load_config(g));
  const SyntheticWorld& world = engine.world();
  LineSink sink(out);
  size_t n = 0;
  for (const auto& s : world.scenes()) {
    if (n++ == scenes) break;
    DetectionEvalCase c;
    for (const auto& o : s.objects) c.ground_truth.push_back({o.box, o.category});
    const auto raw = world.detect_raw(s, world.config().corruption);
    if (nms_threshold > 0) {
      for (const auto& d : class_agnostic_nms(raw, nms_threshold)) {
        c.predictions.push_back({d.box, d.category, d.confidence});
      }
    } else {
      for (const auto& d : raw) {
        auto best = std::max_element(d.scores.begin(), d.scores.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
        c.predictions.push_back({d.box, best->first, d.confidence});
      }
    }
    sink.write(detection_case_to_json(c));
  }
  log_event(LogLevel::kInfo, "synth.detections", {{"cases", std::min(n, scenes)}, {"out", out}});
  return kExitOk;
}

// --- store / products / index ----------------------------------------------

int store_backfill(const GlobalOptions& g, const std::string& scenes_path) {
  Engine engine(load_config(g));
  std::ifstream in(scenes_path);
  if (!in) throw StoreError("cannot open " + scenes_path);
  size_t lineno = 0;
  std::string line;
  const size_t written = engine.store().backfill([&]() -> std::optional<SceneEntry> {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        return scene_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw ParseError(scenes_path, lineno, e.what());
      }
    }
    return std::nullopt;
  });
  engine.store().flush();
  print({{"written", written}, {"entries", engine.store().size()}});
  return kExitOk;
}

int store_stats(const GlobalOptions& g) {
  Engine engine(load_config(g));
  const StoreStats s = engine.store().stats();
  print({{"entries", s.entries}, {"segments", s.segments}, {"total_bytes", s.total_bytes}, {"live_bytes", s.live_bytes}});
  return kExitOk;
}

int products_append(const GlobalOptions& g, const std::string& path) {
  const EngineConfig config = load_config(g);
  const auto rows = read_products_jsonl(path);
  if (config.catalog_path.has_parent_path()) std::filesystem::create_directories(config.catalog_path.parent_path());
  write_products_jsonl(config.catalog_path, rows, /*append=*/true);
  print({{"appended", rows.size()}, {"catalog", config.catalog_path.string()}});
  return kExitOk;
}

int index_build(GlobalOptions g, const std::string& filters_path, const std::string& report_path) {
  if (!filters_path.empty()) {
    // Filter file keys are unprefixed; they override the main configuration.
    std::ifstream in(filters_path);
    for (std::string line; std::getline(in, line);) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      if (line.find('=') != std::string::npos) g.overrides.push_back("filters." + line);
    }
  }
  Engine engine(load_config(g));
  const FilterReport report = engine.build_index();
  nlohmann::json out = report.to_json();
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) throw StoreError("cannot write " + report_path);
    f << out.dump(2) << '\n';
  }
  print(out);
  return kExitOk;
}

int calibrate(const GlobalOptions& g, std::optional<size_t> queries, const std::string& out) {
  Engine engine(load_config(g));
  engine.load();
  const RelevanceCalibration cal = engine.calibrate(queries.value_or(engine.config().reverse.calibration_size));
  if (!out.empty()) cal.save(out);
  print(cal.to_json());
  return kExitOk;
}

// --- queries -----------------------------------------------------------------

int query_reverse(const GlobalOptions& g, const std::vector<std::string>& products, size_t sample,
                  const std::string& calibration, const std::string& out) {
  std::vector<ImageSignature> queries = parse_signatures(products);
  Engine engine(load_config(g));
  engine.load();
  if (!calibration.empty()) engine.set_calibration(RelevanceCalibration::load(calibration));
  const size_t n = engine.index().product_count();
  for (size_t i = 0; i < std::min(sample, n); ++i) {
    queries.push_back(engine.index().product(static_cast<uint32_t>(i * n / std::min(sample, n))).signature);
  }
  if (queries.empty()) throw CLI::ValidationError("query reverse", "give --product or --sample");
  LineSink sink(out);
  size_t kept = 0;
  for (const auto& q : queries) {
    const ReverseResult r = engine.reverse(q);
    kept += r.scenes.size();
    sink.write(r.to_json());
  }
  log_event(LogLevel::kInfo, "query.reverse",
            {{"queries", queries.size()},
             {"mean_kept", static_cast<double>(kept) / static_cast<double>(queries.size())},
             {"store", engine.metrics()["store"]}});
  return kExitOk;
}

int query_forward(const GlobalOptions& g, const std::vector<std::string>& scenes, size_t sample,
                  const std::string& context, const std::string& out) {
  std::vector<ImageSignature> queries = parse_signatures(scenes);
  UserContext ctx;
  try {
    ctx = UserContext::parse(context);
  } catch (const InvalidArgument& e) {
    throw CLI::ValidationError("--context", e.what());
  }
  Engine engine(load_config(g));
  engine.load();
  if (sample > 0) {
    const SyntheticWorld& world = engine.world();
    for (size_t i = 0; i < std::min(sample, world.scenes().size()); ++i) {
      const auto& sig = world.scenes()[i].signature;
      if (engine.store().contains(sig)) queries.push_back(sig);
    }
  }
  if (queries.empty()) throw CLI::ValidationError("query forward", "give --scene or --sample");
  LineSink sink(out);
  for (const auto& q : queries) sink.write(engine.forward(q, ctx).to_json());
  log_event(LogLevel::kInfo, "query.forward", {{"queries", queries.size()}, {"metrics", engine.metrics()}});
  return kExitOk;
}

// --- triplets ----------------------------------------------------------------

struct MineOptions {
  std::string logs;
  std::string out;
  double hard_fraction = 0.5;
  uint64_t seed = 7;
  std::optional<size_t> target;
  int window_days = 30;
  bool literal = false;
};

int triplets_mine(const GlobalOptions& g, const MineOptions& o) {
  Engine engine(load_config(g));
  const auto rows = read_engagement_jsonl(o.logs);
  MiningOptions mining;
  mining.window_days = o.window_days;
  const auto candidates = mine_candidate_triplets(rows, mining);
  const TripletEmbedder embed = store_embedder(engine.store(), engine.extractor());
  const HardnessRule rule = o.literal ? HardnessRule::kLiteral : HardnessRule::kProse;
  std::vector<TripletRecord> hard;
  size_t unknown = 0;
  for (const auto& t : candidates) {
    try {
      auto checked = hardness_check(t, embed, rule);
      if (checked.kind == TripletKind::kHard) hard.push_back(checked);
    } catch (const UnknownEntityError&) {
      ++unknown;
    }
  }
  const LabelOracle oracle = world_oracle(engine.world());
  LabelingStats stats;
  const auto finalized = label_triplets(hard, oracle, &stats);
  std::vector<ImageSignature> pool_images;
  for (const auto& p : engine.world().products()) pool_images.push_back(p.signature);
  const RandomPool pool = build_random_pool(rows, oracle, pool_images);
  size_t target = 0;
  if (o.target) {
    target = *o.target;
  } else if (o.hard_fraction > 0) {
    target = static_cast<size_t>(static_cast<double>(finalized.size()) / o.hard_fraction);
  } else {
    throw CLI::ValidationError("--target", "required when --hard-fraction is 0");
  }
  AssemblyOptions assembly{.target_size = target, .hard_fraction = o.hard_fraction, .seed = o.seed, .max_negative_draws = 1000};
  const auto dataset = assemble_dataset(finalized, pool, assembly, oracle, embed);
  write_triplets_jsonl(o.out, dataset);
  size_t n_hard = 0;
  for (const auto& t : dataset) n_hard += t.kind == TripletKind::kHard ? 1 : 0;
  print({{"log_rows", rows.size()},
         {"candidates", candidates.size()},
         {"unembeddable", unknown},
         {"hard", hard.size()},
         {"labeled", stats.labeled},
         {"labeling_failures", stats.failures},
         {"finalized_hard", finalized.size()},
         {"written", dataset.size()},
         {"written_hard", n_hard},
         {"written_random", dataset.size() - n_hard},
         {"comparator", o.literal ? "literal" : "prose"},
         {"out", o.out}});
  return kExitOk;
}

// --- eval --------------------------------------------------------------------

int eval_retrieval(const std::string& pred, const std::string& truth_path, const std::string& ks, double tau) {
  const auto k = parse_ks(ks);
  const WorldTruth truth = WorldTruth::read_jsonl(truth_path);
  const auto lines = read_json_lines(pred);
  const auto rated = rate_predictions(lines, truth, tau);
  nlohmann::json report = retrieval_report(rated, k);
  report["tau"] = tau;
  print(report);
  return kExitOk;
}

int eval_detection(const std::string& cases_path, double iou_threshold, double floor) {
  const auto cases = read_detection_cases(cases_path);
  print(detection_report(cases, iou_threshold, floor));
  return kExitOk;
}

// --- serve -------------------------------------------------------------------

int serve(const GlobalOptions& g, std::optional<int> port, std::optional<std::string> bind) {
  EngineConfig config = load_config(g);
  if (port) config.port = *port;
  if (bind) config.bind = *bind;

  // Signals are handled on a dedicated thread so shutdown runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Engine engine(config);
  Server server(engine);
  const int bound = server.bind(config.bind, config.port);
  log_event(LogLevel::kInfo, "serve.listening", {{"bind", config.bind}, {"port", bound}});

  std::thread loader([&] {
    try {
      engine.world();
      engine.load();
    } catch (const std::exception& e) {
      log_event(LogLevel::kError, "serve.load_failed", {{"what", e.what()}});
      server.stop();
    }
  });
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    log_event(LogLevel::kInfo, "serve.shutdown", {{"signal", sig}});
    server.stop();
  });
  server.listen();
  loader.join();
  // Wake the waiter if listen() ended for another reason; a pending signal is harmless.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  log_event(LogLevel::kInfo, "serve.stopped", {{"metrics", server.metrics()}});
  return engine.ready() ? kExitOk : kExitRuntime;
}

int run(int argc, char** argv) {
  CLI::App app{"Visual product graph: reverse and forward visual retrieval over a synthetic world"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  GlobalOptions g;
  app.add_option("-c,--config", g.config, "Configuration file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a configuration key: KEY=VALUE (repeatable)");
  app.add_option("--store", g.store_dir, "Feature store directory");
  app.add_option("--index", g.index_dir, "Index directory");
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or off");

  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "Synthetic world data")->require_subcommand(1);
  std::string synth_out;
  auto* gen = synth->add_subcommand("generate", "Write scenes.jsonl, products.jsonl and truth.jsonl");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->callback([&] { action = [&] { return synth_generate(g, synth_out); }; });

  EngagementLogConfig log_cfg;
  std::string logs_out;
  auto* logs = synth->add_subcommand("logs", "Simulated closeup engagement logs for triplet mining");
  logs->add_option("--out", logs_out)->required();
  logs->add_option("--queries", log_cfg.queries)->capture_default_str();
  logs->add_option("--candidates", log_cfg.candidates)->capture_default_str();
  logs->add_option("--seed", log_cfg.seed)->capture_default_str();
  logs->callback([&] { action = [&] { return synth_logs(g, logs_out, log_cfg); }; });

  std::string det_out;
  size_t det_scenes = 500;
  double det_nms = 0.5;
  auto* dets = synth->add_subcommand("detections", "Detection cases: truth boxes vs corrupted detections");
  dets->add_option("--out", det_out)->required();
  dets->add_option("--scenes", det_scenes)->capture_default_str();
  dets->add_option("--nms", det_nms, "NMS IoU threshold; 0 keeps raw detections")->capture_default_str();
  dets->callback([&] { action = [&] { return synth_detections(g, det_out, det_scenes, det_nms); }; });

  auto* store = app.add_subcommand("store", "Feature store")->require_subcommand(1);
  std::string scenes_path;
  auto* backfill = store->add_subcommand("backfill", "Bulk-load scene entries from JSONL");
  backfill->add_option("--input,--scenes", scenes_path)->required()->check(CLI::ExistingFile);
  backfill->callback([&] { action = [&] { return store_backfill(g, scenes_path); }; });
  store->add_subcommand("stats", "Entry and segment counts")->callback([&] {
    action = [&] { return store_stats(g); };
  });

  auto* products = app.add_subcommand("products", "Product catalog")->require_subcommand(1);
  std::string products_path;
  auto* append = products->add_subcommand("append", "Append catalog rows; later rows win");
  append->add_option("--products", products_path)->required()->check(CLI::ExistingFile);
  append->callback([&] { action = [&] { return products_append(g, products_path); }; });

  auto* index = app.add_subcommand("index", "Visual index")->require_subcommand(1);
  std::string filters_path;
  std::string report_path;
  auto* build = index->add_subcommand("build", "Filter the corpus and build the object and product indexes");
  build->add_option("--filters", filters_path, "Corpus filter file (unprefixed keys)")->check(CLI::ExistingFile);
  build->add_option("--report", report_path, "Write the filter report here");
  build->add_option("--out", g.index_dir, "Index directory (same as --index)");
  build->callback([&] { action = [&] { return index_build(g, filters_path, report_path); }; });

  std::optional<size_t> cal_queries;
  std::string cal_out;
  auto* cal = app.add_subcommand("calibrate", "Compute the relevance threshold");
  cal->add_option("--queries", cal_queries, "Calibration queries (default relevance.calibration_size)");
  cal->add_option("--out", cal_out, "Also write the calibration here");
  cal->callback([&] { action = [&] { return calibrate(g, cal_queries, cal_out); }; });

  auto* query = app.add_subcommand("query", "Retrieval")->require_subcommand(1);
  std::vector<std::string> q_products;
  std::vector<std::string> q_scenes;
  size_t q_sample = 0;
  std::string q_calibration;
  std::string q_out;
  std::string q_context;
  auto* reverse = query->add_subcommand("reverse", "Product -> scenes");
  reverse->add_option("--product", q_products, "Product image signature (repeatable)");
  reverse->add_option("--sample", q_sample, "Also query N catalog products spread over the index");
  reverse->add_option("--calibration", q_calibration)->check(CLI::ExistingFile);
  reverse->add_option("--out", q_out, "JSONL output (default stdout)");
  reverse->callback([&] { action = [&] { return query_reverse(g, q_products, q_sample, q_calibration, q_out); }; });
  auto* forward = query->add_subcommand("forward", "Scene -> products");
  forward->add_option("--scene", q_scenes, "Scene image signature (repeatable)");
  forward->add_option("--sample", q_sample, "Also query the first N stored world scenes");
  forward->add_option("--ctx,--context", q_context, "User context, e.g. gender=f,country=US");
  forward->add_option("--out", q_out, "JSONL output (default stdout)");
  forward->callback([&] { action = [&] { return query_forward(g, q_scenes, q_sample, q_context, q_out); }; });

  auto* triplets = app.add_subcommand("triplets", "Triplet datasets")->require_subcommand(1);
  MineOptions mine;
  auto* mine_cmd = triplets->add_subcommand("mine", "Mine, check, label and assemble triplets");
  mine_cmd->add_option("--logs", mine.logs)->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--out", mine.out)->required();
  mine_cmd->add_option("--hard-fraction", mine.hard_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  mine_cmd->add_option("--seed", mine.seed)->capture_default_str();
  mine_cmd->add_option("--target", mine.target, "Dataset size (default: all finalized hard / fraction)");
  mine_cmd->add_option("--window-days", mine.window_days)->capture_default_str()->check(CLI::PositiveNumber);
  mine_cmd->add_flag("--literal-comparator", mine.literal, "Treat d_pos < d_neg as hard, for comparison");
  mine_cmd->callback([&] { action = [&] { return triplets_mine(g, mine); }; });

  auto* eval = app.add_subcommand("eval", "Evaluation")->require_subcommand(1);
  std::string pred_path;
  std::string truth_path;
  std::string ks = "1,5";
  double tau = RetrievalEvalOptions{}.tau;
  auto* retrieval = eval->add_subcommand("retrieval", "ES@k and Similar@k against world truth");
  retrieval->add_option("--pred", pred_path)->required()->check(CLI::ExistingFile);
  retrieval->add_option("--truth", truth_path)->required()->check(CLI::ExistingFile);
  retrieval->add_option("--k", ks)->capture_default_str();
  retrieval->add_option("--tau", tau, "Latent distance for 'similar'")->capture_default_str();
  retrieval->callback([&] { action = [&] { return eval_retrieval(pred_path, truth_path, ks, tau); }; });
  std::string cases_path;
  double iou_threshold = 0.5;
  double floor = 0.9;
  auto* detection = eval->add_subcommand("detection", "mAP and recall at a precision floor");
  detection->add_option("--cases", cases_path)->required()->check(CLI::ExistingFile);
  detection->add_option("--iou", iou_threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  detection->add_option("--precision-floor", floor)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  detection->callback([&] { action = [&] { return eval_detection(cases_path, iou_threshold, floor); }; });

  std::optional<int> port;
  std::optional<std::string> bind;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service: /v1/reverse, /v1/forward, /v1/metrics, /healthz");
  serve_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--bind", bind);
  serve_cmd->callback([&] { action = [&] { return serve(g, port, bind); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) std::cerr << "config error: " << v << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log_event(LogLevel::kError, "command.failed", {{"what", e.what()}});
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace
}  // namespace vpg

int main(int argc, char** argv) { return vpg::run(argc, argv); }

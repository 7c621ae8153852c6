#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "murec/io.hpp"

namespace fs = std::filesystem;
using murec::io::json;

namespace {

struct DataSpec {
  std::optional<murec::synth::SynthConfig> synthetic;
  std::string path;
  std::string format = "tsv";
  std::string clusters_path;
};

struct ExperimentSpec {
  DataSpec data;
  murec::towers::TowerConfig tower;
  murec::train::TrainConfig train;
  json idw;  // raw; wake/calibration default to the base train config
  murec::eval::EvalProtocol protocol;
  std::string checkpoint;
  bool dump_item_reps = false;
  bool dump_weights = false;
  bool dump_ranks = false;
  int threads = 0;
  json sweep_meta;  // filled when running under `sweep`
};

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  if (spec.data.synthetic) j["synthetic"] = murec::io::synth_config_to_json(*spec.data.synthetic);
  if (!spec.data.path.empty()) {
    j["data"] = {{"path", spec.data.path}, {"format", spec.data.format}};
    if (!spec.data.clusters_path.empty()) j["data"]["clusters"] = spec.data.clusters_path;
  }
  j["tower"] = murec::io::tower_config_to_json(spec.tower);
  j["train"] = murec::io::train_config_to_json(spec.train);
  if (!spec.idw.is_null()) j["idw"] = spec.idw;
  j["eval"] = murec::io::protocol_to_json(spec.protocol);
  if (!spec.checkpoint.empty()) j["checkpoint"] = spec.checkpoint;
  j["dump_item_reps"] = spec.dump_item_reps;
  j["dump_weights"] = spec.dump_weights;
  j["dump_ranks"] = spec.dump_ranks;
  j["threads"] = spec.threads;
  if (!spec.sweep_meta.is_null()) j["sweep"] = spec.sweep_meta;
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  ExperimentSpec spec;
  if (j.contains("synthetic"))
    spec.data.synthetic = murec::io::synth_config_from_json(j["synthetic"]);
  if (j.contains("data")) {
    spec.data.path = j["data"].value("path", "");
    spec.data.format = j["data"].value("format", "tsv");
    spec.data.clusters_path = j["data"].value("clusters", "");
  }
  if (j.contains("tower")) spec.tower = murec::io::tower_config_from_json(j["tower"]);
  if (j.contains("train")) spec.train = murec::io::train_config_from_json(j["train"]);
  if (j.contains("idw")) spec.idw = j["idw"];
  if (j.contains("eval")) spec.protocol = murec::io::protocol_from_json(j["eval"]);
  spec.checkpoint = j.value("checkpoint", "");
  spec.dump_item_reps = j.value("dump_item_reps", false);
  spec.dump_weights = j.value("dump_weights", false);
  spec.dump_ranks = j.value("dump_ranks", false);
  spec.threads = j.value("threads", 0);
  if (j.contains("sweep")) spec.sweep_meta = j["sweep"];
  return spec;
}

fs::path resolve_out_dir(const std::string& explicit_out, const std::string& command) {
  if (!explicit_out.empty()) {
    fs::create_directories(explicit_out);
    return explicit_out;
  }
  const char* env_root = std::getenv("MUREC_OUTPUT_ROOT");
  const fs::path root = env_root ? fs::path(env_root) : fs::path("runs");
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&t));
  fs::path dir;
  for (int counter = 0;; ++counter) {
    dir = root / (command + "-" + stamp + (counter ? "-" + std::to_string(counter) : ""));
    if (!fs::exists(dir)) break;
  }
  fs::create_directories(dir);
  return dir;
}

struct LoadedData {
  murec::data::DatasetSplits splits;
  murec::data::ItemStats stats;
  std::optional<murec::eval::ClusterInfo> clusters;
  murec::data::InteractionLog log;
};

LoadedData load_data(const DataSpec& data) {
  LoadedData out;
  if (data.synthetic) {
    const auto ds = murec::synth::generate_dataset(*data.synthetic);
    out.log = ds.log;
    murec::eval::ClusterInfo info;
    info.item_cluster = ds.item_cluster;
    info.num_clusters = ds.config.num_clusters;
    info.head_clusters = std::max(1, static_cast<int>(std::ceil(0.4 * ds.config.num_clusters)));
    out.clusters = std::move(info);
  } else if (!data.path.empty()) {
    out.log = murec::data::ingest(data.path, murec::data::parse_log_format(data.format));
    if (!data.clusters_path.empty()) {
      murec::eval::ClusterInfo info;
      info.item_cluster = murec::synth::read_ground_truth_tsv(data.clusters_path);
      if (static_cast<int>(info.item_cluster.size()) < out.log.num_items)
        info.item_cluster.resize(out.log.num_items, 0);
      int num_clusters = 0;
      for (int c : info.item_cluster) num_clusters = std::max(num_clusters, c + 1);
      info.num_clusters = num_clusters;
      info.head_clusters = std::max(1, static_cast<int>(std::ceil(0.4 * num_clusters)));
      out.clusters = std::move(info);
    }
  } else {
    throw murec::ConfigError("no dataset: provide a data path or a synthetic config");
  }
  murec::data::BuildStats build_stats;
  out.splits = murec::data::make_splits(out.log, murec::data::kMaxSeqLen, &build_stats);
  if (build_stats.dropped_users || build_stats.dropped_chunks)
    std::cerr << "warning: dropped " << build_stats.dropped_users << " short users and "
              << build_stats.dropped_chunks << " short windows\n";
  out.stats = murec::data::compute_item_stats(out.splits);
  return out;
}

murec::idw::IdwConfig idw_config_for(const ExperimentSpec& spec) {
  murec::idw::IdwConfig cfg;
  cfg.wake = spec.train;
  cfg.wake.patience = 2;
  cfg.calibration = spec.train;
  cfg.calibration.strategy = murec::train::Strategy::uniform;
  if (!spec.idw.is_null()) {
    cfg.momentum = spec.idw.value("momentum", cfg.momentum);
    cfg.eta = spec.idw.value("eta", cfg.eta);
    cfg.max_iterations = spec.idw.value("max_iterations", cfg.max_iterations);
    if (spec.idw.contains("wake")) {
      const json merged = murec::io::train_config_to_json(cfg.wake);
      json patched = merged;
      patched.update(spec.idw["wake"]);
      cfg.wake = murec::io::train_config_from_json(patched);
    }
    if (spec.idw.contains("calibration")) {
      const json merged = murec::io::train_config_to_json(cfg.calibration);
      json patched = merged;
      patched.update(spec.idw["calibration"]);
      cfg.calibration = murec::io::train_config_from_json(patched);
    }
  }
  return cfg;
}

void write_metrics(const ExperimentSpec& spec, const LoadedData& data,
                   const murec::towers::TowerParams& params, const fs::path& dir) {
  std::vector<std::pair<int, int>> ranks;
  const murec::eval::MetricsReport report = murec::eval::evaluate(
      params, data.splits, data.splits.test, data.stats, spec.protocol,
      data.clusters ? &*data.clusters : nullptr, spec.dump_ranks ? &ranks : nullptr);
  murec::io::write_json_file(murec::io::metrics_to_json(report), (dir / "metrics.json").string());
  if (spec.dump_ranks) {
    std::vector<int> labels;
    for (const auto& ref : data.splits.test) labels.push_back(data.splits.label_of(ref));
    murec::io::write_ranks_csv(ranks, labels, (dir / "ranks.csv").string());
  }
  if (spec.dump_item_reps)
    murec::io::write_item_reps_csv(murec::towers::item_representations(params),
                                   (dir / "item_reps.csv").string());
}

int cmd_generate(const ExperimentSpec& spec, const std::string& out) {
  if (!spec.data.synthetic) throw murec::ConfigError("generate needs a synthetic config");
  const fs::path dir = resolve_out_dir(out, "generate");
  const auto ds = murec::synth::generate_dataset(*spec.data.synthetic);
  murec::data::write_interactions_tsv(ds.log, (dir / "interactions.tsv").string());
  murec::synth::write_ground_truth_tsv(ds.item_cluster, (dir / "ground_truth.tsv").string());
  murec::io::write_json_file(spec_to_json(spec), (dir / "config.json").string());
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_train(ExperimentSpec spec, const std::string& out, const std::string& weights_csv = "") {
  const fs::path dir = resolve_out_dir(out, "train");
  const LoadedData data = load_data(spec.data);
  spec.tower.num_items = data.splits.num_items;
  murec::io::write_json_file(spec_to_json(spec), (dir / "config.json").string());
  if (!data.log.user_raw.empty() && !spec.data.path.empty()) {
    murec::data::write_id_map_tsv(data.log.user_raw, (dir / "user_map.tsv").string());
    murec::data::write_id_map_tsv(data.log.item_raw, (dir / "item_map.tsv").string());
  }

  std::vector<double> external;
  const std::vector<double>* external_ptr = nullptr;
  if (!weights_csv.empty()) {
    external = murec::io::read_weights_csv(weights_csv, data.splits.num_items);
    external_ptr = &external;
    spec.train.strategy = murec::train::Strategy::external;
  }

  murec::towers::TowerParams params =
      murec::towers::TowerParams::init(spec.tower, spec.train.rng_seed);
  const murec::train::TrainResult result =
      murec::train::train(std::move(params), data.splits, data.stats, spec.train, external_ptr);
  murec::io::write_history_csv(result.history, (dir / "history.csv").string());
  murec::io::save_checkpoint(result.params, (dir / "checkpoint.json").string());
  write_metrics(spec, data, result.params, dir);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_idw(ExperimentSpec spec, const std::string& out) {
  const fs::path dir = resolve_out_dir(out, "idw");
  const LoadedData data = load_data(spec.data);
  spec.tower.num_items = data.splits.num_items;
  murec::io::write_json_file(spec_to_json(spec), (dir / "config.json").string());

  const murec::idw::IdwConfig idw_cfg = idw_config_for(spec);
  const murec::idw::IdwResult result =
      murec::idw::run_idw(data.splits, data.stats, spec.tower, spec.train, idw_cfg,
                          data.clusters ? &*data.clusters : nullptr);
  murec::io::write_history_csv(result.initial.history, (dir / "history.csv").string());
  murec::io::write_idw_log_csv(result.log, (dir / "idw_log.csv").string());
  if (spec.dump_weights)
    murec::io::write_weights_csv(result.weights, (dir / "weights.csv").string());
  murec::io::save_checkpoint(result.params, (dir / "checkpoint.json").string());
  write_metrics(spec, data, result.params, dir);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentSpec& spec, const std::string& out) {
  if (spec.checkpoint.empty()) throw murec::ConfigError("evaluate needs --checkpoint");
  const fs::path dir = resolve_out_dir(out, "evaluate");
  const LoadedData data = load_data(spec.data);
  const murec::towers::TowerParams params = murec::io::load_checkpoint(spec.checkpoint);
  if (params.cfg.num_items != data.splits.num_items)
    throw murec::ConfigError("checkpoint vocabulary does not match the dataset");
  murec::io::write_json_file(spec_to_json(spec), (dir / "config.json").string());
  write_metrics(spec, data, params, dir);
  std::cout << dir.string() << "\n";
  return 0;
}

// ---- sweep ----------------------------------------------------------------

void append_consolidated_rows(std::ostream& outcsv, const json& config, const json& metrics) {
  std::string axis_value = "", variant = "", seed = "";
  if (config.contains("sweep")) {
    const json& s = config["sweep"];
    if (s.contains("value")) axis_value = s["value"].dump();
    variant = s.value("variant", "");
    if (s.contains("seed")) seed = std::to_string(s["seed"].get<std::uint64_t>());
  }
  auto emit = [&](const std::string& split, const std::string& metric, double value) {
    outcsv << axis_value << ',' << variant << ',' << seed << ',' << split << ',' << metric << ','
           << value << '\n';
  };
  if (metrics.contains("splits"))
    for (const auto& [split, entry] : metrics["splits"].items())
      for (const auto& [metric, value] : entry.items()) {
        if (metric == "count") continue;
        emit(split, metric, value["mean"].get<double>());
      }
  if (metrics.contains("ms")) emit("overall", "ms", metrics["ms"].get<double>());
}

int run_one_variant(ExperimentSpec spec, const std::string& variant, const fs::path& dir) {
  if (variant == "sur") {
    spec.tower.num_reps = 1;
    return cmd_train(std::move(spec), dir.string());
  }
  if (variant == "mur") return cmd_train(std::move(spec), dir.string());
  if (variant == "mur_idw" || variant == "sur_idw") {
    if (variant == "sur_idw") spec.tower.num_reps = 1;
    return cmd_idw(std::move(spec), dir.string());
  }
  // any weighting strategy name runs as a plain training variant
  spec.train.strategy = murec::train::parse_strategy(variant);
  return cmd_train(std::move(spec), dir.string());
}

int cmd_sweep(const json& sweep_json, const std::string& out) {
  const std::string axis = sweep_json.at("axis").get<std::string>();
  const std::vector<json> values = sweep_json.at("values").get<std::vector<json>>();
  if (values.empty()) throw murec::ConfigError("sweep needs a nonempty values list");
  std::vector<std::string> variants{"mur"};
  if (sweep_json.contains("variants"))
    variants = sweep_json["variants"].get<std::vector<std::string>>();
  std::vector<std::uint64_t> seeds{1};
  if (sweep_json.contains("seeds")) seeds = sweep_json["seeds"].get<std::vector<std::uint64_t>>();
  if (seeds.empty()) throw murec::ConfigError("sweep needs a nonempty seeds list");
  const ExperimentSpec base = spec_from_json(sweep_json.value("base", json::object()));

  const fs::path root = resolve_out_dir(out, "sweep");
  bool any_failed = false;
  std::vector<fs::path> run_dirs;
  for (const json& value : values) {
    for (const std::string& variant : variants) {
      for (const std::uint64_t seed : seeds) {
        ExperimentSpec spec = base;
        spec.train.rng_seed = seed;
        if (spec.data.synthetic) spec.data.synthetic->rng_seed = seed;
        if (axis == "interest_exponent") {
          if (!spec.data.synthetic) throw murec::ConfigError("interest_exponent sweep needs synthetic data");
          spec.data.synthetic->interest_exponent = value.get<double>();
        } else if (axis == "M") {
          spec.tower.num_reps = value.get<int>();
        } else if (axis == "eta") {
          spec.idw["eta"] = value.get<double>();
        } else if (axis == "momentum") {
          spec.idw["momentum"] = value.get<double>();
        } else if (axis == "strategy") {
          // the axis value itself is the variant
        } else {
          throw murec::ConfigError("unknown sweep axis: " + axis);
        }
        const std::string variant_name = axis == "strategy" ? value.get<std::string>() : variant;
        spec.sweep_meta = {{"axis", axis}, {"value", value}, {"variant", variant_name}, {"seed", seed}};
        std::ostringstream name;
        name << axis << "=" << value.dump() << "/" << variant_name << "/seed=" << seed;
        const fs::path dir = root / name.str();
        fs::create_directories(dir);
        try {
          run_one_variant(std::move(spec), variant_name, dir);
          run_dirs.push_back(dir);
        } catch (const std::exception& e) {
          any_failed = true;
          std::cerr << "sweep run failed (" << name.str() << "): " << e.what() << "\n";
        }
      }
      if (axis == "strategy") break;  // variants collapse onto the axis value
    }
  }

  std::ofstream csv(root / "consolidated.csv");
  csv << "axis_value,variant,seed,split,metric,value\n";
  csv << std::setprecision(17);
  for (const fs::path& dir : run_dirs) {
    const json config = murec::io::read_json_file((dir / "config.json").string());
    const json metrics = murec::io::read_json_file((dir / "metrics.json").string());
    append_consolidated_rows(csv, config, metrics);
  }
  std::cout << root.string() << "\n";
  return any_failed ? 3 : 0;
}

int cmd_report(const std::string& root, const std::string& out) {
  const fs::path base = root;
  if (!fs::exists(base)) throw murec::ConfigError("report: no such directory: " + root);
  std::vector<fs::path> run_dirs;
  for (auto it = fs::recursive_directory_iterator(base); it != fs::recursive_directory_iterator();
       ++it)
    if (it->is_regular_file() && it->path().filename() == "metrics.json")
      run_dirs.push_back(it->path().parent_path());
  std::sort(run_dirs.begin(), run_dirs.end());

  const fs::path target = out.empty() ? base / "consolidated.csv" : fs::path(out);
  std::ofstream csv(target);
  if (!csv) throw murec::ParseError("cannot open for writing: " + target.string());
  csv << "axis_value,variant,seed,split,metric,value\n";
  csv << std::setprecision(17);
  for (const fs::path& dir : run_dirs) {
    json config = json::object();
    if (fs::exists(dir / "config.json"))
      config = murec::io::read_json_file((dir / "config.json").string());
    const json metrics = murec::io::read_json_file((dir / "metrics.json").string());
    append_consolidated_rows(csv, config, metrics);
  }
  std::cout << target.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"murec: multi-interest two-tower recommender with iterative density weighting"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_path, data_format = "tsv", clusters_path, checkpoint;
  std::string weights_csv;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment spec JSON");
    cmd->add_option("--out", out_dir, "output directory (default: $MUREC_OUTPUT_ROOT/<cmd>-<ts>)");
    cmd->add_option("--threads", threads, "OpenMP thread count (0 = library default)");
  };

  // generate
  auto* generate = app.add_subcommand("generate", "emit a synthetic dataset as TSV");
  add_common(generate);
  double g_exponent = -1.0, g_item_exponent = -1.0;
  int g_users = -1, g_seq_len = -1, g_clusters = -1, g_items_per_cluster = -1, g_interests = -1;
  std::int64_t g_seed = -1;
  generate->add_option("--exponent", g_exponent, "interest power-law exponent");
  generate->add_option("--item-exponent", g_item_exponent, "item power-law exponent");
  generate->add_option("--users", g_users, "number of users");
  generate->add_option("--seq-len", g_seq_len, "sequence length T");
  generate->add_option("--num-clusters", g_clusters, "interest clusters C");
  generate->add_option("--items-per-cluster", g_items_per_cluster, "items per cluster K");
  generate->add_option("--interests-per-user", g_interests, "interest set size |Y_u|");
  generate->add_option("--seed", g_seed, "generator seed");

  // train / idw / evaluate share data + model flags
  std::int64_t t_seed = -1;
  int t_reps = -1, t_dim = -1, t_heads = -1, t_layers = -1, t_batch = -1, t_epochs = -1,
      t_patience = -1, t_negatives = -1;
  double t_lr = -1.0, i_momentum = -1.0, i_eta = -1.0;
  int i_max_iter = -1;
  std::string t_strategy;
  bool dump_reps = false, dump_weights = false, dump_ranks = false;

  auto add_data_flags = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_path, "interaction log path");
    cmd->add_option("--format", data_format, "tsv | ml1m | amazon_csv");
    cmd->add_option("--clusters-file", clusters_path, "ground-truth item clusters TSV");
  };
  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seed", t_seed, "training seed");
    cmd->add_option("--num-reps", t_reps, "user representations M");
    cmd->add_option("--embed-dim", t_dim, "embedding dimension d");
    cmd->add_option("--heads", t_heads, "attention heads");
    cmd->add_option("--layers", t_layers, "encoder layers");
    cmd->add_option("--batch-size", t_batch, "mini-batch size");
    cmd->add_option("--max-epochs", t_epochs, "epoch budget");
    cmd->add_option("--patience", t_patience, "early-stopping patience");
    cmd->add_option("--lr", t_lr, "learning rate");
    cmd->add_option("--strategy", t_strategy, "loss weighting strategy");
    cmd->add_option("--negatives", t_negatives, "evaluation negatives");
    cmd->add_flag("--dump-item-reps", dump_reps, "write item_reps.csv");
    cmd->add_flag("--dump-ranks", dump_ranks, "write ranks.csv");
  };

  auto* train_cmd = app.add_subcommand("train", "train one model and evaluate it");
  add_common(train_cmd);
  add_data_flags(train_cmd);
  add_model_flags(train_cmd);
  train_cmd->add_option("--weights-csv", weights_csv, "external item weights (item_id,weight)");

  auto* idw_cmd = app.add_subcommand("idw", "run iterative density weighting");
  add_common(idw_cmd);
  add_data_flags(idw_cmd);
  add_model_flags(idw_cmd);
  idw_cmd->add_option("--momentum", i_momentum, "weight momentum m");
  idw_cmd->add_option("--eta", i_eta, "convergence threshold");
  idw_cmd->add_option("--max-iterations", i_max_iter, "sleep/wake iteration cap");
  idw_cmd->add_flag("--dump-weights", dump_weights, "write weights.csv");

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval_cmd);
  add_data_flags(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON");
  eval_cmd->add_option("--negatives", t_negatives, "evaluation negatives");
  eval_cmd->add_flag("--dump-item-reps", dump_reps, "write item_reps.csv");
  eval_cmd->add_flag("--dump-ranks", dump_ranks, "write ranks.csv");

  auto* sweep_cmd = app.add_subcommand("sweep", "run an axis sweep from a JSON spec");
  add_common(sweep_cmd);

  auto* report_cmd = app.add_subcommand("report", "consolidate run metrics into CSV");
  std::string report_root, report_out;
  report_cmd->add_option("--root", report_root, "directory tree holding run dirs")->required();
  report_cmd->add_option("--out", report_out, "target CSV (default <root>/consolidated.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    ExperimentSpec spec;
    if (!config_path.empty()) spec = spec_from_json(murec::io::read_json_file(config_path));

    // flag overrides
    if (!data_path.empty()) {
      spec.data.path = data_path;
      spec.data.synthetic.reset();
    }
    if (data_format != "tsv") spec.data.format = data_format;
    if (!clusters_path.empty()) spec.data.clusters_path = clusters_path;
    if (!checkpoint.empty()) spec.checkpoint = checkpoint;
    if (t_seed >= 0) spec.train.rng_seed = static_cast<std::uint64_t>(t_seed);
    if (t_reps > 0) spec.tower.num_reps = t_reps;
    if (t_dim > 0) spec.tower.embed_dim = t_dim;
    if (t_heads > 0) spec.tower.attention_heads = t_heads;
    if (t_layers >= 0) spec.tower.encoder_layers = t_layers;
    if (t_batch > 0) spec.train.batch_size = t_batch;
    if (t_epochs >= 0) spec.train.max_epochs = t_epochs;
    if (t_patience > 0) spec.train.patience = t_patience;
    if (t_lr >= 0.0) spec.train.learning_rate = t_lr;
    if (!t_strategy.empty()) spec.train.strategy = murec::train::parse_strategy(t_strategy);
    if (t_negatives > 0) {
      spec.protocol.num_negatives = t_negatives;
      spec.train.eval_negatives = t_negatives;
    }
    if (i_momentum >= 0.0) spec.idw["momentum"] = i_momentum;
    if (i_eta >= 0.0) spec.idw["eta"] = i_eta;
    if (i_max_iter > 0) spec.idw["max_iterations"] = i_max_iter;
    if (dump_reps) spec.dump_item_reps = true;
    if (dump_weights) spec.dump_weights = true;
    if (dump_ranks) spec.dump_ranks = true;
    if (threads > 0) spec.threads = threads;

    if (app.got_subcommand(generate)) {
      if (!spec.data.synthetic) spec.data.synthetic = murec::synth::SynthConfig{};
      auto& s = *spec.data.synthetic;
      if (g_exponent >= 0.0) s.interest_exponent = g_exponent;
      if (g_item_exponent >= 0.0) s.item_exponent = g_item_exponent;
      if (g_users > 0) s.num_users = g_users;
      if (g_seq_len > 0) s.seq_len = g_seq_len;
      if (g_clusters > 0) s.num_clusters = g_clusters;
      if (g_items_per_cluster > 0) s.items_per_cluster = g_items_per_cluster;
      if (g_interests > 0) s.interests_per_user = g_interests;
      if (g_seed >= 0) s.rng_seed = static_cast<std::uint64_t>(g_seed);
    }

#ifdef _OPENMP
    if (spec.threads > 0) omp_set_num_threads(spec.threads);
#endif

    if (app.got_subcommand(generate)) return cmd_generate(spec, out_dir);
    if (app.got_subcommand(train_cmd)) return cmd_train(std::move(spec), out_dir, weights_csv);
    if (app.got_subcommand(idw_cmd)) return cmd_idw(std::move(spec), out_dir);
    if (app.got_subcommand(eval_cmd)) return cmd_evaluate(spec, out_dir);
    if (app.got_subcommand(sweep_cmd)) {
      if (config_path.empty()) throw murec::ConfigError("sweep needs --config");
      return cmd_sweep(murec::io::read_json_file(config_path), out_dir);
    }
    if (app.got_subcommand(report_cmd)) return cmd_report(report_root, report_out);
    return 1;
  } catch (const murec::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

#include "murec/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace murec::io {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  return out;
}

}  // namespace

void write_json_file(const json& j, const std::string& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

json tower_config_to_json(const towers::TowerConfig& cfg) {
  return json{{"embed_dim", cfg.embed_dim},
              {"num_reps", cfg.num_reps},
              {"encoder_layers", cfg.encoder_layers},
              {"attention_heads", cfg.attention_heads},
              {"mlp_layers", cfg.mlp_layers},
              {"max_len", cfg.max_len},
              {"share_embeddings", cfg.share_embeddings},
              {"normalize_items", cfg.normalize_items},
              {"num_items", cfg.num_items}};
}

towers::TowerConfig tower_config_from_json(const json& j) {
  towers::TowerConfig cfg;
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.num_reps = j.value("num_reps", cfg.num_reps);
  cfg.encoder_layers = j.value("encoder_layers", cfg.encoder_layers);
  cfg.attention_heads = j.value("attention_heads", cfg.attention_heads);
  cfg.mlp_layers = j.value("mlp_layers", cfg.mlp_layers);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.share_embeddings = j.value("share_embeddings", cfg.share_embeddings);
  cfg.normalize_items = j.value("normalize_items", cfg.normalize_items);
  cfg.num_items = j.value("num_items", cfg.num_items);
  return cfg;
}

json train_config_to_json(const train::TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"adam_eps", cfg.adam_eps},
              {"strategy", train::strategy_name(cfg.strategy)},
              {"focal_gamma", cfg.focal_gamma},
              {"qmargin_max", cfg.qmargin_max},
              {"rng_seed", cfg.rng_seed},
              {"eval_k", cfg.eval_k},
              {"eval_negatives", cfg.eval_negatives},
              {"eval_seed", cfg.eval_seed}};
}

train::TrainConfig train_config_from_json(const json& j) {
  train::TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  if (j.contains("strategy")) cfg.strategy = train::parse_strategy(j["strategy"].get<std::string>());
  cfg.focal_gamma = j.value("focal_gamma", cfg.focal_gamma);
  cfg.qmargin_max = j.value("qmargin_max", cfg.qmargin_max);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  cfg.eval_k = j.value("eval_k", cfg.eval_k);
  cfg.eval_negatives = j.value("eval_negatives", cfg.eval_negatives);
  cfg.eval_seed = j.value("eval_seed", cfg.eval_seed);
  return cfg;
}

json idw_config_to_json(const idw::IdwConfig& cfg) {
  return json{{"momentum", cfg.momentum},
              {"eta", cfg.eta},
              {"max_iterations", cfg.max_iterations},
              {"wake", train_config_to_json(cfg.wake)},
              {"calibration", train_config_to_json(cfg.calibration)}};
}

idw::IdwConfig idw_config_from_json(const json& j) {
  idw::IdwConfig cfg;
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.eta = j.value("eta", cfg.eta);
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  if (j.contains("wake")) cfg.wake = train_config_from_json(j["wake"]);
  if (j.contains("calibration")) cfg.calibration = train_config_from_json(j["calibration"]);
  return cfg;
}

json synth_config_to_json(const synth::SynthConfig& cfg) {
  return json{{"num_clusters", cfg.num_clusters},
              {"items_per_cluster", cfg.items_per_cluster},
              {"num_users", cfg.num_users},
              {"seq_len", cfg.seq_len},
              {"alpha", cfg.alpha},
              {"gamma", cfg.gamma},
              {"epsilon", cfg.epsilon},
              {"interest_exponent", cfg.interest_exponent},
              {"item_exponent", cfg.item_exponent},
              {"interests_per_user", cfg.interests_per_user},
              {"rng_seed", cfg.rng_seed}};
}

synth::SynthConfig synth_config_from_json(const json& j) {
  synth::SynthConfig cfg;
  cfg.num_clusters = j.value("num_clusters", cfg.num_clusters);
  cfg.items_per_cluster = j.value("items_per_cluster", cfg.items_per_cluster);
  cfg.num_users = j.value("num_users", cfg.num_users);
  cfg.seq_len = j.value("seq_len", cfg.seq_len);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.interest_exponent = j.value("interest_exponent", cfg.interest_exponent);
  cfg.item_exponent = j.value("item_exponent", cfg.item_exponent);
  cfg.interests_per_user = j.value("interests_per_user", cfg.interests_per_user);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  return cfg;
}

json protocol_to_json(const eval::EvalProtocol& protocol) {
  return json{{"k_values", protocol.k_values},
              {"num_negatives", protocol.num_negatives},
              {"seeds", protocol.seeds}};
}

eval::EvalProtocol protocol_from_json(const json& j) {
  eval::EvalProtocol protocol;
  if (j.contains("k_values")) protocol.k_values = j["k_values"].get<std::vector<int>>();
  protocol.num_negatives = j.value("num_negatives", protocol.num_negatives);
  if (j.contains("seeds")) protocol.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  return protocol;
}

void save_checkpoint(const towers::TowerParams& params, const std::string& path) {
  json j;
  j["format"] = "murec-checkpoint-v1";
  j["tower"] = tower_config_to_json(params.cfg);
  json tensors = json::object();
  for (const towers::TensorRef& t : params.tensors()) {
    std::vector<double> values(t.data, t.data + t.size);
    tensors[t.name] = std::move(values);
  }
  j["tensors"] = std::move(tensors);
  write_json_file(j, path);
}

towers::TowerParams load_checkpoint(const std::string& path) {
  const json j = read_json_file(path);
  if (j.value("format", "") != "murec-checkpoint-v1")
    throw ParseError("not a murec checkpoint: " + path);
  const towers::TowerConfig cfg = tower_config_from_json(j.at("tower"));
  towers::TowerParams params = towers::TowerParams::init(cfg, 0);
  const json& tensors = j.at("tensors");
  for (const towers::TensorRef& t : params.tensors()) {
    if (!tensors.contains(t.name)) throw ParseError("checkpoint missing tensor " + t.name);
    const auto values = tensors.at(t.name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != t.size)
      throw ParseError("checkpoint tensor size mismatch for " + t.name);
    std::copy(values.begin(), values.end(), t.data);
  }
  return params;
}

void write_history_csv(const std::vector<train::EpochRow>& history, const std::string& path) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_hr20,val_ndcg20\n";
  out << std::setprecision(17);
  for (const auto& row : history)
    out << row.epoch << ',' << row.train_loss << ',' << row.val_hr << ',' << row.val_ndcg << '\n';
}

void write_idw_log_csv(const std::vector<idw::IterRow>& log, const std::string& path) {
  auto out = open_out(path);
  out << "iteration,delta_w,ms_score,val_hr20,val_ndcg20\n";
  out << std::setprecision(17);
  for (const auto& row : log) {
    out << row.iteration << ',' << row.delta_w << ',';
    if (std::isnan(row.ms))
      out << "";
    else
      out << row.ms;
    out << ',' << row.val_hr << ',' << row.val_ndcg << '\n';
  }
}

void write_item_reps_csv(const towers::Mat& reps, const std::string& path) {
  auto out = open_out(path);
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < reps.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < reps.cols(); ++j) out << ',' << reps(i, j);
    out << '\n';
  }
}

void write_weights_csv(const std::vector<double>& weights, const std::string& path) {
  auto out = open_out(path);
  out << "item_id,weight\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < weights.size(); ++i) out << i << ',' << weights[i] << '\n';
}

std::vector<double> read_weights_csv(const std::string& path, int num_items) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  std::vector<double> weights(num_items, 0.0);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("item_id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("weights parse error at line " + std::to_string(line_no));
    long item = 0;
    double w = 0.0;
    try {
      item = std::stol(line.substr(0, comma));
      w = std::stod(line.substr(comma + 1));
    } catch (...) {
      throw ParseError("weights parse error at line " + std::to_string(line_no));
    }
    if (item < 0 || item >= num_items)
      throw ParseError("weights item id out of range at line " + std::to_string(line_no));
    weights[item] = w;
  }
  return weights;
}

void write_ranks_csv(const std::vector<std::pair<int, int>>& user_rank,
                     const std::vector<int>& labels, const std::string& path) {
  auto out = open_out(path);
  out << "user_id,label,rank\n";
  for (std::size_t i = 0; i < user_rank.size(); ++i)
    out << user_rank[i].first << ',' << labels[i] << ',' << user_rank[i].second << '\n';
}

json metrics_to_json(const eval::MetricsReport& report) {
  json j;
  j["num_negatives"] = report.num_negatives;
  j["seeds"] = report.seeds;
  json splits = json::object();
  for (const auto& [name, sm] : report.splits) {
    json entry;
    entry["count"] = sm.count;
    for (const auto& [metric, ms] : sm.values)
      entry[metric] = json{{"mean", ms.mean}, {"std", ms.std}};
    splits[name] = std::move(entry);
  }
  j["splits"] = std::move(splits);
  if (report.ms) j["ms"] = *report.ms;
  return j;
}

}  // namespace murec::io

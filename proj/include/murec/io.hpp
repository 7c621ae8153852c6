#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "murec/eval.hpp"
#include "murec/idw.hpp"
#include "murec/synthetic.hpp"
#include "murec/towers.hpp"
#include "murec/training.hpp"

namespace murec::io {

using json = nlohmann::json;

// Checkpoint: config plus flat named tensors in one JSON file.
void save_checkpoint(const towers::TowerParams& params, const std::string& path);
towers::TowerParams load_checkpoint(const std::string& path);

void write_history_csv(const std::vector<train::EpochRow>& history, const std::string& path);
void write_idw_log_csv(const std::vector<idw::IterRow>& log, const std::string& path);
void write_item_reps_csv(const towers::Mat& reps, const std::string& path);
void write_weights_csv(const std::vector<double>& weights, const std::string& path);
std::vector<double> read_weights_csv(const std::string& path, int num_items);
void write_ranks_csv(const std::vector<std::pair<int, int>>& user_rank,
                     const std::vector<int>& labels, const std::string& path);

json metrics_to_json(const eval::MetricsReport& report);

json tower_config_to_json(const towers::TowerConfig& cfg);
towers::TowerConfig tower_config_from_json(const json& j);
json train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const json& j);
json idw_config_to_json(const idw::IdwConfig& cfg);
idw::IdwConfig idw_config_from_json(const json& j);
json synth_config_to_json(const synth::SynthConfig& cfg);
synth::SynthConfig synth_config_from_json(const json& j);
json protocol_to_json(const eval::EvalProtocol& protocol);
eval::EvalProtocol protocol_from_json(const json& j);

void write_json_file(const json& j, const std::string& path);
json read_json_file(const std::string& path);

}  // namespace murec::io

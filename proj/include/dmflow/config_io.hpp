#pragma once

#include <json.hpp>

#include "dmflow/dataset.hpp"
#include "dmflow/rf.hpp"
#include "dmflow/tokenizer.hpp"
#include "dmflow/vae.hpp"

namespace dmflow {

struct TrainConfig;

// Tolerant readers: fields absent from the JSON keep their defaults.
nlohmann::json vae_config_to_json(const VaeConfig& cfg);
VaeConfig vae_config_from_json(const nlohmann::json& j);

nlohmann::json rf_config_to_json(const RfConfig& cfg);
RfConfig rf_config_from_json(const nlohmann::json& j);

nlohmann::json tokenizer_config_to_json(const TokenizerConfig& cfg);
TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j);

nlohmann::json curation_config_to_json(const CurationConfig& cfg);
CurationConfig curation_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);

// FNV-1a hex digest of a canonical dump, used to stamp reports.
std::string config_digest(const nlohmann::json& j);

} // namespace dmflow

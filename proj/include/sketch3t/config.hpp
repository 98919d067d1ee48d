#pragma once

#include "sketch3t/dataset.hpp"
#include "sketch3t/losses.hpp"
#include "sketch3t/metatrain.hpp"
#include "sketch3t/nets.hpp"
#include "sketch3t/ttt.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sketch3t {

enum class QueryStyles { heldout, seen, all };

struct EvalConfig {
    int k = 200;
    int max_queries = 200;      // 0 keeps every query
    QueryStyles query_styles = QueryStyles::heldout;
    int train_eval_queries = 100; // queries for the periodic meta-test check

    bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
    std::string data_path;
    SynthConfig synth;
    NetConfig net;
    LossConfig loss;
    TrainConfig train;
    TTTConfig ttt;
    EvalConfig eval;
    std::string output_dir = "runs/default";
    std::uint64_t seed = 0;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Flat view: every field under a dotted key ("train.beta", "net.enc_channels").
/// Values are JSON text.
using FlatConfig = std::map<std::string, std::string>;

FlatConfig flatten(const ExperimentConfig& cfg);
/// Applies `key = value` where value is JSON text (bare words are taken as
/// strings). Throws ConfigError naming the key on unknown keys or bad values.
void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Parses a `key=value` override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// A JSON object, flat or nested by module; nested objects join with dots.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& cfg);

/// Named presets layered over a config: full, type1 (no auxiliary losses and
/// no test-time training), type2 (no meta-learning), type3 (no stroke
/// weights), no_tpa.
void apply_ablation(ExperimentConfig& cfg, const std::string& name);
const std::vector<std::string>& ablation_names();

/// Field-level validation of every section. Throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// FNV-1a over the canonical flat key=value listing.
std::uint64_t config_fingerprint(const ExperimentConfig& cfg);
/// FNV-1a over the network shape only; checkpoints and datasets must agree on it.
std::uint64_t model_fingerprint(const NetConfig& net);
std::string hex64(std::uint64_t v);

std::string net_config_json(const NetConfig& net);
NetConfig parse_net_config(const std::string& json_text);

} // namespace sketch3t

#pragma once

#include "sketch3t/checkpoint.hpp"
#include "sketch3t/config.hpp"
#include "sketch3t/dataset.hpp"
#include "sketch3t/metatrain.hpp"
#include "sketch3t/ttt.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sketch3t {

/// Environment variable that, when set, roots relative output directories.
inline constexpr const char* kOutputRootEnv = "S3T_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::string& dir);

/// Reads cfg.data_path; throws ConfigError naming data.path when unset or missing.
Dataset load_experiment_data(const ExperimentConfig& cfg);

/// The configured network dimensions on the dataset's canvas and length cap.
NetConfig net_for(const ExperimentConfig& cfg, const Dataset& ds);

struct EvalSets {
    std::vector<int> queries;
    std::vector<int> gallery;
};

/// Queries: sketches of `categories` in the configured styles, subsampled to
/// max_queries with a seeded draw and kept in dataset order. Gallery: every
/// photo of `categories`.
EvalSets eval_sets(const Dataset& ds, const std::vector<int>& categories, const EvalConfig& cfg, std::uint64_t seed);

/// mAP@all of the untouched model (no adaptation) over the given sets.
double frozen_map(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data, const EvalSets& sets);

struct TrainRun {
    std::filesystem::path dir;
    std::filesystem::path checkpoint;
    NetConfig net;
    TrainResult result;
};

/// Writes config.json, train_log.csv, periodic ckpt_<iter>.bin and checkpoint.bin under the output directory.
TrainRun run_train(const ExperimentConfig& cfg);
TrainRun run_train(const ExperimentConfig& cfg, const Dataset& ds);

struct EvalRun {
    ZsReport report;
    std::filesystem::path metrics_csv;
    std::filesystem::path trace;
};

/// Evaluates on unseen categories; writes eval_metrics.csv and eval_trace.jsonl.
EvalRun run_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);
EvalRun run_eval(const ExperimentConfig& cfg, const Checkpoint& ck, const Dataset& ds, const std::filesystem::path& out_dir);

struct SweepRow {
    double value = 0.0;
    double map_frozen = 0.0;
    double map_ttt = 0.0;
    double precision_ttt = 0.0;
};

struct SweepRun {
    std::string axis;
    std::vector<SweepRow> rows; // ascending by value
    std::filesystem::path csv;
    std::filesystem::path plot;
};

const std::vector<std::string>& sweep_axes();

/// One evaluation per value. ttt_steps reuses `checkpoint` (training one
/// when absent) and sets tau_s = tau_p; the other axes retrain per value.
SweepRun run_sweep(const ExperimentConfig& cfg, const std::string& axis, std::vector<double> values,
                   const std::optional<std::filesystem::path>& checkpoint = {});

} // namespace sketch3t

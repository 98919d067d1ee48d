#pragma once

#include "sketch3t/dataset.hpp"
#include "sketch3t/nets.hpp"
#include "sketch3t/rng.hpp"

#include <span>
#include <vector>

namespace sketch3t {

/// Per-item network inputs laid out as NCHW planes, with the edgemap target
/// of every photo computed once.
class ItemTensors {
public:
    explicit ItemTensors(const Dataset& ds);

    const Dataset& dataset() const { return *ds_; }
    int canvas() const { return ds_->canvas; }

    Tensor sketches(std::span<const int> items) const;
    Tensor photos(std::span<const int> items) const;
    Tensor edgemaps(std::span<const int> items) const;
    SketchBatch vectors(std::span<const int> items) const;

private:
    Tensor gather(const std::vector<std::vector<double>>& planes, std::span<const int> items) const;

    const Dataset* ds_;
    std::vector<std::vector<double>> sketch_, photo_, edge_;
};

struct EpisodeConfig {
    int n_trn = 8;
    int n_val = 4;
    int pool_size = 8;

    bool operator==(const EpisodeConfig&) const = default;
};

struct Episode {
    int category = 0;
    std::vector<int> trn;     // item indices
    std::vector<int> val;
    std::vector<int> trn_neg; // one negative photo item per anchor
    std::vector<int> val_neg;
};

/// Draws a meta-train category uniformly, then n_trn + n_val distinct
/// seen-style pairs from it. Each anchor's negative is the candidate nearest
/// to it (squared distance in the primary space) among pool_size photos from
/// other meta-train categories; ties go to the lowest pool position.
Episode sample_task(const ItemTensors& data, const Sketch3TNet& net, const ParamSet& params, Rng& rng,
                    const EpisodeConfig& cfg);

/// Index of the smallest row-wise squared distance between `query` [1,k] and
/// `candidates` [n,k], lowest index on ties.
int nearest_row(const Tensor& query, const Tensor& candidates);

} // namespace sketch3t

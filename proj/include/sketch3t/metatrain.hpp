#pragma once

#include "sketch3t/episodes.hpp"
#include "sketch3t/losses.hpp"
#include "sketch3t/nets.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace sketch3t {

struct TrainConfig {
    int inner_steps = 1;
    int meta_batch = 32;
    double beta = 1e-4;       // outer Adam rate
    double alpha_init = 5e-4; // initial inner rate
    LossConfig loss;
    EpisodeConfig episode;
    bool first_order = false;
    bool use_eta = true;
    bool use_meta = true;
    bool learn_alpha = true;
    int iterations = 200;
    std::uint64_t seed = 0;
    int eval_every = 0;       // 0 disables periodic evaluation
    int checkpoint_every = 0; // 0 disables intermediate checkpoints
    std::vector<Group> frozen;

    bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError with the offending field name.
void validate(const TrainConfig& cfg);

/// Network inputs for a list of anchors with their negatives.
struct TripletBatch {
    Var sketches;
    Var photos;
    Var negatives;
    Var edgemaps;
    SketchBatch vectors;
};

TripletBatch make_batch(const ItemTensors& data, std::span<const int> anchors, std::span<const int> negatives);
/// Concatenation of two episode halves (used by the joint baseline).
TripletBatch make_batch(const ItemTensors& data, const Episode& ep);

struct TrainLoss {
    Var total;
    Var triplet;
    Var sketch; // undefined when the reconstruction weight is zero
    Var photo;
    Var eta;    // [B, steps] weights, undefined when unweighted
};

struct InnerRecord {
    double l_trn = 0.0;
    double l_tri = 0.0;
    double l_sketch = 0.0;
    double l_photo = 0.0;
    double eta_mean = 0.0;
};

struct Adapted {
    ParamList encoder;
    ParamList primary;
    std::vector<InnerRecord> records;
};

/// Adam with per-leaf moments. Leaves are identified by position.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor> m, v;
};

struct OuterRecord {
    double l_trn = 0.0;
    double l_val = 0.0;
    int inner_records = 0;
    double alpha = 0.0;
    bool alpha_clamped = false;
};

/// params - alpha * dloss/dparams. With create_graph the result stays a
/// differentiable function of params and alpha through the gradient;
/// otherwise the gradient enters as a constant.
std::vector<Var> sgd_step(std::span<const Var> params, const Var& loss, const Var& alpha, bool create_graph);

/// Per-item, per-step gradient features J [B*steps, 2|phi|], item-major. Each
/// row is the gradient of that step's reconstruction loss against the final
/// encoder linear layer followed by the gradient of the item's triplet loss
/// against the same layer. Rows past a sequence's length are zero. The result
/// carries no graph.
Tensor gradient_features(const Sketch3TNet& net, std::span<const Var> primary, std::span<const Var> sketch_dec,
                         const Sketch3TNet::Encoded& s, const Sketch3TNet::Encoded& p, const Sketch3TNet::Encoded& n,
                         const SketchBatch& vectors, double margin);

class MetaLearner {
public:
    MetaLearner(const Sketch3TNet& net, TrainConfig cfg);

    const TrainConfig& config() const { return cfg_; }

    /// L_trn under the given encoder/primary parameters and the decoders and
    /// stroke-weight net of `params`.
    TrainLoss train_loss(const ParamSet& params, std::span<const Var> encoder, std::span<const Var> primary,
                         const TripletBatch& batch, bool weighted) const;

    /// Stroke weights [B, steps] for the batch under the given encoder.
    Var compute_eta(const ParamSet& params, std::span<const Var> encoder, std::span<const Var> primary,
                    const TripletBatch& batch) const;

    /// inner_steps plain gradient steps with rate alpha on (encoder, primary).
    /// The adapted tensors stay differentiable unless first_order is set.
    Adapted inner_update(const ParamSet& params, const TripletBatch& trn) const;

    /// Triplet loss on D_val under adapted parameters.
    Var validation_loss(const Adapted& adapted, const ParamSet& params, const TripletBatch& val) const;

    /// Batch-mean meta-gradient for every leaf of `params` (ParamSet::leaves order).
    std::vector<Tensor> meta_gradient(const ParamSet& params, std::span<const Episode> episodes, const ItemTensors& data,
                                      OuterRecord& record) const;

    /// Gradient of the batch-mean L_trn over D_trn and D_val with unit stroke weights.
    std::vector<Tensor> joint_gradient(const ParamSet& params, std::span<const Episode> episodes, const ItemTensors& data,
                                       OuterRecord& record) const;

    /// One Adam step with rate beta over non-frozen leaves; clamps alpha.
    /// Returns whether alpha had to be clamped.
    bool apply(ParamSet& params, AdamState& adam, const std::vector<Tensor>& grads) const;

    /// Meta-gradient (or joint gradient when use_meta is off) and one update.
    OuterRecord outer_step(ParamSet& params, AdamState& adam, std::span<const Episode> episodes,
                           const ItemTensors& data) const;

private:
    const Sketch3TNet* net_;
    TrainConfig cfg_;
};

/// Smallest value alpha is clamped to after an outer step.
inline constexpr double kAlphaFloor = 1e-8;

struct IterationLog {
    int iteration = 0;
    double l_trn = 0.0;
    double l_val = 0.0;
    std::optional<double> map; // meta-test mAP@all when evaluated
    double seconds = 0.0;
    int inner_records = 0;
    double alpha = 0.0;
    bool skipped = false; // aborted on a non-finite value
};

struct TrainHooks {
    std::function<double(const ParamSet&)> evaluate;
    std::function<void(const IterationLog&)> on_iteration;
    std::function<void(int iteration, const ParamSet&)> on_checkpoint;
};

struct TrainResult {
    ParamSet params;
    std::vector<IterationLog> log;
};

/// Outer loop over cfg.iterations meta-batches. Episodes are drawn from a
/// stream seeded by derive_seed(cfg.seed, "episodes").
TrainResult train(const Sketch3TNet& net, const ParamSet& init, const ItemTensors& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

} // namespace sketch3t

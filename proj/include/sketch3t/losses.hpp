#pragma once

#include "sketch3t/nets.hpp"

#include <vector>

namespace sketch3t {

struct LossConfig {
    double margin = 0.3;
    double lambda_tri = 0.7;
    double lambda_rec = 0.3;

    bool operator==(const LossConfig&) const = default;
};

/// Throws ConfigError unless margin > 0, both weights >= 0 and their sum > 0.
void validate(const LossConfig& cfg);

/// Row-wise squared Euclidean distance of two [N,k] tensors -> [N,1].
Var squared_distance(const Var& a, const Var& b);

/// Per-row hinge max(0, m + |s-p|^2 - |s-n|^2) -> [N,1].
Var triplet_losses(const Var& anchor, const Var& positive, const Var& negative, double margin);
/// Mean of triplet_losses.
Var triplet_loss(const Var& anchor, const Var& positive, const Var& negative, double margin);

/// One decoder step's loss per row -> [B,1]: squared coordinate error plus
/// pen-state cross-entropy against the [B,5] target.
Var sketch_step_loss(const Var& psi_t, const Tensor& target_t);

/// Per-step loss: squared coordinate error plus pen-state cross-entropy,
/// [B, steps], zero past each sequence's length.
Var sketch_step_losses(const std::vector<Var>& psi, const SketchBatch& gt);

/// Mean over the batch of (1/T_i) sum_t eta_it * L_it. `eta` is [B, steps]
/// or undefined for all-ones weights.
Var sketch_recon_loss(const Var& step_losses, const SketchBatch& gt, const Var& eta = {});
Var sketch_recon_loss(const std::vector<Var>& psi, const SketchBatch& gt, const Var& eta = {});

/// Mean squared difference over every entry.
Var photo_recon_loss(const Var& predicted, const Var& target);

} // namespace sketch3t

#include "sketch3t/losses.hpp"

#include "sketch3t/error.hpp"

#include <array>

namespace sketch3t {

using namespace ad;

void validate(const LossConfig& c) {
    if (!(c.margin > 0.0)) throw ConfigError("loss.margin must be positive");
    if (c.lambda_tri < 0.0 || c.lambda_rec < 0.0) throw ConfigError("loss.lambda_tri and loss.lambda_rec must be nonnegative");
    if (!(c.lambda_tri + c.lambda_rec > 0.0)) throw ConfigError("loss.lambda_tri + loss.lambda_rec must be positive");
}

Var squared_distance(const Var& a, const Var& b) {
    if (a.shape() != b.shape() || a.shape().size() != 2)
        throw ShapeError("distance operands " + to_string(a.shape()) + " and " + to_string(b.shape()));
    return sum_rows(square(sub(a, b)));
}

Var triplet_losses(const Var& s, const Var& p, const Var& n, double margin) {
    return relu(add_scalar(sub(squared_distance(s, p), squared_distance(s, n)), margin));
}

Var triplet_loss(const Var& s, const Var& p, const Var& n, double margin) { return mean(triplet_losses(s, p, n, margin)); }

Var sketch_step_loss(const Var& psi_t, const Tensor& target_t) {
    const Var target = Var::constant(target_t);
    const Var coord = sum_rows(square(sub(slice_cols(psi_t, 0, 2), slice_cols(target, 0, 2))));
    const Var ce = neg(sum_rows(mul(log_softmax_rows(slice_cols(psi_t, 2, 5)), slice_cols(target, 2, 5))));
    return add(coord, ce);
}

Var sketch_step_losses(const std::vector<Var>& psi, const SketchBatch& gt) {
    if (static_cast<int>(psi.size()) != gt.steps)
        throw ShapeError("decoder produced " + std::to_string(psi.size()) + " steps for " + std::to_string(gt.steps) + " targets");
    std::vector<Var> cols;
    cols.reserve(psi.size());
    for (int t = 0; t < gt.steps; ++t) {
        const Var& out = psi[static_cast<std::size_t>(t)];
        if (out.shape() != Shape{gt.batch, 5}) throw ShapeError("decoder step output " + to_string(out.shape()));
        cols.push_back(sketch_step_loss(out, gt.targets[static_cast<std::size_t>(t)]));
    }
    return mul(concat_cols(cols), Var::constant(gt.mask));
}

Var sketch_recon_loss(const Var& step_losses, const SketchBatch& gt, const Var& eta) {
    if (step_losses.shape() != Shape{gt.batch, gt.steps}) throw ShapeError("step losses " + to_string(step_losses.shape()));
    Var weighted = step_losses;
    if (eta.defined()) {
        if (eta.shape() != step_losses.shape())
            throw ShapeError("stroke weights " + to_string(eta.shape()) + " for losses " + to_string(step_losses.shape()));
        weighted = mul(weighted, eta);
    }
    Tensor inv({gt.batch, 1});
    for (int i = 0; i < gt.batch; ++i) inv.data[static_cast<std::size_t>(i)] = 1.0 / gt.lengths[static_cast<std::size_t>(i)];
    return mean(mul(sum_rows(weighted), Var::constant(std::move(inv))));
}

Var sketch_recon_loss(const std::vector<Var>& psi, const SketchBatch& gt, const Var& eta) {
    return sketch_recon_loss(sketch_step_losses(psi, gt), gt, eta);
}

Var photo_recon_loss(const Var& predicted, const Var& target) {
    if (predicted.shape() != target.shape())
        throw ShapeError("edgemap prediction " + to_string(predicted.shape()) + " vs target " + to_string(target.shape()));
    return mean(square(sub(predicted, target)));
}

} // namespace sketch3t

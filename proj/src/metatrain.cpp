#include "sketch3t/metatrain.hpp"

#include "sketch3t/error.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iostream>

namespace sketch3t {

using namespace ad;

void validate(const TrainConfig& c) {
    if (c.inner_steps < 1) throw ConfigError("train.inner_steps must be at least 1");
    if (c.meta_batch < 1) throw ConfigError("train.meta_batch must be at least 1");
    if (!(c.beta > 0.0)) throw ConfigError("train.beta must be positive");
    if (!(c.alpha_init > 0.0)) throw ConfigError("train.alpha_init must be positive");
    if (c.iterations < 0) throw ConfigError("train.iterations must be nonnegative");
    if (c.eval_every < 0 || c.checkpoint_every < 0) throw ConfigError("train.eval_every and train.checkpoint_every must be nonnegative");
    if (c.episode.n_trn < 1 || c.episode.n_val < 1 || c.episode.pool_size < 1)
        throw ConfigError("episode.n_trn, episode.n_val and episode.pool_size must be positive");
    validate(c.loss);
}

TripletBatch make_batch(const ItemTensors& data, std::span<const int> anchors, std::span<const int> negatives) {
    if (anchors.size() != negatives.size()) throw ShapeError("every anchor needs one negative");
    return {Var::constant(data.sketches(anchors)), Var::constant(data.photos(anchors)), Var::constant(data.photos(negatives)),
            Var::constant(data.edgemaps(anchors)), data.vectors(anchors)};
}

TripletBatch make_batch(const ItemTensors& data, const Episode& ep) {
    std::vector<int> a = ep.trn, n = ep.trn_neg;
    a.insert(a.end(), ep.val.begin(), ep.val.end());
    n.insert(n.end(), ep.val_neg.begin(), ep.val_neg.end());
    return make_batch(data, a, n);
}

namespace {

bool finite(const Tensor& t) {
    return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

Sketch3TNet::Encoded rows(const Sketch3TNet::Encoded& e, int begin, int end) {
    return {slice_rows(e.pooled, begin, end), slice_rows(e.features, begin, end)};
}

std::vector<Var> concat_lists(std::span<const Var> a, std::span<const Var> b) {
    std::vector<Var> out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace

Tensor gradient_features(const Sketch3TNet& net, std::span<const Var> primary, std::span<const Var> sketch_dec,
                         const Sketch3TNet::Encoded& s, const Sketch3TNet::Encoded& p, const Sketch3TNet::Encoded& n,
                         const SketchBatch& vb, double margin) {
    GradMode on(true);
    const int B = vb.batch, T = vb.steps;
    const int C = s.pooled.shape()[1], d = s.features.shape()[1];
    const std::int64_t half = static_cast<std::int64_t>(C) * d + d;
    if (2 * half != net.gradient_feature_dim()) throw ShapeError("gradient feature size does not match the encoder");

    const Var fs = Var::leaf(s.features.value(), true);
    const Var fp = Var::leaf(p.features.value(), true);
    const Var fn = Var::leaf(n.features.value(), true);
    const std::array<Var, 1> wrt_s{fs};

    // Step-wise gradients w.r.t. the sketch feature; rows are independent so
    // one backward pass per step serves the whole batch.
    const std::vector<Var> psi = net.decode_sketch(sketch_dec, fs, vb);
    std::vector<Tensor> g_step;
    g_step.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Tensor m({B, 1});
        for (int i = 0; i < B; ++i) m.data[static_cast<std::size_t>(i)] = vb.mask.data[static_cast<std::size_t>(i) * T + t];
        const Var lt = sum(mul(sketch_step_loss(psi[static_cast<std::size_t>(t)], vb.targets[static_cast<std::size_t>(t)]),
                               Var::constant(std::move(m))));
        g_step.push_back(grad(lt, wrt_s)[0].value());
    }

    const std::array<Var, 3> wrt_tri{fs, fp, fn};
    const Var tri = sum(triplet_losses(net.project(primary, fs), net.project(primary, fp), net.project(primary, fn), margin));
    const std::vector<Var> g_tri = grad(tri, wrt_tri);

    // Triplet half of J, shared by every step of an item.
    const std::array<const Sketch3TNet::Encoded*, 3> enc{&s, &p, &n};
    std::vector<double> tri_half(static_cast<std::size_t>(B * half), 0.0);
    for (int i = 0; i < B; ++i) {
        double* row = tri_half.data() + static_cast<std::size_t>(i) * half;
        for (int x = 0; x < 3; ++x) {
            const double* pool = enc[static_cast<std::size_t>(x)]->pooled.value().data.data() + static_cast<std::size_t>(i) * C;
            const double* g = g_tri[static_cast<std::size_t>(x)].value().data.data() + static_cast<std::size_t>(i) * d;
            for (int c = 0; c < C; ++c)
                for (int k = 0; k < d; ++k) row[c * d + k] += pool[c] * g[k];
            for (int k = 0; k < d; ++k) row[static_cast<std::int64_t>(C) * d + k] += g[k];
        }
    }

    Tensor J({B * T, static_cast<int>(2 * half)});
    for (int i = 0; i < B; ++i) {
        const double* pool = s.pooled.value().data.data() + static_cast<std::size_t>(i) * C;
        for (int t = 0; t < vb.lengths[static_cast<std::size_t>(i)]; ++t) {
            double* row = J.data.data() + (static_cast<std::size_t>(i) * T + t) * 2 * half;
            const double* g = g_step[static_cast<std::size_t>(t)].data.data() + static_cast<std::size_t>(i) * d;
            for (int c = 0; c < C; ++c)
                for (int k = 0; k < d; ++k) row[c * d + k] = pool[c] * g[k];
            std::copy_n(g, d, row + static_cast<std::int64_t>(C) * d);
            std::copy_n(tri_half.data() + static_cast<std::size_t>(i) * half, half, row + half);
        }
    }
    return J;
}

std::vector<Var> sgd_step(std::span<const Var> params, const Var& loss, const Var& alpha, bool create_graph) {
    const std::vector<Var> g = grad(loss, params, create_graph);
    std::vector<Var> out;
    out.reserve(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) out.push_back(sub(params[k], mul(alpha, g[k])));
    return out;
}

MetaLearner::MetaLearner(const Sketch3TNet& net, TrainConfig cfg) : net_(&net), cfg_(std::move(cfg)) { validate(cfg_); }

namespace {

Var eta_from(const Sketch3TNet& net, const ParamSet& params, std::span<const Var> primary, const Sketch3TNet::Encoded& all,
             const SketchBatch& vb, double margin) {
    const int B = vb.batch;
    const Tensor J = gradient_features(net, primary, params[Group::sketch_decoder], rows(all, 0, B), rows(all, B, 2 * B),
                                       rows(all, 2 * B, 3 * B), vb, margin);
    return reshape(net.stroke_weights(params[Group::eta], Var::constant(J)), {B, vb.steps});
}

} // namespace

Var MetaLearner::compute_eta(const ParamSet& params, std::span<const Var> encoder, std::span<const Var> primary,
                             const TripletBatch& batch) const {
    const std::array<Var, 3> imgs{batch.sketches, batch.photos, batch.negatives};
    return eta_from(*net_, params, primary, net_->encode(encoder, concat_rows(imgs)), batch.vectors, cfg_.loss.margin);
}

TrainLoss MetaLearner::train_loss(const ParamSet& params, std::span<const Var> encoder, std::span<const Var> primary,
                                  const TripletBatch& batch, bool weighted) const {
    const int n = batch.vectors.batch;
    const std::array<Var, 3> imgs{batch.sketches, batch.photos, batch.negatives};
    const Sketch3TNet::Encoded all = net_->encode(encoder, concat_rows(imgs));
    const Var z = net_->project(primary, all.features);
    TrainLoss L;
    L.triplet = triplet_loss(slice_rows(z, 0, n), slice_rows(z, n, 2 * n), slice_rows(z, 2 * n, 3 * n), cfg_.loss.margin);
    L.total = scale(L.triplet, cfg_.loss.lambda_tri);
    if (cfg_.loss.lambda_rec > 0.0) {
        const Var fs = slice_rows(all.features, 0, n);
        const Var fp = slice_rows(all.features, n, 2 * n);
        const Var steps = sketch_step_losses(net_->decode_sketch(params[Group::sketch_decoder], fs, batch.vectors), batch.vectors);
        if (weighted) L.eta = eta_from(*net_, params, primary, all, batch.vectors, cfg_.loss.margin);
        L.sketch = sketch_recon_loss(steps, batch.vectors, L.eta);
        L.photo = photo_recon_loss(net_->decode_photo(params[Group::photo_decoder], fp), batch.edgemaps);
        L.total = add(L.total, scale(add(L.sketch, L.photo), cfg_.loss.lambda_rec));
    }
    return L;
}

Adapted MetaLearner::inner_update(const ParamSet& params, const TripletBatch& trn) const {
    Adapted a{params[Group::encoder], params[Group::primary], {}};
    const std::size_t ne = a.encoder.size();
    for (int step = 0; step < cfg_.inner_steps; ++step) {
        const TrainLoss L = train_loss(params, a.encoder, a.primary, trn, cfg_.use_eta);
        InnerRecord r;
        r.l_trn = L.total.item();
        r.l_tri = L.triplet.item();
        if (L.sketch.defined()) r.l_sketch = L.sketch.item();
        if (L.photo.defined()) r.l_photo = L.photo.item();
        if (L.eta.defined()) {
            const auto& e = L.eta.value().data;
            double acc = 0.0;
            int cnt = 0;
            for (std::size_t k = 0; k < e.size(); ++k)
                if (trn.vectors.mask.data[k] > 0.0) {
                    acc += e[k];
                    ++cnt;
                }
            r.eta_mean = cnt ? acc / cnt : 0.0;
        }
        if (!std::isfinite(r.l_trn)) throw NumericalError("non-finite inner loss");
        const std::vector<Var> updated = sgd_step(concat_lists(a.encoder, a.primary), L.total, params.alpha, !cfg_.first_order);
        for (std::size_t k = 0; k < updated.size(); ++k) (k < ne ? a.encoder[k] : a.primary[k - ne]) = updated[k];
        a.records.push_back(r);
    }
    return a;
}

Var MetaLearner::validation_loss(const Adapted& adapted, const ParamSet&, const TripletBatch& val) const {
    const int n = val.vectors.batch;
    const std::array<Var, 3> imgs{val.sketches, val.photos, val.negatives};
    const Var z = net_->project(adapted.primary, net_->encode(adapted.encoder, concat_rows(imgs)).features);
    return triplet_loss(slice_rows(z, 0, n), slice_rows(z, n, 2 * n), slice_rows(z, 2 * n, 3 * n), cfg_.loss.margin);
}

namespace {

void accumulate(std::vector<Tensor>& acc, const std::vector<Var>& g) {
    if (acc.empty()) {
        for (const Var& v : g) acc.push_back(v.value());
        return;
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto& a = acc[k].data;
        const auto& b = g[k].value().data;
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
    }
}

} // namespace

std::vector<Tensor> MetaLearner::meta_gradient(const ParamSet& params, std::span<const Episode> episodes,
                                               const ItemTensors& data, OuterRecord& rec) const {
    if (episodes.empty()) throw ConfigError("outer step needs at least one episode");
    const std::vector<Var> leaves = params.leaves();
    const double inv_b = 1.0 / static_cast<double>(episodes.size());
    std::vector<Tensor> acc;
    rec = {};
    for (const Episode& ep : episodes) {
        const Adapted a = inner_update(params, make_batch(data, ep.trn, ep.trn_neg));
        const Var lv = validation_loss(a, params, make_batch(data, ep.val, ep.val_neg));
        if (!std::isfinite(lv.item())) throw NumericalError("non-finite validation loss");
        rec.l_trn += a.records.front().l_trn * inv_b;
        rec.l_val += lv.item() * inv_b;
        rec.inner_records += static_cast<int>(a.records.size());
        accumulate(acc, grad(scale(lv, inv_b), leaves));
    }
    return acc;
}

std::vector<Tensor> MetaLearner::joint_gradient(const ParamSet& params, std::span<const Episode> episodes,
                                                const ItemTensors& data, OuterRecord& rec) const {
    if (episodes.empty()) throw ConfigError("outer step needs at least one episode");
    const std::vector<Var> leaves = params.leaves();
    const double inv_b = 1.0 / static_cast<double>(episodes.size());
    std::vector<Tensor> acc;
    rec = {};
    for (const Episode& ep : episodes) {
        const TrainLoss L = train_loss(params, params[Group::encoder], params[Group::primary], make_batch(data, ep), false);
        if (!std::isfinite(L.total.item())) throw NumericalError("non-finite training loss");
        rec.l_trn += L.total.item() * inv_b;
        {
            NoGrad ng;
            const Adapted unadapted{params[Group::encoder], params[Group::primary], {}};
            rec.l_val += validation_loss(unadapted, params, make_batch(data, ep.val, ep.val_neg)).item() * inv_b;
        }
        accumulate(acc, grad(scale(L.total, inv_b), leaves));
    }
    return acc;
}

bool MetaLearner::apply(ParamSet& params, AdamState& adam, const std::vector<Tensor>& grads) const {
    const std::vector<Var> leaves = params.leaves();
    if (grads.size() != leaves.size()) throw ShapeError("gradient count does not match the parameter set");
    for (const Tensor& g : grads)
        if (!finite(g)) throw NumericalError("non-finite outer gradient");
    if (adam.m.empty()) {
        for (const Var& v : leaves) {
            adam.m.emplace_back(v.shape());
            adam.v.emplace_back(v.shape());
        }
    }
    ++adam.step;
    const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    std::vector<bool> skip(leaves.size(), false);
    std::size_t at = 0;
    for (int g = 0; g < static_cast<int>(Group::count); ++g) {
        const bool frozen = std::find(cfg_.frozen.begin(), cfg_.frozen.end(), static_cast<Group>(g)) != cfg_.frozen.end();
        for (std::size_t k = 0; k < params.groups[static_cast<std::size_t>(g)].size(); ++k) skip[at++] = frozen;
    }
    skip[at] = !cfg_.learn_alpha;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (skip[k]) continue;
        auto& w = leaves[k].node()->value.data;
        auto& m = adam.m[k].data;
        auto& v = adam.v[k].data;
        const auto& g = grads[k].data;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g[j];
            v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g[j] * g[j];
            w[j] -= cfg_.beta * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.eps);
        }
    }
    double& alpha = params.alpha.node()->value.data[0];
    if (!(alpha >= kAlphaFloor)) {
        std::cerr << "warning: inner learning rate fell to " << alpha << ", clamped to " << kAlphaFloor << '\n';
        alpha = kAlphaFloor;
        return true;
    }
    return false;
}

OuterRecord MetaLearner::outer_step(ParamSet& params, AdamState& adam, std::span<const Episode> episodes,
                                    const ItemTensors& data) const {
    OuterRecord rec;
    const std::vector<Tensor> g =
        cfg_.use_meta ? meta_gradient(params, episodes, data, rec) : joint_gradient(params, episodes, data, rec);
    rec.alpha_clamped = apply(params, adam, g);
    rec.alpha = params.alpha.item();
    return rec;
}

TrainResult train(const Sketch3TNet& net, const ParamSet& init, const ItemTensors& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    const MetaLearner learner(net, cfg);
    Rng rng(derive_seed(cfg.seed, "episodes"));
    TrainResult out{init.clone(), {}};
    AdamState adam;
    const auto start = std::chrono::steady_clock::now();
    int consecutive_failures = 0;
    for (int it = 1; it <= cfg.iterations; ++it) {
        std::vector<Episode> eps;
        eps.reserve(static_cast<std::size_t>(cfg.meta_batch));
        for (int b = 0; b < cfg.meta_batch; ++b) eps.push_back(sample_task(data, net, out.params, rng, cfg.episode));
        IterationLog log;
        log.iteration = it;
        try {
            const OuterRecord rec = learner.outer_step(out.params, adam, eps, data);
            log.l_trn = rec.l_trn;
            log.l_val = rec.l_val;
            log.inner_records = rec.inner_records;
            consecutive_failures = 0;
        } catch (const NumericalError& e) {
            std::cerr << "iteration " << it << ": outer step aborted (" << e.what() << "), episode categories:";
            for (const Episode& ep : eps) std::cerr << ' ' << ep.category;
            std::cerr << '\n';
            log.skipped = true;
            log.l_trn = log.l_val = std::nan("");
            if (++consecutive_failures >= 5) throw;
        }
        log.alpha = out.params.alpha.item();
        if (hooks.evaluate && cfg.eval_every > 0 && (it % cfg.eval_every == 0 || it == cfg.iterations))
            log.map = hooks.evaluate(out.params);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.log.push_back(log);
        if (hooks.on_iteration) hooks.on_iteration(log);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) hooks.on_checkpoint(it, out.params);
    }
    return out;
}

} // namespace sketch3t

#include "sketch3t/ttt.hpp"

#include "sketch3t/error.hpp"
#include "sketch3t/losses.hpp"
#include "sketch3t/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace sketch3t {

using namespace ad;

void validate(const TTTConfig& c) {
    if (!(c.lr > 0.0)) throw ConfigError("ttt.lr must be positive");
    if (c.tau_p < 0 || c.tau_s < 0) throw ConfigError("ttt.tau_p and ttt.tau_s must be nonnegative");
    if (c.batch < 1) throw ConfigError("ttt.batch must be positive");
}

namespace {

void sgd_in_place(const ParamList& params, const std::vector<Var>& grads, double lr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k].node()->value.data;
        const auto& g = grads[k].value().data;
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    }
}

template <class F>
void for_batches(std::span<const int> items, int batch, F&& f) {
    for (std::size_t b = 0; b < items.size(); b += static_cast<std::size_t>(batch))
        f(items.subspan(b, std::min(static_cast<std::size_t>(batch), items.size() - b)));
}

Tensor encode_query(const Sketch3TNet& net, const ParamList& encoder, const ParamList& primary, const Tensor& raster) {
    NoGrad ng;
    return net.project(primary, net.encode(encoder, Var::constant(raster)).features).value();
}

} // namespace

GallerySnapshot make_snapshot(const Sketch3TNet& net, const ParamList& encoder, const ParamList& primary,
                              const ItemTensors& data, std::span<const int> gallery, int batch) {
    if (gallery.empty()) throw ConfigError("gallery is empty");
    NoGrad ng;
    GallerySnapshot s;
    s.encoder = encoder;
    s.items.assign(gallery.begin(), gallery.end());
    std::vector<double> feats;
    for_batches(gallery, batch, [&](std::span<const int> b) {
        const Var z = net.project(primary, net.encode(encoder, Var::constant(data.photos(b))).features);
        feats.insert(feats.end(), z.value().data.begin(), z.value().data.end());
    });
    const int dp = net.config().primary_dim;
    s.features = Tensor({static_cast<int>(gallery.size()), dp}, std::move(feats));
    for (int i : gallery) s.labels.push_back(data.dataset().items.at(static_cast<std::size_t>(i)).category_id);
    return s;
}

GallerySnapshot adapt_gallery(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data,
                              std::span<const int> gallery, const TTTConfig& cfg) {
    validate(cfg);
    if (gallery.empty()) throw ConfigError("gallery is empty");
    if (!cfg.use_tpa) return make_snapshot(net, params[Group::encoder], params[Group::primary], data, gallery, cfg.batch);

    const ParamList enc = clone_leaves(params[Group::encoder]);
    const ParamList& dec = params[Group::photo_decoder];
    const double total = static_cast<double>(gallery.size());
    const auto mean_loss = [&](bool with_grad, std::vector<Tensor>* acc) {
        double loss = 0.0;
        for_batches(gallery, cfg.batch, [&](std::span<const int> b) {
            GradMode mode(with_grad);
            const Var pred = net.decode_photo(dec, net.encode(enc, Var::constant(data.photos(b))).features);
            const Var l = scale(photo_recon_loss(pred, Var::constant(data.edgemaps(b))), static_cast<double>(b.size()) / total);
            loss += l.item();
            if (!with_grad) return;
            const std::vector<Var> g = grad(l, enc);
            if (acc->empty())
                for (const Var& v : g) acc->push_back(v.value());
            else
                for (std::size_t k = 0; k < g.size(); ++k)
                    for (std::size_t j = 0; j < g[k].value().data.size(); ++j) (*acc)[k].data[j] += g[k].value().data[j];
        });
        return loss;
    };
    std::vector<double> trace;
    for (int step = 0; step < cfg.tau_p; ++step) {
        std::vector<Tensor> acc;
        const double l = mean_loss(true, &acc);
        trace.push_back(l);
        if (!std::isfinite(l)) throw NumericalError("non-finite gallery reconstruction loss");
        for (std::size_t k = 0; k < enc.size(); ++k) {
            auto& w = enc[k].node()->value.data;
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.lr * acc[k].data[j];
        }
    }
    trace.push_back(mean_loss(false, nullptr));
    GallerySnapshot s = make_snapshot(net, enc, params[Group::primary], data, gallery, cfg.batch);
    s.recon = std::move(trace);
    return s;
}

QueryAdaptation adapt_query(const Sketch3TNet& net, const ParamList& encoder, const ParamList& sketch_dec,
                            const ParamList& primary, const Tensor& raster, const SketchBatch& vec, int tau_s, double lr) {
    if (tau_s < 0) throw ConfigError("ttt.tau_s must be nonnegative");
    QueryAdaptation q;
    q.encoder = clone_leaves(encoder);
    const Var x = Var::constant(raster);
    for (int step = 0; step < tau_s; ++step) {
        const Var l = sketch_recon_loss(net.decode_sketch(sketch_dec, net.encode(q.encoder, x).features, vec), vec);
        q.losses.push_back(l.item());
        if (!std::isfinite(l.item())) {
            q.fallback = true;
            break;
        }
        sgd_in_place(q.encoder, grad(l, q.encoder), lr);
    }
    NoGrad ng;
    const Var f = net.encode(q.encoder, x).features;
    const double final_loss = sketch_recon_loss(net.decode_sketch(sketch_dec, f, vec), vec).item();
    if (!q.fallback) q.losses.push_back(final_loss);
    if (q.fallback || !std::isfinite(final_loss)) {
        q.fallback = true;
        q.feature = encode_query(net, encoder, primary, raster);
    } else {
        q.feature = net.project(primary, f).value();
    }
    return q;
}

Ranking retrieve(const Tensor& feature, const Tensor& gallery, std::span<const int> labels, int query_category) {
    if (gallery.shape.size() != 2 || feature.size() != gallery.shape[1])
        throw ShapeError("query of size " + std::to_string(feature.size()) + " against gallery " + to_string(gallery.shape));
    const int n = gallery.shape[0], k = gallery.shape[1];
    if (static_cast<int>(labels.size()) != n) throw ShapeError("gallery labels do not match its rows");
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double d = 0.0;
        for (int j = 0; j < k; ++j) {
            const double diff = feature.data[static_cast<std::size_t>(j)] - gallery.data[static_cast<std::size_t>(i) * k + j];
            d += diff * diff;
        }
        dist[static_cast<std::size_t>(i)] = d;
    }
    Ranking r;
    r.order.resize(static_cast<std::size_t>(n));
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](int a, int b) { return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)]; });
    for (int i : r.order) r.relevance.push_back(labels[static_cast<std::size_t>(i)] == query_category ? 1 : 0);
    return r;
}

Ranking retrieve(const Tensor& feature, const GallerySnapshot& snap, int query_category) {
    return retrieve(feature, snap.features, snap.labels, query_category);
}

const VariantResult& ZsReport::variant(const std::string& name) const {
    for (const auto& v : variants)
        if (v.name == name) return v;
    throw Error("report has no variant " + name);
}

ZsReport evaluate_zs(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data, std::span<const int> queries,
                     std::span<const int> gallery, const TTTConfig& cfg, int k) {
    validate(cfg);
    if (queries.empty()) throw ConfigError("no test queries");
    ZsReport rep;
    rep.k = k;
    const ParamList& prim = params[Group::primary];
    const ParamList& sdec = params[Group::sketch_decoder];
    const GallerySnapshot frozen = make_snapshot(net, params[Group::encoder], prim, data, gallery, cfg.batch);
    const GallerySnapshot tpa = cfg.use_tpa ? adapt_gallery(net, params, data, gallery, cfg) : frozen;
    rep.gallery_recon = tpa.recon;

    for (const char* name : {"frozen", "tpa_only", "ttt", "ttt_no_tpa"}) rep.variants.emplace_back().name = name;
    const auto score = [&](std::size_t v, const Tensor& feature, const Tensor& gal, std::span<const int> labels, int cat,
                           QueryTrace& tr) {
        const Ranking r = retrieve(feature, gal, labels, cat);
        const double ap = average_precision(r.relevance, v == 0 ? &rep.no_relevant : nullptr);
        rep.variants[v].ap.push_back(ap);
        rep.variants[v].pk.push_back(precision_at_k(r.relevance, k));
        tr.ap.push_back(ap);
    };
    const auto query_gallery = [&](const GallerySnapshot& base, const QueryAdaptation& a) {
        if (!cfg.gallery_refresh || cfg.tau_s == 0) return base.features;
        return make_snapshot(net, a.encoder, prim, data, gallery, cfg.batch).features;
    };

    for (int item : queries) {
        const std::array<int, 1> one{item};
        const Tensor raster = data.sketches(one);
        const SketchBatch vec = data.vectors(one);
        QueryTrace tr;
        tr.item = item;
        tr.category = data.dataset().items.at(static_cast<std::size_t>(item)).category_id;

        score(0, encode_query(net, params[Group::encoder], prim, raster), frozen.features, frozen.labels, tr.category, tr);
        score(1, encode_query(net, tpa.encoder, prim, raster), tpa.features, tpa.labels, tr.category, tr);

        const QueryAdaptation a = adapt_query(net, tpa.encoder, sdec, prim, raster, vec, cfg.tau_s, cfg.lr);
        score(2, a.feature, query_gallery(tpa, a), tpa.labels, tr.category, tr);
        if (cfg.use_tpa) {
            const QueryAdaptation b = adapt_query(net, params[Group::encoder], sdec, prim, raster, vec, cfg.tau_s, cfg.lr);
            score(3, b.feature, query_gallery(frozen, b), frozen.labels, tr.category, tr);
        } else {
            score(3, a.feature, query_gallery(frozen, a), frozen.labels, tr.category, tr);
        }
        tr.fallback = a.fallback;
        if (!a.losses.empty()) {
            tr.loss_pre = a.losses.front();
            tr.loss_post = a.losses.back();
            tr.loss_step1 = a.losses.size() > 1 ? a.losses[1] : a.losses.front();
        }
        rep.queries.push_back(std::move(tr));
    }
    for (auto& v : rep.variants) {
        v.map = mean_over_queries(v.ap);
        v.precision = mean_over_queries(v.pk);
    }
    return rep;
}

} // namespace sketch3t

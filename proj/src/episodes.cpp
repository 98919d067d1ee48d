#include "sketch3t/episodes.hpp"

#include "sketch3t/error.hpp"

#include <algorithm>

namespace sketch3t {

using namespace ad;

namespace {

std::vector<double> planes_of(const RasterImage& im) {
    const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
    std::vector<double> out(plane * 3);
    for (int r = 0; r < im.height; ++r)
        for (int c = 0; c < im.width; ++c)
            for (int ch = 0; ch < 3; ++ch) out[ch * plane + static_cast<std::size_t>(r) * im.width + c] = im.at(r, c, ch);
    return out;
}

} // namespace

ItemTensors::ItemTensors(const Dataset& ds) : ds_(&ds) {
    for (const auto& it : ds.items) {
        if (it.photo.height != ds.canvas || it.photo.width != ds.canvas || it.sketch_raster.height != ds.canvas ||
            it.sketch_raster.width != ds.canvas)
            throw ShapeError("dataset item does not match the canvas size");
        sketch_.push_back(planes_of(it.sketch_raster));
        photo_.push_back(planes_of(it.photo));
        edge_.push_back(planes_of(edgemap(it.photo)));
    }
}

Tensor ItemTensors::gather(const std::vector<std::vector<double>>& planes, std::span<const int> items) const {
    const int c = ds_->canvas;
    Tensor t({static_cast<int>(items.size()), 3, c, c});
    const std::size_t n = static_cast<std::size_t>(3) * c * c;
    for (std::size_t i = 0; i < items.size(); ++i)
        std::copy_n(planes.at(static_cast<std::size_t>(items[i])).begin(), n, t.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    return t;
}

Tensor ItemTensors::sketches(std::span<const int> items) const { return gather(sketch_, items); }
Tensor ItemTensors::photos(std::span<const int> items) const { return gather(photo_, items); }
Tensor ItemTensors::edgemaps(std::span<const int> items) const { return gather(edge_, items); }

SketchBatch ItemTensors::vectors(std::span<const int> items) const {
    std::vector<const VectorSketch*> v;
    v.reserve(items.size());
    for (int i : items) v.push_back(&ds_->items.at(static_cast<std::size_t>(i)).sketch_vec);
    return SketchBatch::from(v);
}

int nearest_row(const Tensor& q, const Tensor& cand) {
    const int n = cand.shape[0], k = cand.shape[1];
    if (q.size() != k) throw ShapeError("query of size " + std::to_string(q.size()) + " against rows of " + std::to_string(k));
    int best = 0;
    double best_d = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = 0.0;
        for (int j = 0; j < k; ++j) {
            const double diff = q.data[static_cast<std::size_t>(j)] - cand.data[static_cast<std::size_t>(i) * k + j];
            d += diff * diff;
        }
        if (i == 0 || d < best_d) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

Episode sample_task(const ItemTensors& data, const Sketch3TNet& net, const ParamSet& params, Rng& rng,
                    const EpisodeConfig& cfg) {
    const Dataset& ds = data.dataset();
    const auto& cats = ds.split.meta_train;
    if (cats.size() < 2) throw SamplingError("need at least two meta-train categories");
    if (cfg.n_trn < 1 || cfg.n_val < 1 || cfg.pool_size < 1) throw ConfigError("episode sizes must be positive");
    Episode ep;
    ep.category = cats[rng.below(cats.size())];

    std::vector<int> own = ds.items_of(ep.category, ds.split.seen_styles);
    const auto need = static_cast<std::size_t>(cfg.n_trn + cfg.n_val);
    if (own.size() < need)
        throw SamplingError("category " + std::to_string(ep.category) + " has " + std::to_string(own.size()) +
                            " seen-style pairs, episode needs " + std::to_string(need));
    // Partial Fisher-Yates: the first `need` slots become a uniform draw.
    for (std::size_t i = 0; i < need; ++i) std::swap(own[i], own[i + rng.below(own.size() - i)]);
    ep.trn.assign(own.begin(), own.begin() + cfg.n_trn);
    ep.val.assign(own.begin() + cfg.n_trn, own.begin() + static_cast<std::ptrdiff_t>(need));

    std::vector<int> others_cats;
    for (int c : cats)
        if (c != ep.category) others_cats.push_back(c);
    const std::vector<int> others = ds.items_in(others_cats, ds.split.seen_styles);
    if (others.empty()) throw SamplingError("no negative candidates outside category " + std::to_string(ep.category));

    const auto choose = [&](const std::vector<int>& anchors) {
        const std::size_t pool_n = static_cast<std::size_t>(cfg.pool_size);
        std::vector<int> pools(anchors.size() * pool_n);
        for (int& p : pools) p = others[rng.below(others.size())];
        std::vector<int> negs(anchors.size());
        if (pool_n == 1) return pools;
        NoGrad ng;
        const auto embed = [&](const Tensor& images) {
            return net.project(params[Group::primary], net.encode(params[Group::encoder], Var::constant(images)).features).value();
        };
        const Tensor fs = embed(data.sketches(anchors));
        const Tensor fp = embed(data.photos(pools));
        const int k = fs.shape[1];
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            const auto row = [&](const Tensor& t, std::size_t r, std::size_t count) {
                const auto b = t.data.begin() + static_cast<std::ptrdiff_t>(r * k);
                return Tensor({static_cast<int>(count), k}, std::vector<double>(b, b + static_cast<std::ptrdiff_t>(count * k)));
            };
            const int best = nearest_row(row(fs, i, 1), row(fp, i * pool_n, pool_n));
            negs[i] = pools[i * pool_n + static_cast<std::size_t>(best)];
        }
        return negs;
    };
    ep.trn_neg = choose(ep.trn);
    ep.val_neg = choose(ep.val);
    return ep;
}

} // namespace sketch3t

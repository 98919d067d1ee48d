#include "sketch3t/dataset.hpp"
#include "sketch3t/error.hpp"
#include "sketch3t/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sketch3t {

namespace {

constexpr double kPi = std::numbers::pi;

Polyline closed(Polyline p) {
    p.push_back(p.front());
    return p;
}

Polyline regular(int n, double radius, double phase) {
    Polyline p;
    for (int i = 0; i < n; ++i) {
        const double a = phase + 2.0 * kPi * i / n;
        p.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return p;
}

Polyline band(const Polyline& centre, double half_width) {
    // Offset the centreline along its normals on both sides and join the ends.
    Polyline left, right;
    for (std::size_t i = 0; i < centre.size(); ++i) {
        const Point2 a = centre[i == 0 ? 0 : i - 1];
        const Point2 b = centre[i + 1 < centre.size() ? i + 1 : i];
        double tx = b.x - a.x, ty = b.y - a.y;
        const double len = std::hypot(tx, ty);
        tx /= len;
        ty /= len;
        left.push_back({centre[i].x - ty * half_width, centre[i].y + tx * half_width});
        right.push_back({centre[i].x + ty * half_width, centre[i].y - tx * half_width});
    }
    std::reverse(right.begin(), right.end());
    left.insert(left.end(), right.begin(), right.end());
    return left;
}

Polyline raw_shape(const std::string& name) {
    if (name == "circle") return regular(16, 1.0, 0.0);
    if (name == "square") return {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
    if (name == "triangle") return regular(3, 1.0, -kPi / 2);
    if (name == "star") {
        Polyline p;
        for (int i = 0; i < 10; ++i) {
            const double r = i % 2 ? 0.42 : 1.0;
            const double a = -kPi / 2 + kPi * i / 5;
            p.push_back({r * std::cos(a), r * std::sin(a)});
        }
        return p;
    }
    if (name == "cross") {
        const double w = 0.3;
        return {{-w, -1}, {w, -1}, {w, -w}, {1, -w}, {1, w}, {w, w}, {w, 1}, {-w, 1}, {-w, w}, {-1, w}, {-1, -w}, {-w, -w}};
    }
    if (name == "arrow")
        return {{-1, -0.22}, {0.2, -0.22}, {0.2, -0.6}, {1, 0}, {0.2, 0.6}, {0.2, 0.22}, {-1, 0.22}};
    if (name == "spiral") {
        Polyline c;
        const int n = 12;
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / (n - 1);
            const double a = 3.0 * kPi * t;
            const double r = 0.2 + 0.8 * t;
            c.push_back({r * std::cos(a), r * std::sin(a)});
        }
        return band(c, 0.11);
    }
    if (name == "zigzag") {
        Polyline c;
        for (int i = 0; i < 5; ++i) c.push_back({-1.0 + 0.5 * i, i % 2 ? 0.5 : -0.5});
        return band(c, 0.16);
    }
    if (name == "house") return {{-0.8, 1}, {0.8, 1}, {0.8, -0.1}, {0, -1}, {-0.8, -0.1}};
    if (name == "flower") {
        Polyline p;
        for (int i = 0; i < 20; ++i) {
            const double a = 2.0 * kPi * i / 20;
            const double r = 0.62 + 0.38 * std::cos(5 * a);
            p.push_back({r * std::cos(a), r * std::sin(a)});
        }
        return p;
    }
    throw ConfigError("unknown shape category '" + name + "'");
}

struct Frame {
    double cx, cy, s;
    Point2 operator()(Point2 p) const { return {0.5 + (p.x - cx) * s, 0.5 + (p.y - cy) * s}; }
};

// The transform to_stroke5 would apply to these polylines.
Frame unit_frame(const std::vector<Polyline>& polys) {
    double minx = INFINITY, miny = INFINITY, maxx = -INFINITY, maxy = -INFINITY;
    for (const auto& p : polys)
        for (const auto& q : p) {
            minx = std::min(minx, q.x);
            maxx = std::max(maxx, q.x);
            miny = std::min(miny, q.y);
            maxy = std::max(maxy, q.y);
        }
    const double extent = std::max(maxx - minx, maxy - miny);
    return {0.5 * (minx + maxx), 0.5 * (miny + maxy), (1.0 - 2.0 * kCanvasMargin) / extent};
}

bool inside(const std::vector<Polyline>& polys, double x, double y) {
    bool in = false;
    for (const auto& p : polys)
        for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
            const Point2 a = p[i], b = p[j];
            if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
        }
    return in;
}

double quantize(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

RasterImage render_photo(const std::vector<Polyline>& outline, int canvas, Rng& rng) {
    const Frame f = unit_frame(outline);
    std::vector<Polyline> unit;
    for (const auto& p : outline) {
        Polyline q;
        for (const auto& v : p) q.push_back(f(v));
        unit.push_back(std::move(q));
    }
    double fill[3], base[3];
    for (int c = 0; c < 3; ++c) fill[c] = rng.uniform(0.05, 0.55);
    const double bg = rng.uniform(0.68, 0.95);
    for (int c = 0; c < 3; ++c) base[c] = std::clamp(bg + rng.uniform(-0.04, 0.04), 0.0, 1.0);
    const double amp = rng.uniform(0.0, 0.06);
    const double freq = rng.uniform(2.0, 6.0);
    const double phi = rng.uniform(0.0, kPi);
    const double phase = rng.uniform(0.0, 2.0 * kPi);

    constexpr int ss = 4;
    RasterImage img(canvas, canvas, ImageKind::photo);
    for (int r = 0; r < canvas; ++r)
        for (int c = 0; c < canvas; ++c) {
            int hits = 0;
            for (int i = 0; i < ss; ++i)
                for (int j = 0; j < ss; ++j) {
                    const double x = (c + (j + 0.5) / ss) / canvas;
                    const double y = (r + (i + 0.5) / ss) / canvas;
                    hits += inside(unit, x, y);
                }
            const double cov = static_cast<double>(hits) / (ss * ss);
            const double u = (c * std::cos(phi) + r * std::sin(phi)) / canvas;
            const double tex = amp * std::sin(2.0 * kPi * freq * u + phase);
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = quantize(cov * fill[ch] + (1.0 - cov) * (base[ch] + tex));
        }
    return img;
}

Polyline chaikin(const Polyline& p) {
    if (p.size() < 3) return p;
    Polyline out{p.front()};
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const Point2 a = p[i], b = p[i + 1];
        out.push_back({0.75 * a.x + 0.25 * b.x, 0.75 * a.y + 0.25 * b.y});
        out.push_back({0.25 * a.x + 0.75 * b.x, 0.25 * a.y + 0.75 * b.y});
    }
    out.push_back(p.back());
    return out;
}

std::vector<Polyline> stylize(const std::vector<Polyline>& outline, const SketchStyle& st, Rng& rng) {
    const double sx = 1.0 + rng.uniform(-st.stretch, st.stretch);
    const double sy = 1.0 + rng.uniform(-st.stretch, st.stretch);
    std::vector<Polyline> strokes;
    for (const Polyline& closed_poly : outline) {
        Polyline poly = closed_poly;
        for (auto& v : poly) {
            v.x *= sx;
            v.y *= sy;
        }
        // closed_poly repeats its first vertex at the end
        const int nv = static_cast<int>(poly.size()) - 1;
        const int k = std::clamp(st.strokes_per_outline, 1, std::max(1, nv / 2));
        const int offset = k > 1 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(nv))) : 0;
        for (int s = 0; s < k; ++s) {
            const int b = s * nv / k, e = (s + 1) * nv / k;
            Polyline part;
            for (int i = b; i <= e; ++i) part.push_back(poly[static_cast<std::size_t>((i + offset) % nv)]);
            strokes.push_back(std::move(part));
        }
    }
    for (auto& s : strokes)
        for (int i = 0; i < st.rounding; ++i) s = chaikin(s);
    if (st.wobble > 0.0) {
        const double ph = rng.uniform(0.0, 2.0 * kPi);
        for (auto& s : strokes)
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double w = st.wobble * std::sin(ph + 1.3 * static_cast<double>(i));
                s[i].x += w;
                s[i].y -= w;
            }
    }
    if (st.jitter > 0.0)
        for (auto& s : strokes)
            for (auto& v : s) {
                v.x += rng.normal(0.0, 2.0 * st.jitter);
                v.y += rng.normal(0.0, 2.0 * st.jitter);
            }
    if (st.drop > 0.0 && strokes.size() > 1) {
        const std::size_t keep = rng.below(strokes.size());
        std::vector<Polyline> kept;
        for (std::size_t i = 0; i < strokes.size(); ++i)
            if (i == keep || !rng.bernoulli(st.drop)) kept.push_back(std::move(strokes[i]));
        strokes = std::move(kept);
    }
    if (st.shuffle > 0.0 && rng.bernoulli(st.shuffle)) {
        rng.shuffle(strokes.begin(), strokes.end());
        for (auto& s : strokes)
            if (rng.bernoulli(0.5)) std::reverse(s.begin(), s.end());
    }
    return strokes;
}

} // namespace

std::vector<SketchStyle> SynthConfig::default_styles() {
    std::vector<SketchStyle> s(6);
    s[0] = {.jitter = 0.008, .rounding = 0, .strokes_per_outline = 1};
    s[1] = {.jitter = 0.02, .rounding = 0, .strokes_per_outline = 2, .shuffle = 0.5};
    s[2] = {.jitter = 0.012, .rounding = 1, .strokes_per_outline = 2};
    s[3] = {.jitter = 0.015, .rounding = 0, .strokes_per_outline = 3, .shuffle = 0.5, .drop = 0.1};
    // held out
    s[4] = {.jitter = 0.035, .rounding = 1, .strokes_per_outline = 3, .shuffle = 1.0, .wobble = 0.04};
    s[5] = {.jitter = 0.025, .rounding = 0, .strokes_per_outline = 4, .shuffle = 0.5, .drop = 0.25, .stretch = 0.25};
    return s;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> names{"circle", "square", "triangle", "star",  "cross",
                                                "arrow",  "spiral", "zigzag",   "house", "flower"};
    return names;
}

std::vector<Polyline> shape_outline(const std::string& name, double rotation, double aspect) {
    Polyline p = raw_shape(name);
    const double c = std::cos(rotation), s = std::sin(rotation);
    for (auto& v : p) {
        const double x = v.x * aspect, y = v.y;
        v = {c * x - s * y, s * x + c * y};
    }
    return {closed(std::move(p))};
}

Dataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    const int ncat = static_cast<int>(cfg.categories.size());
    if (ncat < 6) throw ConfigError("synthetic data needs at least 6 categories, got " + std::to_string(ncat));
    if (cfg.n_meta_train < 1 || cfg.n_unseen < 1 || cfg.n_meta_test < 0)
        throw ConfigError("split sizes must be positive (meta_test may be zero)");
    if (cfg.n_meta_train + cfg.n_meta_test + cfg.n_unseen > ncat)
        throw ConfigError("split needs " + std::to_string(cfg.n_meta_train + cfg.n_meta_test + cfg.n_unseen) +
                          " categories but only " + std::to_string(ncat) + " are configured");
    const int nstyles = static_cast<int>(cfg.styles.size());
    if (nstyles < 1 || cfg.n_heldout_styles < 0 || cfg.n_heldout_styles >= nstyles)
        throw ConfigError("need at least one seen style and 0 <= held-out styles < styles");
    if (cfg.per_category < 1) throw ConfigError("per_category must be positive");
    for (const auto& n : cfg.categories) (void)raw_shape(n);

    Rng rng(derive_seed(seed, "synth"));
    Dataset ds;
    ds.canvas = cfg.canvas;
    ds.line_width = cfg.line_width;
    ds.t_max = cfg.t_max;
    ds.category_names = cfg.categories;

    std::vector<int> order(static_cast<std::size_t>(ncat));
    for (int i = 0; i < ncat; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order.begin(), order.end());
    auto take = [&](int from, int n) {
        std::vector<int> v(order.begin() + from, order.begin() + from + n);
        std::sort(v.begin(), v.end());
        return v;
    };
    ds.split.meta_train = take(0, cfg.n_meta_train);
    ds.split.meta_test = take(cfg.n_meta_train, cfg.n_meta_test);
    ds.split.unseen_test = take(cfg.n_meta_train + cfg.n_meta_test, cfg.n_unseen);
    for (int s = 0; s < nstyles; ++s)
        (s < nstyles - cfg.n_heldout_styles ? ds.split.seen_styles : ds.split.heldout_styles).push_back(s);

    for (int cat = 0; cat < ncat; ++cat)
        for (int j = 0; j < cfg.per_category; ++j) {
            const int style = j % nstyles;
            const double rot = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
            const double aspect = rng.uniform(0.8, 1.25);
            const auto outline = shape_outline(cfg.categories[static_cast<std::size_t>(cat)], rot, aspect);
            RasterImage photo = render_photo(outline, cfg.canvas, rng);
            auto strokes = stylize(outline, cfg.styles[static_cast<std::size_t>(style)], rng);
            ds.items.push_back(make_pair(std::move(strokes), std::move(photo), cat, style, cfg.canvas, cfg.line_width, cfg.t_max));
        }
    return ds;
}

} // namespace sketch3t

#include "sketch3t/nets.hpp"

#include "sketch3t/error.hpp"
#include "sketch3t/rng.hpp"

#include <cmath>
#include <cstring>

namespace sketch3t {

using namespace ad;

namespace {

constexpr int kKernel = 4;
constexpr Conv2dGeom kGeom{2, 1};

Tensor normal_tensor(Shape s, double stddev, Rng& rng) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal(0.0, stddev);
    return t;
}

Tensor uniform_tensor(Shape s, double bound, Rng& rng) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Var linear(const Var& x, const Var& w, const Var& b) { return add(matmul(x, w), b); }

int decoder_start(const NetConfig& c) { return c.canvas >> static_cast<int>(c.dec_channels.size()); }

} // namespace

void validate(const NetConfig& c) {
    const auto positive = [](int v, const char* what) {
        if (v <= 0) throw ConfigError(std::string("net.") + what + " must be positive");
    };
    positive(c.canvas, "canvas");
    positive(c.groups, "groups");
    positive(c.feature_dim, "feature_dim");
    positive(c.primary_dim, "primary_dim");
    positive(c.sketch_aux_dim, "sketch_aux_dim");
    positive(c.hidden, "hidden");
    positive(c.photo_aux_dim, "photo_aux_dim");
    positive(c.eta_hidden, "eta_hidden");
    positive(c.t_max, "t_max");
    if (c.enc_channels.empty() || c.dec_channels.empty()) throw ConfigError("net.enc_channels and net.dec_channels must be nonempty");
    for (int ch : c.enc_channels) {
        positive(ch, "enc_channels");
        if (ch % c.groups != 0) throw ConfigError("net.enc_channels must be divisible by net.groups");
    }
    for (std::size_t i = 1; i < c.dec_channels.size(); ++i)
        if (c.dec_channels[i] % c.groups != 0) throw ConfigError("net.dec_channels must be divisible by net.groups");
    if (c.canvas % (1 << c.enc_channels.size()) != 0) throw ConfigError("net.canvas must be divisible by 2^encoder blocks");
    if (decoder_start(c) < 1 || (decoder_start(c) << c.dec_channels.size()) != c.canvas)
        throw ConfigError("net.canvas must be divisible by 2^decoder blocks");
    if (c.primary_dim >= c.feature_dim) throw ConfigError("net.primary_dim must be smaller than net.feature_dim");
}

// ---- ParamSet ----

ParamList clone_leaves(const ParamList& params) {
    ParamList out;
    out.reserve(params.size());
    for (const Var& v : params) out.push_back(Var::param(v.value()));
    return out;
}

ParamSet ParamSet::clone() const {
    ParamSet p;
    for (std::size_t g = 0; g < groups.size(); ++g) p.groups[g] = clone_leaves(groups[g]);
    p.alpha = Var::param(alpha.value());
    return p;
}

std::vector<Var> ParamSet::leaves() const {
    std::vector<Var> out;
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    out.push_back(alpha);
    return out;
}

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : leaves()) n += static_cast<std::size_t>(v.size());
    return n;
}

bool bit_equal(const ParamList& a, const ParamList& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Tensor &x = a[i].value(), &y = b[i].value();
        if (x.shape != y.shape) return false;
        if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
    for (std::size_t g = 0; g < a.groups.size(); ++g)
        if (!bit_equal(a.groups[g], b.groups[g])) return false;
    return bit_equal(ParamList{a.alpha}, ParamList{b.alpha});
}

// ---- batching helpers ----

SketchBatch SketchBatch::from(std::span<const VectorSketch* const> sketches) {
    SketchBatch b;
    b.batch = static_cast<int>(sketches.size());
    for (const VectorSketch* s : sketches) {
        if (s->points.empty()) throw InvalidSketch("cannot decode an empty sketch");
        b.lengths.push_back(s->length());
        b.steps = std::max(b.steps, s->length());
    }
    b.mask = Tensor({b.batch, b.steps});
    b.targets.assign(static_cast<std::size_t>(b.steps), Tensor({b.batch, 5}));
    for (int i = 0; i < b.batch; ++i)
        for (int t = 0; t < b.lengths[static_cast<std::size_t>(i)]; ++t) {
            const StrokePoint& p = sketches[static_cast<std::size_t>(i)]->points[static_cast<std::size_t>(t)];
            double* row = b.targets[static_cast<std::size_t>(t)].data.data() + i * 5;
            row[0] = p.x;
            row[1] = p.y;
            row[2] = p.q1;
            row[3] = p.q2;
            row[4] = p.q3;
            b.mask.data[static_cast<std::size_t>(i) * b.steps + t] = 1.0;
        }
    return b;
}

Tensor images_to_tensor(std::span<const RasterImage* const> images, int canvas) {
    const int n = static_cast<int>(images.size());
    Tensor t({n, 3, canvas, canvas});
    const std::size_t plane = static_cast<std::size_t>(canvas) * canvas;
    for (int i = 0; i < n; ++i) {
        const RasterImage& im = *images[static_cast<std::size_t>(i)];
        if (im.height != canvas || im.width != canvas)
            throw ShapeError("image is " + std::to_string(im.height) + "x" + std::to_string(im.width) + ", expected " +
                             std::to_string(canvas) + "x" + std::to_string(canvas));
        double* base = t.data.data() + static_cast<std::size_t>(i) * 3 * plane;
        for (int r = 0; r < canvas; ++r)
            for (int c = 0; c < canvas; ++c)
                for (int ch = 0; ch < 3; ++ch) base[ch * plane + static_cast<std::size_t>(r) * canvas + c] = im.at(r, c, ch);
    }
    return t;
}

RasterImage tensor_to_image(const Tensor& t, int index, ImageKind kind) {
    if (t.shape.size() != 4 || t.shape[1] != 3) throw ShapeError("expected [N,3,H,W], got " + to_string(t.shape));
    const int h = t.shape[2], w = t.shape[3];
    RasterImage im(h, w, kind);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double* base = t.data.data() + static_cast<std::size_t>(index) * 3 * plane;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) im.at(r, c, ch) = base[ch * plane + static_cast<std::size_t>(r) * w + c];
    return im;
}

// ---- network ----

Sketch3TNet::Sketch3TNet(NetConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

std::vector<std::string> Sketch3TNet::tensor_names(Group g) const {
    std::vector<std::string> n;
    switch (g) {
    case Group::encoder:
        for (std::size_t i = 0; i < cfg_.enc_channels.size(); ++i) {
            const std::string p = "conv" + std::to_string(i);
            n.insert(n.end(), {p + ".weight", p + ".gn_gamma", p + ".gn_beta"});
        }
        n.insert(n.end(), {"fc.weight", "fc.bias"});
        break;
    case Group::primary:
        n = {"proj.weight", "proj.bias"};
        break;
    case Group::sketch_decoder:
        n = {"reduce.weight", "reduce.bias", "init.weight", "init.bias", "gru.w_feature", "gru.w_point",
             "gru.b_input", "gru.w_hidden", "gru.b_hidden", "out.weight", "out.bias"};
        break;
    case Group::photo_decoder:
        n = {"reduce.weight", "reduce.bias", "fc.weight", "fc.bias"};
        for (std::size_t i = 0; i < cfg_.dec_channels.size(); ++i) {
            const std::string p = "deconv" + std::to_string(i);
            if (i + 1 < cfg_.dec_channels.size())
                n.insert(n.end(), {p + ".weight", p + ".gn_gamma", p + ".gn_beta"});
            else
                n.insert(n.end(), {p + ".weight", p + ".bias"});
        }
        break;
    case Group::eta:
        n = {"l1.weight", "l1.bias", "l2.weight", "l2.bias", "l3.weight", "l3.bias"};
        break;
    default:
        break;
    }
    return n;
}

ParamSet Sketch3TNet::init(std::uint64_t seed, double alpha_init) const {
    Rng rng(derive_seed(seed, "init"));
    ParamSet p;
    const int d = cfg_.feature_dim, H = cfg_.hidden;

    auto& enc = p[Group::encoder];
    int cin = 3;
    for (int cout : cfg_.enc_channels) {
        enc.push_back(Var::param(normal_tensor({cout, cin, kKernel, kKernel}, std::sqrt(2.0 / (cin * kKernel * kKernel)), rng)));
        enc.push_back(Var::param(Tensor({cout}, 1.0)));
        enc.push_back(Var::param(Tensor({cout}, 0.0)));
        cin = cout;
    }
    enc.push_back(Var::param(normal_tensor({cin, d}, std::sqrt(1.0 / cin), rng)));
    enc.push_back(Var::param(Tensor({d}, 0.0)));

    p[Group::primary] = {Var::param(normal_tensor({d, cfg_.primary_dim}, std::sqrt(1.0 / d), rng)),
                         Var::param(Tensor({cfg_.primary_dim}, 0.0))};

    const int da = cfg_.sketch_aux_dim;
    const double gb = 1.0 / std::sqrt(static_cast<double>(H));
    p[Group::sketch_decoder] = {
        Var::param(normal_tensor({d, da}, std::sqrt(1.0 / d), rng)),   Var::param(Tensor({da}, 0.0)),
        Var::param(normal_tensor({da, H}, std::sqrt(1.0 / da), rng)),  Var::param(Tensor({H}, 0.0)),
        Var::param(uniform_tensor({da, 3 * H}, gb, rng)),              Var::param(uniform_tensor({5, 3 * H}, gb, rng)),
        Var::param(uniform_tensor({3 * H}, gb, rng)),                  Var::param(uniform_tensor({H, 3 * H}, gb, rng)),
        Var::param(uniform_tensor({3 * H}, gb, rng)),                  Var::param(normal_tensor({H, 5}, std::sqrt(1.0 / H), rng)),
        Var::param(Tensor({5}, 0.0))};

    auto& pdec = p[Group::photo_decoder];
    const int dp = cfg_.photo_aux_dim, s0 = decoder_start(cfg_), c0 = cfg_.dec_channels.front();
    pdec.push_back(Var::param(normal_tensor({d, dp}, std::sqrt(1.0 / d), rng)));
    pdec.push_back(Var::param(Tensor({dp}, 0.0)));
    pdec.push_back(Var::param(normal_tensor({dp, c0 * s0 * s0}, std::sqrt(2.0 / dp), rng)));
    pdec.push_back(Var::param(Tensor({c0 * s0 * s0}, 0.0)));
    for (std::size_t i = 0; i < cfg_.dec_channels.size(); ++i) {
        const int a = cfg_.dec_channels[i];
        const bool last = i + 1 == cfg_.dec_channels.size();
        const int b = last ? 3 : cfg_.dec_channels[i + 1];
        pdec.push_back(Var::param(normal_tensor({a, b, kKernel, kKernel}, std::sqrt((last ? 1.0 : 2.0) / (a * 4)), rng)));
        if (last) {
            pdec.push_back(Var::param(Tensor({b}, 0.0)));
        } else {
            pdec.push_back(Var::param(Tensor({b}, 1.0)));
            pdec.push_back(Var::param(Tensor({b}, 0.0)));
        }
    }

    const auto jdim = static_cast<int>(gradient_feature_dim());
    const int eh = cfg_.eta_hidden;
    p[Group::eta] = {Var::param(normal_tensor({jdim, eh}, std::sqrt(2.0 / jdim), rng)), Var::param(Tensor({eh}, 0.0)),
                     Var::param(normal_tensor({eh, eh}, std::sqrt(2.0 / eh), rng)),     Var::param(Tensor({eh}, 0.0)),
                     Var::param(Tensor({eh, 1}, 0.0)),                                 Var::param(Tensor({1}, 0.0))};

    p.alpha = Var::param(Tensor::scalar(alpha_init));
    return p;
}

std::size_t Sketch3TNet::phi_weight_index() const { return cfg_.enc_channels.size() * 3; }

std::int64_t Sketch3TNet::phi_size() const {
    return static_cast<std::int64_t>(cfg_.enc_channels.back()) * cfg_.feature_dim + cfg_.feature_dim;
}

Sketch3TNet::Encoded Sketch3TNet::encode(std::span<const Var> enc, const Var& images) const {
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.canvas || s[3] != cfg_.canvas)
        throw ShapeError("encoder expects [N,3," + std::to_string(cfg_.canvas) + "," + std::to_string(cfg_.canvas) + "], got " +
                         to_string(s));
    Var x = images;
    std::size_t at = 0;
    for (std::size_t i = 0; i < cfg_.enc_channels.size(); ++i, at += 3) {
        x = conv2d(x, enc[at], kGeom);
        x = relu(group_norm(x, enc[at + 1], enc[at + 2], cfg_.groups));
    }
    const Shape& xs = x.shape();
    const Var pooled = reshape(scale(sum_to(reshape(x, {xs[0], xs[1], xs[2] * xs[3]}), {xs[0], xs[1], 1}),
                                     1.0 / (xs[2] * xs[3])),
                               {xs[0], xs[1]});
    return {pooled, linear(pooled, enc[at], enc[at + 1])};
}

Var Sketch3TNet::project(std::span<const Var> primary, const Var& features) const {
    if (features.shape().size() != 2 || features.shape()[1] != cfg_.feature_dim)
        throw ShapeError("primary head expects [N," + std::to_string(cfg_.feature_dim) + "], got " + to_string(features.shape()));
    return linear(features, primary[0], primary[1]);
}

std::vector<Var> Sketch3TNet::decode_sketch(std::span<const Var> dec, const Var& features, const SketchBatch& tg,
                                            DecodeMode mode) const {
    if (tg.steps == 0) throw InvalidSketch("cannot decode a zero-length sequence");
    if (features.shape().size() != 2 || features.shape()[0] != tg.batch || features.shape()[1] != cfg_.feature_dim)
        throw ShapeError("sketch decoder features " + to_string(features.shape()));
    const int H = cfg_.hidden;
    const Var reduced = linear(features, dec[0], dec[1]);
    Var h = linear(reduced, dec[2], dec[3]);
    // The feature half of the input projection is constant over time.
    const Var feat_in = add(matmul(reduced, dec[4]), dec[6]);
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(tg.steps));
    Var prev = Var::constant(Tensor({tg.batch, 5}));
    for (int t = 0; t < tg.steps; ++t) {
        const Var gi = add(feat_in, matmul(prev, dec[5]));
        const Var gh = add(matmul(h, dec[7]), dec[8]);
        const Var r = sigmoid(add(slice_cols(gi, 0, H), slice_cols(gh, 0, H)));
        const Var z = sigmoid(add(slice_cols(gi, H, 2 * H), slice_cols(gh, H, 2 * H)));
        const Var n = tanh(add(slice_cols(gi, 2 * H, 3 * H), mul(r, slice_cols(gh, 2 * H, 3 * H))));
        h = add(n, mul(z, sub(h, n)));
        const Var psi = linear(h, dec[9], dec[10]);
        out.push_back(psi);
        if (mode == DecodeMode::teacher_forced) {
            prev = Var::constant(tg.targets[static_cast<std::size_t>(t)]);
        } else {
            const Var pen = exp(log_softmax_rows(slice_cols(psi, 2, 5)));
            const std::array<Var, 2> parts{slice_cols(psi, 0, 2), pen};
            prev = concat_cols(parts);
        }
    }
    return out;
}

Var Sketch3TNet::decode_photo(std::span<const Var> dec, const Var& features) const {
    if (features.shape().size() != 2 || features.shape()[1] != cfg_.feature_dim)
        throw ShapeError("photo decoder features " + to_string(features.shape()));
    const int n = features.shape()[0];
    const int s0 = decoder_start(cfg_);
    const Var reduced = linear(features, dec[0], dec[1]);
    Var x = relu(reshape(linear(reduced, dec[2], dec[3]), {n, cfg_.dec_channels.front(), s0, s0}));
    std::size_t at = 4;
    int size = s0;
    for (std::size_t i = 0; i < cfg_.dec_channels.size(); ++i) {
        size *= 2;
        x = conv2d_transpose(x, dec[at], kGeom, size, size);
        if (i + 1 < cfg_.dec_channels.size()) {
            x = relu(group_norm(x, dec[at + 1], dec[at + 2], cfg_.groups));
            at += 3;
        } else {
            const int c = x.shape()[1];
            x = tanh(add(x, reshape(dec[at + 1], {1, c, 1, 1})));
        }
    }
    return scale(add_scalar(x, 1.0), 0.5);
}

Var Sketch3TNet::stroke_weights(std::span<const Var> eta, const Var& j) const {
    if (j.shape().size() != 2 || j.shape()[1] != gradient_feature_dim())
        throw ShapeError("stroke-weight input must be [R," + std::to_string(gradient_feature_dim()) + "], got " +
                         to_string(j.shape()));
    const Var h1 = relu(linear(j, eta[0], eta[1]));
    const Var h2 = relu(linear(h1, eta[2], eta[3]));
    return sigmoid(linear(h2, eta[4], eta[5]));
}

} // namespace sketch3t

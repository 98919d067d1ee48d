#include "sketch3t/autodiff.hpp"

#include "sketch3t/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace sketch3t::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

Var make_result(Tensor value, std::vector<Var> inputs, Node::BackwardFn backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    if (t_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(inputs.size());
            for (auto& v : inputs) n->parents.push_back(v.node());
            n->backward = std::move(backward);
        }
    }
    return Var(std::move(n));
}

Var parent(const Var& out, std::size_t i) { return Var(out.node()->parents[i]); }

void check_finite_shape(const Shape& s) {
    for (int d : s)
        if (d < 0) throw ShapeError("negative dimension in shape " + to_string(s));
}

// ---- broadcasting machinery ----

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        out[i] = da == 1 ? db : da;
    }
    return out;
}

// Strides of `s` viewed inside an `out`-ranked broadcast (0 on broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    const std::size_t r = out.size();
    std::vector<std::int64_t> st(r, 0);
    std::int64_t acc = 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const std::size_t i = s.size() - 1 - k;
        const std::size_t o = r - 1 - k;
        st[o] = (s[i] == 1 && out[o] != 1) ? 0 : acc;
        acc *= s[i];
    }
    return st;
}

// Calls f(out_index, a_index, b_index) over the broadcast of shapes a,b into out.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    const auto sa = broadcast_strides(a, out);
    const auto sb = broadcast_strides(b, out);
    const std::size_t r = out.size();
    const std::int64_t n = numel(out);
    if (r == 0) {
        if (n == 1) f(0, 0, 0);
        return;
    }
    std::vector<int> idx(r, 0);
    std::int64_t ia = 0, ib = 0;
    const int inner = out[r - 1];
    const std::int64_t sa_in = sa[r - 1], sb_in = sb[r - 1];
    for (std::int64_t o = 0; o < n; o += inner) {
        for (int j = 0; j < inner; ++j) f(o + j, ia + j * sa_in, ib + j * sb_in);
        // advance odometer on axes [0, r-1)
        for (std::size_t ax = r - 1; ax-- > 0;) {
            ++idx[ax];
            ia += sa[ax];
            ib += sb[ax];
            if (idx[ax] < out[ax]) break;
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

template <class Op>
Tensor binary_forward(const Tensor& a, const Tensor& b, Op op) {
    if (a.shape == b.shape) {
        Tensor out(a.shape);
        for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = op(a.data[i], b.data[i]);
        return out;
    }
    Tensor out(broadcast_shape(a.shape, b.shape));
    if (b.size() == 1) {
        const double bv = b.data[0];
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] = op(a.data[i], bv);
        return out;
    }
    for_each_broadcast(out.shape, a.shape, b.shape,
                       [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { out.data[o] = op(a.data[ia], b.data[ib]); });
    return out;
}

template <class Op>
Tensor unary_forward(const Tensor& a, Op op) {
    Tensor out(a.shape);
    for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = op(a.data[i]);
    return out;
}

Var reduce_grad(const Var& g, const Shape& s) { return g.shape() == s ? g : sum_to(g, s); }

// ---- convolution kernels ----

struct ConvDims {
    int n, cin, h, w, cout, k, ho, wo;
};

void im2col(const double* x, const ConvDims& d, Conv2dGeom g, double* cols) {
    const int hw = d.ho * d.wo;
    for (int c = 0; c < d.cin; ++c)
        for (int ki = 0; ki < d.k; ++ki)
            for (int kj = 0; kj < d.k; ++kj) {
                double* row = cols + static_cast<std::int64_t>((c * d.k + ki) * d.k + kj) * hw;
                for (int oh = 0; oh < d.ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    for (int ow = 0; ow < d.wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        row[oh * d.wo + ow] = (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                                                  ? x[(static_cast<std::int64_t>(c) * d.h + ih) * d.w + iw]
                                                  : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, const ConvDims& d, Conv2dGeom g, double* x) {
    const int hw = d.ho * d.wo;
    for (int c = 0; c < d.cin; ++c)
        for (int ki = 0; ki < d.k; ++ki)
            for (int kj = 0; kj < d.k; ++kj) {
                const double* row = cols + static_cast<std::int64_t>((c * d.k + ki) * d.k + kj) * hw;
                for (int oh = 0; oh < d.ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= d.h) continue;
                    for (int ow = 0; ow < d.wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw < 0 || iw >= d.w) continue;
                        x[(static_cast<std::int64_t>(c) * d.h + ih) * d.w + iw] += row[oh * d.wo + ow];
                    }
                }
            }
}

} // namespace

// ---- Tensor ----

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string to_string(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
    check_finite_shape(shape);
    data.assign(static_cast<std::size_t>(numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    check_finite_shape(shape);
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
        throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
}

double Tensor::item() const {
    if (data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape));
    return data[0];
}

// ---- Var / grad mode ----

Var Var::constant(Tensor t) { return leaf(std::move(t), false); }

Var Var::leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return Var(std::move(n));
}

bool grad_enabled() { return t_grad_enabled; }

GradMode::GradMode(bool enabled) : previous_(t_grad_enabled) { t_grad_enabled = enabled; }
GradMode::~GradMode() { t_grad_enabled = previous_; }

std::uint64_t nodes_created() { return g_next_id.load() - 1; }

std::vector<Var> vjp(const Var& output, const Var& seed, std::span<const Var> wrt, bool create_graph) {
    if (seed.shape() != output.shape())
        throw ShapeError("vjp seed shape " + to_string(seed.shape()) + " != output " + to_string(output.shape()));

    std::unordered_map<const Node*, std::size_t> wrt_slot;
    for (std::size_t i = 0; i < wrt.size(); ++i) wrt_slot.emplace(wrt[i].node().get(), i);

    // Reachable recorded nodes.
    std::vector<Node*> order;
    std::unordered_map<const Node*, bool> seen;
    if (output.requires_grad()) {
        std::vector<Node*> stack{output.node().get()};
        seen[output.node().get()] = true;
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            order.push_back(n);
            for (auto& p : n->parents) {
                if (!p->requires_grad || seen.count(p.get())) continue;
                seen[p.get()] = true;
                stack.push_back(p.get());
            }
        }
    }
    // Parents always have smaller ids than children.
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id < b->id; });

    // Keep only nodes from which some wrt target is reachable.
    std::unordered_map<const Node*, bool> needed;
    for (Node* n : order) {
        bool need = wrt_slot.count(n) > 0;
        for (auto& p : n->parents)
            if (!need && p->requires_grad) {
                auto it = needed.find(p.get());
                need = it != needed.end() && it->second;
            }
        needed[n] = need;
    }

    GradMode mode(create_graph);
    std::unordered_map<const Node*, Var> grads;
    if (output.requires_grad()) grads[output.node().get()] = seed;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!needed[n] || !n->backward) continue;
        auto g = grads.find(n);
        if (g == grads.end()) continue;
        const Var out(n->shared_from_this());
        const Var gout = g->second;
        std::vector<Var> pg = n->backward(out, gout);
        for (std::size_t i = 0; i < n->parents.size(); ++i) {
            const Node* p = n->parents[i].get();
            if (!p->requires_grad || !pg[i].defined() || !needed[p]) continue;
            auto slot = grads.find(p);
            if (slot == grads.end())
                grads.emplace(p, pg[i]);
            else
                slot->second = add(slot->second, pg[i]);
        }
        // Intermediate gradients are no longer needed once propagated.
        if (!wrt_slot.count(n)) grads.erase(n);
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto g = grads.find(w.node().get());
        if (g != grads.end())
            result.push_back(g->second);
        else if (w.node().get() == output.node().get())
            result.push_back(seed);
        else
            result.push_back(Var::constant(Tensor(w.shape())));
    }
    return result;
}

std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph) {
    if (output.size() != 1) throw ShapeError("grad() requires a scalar output, got " + to_string(output.shape()));
    return vjp(output, Var::constant(Tensor(output.shape(), 1.0)), wrt, create_graph);
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
    return make_result(binary_forward(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                       [](const Var& out, const Var& g) {
                           return std::vector<Var>{reduce_grad(g, parent(out, 0).shape()),
                                                   reduce_grad(g, parent(out, 1).shape())};
                       });
}

Var sub(const Var& a, const Var& b) {
    return make_result(binary_forward(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                       [](const Var& out, const Var& g) {
                           return std::vector<Var>{reduce_grad(g, parent(out, 0).shape()),
                                                   reduce_grad(neg(g), parent(out, 1).shape())};
                       });
}

Var mul(const Var& a, const Var& b) {
    return make_result(binary_forward(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                       [](const Var& out, const Var& g) {
                           const Var pa = parent(out, 0), pb = parent(out, 1);
                           std::vector<Var> r(2);
                           if (pa.requires_grad()) r[0] = reduce_grad(mul(g, pb), pa.shape());
                           if (pb.requires_grad()) r[1] = reduce_grad(mul(g, pa), pb.shape());
                           return r;
                       });
}

Var div(const Var& a, const Var& b) {
    return make_result(binary_forward(a.value(), b.value(), [](double x, double y) { return x / y; }), {a, b},
                       [](const Var& out, const Var& g) {
                           const Var pa = parent(out, 0), pb = parent(out, 1);
                           std::vector<Var> r(2);
                           if (pa.requires_grad()) r[0] = reduce_grad(div(g, pb), pa.shape());
                           if (pb.requires_grad()) r[1] = reduce_grad(neg(div(mul(g, out), pb)), pb.shape());
                           return r;
                       });
}

Var neg(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return -x; }), {a},
                       [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double s) {
    return make_result(unary_forward(a.value(), [s](double x) { return x * s; }), {a},
                       [s](const Var&, const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
    return make_result(unary_forward(a.value(), [s](double x) { return x + s; }), {a},
                       [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var exp(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return std::exp(x); }), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

Var log(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return std::log(x); }), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{div(g, parent(out, 0))}; });
}

Var tanh(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return std::tanh(x); }), {a},
                       [](const Var& out, const Var& g) {
                           return std::vector<Var>{mul(g, add_scalar(neg(square(out)), 1.0))};
                       });
}

Var sigmoid(const Var& a) {
    return make_result(unary_forward(a.value(),
                                     [](double x) {
                                         return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                                     }),
                       {a}, [](const Var& out, const Var& g) {
                           return std::vector<Var>{mul(g, mul(out, add_scalar(neg(out), 1.0)))};
                       });
}

Var relu(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return x > 0 ? x : 0.0; }), {a},
                       [](const Var& out, const Var& g) {
                           const Tensor mask = unary_forward(parent(out, 0).value(), [](double x) { return x > 0 ? 1.0 : 0.0; });
                           return std::vector<Var>{mul(g, Var::constant(mask))};
                       });
}

Var square(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return x * x; }), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, scale(parent(out, 0), 2.0))}; });
}

Var rsqrt(const Var& a) {
    return make_result(unary_forward(a.value(), [](double x) { return 1.0 / std::sqrt(x); }), {a},
                       [](const Var& out, const Var& g) {
                           return std::vector<Var>{mul(g, scale(mul(out, square(out)), -0.5))};
                       });
}

// ---- shape and reductions ----

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return make_result(Tensor::scalar(s), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{broadcast_to(g, parent(out, 0).shape())}; });
}

Var mean(const Var& a) {
    if (a.size() == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_to(const Var& a, const Shape& target) {
    const Shape full = broadcast_shape(a.shape(), target);
    if (full != a.shape())
        throw ShapeError("sum_to: " + to_string(target) + " is not a reduction of " + to_string(a.shape()));
    Tensor out(target);
    const Tensor& av = a.value();
    for_each_broadcast(full, full, target,
                       [&](std::int64_t, std::int64_t ia, std::int64_t it) { out.data[it] += av.data[ia]; });
    return make_result(std::move(out), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{broadcast_to(g, parent(out, 0).shape())}; });
}

Var broadcast_to(const Var& a, const Shape& target) {
    if (broadcast_shape(a.shape(), target) != target)
        throw ShapeError("broadcast_to: cannot expand " + to_string(a.shape()) + " to " + to_string(target));
    Tensor out(target);
    const Tensor& av = a.value();
    if (av.size() == 1) {
        std::fill(out.data.begin(), out.data.end(), av.data[0]);
    } else {
        for_each_broadcast(target, target, a.shape(),
                           [&](std::int64_t o, std::int64_t, std::int64_t ia) { out.data[o] = av.data[ia]; });
    }
    return make_result(std::move(out), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{sum_to(g, parent(out, 0).shape())}; });
}

Var reshape(const Var& a, const Shape& s) {
    if (numel(s) != a.size()) throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(s));
    return make_result(Tensor(s, a.value().data), {a},
                       [](const Var& out, const Var& g) { return std::vector<Var>{reshape(g, parent(out, 0).shape())}; });
}

namespace {
std::int64_t row_stride(const Shape& s) {
    std::int64_t r = 1;
    for (std::size_t i = 1; i < s.size(); ++i) r *= s[i];
    return r;
}
} // namespace

Var slice_rows(const Var& a, int begin, int end) {
    const Shape& s = a.shape();
    if (s.empty() || begin < 0 || end > s[0] || begin > end)
        throw ShapeError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + to_string(s));
    Shape os = s;
    os[0] = end - begin;
    const std::int64_t rs = row_stride(s);
    Tensor out(os, std::vector<double>(a.value().data.begin() + begin * rs, a.value().data.begin() + end * rs));
    return make_result(std::move(out), {a}, [begin](const Var& out, const Var& g) {
        return std::vector<Var>{pad_rows(g, begin, parent(out, 0).shape()[0])};
    });
}

Var pad_rows(const Var& a, int begin, int total) {
    const Shape& s = a.shape();
    if (s.empty() || begin < 0 || begin + s[0] > total) throw ShapeError("pad_rows out of range for " + to_string(s));
    Shape os = s;
    os[0] = total;
    Tensor out(os);
    const std::int64_t rs = row_stride(s);
    std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin() + begin * rs);
    return make_result(std::move(out), {a}, [begin](const Var& out, const Var& g) {
        return std::vector<Var>{slice_rows(g, begin, begin + parent(out, 0).shape()[0])};
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    Shape os = parts[0].shape();
    if (os.empty()) throw ShapeError("concat_rows of scalars");
    int rows = 0;
    std::vector<Var> inputs(parts.begin(), parts.end());
    std::vector<int> offsets;
    for (const Var& p : parts) {
        Shape tail(p.shape().begin() + 1, p.shape().end());
        if (!std::equal(tail.begin(), tail.end(), os.begin() + 1, os.end()) || p.shape().size() != os.size())
            throw ShapeError("concat_rows shape mismatch: " + to_string(p.shape()) + " vs " + to_string(os));
        offsets.push_back(rows);
        rows += p.shape()[0];
    }
    os[0] = rows;
    Tensor out(os);
    std::int64_t at = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + at);
        at += p.size();
    }
    return make_result(std::move(out), std::move(inputs), [offsets](const Var& out, const Var& g) {
        std::vector<Var> r;
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            const Var p = parent(out, i);
            if (p.requires_grad()) r.push_back(slice_rows(g, offsets[i], offsets[i] + p.shape()[0]));
            else r.emplace_back();
        }
        return r;
    });
}

Var slice_cols(const Var& a, int begin, int end) {
    const Shape& s = a.shape();
    if (s.size() != 2 || begin < 0 || end > s[1] || begin > end) throw ShapeError("slice_cols of " + to_string(s));
    const int rows = s[0], cols = s[1], w = end - begin;
    Tensor out({rows, w});
    for (int r = 0; r < rows; ++r)
        std::copy_n(a.value().data.begin() + static_cast<std::int64_t>(r) * cols + begin, w,
                    out.data.begin() + static_cast<std::int64_t>(r) * w);
    return make_result(std::move(out), {a}, [begin](const Var& out, const Var& g) {
        return std::vector<Var>{pad_cols(g, begin, parent(out, 0).shape()[1])};
    });
}

Var pad_cols(const Var& a, int begin, int total) {
    const Shape& s = a.shape();
    if (s.size() != 2 || begin < 0 || begin + s[1] > total) throw ShapeError("pad_cols of " + to_string(s));
    const int rows = s[0], w = s[1];
    Tensor out({rows, total});
    for (int r = 0; r < rows; ++r)
        std::copy_n(a.value().data.begin() + static_cast<std::int64_t>(r) * w, w,
                    out.data.begin() + static_cast<std::int64_t>(r) * total + begin);
    return make_result(std::move(out), {a}, [begin](const Var& out, const Var& g) {
        return std::vector<Var>{slice_cols(g, begin, begin + parent(out, 0).shape()[1])};
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const int rows = parts[0].shape().at(0);
    int total = 0;
    std::vector<int> offsets;
    for (const Var& p : parts) {
        if (p.shape().size() != 2 || p.shape()[0] != rows) throw ShapeError("concat_cols shape mismatch " + to_string(p.shape()));
        offsets.push_back(total);
        total += p.shape()[1];
    }
    Tensor out({rows, total});
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const int w = parts[i].shape()[1];
        for (int r = 0; r < rows; ++r)
            std::copy_n(parts[i].value().data.begin() + static_cast<std::int64_t>(r) * w, w,
                        out.data.begin() + static_cast<std::int64_t>(r) * total + offsets[i]);
    }
    return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [offsets](const Var& out, const Var& g) {
        std::vector<Var> r;
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            const Var p = parent(out, i);
            if (p.requires_grad()) r.push_back(slice_cols(g, offsets[i], offsets[i] + p.shape()[1]));
            else r.emplace_back();
        }
        return r;
    });
}

// ---- linear algebra ----

Var matmul(const Var& a, const Var& b) {
    const Shape &sa = a.shape(), &sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul " + to_string(sa) + " x " + to_string(sb));
    Tensor out({sa[0], sb[1]});
    MapMat(out.data.data(), sa[0], sb[1]).noalias() =
        CMapMat(a.value().data.data(), sa[0], sa[1]) * CMapMat(b.value().data.data(), sb[0], sb[1]);
    return make_result(std::move(out), {a, b}, [](const Var& out, const Var& g) {
        const Var pa = parent(out, 0), pb = parent(out, 1);
        std::vector<Var> r(2);
        if (pa.requires_grad()) r[0] = matmul(g, transpose(pb));
        if (pb.requires_grad()) r[1] = matmul(transpose(pa), g);
        return r;
    });
}

Var transpose(const Var& a) {
    const Shape& s = a.shape();
    if (s.size() != 2) throw ShapeError("transpose of " + to_string(s));
    Tensor out({s[1], s[0]});
    MapMat(out.data.data(), s[1], s[0]) = CMapMat(a.value().data.data(), s[0], s[1]).transpose();
    return make_result(std::move(out), {a}, [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

int conv_out_size(int in, int k, Conv2dGeom g) { return (in + 2 * g.pad - k) / g.stride + 1; }

Var conv2d(const Var& x, const Var& w, Conv2dGeom geom) {
    const Shape &sx = x.shape(), &sw = w.shape();
    if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1] || sw[2] != sw[3])
        throw ShapeError("conv2d input " + to_string(sx) + " weight " + to_string(sw));
    ConvDims d{sx[0], sx[1], sx[2], sx[3], sw[0], sw[2], 0, 0};
    d.ho = conv_out_size(d.h, d.k, geom);
    d.wo = conv_out_size(d.w, d.k, geom);
    const int kk = d.cin * d.k * d.k, hw = d.ho * d.wo;
    Tensor out({d.n, d.cout, d.ho, d.wo});
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    const CMapMat wm(w.value().data.data(), d.cout, kk);
    for (int n = 0; n < d.n; ++n) {
        im2col(x.value().data.data() + static_cast<std::int64_t>(n) * d.cin * d.h * d.w, d, geom, cols.data());
        MapMat(out.data.data() + static_cast<std::int64_t>(n) * d.cout * hw, d.cout, hw).noalias() =
            wm * CMapMat(cols.data(), kk, hw);
    }
    return make_result(std::move(out), {x, w}, [geom, d](const Var& out, const Var& g) {
        const Var px = parent(out, 0), pw = parent(out, 1);
        std::vector<Var> r(2);
        if (px.requires_grad()) r[0] = conv2d_transpose(g, pw, geom, d.h, d.w);
        if (pw.requires_grad()) r[1] = conv2d_weight(px, g, geom, d.k);
        return r;
    });
}

Var conv2d_transpose(const Var& g, const Var& w, Conv2dGeom geom, int out_h, int out_w) {
    const Shape &sg = g.shape(), &sw = w.shape();
    if (sg.size() != 4 || sw.size() != 4 || sg[1] != sw[0])
        throw ShapeError("conv2d_transpose input " + to_string(sg) + " weight " + to_string(sw));
    ConvDims d{sg[0], sw[1], out_h, out_w, sw[0], sw[2], sg[2], sg[3]};
    if (conv_out_size(out_h, d.k, geom) != d.ho || conv_out_size(out_w, d.k, geom) != d.wo)
        throw ShapeError("conv2d_transpose: output size inconsistent with geometry");
    const int kk = d.cin * d.k * d.k, hw = d.ho * d.wo;
    Tensor out({d.n, d.cin, d.h, d.w});
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    const CMapMat wm(w.value().data.data(), d.cout, kk);
    for (int n = 0; n < d.n; ++n) {
        MapMat(cols.data(), kk, hw).noalias() =
            wm.transpose() * CMapMat(g.value().data.data() + static_cast<std::int64_t>(n) * d.cout * hw, d.cout, hw);
        col2im(cols.data(), d, geom, out.data.data() + static_cast<std::int64_t>(n) * d.cin * d.h * d.w);
    }
    return make_result(std::move(out), {g, w}, [geom, d](const Var& out, const Var& up) {
        const Var pg = parent(out, 0), pw = parent(out, 1);
        std::vector<Var> r(2);
        if (pg.requires_grad()) r[0] = conv2d(up, pw, geom);
        if (pw.requires_grad()) r[1] = conv2d_weight(up, pg, geom, d.k);
        return r;
    });
}

Var conv2d_weight(const Var& x, const Var& g, Conv2dGeom geom, int k) {
    const Shape &sx = x.shape(), &sg = g.shape();
    if (sx.size() != 4 || sg.size() != 4 || sx[0] != sg[0]) throw ShapeError("conv2d_weight " + to_string(sx) + " " + to_string(sg));
    ConvDims d{sx[0], sx[1], sx[2], sx[3], sg[1], k, sg[2], sg[3]};
    if (conv_out_size(d.h, k, geom) != d.ho || conv_out_size(d.w, k, geom) != d.wo)
        throw ShapeError("conv2d_weight: gradient size inconsistent with geometry");
    const int kk = d.cin * d.k * d.k, hw = d.ho * d.wo;
    Tensor out({d.cout, d.cin, k, k});
    MapMat om(out.data.data(), d.cout, kk);
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    for (int n = 0; n < d.n; ++n) {
        im2col(x.value().data.data() + static_cast<std::int64_t>(n) * d.cin * d.h * d.w, d, geom, cols.data());
        om.noalias() += CMapMat(g.value().data.data() + static_cast<std::int64_t>(n) * d.cout * hw, d.cout, hw) *
                        CMapMat(cols.data(), kk, hw).transpose();
    }
    return make_result(std::move(out), {x, g}, [geom, d](const Var& out, const Var& q) {
        const Var px = parent(out, 0), pg = parent(out, 1);
        std::vector<Var> r(2);
        if (px.requires_grad()) r[0] = conv2d_transpose(pg, q, geom, d.h, d.w);
        if (pg.requires_grad()) r[1] = conv2d(px, q, geom);
        return r;
    });
}

// ---- composites ----

Var sum_rows(const Var& a) {
    if (a.shape().size() != 2) throw ShapeError("sum_rows of " + to_string(a.shape()));
    return sum_to(a, {a.shape()[0], 1});
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] % groups != 0) throw ShapeError("group_norm input " + to_string(s));
    const int n = s[0], c = s[1];
    const int rows = n * groups;
    const int per = static_cast<int>(x.size() / rows);
    const Var xr = reshape(x, {rows, per});
    const Var mu = scale(sum_rows(xr), 1.0 / per);
    const Var xc = sub(xr, mu);
    const Var var = scale(sum_rows(square(xc)), 1.0 / per);
    const Var xn = reshape(mul(xc, rsqrt(add_scalar(var, eps))), s);
    (void)n;
    return add(mul(xn, reshape(gamma, {1, c, 1, 1})), reshape(beta, {1, c, 1, 1}));
}

Var log_softmax_rows(const Var& logits) {
    const Shape& s = logits.shape();
    if (s.size() != 2) throw ShapeError("log_softmax_rows of " + to_string(s));
    Tensor shift({s[0], 1});
    for (int r = 0; r < s[0]; ++r) {
        double m = -INFINITY;
        for (int j = 0; j < s[1]; ++j) m = std::max(m, logits.value().data[static_cast<std::int64_t>(r) * s[1] + j]);
        shift.data[r] = m;
    }
    const Var z = sub(logits, Var::constant(std::move(shift)));
    return sub(z, log(sum_rows(exp(z))));
}

} // namespace sketch3t::ad

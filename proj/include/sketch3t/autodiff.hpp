#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// Every backward rule is written in terms of the same recorded operations, so
// the gradient of a graph is itself a graph when requested (create_graph),
// and can be differentiated again. This is what the meta-learning outer loop
// relies on.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sketch3t::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string to_string(const Shape& s);

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> d);

    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    double item() const;

    bool operator==(const Tensor& o) const = default;
};

class Var;

struct Node : std::enable_shared_from_this<Node> {
    using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad_out)>;

    Tensor value;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
    bool requires_grad = false;
    std::uint64_t id = 0;
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    /// Graph leaf holding a copy of t.
    static Var constant(Tensor t);
    static Var leaf(Tensor t, bool requires_grad);
    static Var param(Tensor t) { return leaf(std::move(t), true); }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    std::int64_t size() const { return node_->value.size(); }
    double item() const { return node_->value.item(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// New leaf with the same value, cut from the graph.
    Var detach() const { return constant(value()); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Whether operations record backward information on this thread.
bool grad_enabled();

class GradMode {
public:
    explicit GradMode(bool enabled);
    ~GradMode();
    GradMode(const GradMode&) = delete;
    GradMode& operator=(const GradMode&) = delete;

private:
    bool previous_;
};

struct NoGrad : GradMode {
    NoGrad() : GradMode(false) {}
};

/// Gradients of scalar `output` with respect to each of `wrt`. Inputs that do
/// not influence the output receive zeros. With create_graph the returned
/// gradients are differentiable functions of the graph's leaves.
std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph = false);

/// Same, seeded by an explicit output gradient (vector-Jacobian product).
std::vector<Var> vjp(const Var& output, const Var& seed, std::span<const Var> wrt, bool create_graph = false);

/// Number of nodes created so far on this process (diagnostics).
std::uint64_t nodes_created();

// ---- elementwise (numpy broadcasting) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var rsqrt(const Var& a);

// ---- shape and reductions ----
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum over broadcast axes so the result has `target` shape.
Var sum_to(const Var& a, const Shape& target);
Var broadcast_to(const Var& a, const Shape& target);
Var reshape(const Var& a, const Shape& s);

/// Rows [begin, end) along axis 0.
Var slice_rows(const Var& a, int begin, int end);
Var pad_rows(const Var& a, int begin, int total);
Var concat_rows(std::span<const Var> parts);
/// Columns [begin, end) of a 2-D tensor.
Var slice_cols(const Var& a, int begin, int end);
Var pad_cols(const Var& a, int begin, int total);
Var concat_cols(std::span<const Var> parts);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

struct Conv2dGeom {
    int stride = 1;
    int pad = 0;
};

/// x [N,Cin,H,W], w [Cout,Cin,K,K] -> [N,Cout,Ho,Wo].
Var conv2d(const Var& x, const Var& w, Conv2dGeom g);
/// Adjoint of conv2d in x: g [N,Cout,Ho,Wo], w [Cout,Cin,K,K] -> [N,Cin,H,W].
Var conv2d_transpose(const Var& g, const Var& w, Conv2dGeom geom, int out_h, int out_w);
/// Adjoint of conv2d in w: x [N,Cin,H,W], g [N,Cout,Ho,Wo] -> [Cout,Cin,K,K].
Var conv2d_weight(const Var& x, const Var& g, Conv2dGeom geom, int k);

int conv_out_size(int in, int k, Conv2dGeom g);

// ---- composites ----
/// Group normalization over [N,C,H,W] with per-channel affine [C].
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);
/// Row-wise log-softmax of a 2-D tensor.
Var log_softmax_rows(const Var& logits);
Var sum_rows(const Var& a); // [R,C] -> [R,1]

} // namespace sketch3t::ad

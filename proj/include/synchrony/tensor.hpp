#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace synchrony::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

/// Dense row-major float64 tensor participating in reverse-mode
/// differentiation. Copies share the underlying node.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const { return shape().at(axis); }
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;

    std::span<const double> data() const;
    /// Mutable access to values; only meaningful for leaves (parameters, inputs).
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    /// Accumulated gradient; all zeros when nothing has flowed back yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Reverse sweep from this scalar; accumulates d(this)/d(leaf) into every
    /// reachable leaf with requires_grad.
    void backward() const;

    /// Same values, cut from the graph.
    Tensor detach() const;

    const std::shared_ptr<Node>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // propagates this->grad into parents
    const char* op = "leaf";

    std::vector<double>& ensure_grad();
};

/// Nodes reachable from `root` in topological order (inputs first). A
/// single reverse sweep over this order visits each node once.
std::vector<Node*> build_tape(const Tensor& root);

// ---------------------------------------------------------------------------
// Primitives. Shape mismatches throw ContractError naming both shapes.

Tensor add(const Tensor& a, const Tensor& b);
/// x + bias where bias.shape equals the trailing dims of x.
Tensor add_broadcast(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// [d0, d1, ...] -> [d0, d1 * ...]
Tensor flatten(const Tensor& x);
/// Swap the two trailing axes.
Tensor transpose_last2(const Tensor& x);
/// [..., L] -> [...] keeping the last position along the final axis.
Tensor select_last(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[B, in] W[in, out] + b[out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
/// out[b, i, c] = sum_j op[i, j] x[b, j, c]; `op` is a constant [N, N].
Tensor node_mix(const Tensor& op, const Tensor& x);

/// Causal dilated convolution F(j) = sum_i f(i) x[j - d i] with left zero
/// padding. x: [C_in, L] or [B, C_in, L]; filters: [C_out, C_in, k];
/// bias: [C_out] or undefined. Output has the input's length.
Tensor causal_conv1d(const Tensor& x, const Tensor& filters, const Tensor& bias, std::size_t dilation);

enum class Mode { Train, Infer };

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    explicit BatchNormState(std::size_t features = 0)
        : running_mean(features, 0.0), running_var(features, 1.0) {}
};

/// Per-feature normalization of x[M, F] over the M rows. Train mode uses
/// batch statistics (M >= 2) and updates `state`; infer mode uses the
/// running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  Mode mode);

/// Normalizes over `axis` (default: last) independently for every other
/// index, then applies gamma/beta of length shape[axis].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5,
                  int axis = -1);

Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);

/// -sum_i (a1 y_i log p_i + a0 (1 - y_i) log(1 - p_i)) with p clamped to
/// [clamp, 1 - clamp]. Gradient is zero where clamping is active.
Tensor weighted_bce(const Tensor& p, std::span<const double> labels, double alpha0, double alpha1,
                    double clamp = 1e-7);

// ---------------------------------------------------------------------------

/// Five-point central-difference check of a scalar-valued composite. Returns
/// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|) over all input coordinates.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps = 1e-4);

}  // namespace synchrony::nn

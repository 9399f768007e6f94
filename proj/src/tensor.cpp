#include "synchrony/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "synchrony/error.hpp"

namespace synchrony::nn {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size())
        throw ContractError("tensor of shape " + shape_string(shape) + " given " +
                            std::to_string(values.size()) + " values");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

std::vector<Node*> build_tape(const Tensor& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void Tensor::backward() const {
    if (size() != 1) throw ContractError("backward() requires a scalar, got " + shape_string(shape()));
    if (!node_->requires_grad) return;
    const auto tape = build_tape(*this);
    // Intermediate gradients from a previous sweep must not leak in.
    for (Node* n : tape)
        if (n->backward) n->grad.clear();
    node_->ensure_grad()[0] += 1.0;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                        shape_string(b));
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const auto* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

/// Create the output node; attaches parents/backward only when some input
/// needs a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (any_requires_grad(inputs)) {
        node->requires_grad = true;
        for (const auto* t : inputs)
            if (t->defined()) node->parents.push_back(t->node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

std::vector<double>* grad_of(const std::shared_ptr<Node>& n) {
    return n->requires_grad ? &n->ensure_grad() : nullptr;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
    std::vector<double> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return make_result("add", a.shape(), std::move(out), {&a, &b}, [an, bn](Node& self) {
        for (auto* g : {grad_of(an), grad_of(bn)})
            if (g)
                for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor add_broadcast(const Tensor& x, const Tensor& bias) {
    const auto& xs = x.shape();
    const auto& bs = bias.shape();
    if (bs.size() > xs.size() || !std::equal(bs.rbegin(), bs.rend(), xs.rbegin()))
        shape_mismatch("add_broadcast", xs, bs);
    const std::size_t inner = bias.size();
    const std::size_t outer = x.size() / std::max<std::size_t>(inner, 1);
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bv = bias.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += bv[i];
    auto xn = x.node(), bn = bias.node();
    return make_result("add_broadcast", xs, std::move(out), {&x, &bias}, [xn, bn, inner, outer](Node& self) {
        if (auto* g = grad_of(xn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = grad_of(bn))
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < inner; ++i) (*g)[i] += self.grad[o * inner + i];
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    const auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
    auto xn = x.node();
    return make_result("scale", x.shape(), std::move(out), {&x}, [xn, c](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += c * self.grad[i];
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xn = x.node();
    return make_result("relu", x.shape(), std::move(out), {&x}, [xn](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > 0.0) g[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        // Branch keeps exp() from overflowing for large |v|.
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
        // Saturation would otherwise round to exactly 0 or 1; probabilities
        // stay strictly inside (0, 1).
        out[i] = std::clamp(out[i], std::numeric_limits<double>::denorm_min(), 1.0 - 0x1p-53);
    }
    auto xn = x.node();
    return make_result("sigmoid", x.shape(), std::move(out), {&x}, [xn](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.value[i];
            g[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
    auto xn = x.node();
    return make_result("reshape", std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                       {&x}, [xn](Node& self) {
                           auto& g = xn->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                       });
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 1) throw ContractError("flatten: scalar input");
    return reshape(x, {x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
}

Tensor transpose_last2(const Tensor& x) {
    if (x.rank() < 2) throw ContractError("transpose_last2: rank " + std::to_string(x.rank()) + " input");
    const std::size_t r = x.rank();
    const std::size_t rows = x.dim(r - 2), cols = x.dim(r - 1);
    const std::size_t outer = x.size() / (rows * cols);
    Shape shape = x.shape();
    std::swap(shape[r - 2], shape[r - 1]);
    std::vector<double> out(x.size());
    const auto xv = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = xv.data() + o * rows * cols;
        double* dst = out.data() + o * rows * cols;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
    }
    auto xn = x.node();
    return make_result("transpose_last2", std::move(shape), std::move(out), {&x},
                       [xn, outer, rows, cols](Node& self) {
                           auto& g = xn->ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o) {
                               const double* src = self.grad.data() + o * rows * cols;
                               double* dst = g.data() + o * rows * cols;
                               for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < cols; ++j) dst[i * cols + j] += src[j * rows + i];
                           }
                       });
}

Tensor select_last(const Tensor& x) {
    if (x.rank() < 1) throw ContractError("select_last: scalar input");
    const std::size_t len = x.shape().back();
    const std::size_t outer = x.size() / len;
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<double> out(outer);
    const auto xv = x.data();
    for (std::size_t o = 0; o < outer; ++o) out[o] = xv[o * len + len - 1];
    auto xn = x.node();
    return make_result("select_last", std::move(shape), std::move(out), {&x}, [xn, len, outer](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) g[o * len + len - 1] += self.grad[o];
    });
}

namespace {

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[m,k] += A[m,n] B[k,n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto an = a.node(), bn = b.node();
    return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](Node& self) {
        if (auto* g = grad_of(an)) gemm_nt(self.grad.data(), bn->value.data(), g->data(), m, n, k);
        if (auto* g = grad_of(bn)) gemm_tn(an->value.data(), self.grad.data(), g->data(), m, k, n);
    });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) { return add_broadcast(matmul(x, w), b); }

Tensor node_mix(const Tensor& op, const Tensor& x) {
    if (op.rank() != 2 || op.dim(0) != op.dim(1)) shape_mismatch("node_mix", op.shape(), x.shape());
    if (op.requires_grad()) throw ContractError("node_mix: operator must be a constant");
    const std::size_t n = op.dim(0);
    if (x.rank() != 3 || x.dim(1) != n) shape_mismatch("node_mix", op.shape(), x.shape());
    const std::size_t batch = x.dim(0), c = x.dim(2);
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        gemm_nn(op.data().data(), x.data().data() + b * n * c, out.data() + b * n * c, n, n, c);
    auto on = op.node(), xn = x.node();
    return make_result("node_mix", x.shape(), std::move(out), {&x}, [on, xn, batch, n, c](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b)
            gemm_tn(on->value.data(), self.grad.data() + b * n * c, g.data() + b * n * c, n, n, c);
    });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& filters, const Tensor& bias, std::size_t dilation) {
    if (dilation < 1) throw ContractError("causal_conv1d: dilation must be >= 1");
    if (filters.rank() != 3 || filters.dim(2) < 1) shape_mismatch("causal_conv1d", x.shape(), filters.shape());
    const bool batched = x.rank() == 3;
    if (!batched && x.rank() != 2) shape_mismatch("causal_conv1d", x.shape(), filters.shape());
    const std::size_t batch = batched ? x.dim(0) : 1;
    const std::size_t cin = x.dim(batched ? 1 : 0), len = x.dim(batched ? 2 : 1);
    const std::size_t cout = filters.dim(0), k = filters.dim(2);
    if (filters.dim(1) != cin) shape_mismatch("causal_conv1d", x.shape(), filters.shape());
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
        shape_mismatch("causal_conv1d", filters.shape(), bias.shape());

    Shape out_shape = batched ? Shape{batch, cout, len} : Shape{cout, len};
    std::vector<double> out(batch * cout * len, 0.0);
    const double* xv = x.data().data();
    const double* wv = filters.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* y = out.data() + (b * cout + co) * len;
            if (bias.defined()) std::fill(y, y + len, bias.data()[co]);
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* xr = xv + (b * cin + ci) * len;
                for (std::size_t tap = 0; tap < k; ++tap) {
                    const double w = wv[(co * cin + ci) * k + tap];
                    const std::size_t shift = dilation * tap;
                    if (shift >= len || w == 0.0) continue;
                    for (std::size_t j = shift; j < len; ++j) y[j] += w * xr[j - shift];
                }
            }
        }
    }
    auto xn = x.node(), fn = filters.node(), bn = bias.defined() ? bias.node() : nullptr;
    return make_result("causal_conv1d", std::move(out_shape), std::move(out), {&x, &filters, &bias},
                       [xn, fn, bn, batch, cin, cout, len, k, dilation](Node& self) {
                           auto* gx = grad_of(xn);
                           auto* gw = grad_of(fn);
                           auto* gb = bn ? grad_of(bn) : nullptr;
                           const double* wv = fn->value.data();
                           const double* xv = xn->value.data();
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t co = 0; co < cout; ++co) {
                                   const double* gy = self.grad.data() + (b * cout + co) * len;
                                   if (gb) {
                                       double s = 0.0;
                                       for (std::size_t j = 0; j < len; ++j) s += gy[j];
                                       (*gb)[co] += s;
                                   }
                                   for (std::size_t ci = 0; ci < cin; ++ci) {
                                       const std::size_t row = (b * cin + ci) * len;
                                       for (std::size_t tap = 0; tap < k; ++tap) {
                                           const std::size_t shift = dilation * tap;
                                           if (shift >= len) continue;
                                           const std::size_t widx = (co * cin + ci) * k + tap;
                                           if (gx) {
                                               const double w = wv[widx];
                                               double* g = gx->data() + row;
                                               for (std::size_t j = shift; j < len; ++j) g[j - shift] += w * gy[j];
                                           }
                                           if (gw) {
                                               const double* xr = xv + row;
                                               double acc = 0.0;
                                               for (std::size_t j = shift; j < len; ++j) acc += gy[j] * xr[j - shift];
                                               (*gw)[widx] += acc;
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode) {
    if (x.rank() != 2) throw ContractError("batch_norm: expected [M, F] input, got " + shape_string(x.shape()));
    const std::size_t m = x.dim(0), f = x.dim(1);
    if (gamma.shape() != Shape{f} || beta.shape() != Shape{f}) shape_mismatch("batch_norm", x.shape(), gamma.shape());
    if (state.running_mean.size() != f) throw ContractError("batch_norm: running statistics have wrong width");
    const double eps = state.eps;
    const auto xv = x.data();
    const auto gv = gamma.data(), bv = beta.data();

    std::vector<double> mean(f, 0.0), inv_std(f, 0.0), xhat(m * f), out(m * f);
    if (mode == Mode::Train) {
        if (m < 2) throw ContractError("batch_norm: train mode needs at least 2 rows, got " + std::to_string(m));
        std::vector<double> var(f, 0.0);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < f; ++c) mean[c] += xv[r * f + c];
        for (auto& v : mean) v /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < f; ++c) {
                const double d = xv[r * f + c] - mean[c];
                var[c] += d * d;
            }
        for (std::size_t c = 0; c < f; ++c) {
            var[c] /= static_cast<double>(m);
            inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
            state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean[c];
            state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
        }
    } else {
        for (std::size_t c = 0; c < f; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
        }
    }
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < f; ++c) {
            const std::size_t i = r * f + c;
            xhat[i] = (xv[i] - mean[c]) * inv_std[c];
            out[i] = gv[c] * xhat[i] + bv[c];
        }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    const bool train = mode == Mode::Train;
    return make_result("batch_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                       [xn, gn, bn, m, f, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const auto& gy = self.grad;
                           std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
                           for (std::size_t r = 0; r < m; ++r)
                               for (std::size_t c = 0; c < f; ++c) {
                                   sum_g[c] += gy[r * f + c];
                                   sum_gx[c] += gy[r * f + c] * xhat[r * f + c];
                               }
                           if (auto* g = grad_of(gn))
                               for (std::size_t c = 0; c < f; ++c) (*g)[c] += sum_gx[c];
                           if (auto* g = grad_of(bn))
                               for (std::size_t c = 0; c < f; ++c) (*g)[c] += sum_g[c];
                           if (auto* g = grad_of(xn)) {
                               const double inv_m = 1.0 / static_cast<double>(m);
                               for (std::size_t r = 0; r < m; ++r)
                                   for (std::size_t c = 0; c < f; ++c) {
                                       const std::size_t i = r * f + c;
                                       const double scale_c = gn->value[c] * inv_std[c];
                                       if (train)
                                           (*g)[i] += scale_c * (gy[i] - inv_m * sum_g[c] - xhat[i] * inv_m * sum_gx[c]);
                                       else
                                           (*g)[i] += scale_c * gy[i];
                                   }
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, int axis) {
    const auto rank = static_cast<int>(x.rank());
    if (rank < 1) throw ContractError("layer_norm: scalar input");
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ContractError("layer_norm: axis out of range");
    const auto ax = static_cast<std::size_t>(axis);
    const std::size_t f = x.dim(ax);
    if (gamma.shape() != Shape{f} || beta.shape() != Shape{f}) shape_mismatch("layer_norm", x.shape(), gamma.shape());
    std::size_t inner = 1;
    for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= x.dim(d);
    const std::size_t outer = x.size() / (f * inner);

    const auto xv = x.data();
    const auto gv = gamma.data(), bv = beta.data();
    std::vector<double> xhat(x.size()), out(x.size()), inv_std(outer * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * f * inner + in;
            double mean = 0.0;
            for (std::size_t c = 0; c < f; ++c) mean += xv[base + c * inner];
            mean /= static_cast<double>(f);
            double var = 0.0;
            for (std::size_t c = 0; c < f; ++c) {
                const double d = xv[base + c * inner] - mean;
                var += d * d;
            }
            var /= static_cast<double>(f);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * inner + in] = is;
            for (std::size_t c = 0; c < f; ++c) {
                const std::size_t i = base + c * inner;
                xhat[i] = (xv[i] - mean) * is;
                out[i] = gv[c] * xhat[i] + bv[c];
            }
        }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_result("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                       [xn, gn, bn, f, inner, outer, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const auto& gy = self.grad;
                           auto* gg = grad_of(gn);
                           auto* gb = grad_of(bn);
                           auto* gx = grad_of(xn);
                           const double inv_f = 1.0 / static_cast<double>(f);
                           for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t in = 0; in < inner; ++in) {
                                   const std::size_t base = o * f * inner + in;
                                   double sum_d = 0.0, sum_dx = 0.0;
                                   for (std::size_t c = 0; c < f; ++c) {
                                       const std::size_t i = base + c * inner;
                                       const double d = gy[i] * gn->value[c];
                                       sum_d += d;
                                       sum_dx += d * xhat[i];
                                       if (gg) (*gg)[c] += gy[i] * xhat[i];
                                       if (gb) (*gb)[c] += gy[i];
                                   }
                                   if (!gx) continue;
                                   const double is = inv_std[o * inner + in];
                                   for (std::size_t c = 0; c < f; ++c) {
                                       const std::size_t i = base + c * inner;
                                       const double d = gy[i] * gn->value[c];
                                       (*gx)[i] += is * (d - inv_f * sum_d - xhat[i] * inv_f * sum_dx);
                                   }
                               }
                       });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto xn = x.node();
    return make_result("sum", {}, {s}, {&x}, [xn](Node& self) {
        auto& g = xn->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor sum_squares(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    auto xn = x.node();
    return make_result("sum_squares", {}, {s}, {&x}, [xn](Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * xn->value[i] * self.grad[0];
    });
}

Tensor weighted_bce(const Tensor& p, std::span<const double> labels, double alpha0, double alpha1, double clamp) {
    if (p.size() != labels.size())
        throw ContractError("weighted_bce: " + std::to_string(p.size()) + " predictions for " +
                            std::to_string(labels.size()) + " labels");
    const auto pv = p.data();
    double loss = 0.0;
    std::vector<double> dp(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double raw = pv[i];
        const double q = std::clamp(raw, clamp, 1.0 - clamp);
        const double y = labels[i];
        loss -= alpha1 * y * std::log(q) + alpha0 * (1.0 - y) * std::log(1.0 - q);
        if (raw > clamp && raw < 1.0 - clamp) dp[i] = -alpha1 * y / q + alpha0 * (1.0 - y) / (1.0 - q);
    }
    auto pn = p.node();
    return make_result("weighted_bce", {}, {loss}, {&p}, [pn, dp = std::move(dp)](Node& self) {
        auto& g = pn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dp[i] * self.grad[0];
    });
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  double eps) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    const Tensor y = f(inputs);
    y.backward();
    double worst = 0.0;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            // Five-point stencil: O(h^4) truncation lets h be large enough
            // that rounding in f stays far below the gradient.
            auto at = [&](double offset) {
                values[i] = saved + offset;
                return f(inputs).item();
            };
            const double near = at(eps) - at(-eps);
            const double far = at(2 * eps) - at(-2 * eps);
            const double numeric = (8 * near - far) / (12 * eps);
            values[i] = saved;
            const double err = std::abs(analytic[i] - numeric) /
                               std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace synchrony::nn

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sumlab/common.hpp"

namespace sumlab {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Thread-local switch for graph recording. Inference and finite-difference
// probes run with recording off so no tape is built.
namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_mode_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense tensor with an optional reverse-mode tape attachment.
///
/// Values live in a flat row-major buffer; rank 0 (scalar), 1 and 2 are
/// supported. Copies share storage; the tape is a DAG of nodes linked
/// through parent pointers, consumed by backward().
template <typename S>
class Tensor {
    struct Node {
        Shape shape;
        VectorX<S> value;
        VectorX<S> grad;  // empty unless populated
        bool requires_grad = false;
        bool consumed = false;
        std::uint64_t id = 0;
        std::string name;
        std::vector<std::shared_ptr<Node>> parents;
        // Receives this node's grad, accumulates into parents' grads.
        std::function<void(Node&)> backward_fn;

        bool on_graph() const { return requires_grad || !parents.empty(); }
    };

public:
    using Scalar = S;

    Tensor() = default;

    static Tensor from_flat(Shape shape, VectorX<S> data) {
        if (numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        t.node_->id = next_id();
        return t;
    }

    static Tensor zeros(Shape shape) {
        const Index n = numel(shape);
        return from_flat(std::move(shape), VectorX<S>::Zero(n));
    }

    static Tensor full(Shape shape, S fill) {
        const Index n = numel(shape);
        return from_flat(std::move(shape), VectorX<S>::Constant(n, fill));
    }

    static Tensor scalar(S v) { return from_flat(Shape{}, VectorX<S>::Constant(1, v)); }

    static Tensor from_matrix(const MatrixX<S>& m) {
        VectorX<S> flat(m.size());
        Eigen::Map<MatrixX<S>>(flat.data(), m.rows(), m.cols()) = m;
        return from_flat(Shape{m.rows(), m.cols()}, std::move(flat));
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<S>> rows) {
        const Index r = static_cast<Index>(rows.size());
        const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
        MatrixX<S> m(r, c);
        Index i = 0;
        for (const auto& row : rows) {
            if (static_cast<Index>(row.size()) != c)
                throw ShapeError("ragged row in tensor literal");
            Index j = 0;
            for (S v : row) m(i, j++) = v;
            ++i;
        }
        return from_matrix(m);
    }

    static Tensor from_vector(const std::vector<S>& v) {
        VectorX<S> flat = Eigen::Map<const VectorX<S>>(v.data(), static_cast<Index>(v.size()));
        return from_flat(Shape{static_cast<Index>(v.size())}, std::move(flat));
    }

    /// Leaf parameter: grads accumulate here during backward.
    static Tensor param(Shape shape, std::string name = {}) {
        Tensor t = zeros(std::move(shape));
        t.node_->requires_grad = true;
        t.node_->name = std::move(name);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return require().shape; }
    Index size() const { return require().value.size(); }
    Index rank() const { return static_cast<Index>(require().shape.size()); }
    Index rows() const { return dim2().first; }
    Index cols() const { return dim2().second; }
    const std::string& name() const { return require().name; }
    void set_name(std::string name) { require().name = std::move(name); }
    std::uint64_t node_id() const { return require().id; }
    bool requires_grad() const { return require().requires_grad; }
    void set_requires_grad(bool v) { require().requires_grad = v; }
    bool on_graph() const { return require().on_graph(); }

    const VectorX<S>& flat() const { return require().value; }
    VectorX<S>& flat_mut() { return require().value; }

    Eigen::Map<const MatrixX<S>> matrix() const {
        auto [r, c] = dim2();
        return Eigen::Map<const MatrixX<S>>(require().value.data(), r, c);
    }
    Eigen::Map<MatrixX<S>> matrix_mut() {
        auto [r, c] = dim2();
        return Eigen::Map<MatrixX<S>>(require().value.data(), r, c);
    }

    S item() const {
        if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
        return require().value[0];
    }

    S operator()(Index r, Index c) const { return matrix()(r, c); }

    bool has_grad() const { return require().grad.size() == size(); }
    const VectorX<S>& grad() const {
        if (!has_grad()) throw GraphError("tensor has no gradient; run backward first");
        return require().grad;
    }
    Eigen::Map<const MatrixX<S>> grad_matrix() const {
        auto [r, c] = dim2();
        return Eigen::Map<const MatrixX<S>>(grad().data(), r, c);
    }
    void zero_grad() { require().grad.resize(0); }
    void set_grad(VectorX<S> g) {
        if (g.size() != size()) throw ShapeError("set_grad: size mismatch");
        require().grad = std::move(g);
    }

    bool all_finite() const { return require().value.allFinite(); }

    /// Value-only copy with no tape attachment.
    Tensor detach() const {
        Tensor t = from_flat(shape(), require().value);
        t.require().name = require().name;
        return t;
    }

    /// Reverse pass from a scalar. Populates grad on every reachable
    /// parameter and consumes the graph; a second call is an error.
    void backward() const {
        Node& root = require();
        if (root.value.size() != 1) throw GraphError("backward requires a scalar tensor");
        if (root.consumed) throw GraphError("graph already consumed; re-run the forward pass");
        if (!root.on_graph()) throw GraphError("backward on a detached tensor");

        // Iterative post-order topo sort. The order holds shared ownership
        // so freeing interior nodes mid-pass cannot dangle.
        std::vector<std::shared_ptr<Node>> order;
        std::unordered_set<Node*> visited;
        std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
        stack.emplace_back(node_, 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (node->consumed)
                throw GraphError("graph already consumed; re-run the forward pass");
            if (next < node->parents.size()) {
                const std::shared_ptr<Node>& parent = node->parents[next++];
                if (visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        for (const auto& n : order)
            if (n->grad.size() != n->value.size()) n->grad = VectorX<S>::Zero(n->value.size());
        root.grad[0] = S(1);

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = it->get();
            if (n->backward_fn) n->backward_fn(*n);
            if (!n->parents.empty()) {
                // Interior nodes are spent: drop closures and buffers so the
                // graph cannot be walked twice and memory is released.
                n->consumed = true;
                n->backward_fn = nullptr;
                n->parents.clear();
                n->grad.resize(0);
            }
        }
        root.consumed = true;
    }

    // --- op construction helpers (used by the free functions below) ---

    static Tensor make_op(Shape shape, VectorX<S> value,
                          std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn) {
        Tensor t = from_flat(std::move(shape), std::move(value));
        if (!grad_mode_enabled()) return t;
        bool any = false;
        for (const auto& p : parents) any = any || p.require().on_graph();
        if (!any) return t;
        t.node_->parents.reserve(parents.size());
        for (auto& p : parents) t.node_->parents.push_back(p.node_);
        t.node_->backward_fn = std::move(backward_fn);
        return t;
    }

    struct NodeAccess {
        static VectorX<S>& grad_of(Node& n) { return n.grad; }
        static const VectorX<S>& value_of(const Node& n) { return n.value; }
        static Node& parent(Node& n, std::size_t i) { return *n.parents.at(i); }
        static void accumulate(Node& target, const VectorX<S>& g) {
            if (target.grad.size() != target.value.size())
                target.grad = VectorX<S>::Zero(target.value.size());
            target.grad += g;
        }
        static Eigen::Map<MatrixX<S>> grad_matrix(Node& n, Index r, Index c) {
            if (n.grad.size() != n.value.size()) n.grad = VectorX<S>::Zero(n.value.size());
            return Eigen::Map<MatrixX<S>>(n.grad.data(), r, c);
        }
        static Eigen::Map<const MatrixX<S>> value_matrix(const Node& n, Index r, Index c) {
            return Eigen::Map<const MatrixX<S>>(n.value.data(), r, c);
        }
    };
    using NodeT = Node;

private:
    Node& require() const {
        if (!node_) throw GraphError("operation on an undefined tensor");
        return *node_;
    }

    std::pair<Index, Index> dim2() const {
        const Shape& s = require().shape;
        if (s.size() == 2) return {s[0], s[1]};
        if (s.size() == 1) return {Index(1), s[0]};
        if (s.empty()) return {Index(1), Index(1)};
        throw ShapeError("matrix view needs rank <= 2, got shape " + shape_str(s));
    }

    static std::uint64_t next_id() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1);
    }

    std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------
// Free functions: the op vocabulary. Each records its backward rule when
// grad mode is on and any input sits on the graph.
// ---------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul needs rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    if (a.cols() != b.rows())
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const Index p = a.rows(), q = a.cols(), r = b.cols();
    VectorX<S> out(p * r);
    Eigen::Map<MatrixX<S>>(out.data(), p, r).noalias() = a.matrix() * b.matrix();

    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(
        Shape{p, r}, std::move(out), {a, b},
        [p, q, r](typename Tensor<S>::NodeT& n) {
            auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), p, r);
            auto& pa = NA::parent(n, 0);
            auto& pb = NA::parent(n, 1);
            auto av = NA::value_matrix(pa, p, q);
            auto bv = NA::value_matrix(pb, q, r);
            NA::grad_matrix(pa, p, q).noalias() += grad * bv.transpose();
            NA::grad_matrix(pb, q, r).noalias() += av.transpose() * grad;
        });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    if (a.rank() != 2) throw ShapeError("transpose needs a rank-2 tensor");
    const Index r = a.rows(), c = a.cols();
    VectorX<S> out(r * c);
    Eigen::Map<MatrixX<S>>(out.data(), c, r) = a.matrix().transpose();
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{c, r}, std::move(out), {a},
                              [r, c](typename Tensor<S>::NodeT& n) {
                                  auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), c, r);
                                  NA::grad_matrix(NA::parent(n, 0), r, c).noalias() +=
                                      grad.transpose();
                              });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(a.shape(), a.flat() + b.flat(), {a, b},
                              [](typename Tensor<S>::NodeT& n) {
                                  NA::accumulate(NA::parent(n, 0), NA::grad_of(n));
                                  NA::accumulate(NA::parent(n, 1), NA::grad_of(n));
                              });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(a.shape(), a.flat() - b.flat(), {a, b},
                              [](typename Tensor<S>::NodeT& n) {
                                  NA::accumulate(NA::parent(n, 0), NA::grad_of(n));
                                  VectorX<S> neg = -NA::grad_of(n);
                                  NA::accumulate(NA::parent(n, 1), neg);
                              });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(a.shape(), a.flat().cwiseProduct(b.flat()), {a, b},
                              [](typename Tensor<S>::NodeT& n) {
                                  auto& pa = NA::parent(n, 0);
                                  auto& pb = NA::parent(n, 1);
                                  VectorX<S> ga = NA::grad_of(n).cwiseProduct(NA::value_of(pb));
                                  VectorX<S> gb = NA::grad_of(n).cwiseProduct(NA::value_of(pa));
                                  NA::accumulate(pa, ga);
                                  NA::accumulate(pb, gb);
                              });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(a.shape(), (a.flat() * factor).eval(), {a},
                              [factor](typename Tensor<S>::NodeT& n) {
                                  VectorX<S> g = NA::grad_of(n) * factor;
                                  NA::accumulate(NA::parent(n, 0), g);
                              });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    // Sequential reduction over the flat index keeps results bit-stable.
    S total = S(0);
    const auto& v = a.flat();
    for (Index i = 0; i < v.size(); ++i) total += v[i];
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{}, VectorX<S>::Constant(1, total), {a},
                              [](typename Tensor<S>::NodeT& n) {
                                  auto& p = NA::parent(n, 0);
                                  VectorX<S> g =
                                      VectorX<S>::Constant(NA::value_of(p).size(), NA::grad_of(n)[0]);
                                  NA::accumulate(p, g);
                              });
}

/// Broadcast-add a rank-1 bias over every row of a rank-2 tensor.
template <typename S>
Tensor<S> add_bias_rows(const Tensor<S>& x, const Tensor<S>& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.size() != x.cols())
        throw ShapeError("add_bias_rows: need [m x n] and [n], got " + shape_str(x.shape()) +
                         " and " + shape_str(bias.shape()));
    const Index m = x.rows(), c = x.cols();
    VectorX<S> out(m * c);
    Eigen::Map<MatrixX<S>>(out.data(), m, c) =
        x.matrix().rowwise() + bias.flat().transpose();
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, c}, std::move(out), {x, bias},
                              [m, c](typename Tensor<S>::NodeT& n) {
                                  auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, c);
                                  NA::grad_matrix(NA::parent(n, 0), m, c) += grad;
                                  VectorX<S> gb = grad.colwise().sum().transpose();
                                  NA::accumulate(NA::parent(n, 1), gb);
                              });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, Index first, Index count) {
    if (a.rank() != 2) throw ShapeError("slice_cols needs a rank-2 tensor");
    if (first < 0 || count <= 0 || first + count > a.cols())
        throw ShapeError("slice_cols range out of bounds");
    const Index m = a.rows(), c = a.cols();
    VectorX<S> out(m * count);
    Eigen::Map<MatrixX<S>>(out.data(), m, count) = a.matrix().middleCols(first, count);
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, count}, std::move(out), {a},
                              [m, c, first, count](typename Tensor<S>::NodeT& n) {
                                  auto grad =
                                      Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, count);
                                  NA::grad_matrix(NA::parent(n, 0), m, c)
                                      .middleCols(first, count) += grad;
                              });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Index first, Index count) {
    if (a.rank() != 2) throw ShapeError("slice_rows needs a rank-2 tensor");
    if (first < 0 || count <= 0 || first + count > a.rows())
        throw ShapeError("slice_rows range out of bounds");
    const Index m = a.rows(), c = a.cols();
    VectorX<S> out(count * c);
    Eigen::Map<MatrixX<S>>(out.data(), count, c) = a.matrix().middleRows(first, count);
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{count, c}, std::move(out), {a},
                              [m, c, first, count](typename Tensor<S>::NodeT& n) {
                                  auto grad =
                                      Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), count, c);
                                  NA::grad_matrix(NA::parent(n, 0), m, c)
                                      .middleRows(first, count) += grad;
                              });
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols on empty list");
    const Index m = parts.front().rows();
    Index total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.rows() != m)
            throw ShapeError("concat_cols: row counts disagree");
        total += p.cols();
    }
    VectorX<S> out(m * total);
    Eigen::Map<MatrixX<S>> o(out.data(), m, total);
    std::vector<Index> widths;
    widths.reserve(parts.size());
    Index at = 0;
    for (const auto& p : parts) {
        o.middleCols(at, p.cols()) = p.matrix();
        widths.push_back(p.cols());
        at += p.cols();
    }
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, total}, std::move(out), parts,
                              [m, total, widths](typename Tensor<S>::NodeT& n) {
                                  auto grad =
                                      Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, total);
                                  Index at2 = 0;
                                  for (std::size_t i = 0; i < widths.size(); ++i) {
                                      auto& p = NA::parent(n, i);
                                      NA::grad_matrix(p, m, widths[i]) +=
                                          grad.middleCols(at2, widths[i]);
                                      at2 += widths[i];
                                  }
                              });
}

/// Row-stabilized softmax. Every row of the result is nonnegative and sums
/// to one.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
    if (x.rank() != 2) throw ShapeError("softmax_rows needs a rank-2 tensor");
    const Index m = x.rows(), c = x.cols();
    MatrixX<S> p(m, c);
    auto xv = x.matrix();
    for (Index i = 0; i < m; ++i) {
        const S mx = xv.row(i).maxCoeff();
        p.row(i) = (xv.row(i).array() - mx).exp();
        const S z = p.row(i).sum();
        p.row(i) /= z;
    }
    VectorX<S> out(m * c);
    Eigen::Map<MatrixX<S>>(out.data(), m, c) = p;
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, c}, std::move(out), {x},
                              [m, c](typename Tensor<S>::NodeT& n) {
                                  auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, c);
                                  auto pv = Eigen::Map<const MatrixX<S>>(NA::value_of(n).data(), m, c);
                                  auto gx = NA::grad_matrix(NA::parent(n, 0), m, c);
                                  for (Index i = 0; i < m; ++i) {
                                      const S dot = grad.row(i).cwiseProduct(pv.row(i)).sum();
                                      gx.row(i) +=
                                          (pv.row(i).array() * (grad.row(i).array() - dot))
                                              .matrix();
                                  }
                              });
}

/// Softmax over attendable entries only; masked entries come out exactly 0.
/// mask(i, j) == true means position j may be attended from row i.
template <typename S>
Tensor<S> masked_softmax_rows(const Tensor<S>& x, const MaskMatrix& mask) {
    if (x.rank() != 2) throw ShapeError("masked_softmax_rows needs a rank-2 tensor");
    const Index m = x.rows(), c = x.cols();
    if (mask.rows() != m || mask.cols() != c)
        throw ShapeError("mask shape does not match logits");
    MatrixX<S> p = MatrixX<S>::Zero(m, c);
    auto xv = x.matrix();
    for (Index i = 0; i < m; ++i) {
        S mx = std::numeric_limits<S>::lowest();
        bool any = false;
        for (Index j = 0; j < c; ++j)
            if (mask(i, j)) {
                any = true;
                mx = std::max(mx, xv(i, j));
            }
        if (!any)
            throw NumericError("attention row " + std::to_string(i) +
                               " has no attendable key");
        S z = S(0);
        for (Index j = 0; j < c; ++j)
            if (mask(i, j)) {
                p(i, j) = std::exp(xv(i, j) - mx);
                z += p(i, j);
            }
        p.row(i) /= z;
    }
    VectorX<S> out(m * c);
    Eigen::Map<MatrixX<S>>(out.data(), m, c) = p;
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, c}, std::move(out), {x},
                              [m, c](typename Tensor<S>::NodeT& n) {
                                  // Masked entries have p == 0, so the usual
                                  // softmax backward sends them zero gradient.
                                  auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, c);
                                  auto pv = Eigen::Map<const MatrixX<S>>(NA::value_of(n).data(), m, c);
                                  auto gx = NA::grad_matrix(NA::parent(n, 0), m, c);
                                  for (Index i = 0; i < m; ++i) {
                                      const S dot = grad.row(i).cwiseProduct(pv.row(i)).sum();
                                      gx.row(i) +=
                                          (pv.row(i).array() * (grad.row(i).array() - dot))
                                              .matrix();
                                  }
                              });
}

/// Per-row standardization followed by an affine gain/bias.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps) {
    if (x.rank() != 2) throw ShapeError("layer_norm needs a rank-2 input");
    const Index m = x.rows(), d = x.cols();
    if (gain.rank() != 1 || gain.size() != d || bias.rank() != 1 || bias.size() != d)
        throw ShapeError("layer_norm gain/bias must be rank-1 of width " + std::to_string(d));
    if (!(eps > S(0))) throw InputError("layer_norm eps must be positive");

    MatrixX<S> xhat(m, d);
    VectorX<S> inv_std(m);
    VectorX<S> out(m * d);
    Eigen::Map<MatrixX<S>> y(out.data(), m, d);
    auto xv = x.matrix();
    const auto& gv = gain.flat();
    const auto& bv = bias.flat();
    for (Index i = 0; i < m; ++i) {
        const S mean = xv.row(i).mean();
        const S var = (xv.row(i).array() - mean).square().sum() / S(d);
        inv_std[i] = S(1) / std::sqrt(var + eps);
        xhat.row(i) = (xv.row(i).array() - mean) * inv_std[i];
        y.row(i) = xhat.row(i).cwiseProduct(gv.transpose()) + bv.transpose();
    }

    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(
        Shape{m, d}, std::move(out), {x, gain, bias},
        [m, d, xhat, inv_std](typename Tensor<S>::NodeT& n) {
            auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, d);
            auto& px = NA::parent(n, 0);
            auto& pg = NA::parent(n, 1);
            auto& pb = NA::parent(n, 2);
            auto gx = NA::grad_matrix(px, m, d);
            const auto gainv = NA::value_of(pg);
            VectorX<S> ggain = VectorX<S>::Zero(d);
            VectorX<S> gbias = VectorX<S>::Zero(d);
            for (Index i = 0; i < m; ++i) {
                // dxhat = g * gain; dx via the standard layer-norm backward.
                Eigen::RowVectorX<S> dxhat =
                    grad.row(i).cwiseProduct(gainv.transpose());
                const S mean_dxhat = dxhat.mean();
                const S mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).mean();
                gx.row(i) += inv_std[i] *
                             (dxhat.array() - mean_dxhat -
                              xhat.row(i).array() * mean_dxhat_xhat)
                                 .matrix();
                ggain += grad.row(i).cwiseProduct(xhat.row(i)).transpose();
                gbias += grad.row(i).transpose();
            }
            NA::accumulate(pg, ggain);
            NA::accumulate(pb, gbias);
        });
}

/// Exact GELU (erf form). Smooth everywhere, which keeps finite-difference
/// checks tight.
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    const auto& v = x.flat();
    VectorX<S> out(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const S z = v[i];
        out[i] = S(0.5) * z * (S(1) + std::erf(z * S(0.7071067811865475244)));
    }
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(
        x.shape(), std::move(out), {x}, [](typename Tensor<S>::NodeT& n) {
            auto& p = NA::parent(n, 0);
            const auto& v = NA::value_of(p);
            VectorX<S> g(v.size());
            for (Index i = 0; i < v.size(); ++i) {
                const S z = v[i];
                const S cdf = S(0.5) * (S(1) + std::erf(z * S(0.7071067811865475244)));
                const S pdf = std::exp(S(-0.5) * z * z) * S(0.3989422804014326779);
                g[i] = NA::grad_of(n)[i] * (cdf + z * pdf);
            }
            NA::accumulate(p, g);
        });
}

/// Gather rows of an embedding table. Backward scatter-adds into the table.
template <typename S>
Tensor<S> embedding_rows(const Tensor<S>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("embedding_rows needs a rank-2 table");
    if (ids.empty()) throw InputError("embedding_rows: empty id sequence");
    const Index v = table.rows(), d = table.cols();
    const Index m = static_cast<Index>(ids.size());
    VectorX<S> out(m * d);
    Eigen::Map<MatrixX<S>> o(out.data(), m, d);
    for (Index i = 0; i < m; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v)
            throw InputError("embedding id " + std::to_string(id) + " outside table of " +
                             std::to_string(v) + " rows");
        o.row(i) = table.matrix().row(id);
    }
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(Shape{m, d}, std::move(out), {table},
                              [v, d, m, ids](typename Tensor<S>::NodeT& n) {
                                  auto grad = Eigen::Map<const MatrixX<S>>(NA::grad_of(n).data(), m, d);
                                  auto gt = NA::grad_matrix(NA::parent(n, 0), v, d);
                                  for (Index i = 0; i < m; ++i)
                                      gt.row(ids[static_cast<std::size_t>(i)]) += grad.row(i);
                              });
}

/// Summed negative log-likelihood over non-ignored positions. The count of
/// contributing positions is written to *count_out.
template <typename S>
Tensor<S> cross_entropy_sum(const Tensor<S>& logits, const std::vector<int>& targets,
                            int ignore_id, Index* count_out = nullptr) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy needs rank-2 logits");
    const Index m = logits.rows(), v = logits.cols();
    if (static_cast<Index>(targets.size()) != m)
        throw ShapeError("cross_entropy: target length " + std::to_string(targets.size()) +
                         " does not match " + std::to_string(m) + " logit rows");
    auto lv = logits.matrix();
    S total = S(0);
    Index count = 0;
    MatrixX<S> probs(m, v);
    for (Index i = 0; i < m; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t == ignore_id) {
            probs.row(i).setZero();
            continue;
        }
        if (t < 0 || t >= v)
            throw InputError("cross_entropy target " + std::to_string(t) +
                             " outside vocabulary of " + std::to_string(v));
        const S mx = lv.row(i).maxCoeff();
        Eigen::RowVectorX<S> e = (lv.row(i).array() - mx).exp();
        const S z = e.sum();
        probs.row(i) = e / z;
        total += std::log(z) + mx - lv(i, t);
        ++count;
    }
    if (count_out) *count_out = count;
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(
        Shape{}, VectorX<S>::Constant(1, total), {logits},
        [m, v, probs, targets, ignore_id](typename Tensor<S>::NodeT& n) {
            const S g = NA::grad_of(n)[0];
            auto gx = NA::grad_matrix(NA::parent(n, 0), m, v);
            for (Index i = 0; i < m; ++i) {
                const int t = targets[static_cast<std::size_t>(i)];
                if (t == ignore_id) continue;
                gx.row(i) += g * probs.row(i);
                gx(i, t) -= g;
            }
        });
}

/// Mean negative log-likelihood over non-ignored positions.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets, int ignore_id) {
    Index count = 0;
    Tensor<S> total = cross_entropy_sum(logits, targets, ignore_id, &count);
    if (count == 0) throw NumericError("cross_entropy: every position is ignored, loss undefined");
    return scale(total, S(1) / static_cast<S>(count));
}

/// Inverted dropout. Identity when rate == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw InputError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    const Index n = x.size();
    VectorX<S> mask(n);
    const S keep_scale = S(1.0 / (1.0 - rate));
    for (Index i = 0; i < n; ++i)
        mask[i] = rng.uniform01() < rate ? S(0) : keep_scale;
    using NA = typename Tensor<S>::NodeAccess;
    return Tensor<S>::make_op(x.shape(), x.flat().cwiseProduct(mask), {x},
                              [mask](typename Tensor<S>::NodeT& n) {
                                  VectorX<S> g = NA::grad_of(n).cwiseProduct(mask);
                                  NA::accumulate(NA::parent(n, 0), g);
                              });
}

// ---------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::string worst_param;
    Index worst_index = -1;
    Index n_checked = 0;
    bool passed() const { return max_rel_error < tolerance; }
};

/// Central finite differences against the analytic gradient.
///
/// f must rebuild its graph on every call (it is invoked once with grad
/// recording on and 2 x numel times with it off). Relative error uses
/// denominator max(|analytic|, |numeric|, 1e-8).
template <typename S>
GradCheckReport grad_check(const std::function<Tensor<S>()>& f, std::vector<Tensor<S>> params,
                           double h = 1e-5, double tol = 1e-6) {
    static_assert(std::is_same_v<S, double>, "grad_check requires the 64-bit precision mode");
    if (h < 1e-6 || h > 1e-4) throw InputError("grad_check step h must lie in [1e-6, 1e-4]");

    for (auto& p : params) p.zero_grad();
    Tensor<S> loss = f();
    if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("grad_check: objective is not finite");
    loss.backward();

    GradCheckReport report;
    report.tolerance = tol;
    for (auto& p : params) {
        VectorX<S> analytic =
            p.has_grad() ? p.grad() : VectorX<S>::Zero(p.size());
        for (Index i = 0; i < p.size(); ++i) {
            const S saved = p.flat()[i];
            double plus, minus;
            {
                NoGradGuard off;
                p.flat_mut()[i] = saved + S(h);
                plus = static_cast<double>(f().item());
                p.flat_mut()[i] = saved - S(h);
                minus = static_cast<double>(f().item());
                p.flat_mut()[i] = saved;
            }
            if (!std::isfinite(plus) || !std::isfinite(minus))
                throw NumericError("grad_check: objective is not finite at a probe point");
            const double numeric = (plus - minus) / (2.0 * h);
            const double a = static_cast<double>(analytic[i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++report.n_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p.name();
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace sumlab

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fcmi/array.hpp"

// Define-then-run reverse-mode differentiation over dense 2-D arrays.
//
// A Graph owns its nodes; Var is a cheap handle (graph pointer + node id).
// Nodes are appended in creation order, so ids are already a topological
// order. Shapes are inferred when a node is created and every op validates
// its operands there; forward() re-validates input bindings.

namespace fcmi::ad {

enum class OpKind {
    Input,
    Constant,
    MatMul,
    Add,  // same shape, or rhs is a 1×cols row broadcast over lhs rows
    Subtract,
    Multiply,
    Tanh,
    Exp,
    Log,      // rejects non-positive input
    SafeLog,  // log(max(x, kLogFloor)); zero gradient below the floor
    SoftmaxRows,
    Sum,
    Mean,
    ScalarScale,
    Square,
    SelectRows,
    MergeRows,
    NormalizeRows,
};

std::string_view op_name(OpKind kind);

inline constexpr double kLogFloor = 1e-12;

class Graph;

class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    std::size_t rows() const;
    std::size_t cols() const;
    const Array& value() const;
    const Array& grad() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

using Bindings = std::map<std::string, Array>;
using Gradients = std::map<std::string, Array>;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(std::string name, std::size_t rows, std::size_t cols);
    Var constant(Array value);

    /// Evaluates every ancestor of root. Throws on a missing or misshaped
    /// binding, on a domain violation, or on a non-finite intermediate.
    const Array& forward(Var root, const Bindings& inputs);

    /// d(root)/d(input) for every input node of the graph. Inputs the root
    /// does not depend on get zero gradients.
    Gradients backward(Var root);

    const Array& value(Var v) const;
    const Array& grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }
    OpKind kind(Var v) const { return nodes_.at(v.id()).kind; }

    // Node construction, used by the free-function op builders below.
    struct Node {
        OpKind kind = OpKind::Input;
        std::vector<std::size_t> parents;
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::string name;
        double scalar = 0.0;
        std::vector<std::size_t> indices;
        std::vector<std::vector<std::size_t>> parts;
        std::vector<double> aux;
        Array value;
        Array grad;
    };
    Var append(Node node);
    const Node& node(std::size_t id) const { return nodes_.at(id); }

private:
    std::vector<bool> ancestors(std::size_t root) const;
    void evaluate(Node& node);
    void propagate(const Node& node);
    std::string describe(const Node& node, std::size_t id) const;

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> inputs_;
    std::size_t forward_root_ = static_cast<std::size_t>(-1);
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var safe_log(Var a);
Var softmax_rows(Var a);
Var sum(Var a);
Var mean(Var a);
Var scale(Var a, double factor);
Var square(Var a);
Var select_rows(Var a, std::vector<std::size_t> indices);
/// Inverse of a partition into select_rows pieces: row r of parts[p] lands at
/// row index_lists[p][r]. The index lists must partition [0, rows).
Var merge_rows(const std::vector<Var>& parts, std::vector<std::vector<std::size_t>> index_lists,
               std::size_t rows);
/// Scales each row to unit L2 norm. With zero_jitter > 0 a zero row is first
/// shifted by zero_jitter in every coordinate; with zero_jitter == 0 it is rejected.
Var normalize_rows(Var a, double zero_jitter = 0.0);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for the scalar function built by fn on a single input placed at point.
double grad_check(const std::function<Var(Var)>& fn, const Array& point, double step);

/// Same measure, over every coordinate of every input bound in inputs.
double grad_check(Graph& graph, Var root, const Bindings& inputs, double step);

}  // namespace fcmi::ad

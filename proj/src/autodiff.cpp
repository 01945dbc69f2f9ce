#include "fcmi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fcmi/error.hpp"

namespace fcmi::ad {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::Multiply: return "multiply";
        case OpKind::Tanh: return "tanh";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::SafeLog: return "safe-log";
        case OpKind::SoftmaxRows: return "softmax-rows";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::ScalarScale: return "scalar-scale";
        case OpKind::Square: return "square";
        case OpKind::SelectRows: return "select-rows";
        case OpKind::MergeRows: return "merge-rows";
        case OpKind::NormalizeRows: return "normalize-rows";
    }
    return "unknown";
}

std::size_t Var::rows() const { return graph_->node(id_).rows; }
std::size_t Var::cols() const { return graph_->node(id_).cols; }
const Array& Var::value() const { return graph_->value(*this); }
const Array& Var::grad() const { return graph_->grad(*this); }

namespace {

Graph& same_graph(Var a, Var b) {
    if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
    return a.graph();
}

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
    throw ShapeError(fmt::format("{} (new node): {}", op_name(kind), detail));
}

Var unary(OpKind kind, Var a) {
    Graph::Node n;
    n.kind = kind;
    n.parents = {a.id()};
    n.rows = a.rows();
    n.cols = a.cols();
    return a.graph().append(std::move(n));
}

Var reduction(OpKind kind, Var a) {
    Graph::Node n;
    n.kind = kind;
    n.parents = {a.id()};
    n.rows = 1;
    n.cols = 1;
    return a.graph().append(std::move(n));
}

Var same_shape_binary(OpKind kind, Var a, Var b) {
    Graph& g = same_graph(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        shape_fail(kind, fmt::format("operands {}x{} and {}x{} differ (nodes {} and {})", a.rows(), a.cols(),
                                     b.rows(), b.cols(), a.id(), b.id()));
    }
    Graph::Node n;
    n.kind = kind;
    n.parents = {a.id(), b.id()};
    n.rows = a.rows();
    n.cols = a.cols();
    return g.append(std::move(n));
}

}  // namespace

Var Graph::append(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::input(std::string name, std::size_t rows, std::size_t cols) {
    if (inputs_.contains(name)) throw std::invalid_argument(fmt::format("duplicate input name '{}'", name));
    Node n;
    n.kind = OpKind::Input;
    n.rows = rows;
    n.cols = cols;
    n.name = name;
    Var v = append(std::move(n));
    inputs_.emplace(std::move(name), v.id());
    return v;
}

Var Graph::constant(Array value) {
    if (!value.all_finite()) throw NonFiniteError("constant node with non-finite values");
    Node n;
    n.kind = OpKind::Constant;
    n.rows = value.rows();
    n.cols = value.cols();
    n.value = std::move(value);
    return append(std::move(n));
}

const Array& Graph::value(Var v) const { return nodes_.at(v.id()).value; }
const Array& Graph::grad(Var v) const { return nodes_.at(v.id()).grad; }

std::string Graph::describe(const Node& node, std::size_t id) const {
    if (node.kind == OpKind::Input) return fmt::format("node {} (input '{}')", id, node.name);
    return fmt::format("node {} ({})", id, op_name(node.kind));
}

std::vector<bool> Graph::ancestors(std::size_t root) const {
    std::vector<bool> live(nodes_.size(), false);
    live[root] = true;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (!live[i]) continue;
        for (std::size_t p : nodes_[i].parents) live[p] = true;
    }
    return live;
}

const Array& Graph::forward(Var root, const Bindings& inputs) {
    if (&root.graph() != this) throw std::invalid_argument("root belongs to a different graph");
    const auto live = ancestors(root.id());
    for (std::size_t i = 0; i <= root.id(); ++i) {
        if (!live[i]) continue;
        Node& n = nodes_[i];
        if (n.kind == OpKind::Input) {
            auto it = inputs.find(n.name);
            if (it == inputs.end()) {
                throw std::invalid_argument(fmt::format("missing binding for {}", describe(n, i)));
            }
            if (it->second.rows() != n.rows || it->second.cols() != n.cols) {
                throw ShapeError(fmt::format("{} expects shape {}x{} but binding has {}", describe(n, i), n.rows,
                                             n.cols, it->second.shape_string()));
            }
            if (!it->second.all_finite()) {
                throw NonFiniteError(fmt::format("non-finite binding for {}", describe(n, i)));
            }
            n.value = it->second;
            continue;
        }
        if (n.kind == OpKind::Constant) continue;
        try {
            evaluate(n);
        } catch (const std::domain_error& e) {
            throw std::domain_error(fmt::format("{}: {}", describe(n, i), e.what()));
        }
        if (!n.value.all_finite()) {
            throw NonFiniteError(fmt::format("{} produced a non-finite value", describe(n, i)));
        }
    }
    forward_root_ = root.id();
    return nodes_[root.id()].value;
}

void Graph::evaluate(Node& n) {
    auto val = [&](std::size_t k) -> const Array& { return nodes_[n.parents[k]].value; };
    Array out(n.rows, n.cols);
    switch (n.kind) {
        case OpKind::MatMul: {
            const Array& a = val(0);
            const Array& b = val(1);
            const std::size_t inner = a.cols();
            for (std::size_t i = 0; i < a.rows(); ++i) {
                auto orow = out.row_span(i);
                for (std::size_t k = 0; k < inner; ++k) {
                    const double aik = a(i, k);
                    if (aik == 0.0) continue;
                    auto brow = b.row_span(k);
                    for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
                }
            }
            break;
        }
        case OpKind::Add: {
            const Array& a = val(0);
            const Array& b = val(1);
            const bool broadcast = b.rows() == 1 && a.rows() != 1;
            for (std::size_t i = 0; i < a.rows(); ++i)
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + (broadcast ? b(0, j) : b(i, j));
            break;
        }
        case OpKind::Subtract:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(0)[i] - val(1)[i];
            break;
        case OpKind::Multiply:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(0)[i] * val(1)[i];
            break;
        case OpKind::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(val(0)[i]);
            break;
        case OpKind::Exp:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(val(0)[i]);
            break;
        case OpKind::Log:
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (!(val(0)[i] > 0.0)) throw std::domain_error(fmt::format("log of non-positive value {}", val(0)[i]));
                out[i] = std::log(val(0)[i]);
            }
            break;
        case OpKind::SafeLog:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(val(0)[i], kLogFloor));
            break;
        case OpKind::SoftmaxRows: {
            const Array& a = val(0);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                auto in = a.row_span(i);
                auto o = out.row_span(i);
                const double peak = *std::max_element(in.begin(), in.end());
                double total = 0.0;
                for (std::size_t j = 0; j < in.size(); ++j) total += (o[j] = std::exp(in[j] - peak));
                for (double& v : o) v /= total;
            }
            break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
            double total = 0.0;
            for (double v : val(0).data()) total += v;
            out[0] = n.kind == OpKind::Mean ? total / static_cast<double>(val(0).size()) : total;
            break;
        }
        case OpKind::ScalarScale:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.scalar * val(0)[i];
            break;
        case OpKind::Square:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(0)[i] * val(0)[i];
            break;
        case OpKind::SelectRows:
            out = fcmi::select_rows(val(0), n.indices);
            break;
        case OpKind::MergeRows:
            for (std::size_t p = 0; p < n.parts.size(); ++p) {
                const Array& part = val(p);
                for (std::size_t r = 0; r < n.parts[p].size(); ++r)
                    std::copy_n(part.row_span(r).begin(), n.cols, out.row_span(n.parts[p][r]).begin());
            }
            break;
        case OpKind::NormalizeRows: {
            // aux[i] holds the norm used for row i; aux[rows + i] is 1 when row i was jittered.
            const Array& a = val(0);
            n.aux.assign(2 * a.rows(), 0.0);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                auto in = a.row_span(i);
                double sq = 0.0;
                for (double v : in) sq += v * v;
                double shift = 0.0;
                if (sq == 0.0) {
                    if (n.scalar <= 0.0) throw std::domain_error(fmt::format("row {} has zero norm", i));
                    shift = n.scalar;
                    sq = static_cast<double>(in.size()) * shift * shift;
                    n.aux[a.rows() + i] = 1.0;
                    spdlog::warn("zero-norm row {} jittered by {:g} before normalization", i, shift);
                }
                const double norm = std::sqrt(sq);
                n.aux[i] = norm;
                auto o = out.row_span(i);
                for (std::size_t j = 0; j < in.size(); ++j) o[j] = (in[j] + shift) / norm;
            }
            break;
        }
        case OpKind::Input:
        case OpKind::Constant:
            break;
    }
    n.value = std::move(out);
}

Gradients Graph::backward(Var root) {
    if (&root.graph() != this) throw std::invalid_argument("root belongs to a different graph");
    if (forward_root_ != root.id()) throw std::logic_error("backward called before forward on this root");
    const Node& r = nodes_[root.id()];
    if (r.rows != 1 || r.cols != 1) {
        throw ShapeError(fmt::format("backward needs a scalar root, {} is {}x{}", describe(r, root.id()), r.rows, r.cols));
    }
    const auto live = ancestors(root.id());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (i <= root.id() && live[i]) nodes_[i].grad = Array(nodes_[i].rows, nodes_[i].cols);
        else nodes_[i].grad = Array();
    }
    nodes_[root.id()].grad[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        if (live[i]) propagate(nodes_[i]);
    }
    Gradients out;
    for (const auto& [name, id] : inputs_) {
        const Node& n = nodes_[id];
        out.emplace(name, live.size() > id && id <= root.id() && live[id] ? n.grad : Array(n.rows, n.cols));
    }
    return out;
}

void Graph::propagate(const Node& n) {
    auto val = [&](std::size_t k) -> const Array& { return nodes_[n.parents[k]].value; };
    auto pgrad = [&](std::size_t k) -> Array& { return nodes_[n.parents[k]].grad; };
    const Array& g = n.grad;
    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Constant:
            break;
        case OpKind::MatMul: {
            const Array& a = val(0);
            const Array& b = val(1);
            Array& ga = pgrad(0);
            Array& gb = pgrad(1);
            // ga += g · bᵀ ; gb += aᵀ · g
            for (std::size_t i = 0; i < a.rows(); ++i) {
                auto grow = g.row_span(i);
                for (std::size_t k = 0; k < a.cols(); ++k) {
                    auto brow = b.row_span(k);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < b.cols(); ++j) acc += grow[j] * brow[j];
                    ga(i, k) += acc;
                    const double aik = a(i, k);
                    if (aik == 0.0) continue;
                    auto gbrow = gb.row_span(k);
                    for (std::size_t j = 0; j < b.cols(); ++j) gbrow[j] += aik * grow[j];
                }
            }
            break;
        }
        case OpKind::Add: {
            Array& ga = pgrad(0);
            Array& gb = pgrad(1);
            const bool broadcast = val(1).rows() == 1 && val(0).rows() != 1;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    ga(i, j) += g(i, j);
                    if (broadcast) gb(0, j) += g(i, j);
                    else gb(i, j) += g(i, j);
                }
            break;
        }
        case OpKind::Subtract:
            for (std::size_t i = 0; i < g.size(); ++i) {
                pgrad(0)[i] += g[i];
                pgrad(1)[i] -= g[i];
            }
            break;
        case OpKind::Multiply:
            for (std::size_t i = 0; i < g.size(); ++i) {
                pgrad(0)[i] += g[i] * val(1)[i];
                pgrad(1)[i] += g[i] * val(0)[i];
            }
            break;
        case OpKind::Tanh:
            for (std::size_t i = 0; i < g.size(); ++i) pgrad(0)[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        case OpKind::Exp:
            for (std::size_t i = 0; i < g.size(); ++i) pgrad(0)[i] += g[i] * n.value[i];
            break;
        case OpKind::Log:
            for (std::size_t i = 0; i < g.size(); ++i) pgrad(0)[i] += g[i] / val(0)[i];
            break;
        case OpKind::SafeLog:
            for (std::size_t i = 0; i < g.size(); ++i)
                if (val(0)[i] > kLogFloor) pgrad(0)[i] += g[i] / val(0)[i];
            break;
        case OpKind::SoftmaxRows: {
            Array& ga = pgrad(0);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                auto y = n.value.row_span(i);
                auto gr = g.row_span(i);
                double dot = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) dot += gr[j] * y[j];
                for (std::size_t j = 0; j < y.size(); ++j) ga(i, j) += y[j] * (gr[j] - dot);
            }
            break;
        }
        case OpKind::Sum:
            for (double& v : pgrad(0).data()) v += g[0];
            break;
        case OpKind::Mean: {
            const double share = g[0] / static_cast<double>(val(0).size());
            for (double& v : pgrad(0).data()) v += share;
            break;
        }
        case OpKind::ScalarScale:
            for (std::size_t i = 0; i < g.size(); ++i) pgrad(0)[i] += n.scalar * g[i];
            break;
        case OpKind::Square:
            for (std::size_t i = 0; i < g.size(); ++i) pgrad(0)[i] += 2.0 * val(0)[i] * g[i];
            break;
        case OpKind::SelectRows: {
            Array& ga = pgrad(0);
            for (std::size_t r = 0; r < n.indices.size(); ++r) {
                auto src = g.row_span(r);
                auto dst = ga.row_span(n.indices[r]);
                for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
            }
            break;
        }
        case OpKind::MergeRows:
            for (std::size_t p = 0; p < n.parts.size(); ++p) {
                Array& gp = pgrad(p);
                for (std::size_t r = 0; r < n.parts[p].size(); ++r) {
                    auto src = g.row_span(n.parts[p][r]);
                    auto dst = gp.row_span(r);
                    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                }
            }
            break;
        case OpKind::NormalizeRows: {
            Array& ga = pgrad(0);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                auto y = n.value.row_span(i);
                auto gr = g.row_span(i);
                double dot = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) dot += gr[j] * y[j];
                const double norm = n.aux[i];
                for (std::size_t j = 0; j < y.size(); ++j) ga(i, j) += (gr[j] - y[j] * dot) / norm;
            }
            break;
        }
    }
}

Var matmul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    if (a.cols() != b.rows()) {
        shape_fail(OpKind::MatMul, fmt::format("inner dims {}x{} · {}x{} do not chain (nodes {} and {})", a.rows(),
                                               a.cols(), b.rows(), b.cols(), a.id(), b.id()));
    }
    Graph::Node n;
    n.kind = OpKind::MatMul;
    n.parents = {a.id(), b.id()};
    n.rows = a.rows();
    n.cols = b.cols();
    return g.append(std::move(n));
}

Var add(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const bool same = a.rows() == b.rows() && a.cols() == b.cols();
    const bool row_broadcast = b.rows() == 1 && b.cols() == a.cols();
    if (!same && !row_broadcast) {
        shape_fail(OpKind::Add, fmt::format("cannot add {}x{} (node {}) and {}x{} (node {})", a.rows(), a.cols(),
                                            a.id(), b.rows(), b.cols(), b.id()));
    }
    Graph::Node n;
    n.kind = OpKind::Add;
    n.parents = {a.id(), b.id()};
    n.rows = a.rows();
    n.cols = a.cols();
    return g.append(std::move(n));
}

Var subtract(Var a, Var b) { return same_shape_binary(OpKind::Subtract, a, b); }
Var multiply(Var a, Var b) { return same_shape_binary(OpKind::Multiply, a, b); }
Var tanh(Var a) { return unary(OpKind::Tanh, a); }
Var exp(Var a) { return unary(OpKind::Exp, a); }
Var log(Var a) { return unary(OpKind::Log, a); }
Var safe_log(Var a) { return unary(OpKind::SafeLog, a); }
Var square(Var a) { return unary(OpKind::Square, a); }
Var sum(Var a) { return reduction(OpKind::Sum, a); }

Var mean(Var a) {
    if (a.rows() * a.cols() == 0) shape_fail(OpKind::Mean, "mean of an empty array");
    return reduction(OpKind::Mean, a);
}

Var softmax_rows(Var a) {
    if (a.cols() == 0) shape_fail(OpKind::SoftmaxRows, "softmax over zero columns");
    return unary(OpKind::SoftmaxRows, a);
}

Var scale(Var a, double factor) {
    if (!std::isfinite(factor)) throw NonFiniteError("scalar-scale by a non-finite factor");
    Graph::Node n;
    n.kind = OpKind::ScalarScale;
    n.parents = {a.id()};
    n.rows = a.rows();
    n.cols = a.cols();
    n.scalar = factor;
    return a.graph().append(std::move(n));
}

Var select_rows(Var a, std::vector<std::size_t> indices) {
    for (std::size_t idx : indices) {
        if (idx >= a.rows()) {
            shape_fail(OpKind::SelectRows, fmt::format("row {} out of range for {} rows (node {})", idx, a.rows(), a.id()));
        }
    }
    Graph::Node n;
    n.kind = OpKind::SelectRows;
    n.parents = {a.id()};
    n.rows = indices.size();
    n.cols = a.cols();
    n.indices = std::move(indices);
    return a.graph().append(std::move(n));
}

Var merge_rows(const std::vector<Var>& parts, std::vector<std::vector<std::size_t>> index_lists, std::size_t rows) {
    if (parts.empty() || parts.size() != index_lists.size()) {
        shape_fail(OpKind::MergeRows, "need one index list per part and at least one part");
    }
    Graph& g = parts.front().graph();
    const std::size_t cols = parts.front().cols();
    std::vector<bool> seen(rows, false);
    std::size_t covered = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (&parts[p].graph() != &g) throw std::invalid_argument("operands belong to different graphs");
        if (parts[p].cols() != cols || parts[p].rows() != index_lists[p].size()) {
            shape_fail(OpKind::MergeRows, fmt::format("part {} (node {}) is {}x{} but has {} target rows", p,
                                                      parts[p].id(), parts[p].rows(), parts[p].cols(),
                                                      index_lists[p].size()));
        }
        for (std::size_t idx : index_lists[p]) {
            if (idx >= rows || seen[idx]) shape_fail(OpKind::MergeRows, "index lists do not partition the output rows");
            seen[idx] = true;
            ++covered;
        }
    }
    if (covered != rows) shape_fail(OpKind::MergeRows, "index lists do not cover every output row");
    Graph::Node n;
    n.kind = OpKind::MergeRows;
    for (Var v : parts) n.parents.push_back(v.id());
    n.rows = rows;
    n.cols = cols;
    n.parts = std::move(index_lists);
    return g.append(std::move(n));
}

Var normalize_rows(Var a, double zero_jitter) {
    if (zero_jitter < 0.0) throw std::invalid_argument("zero_jitter must be non-negative");
    Graph::Node n;
    n.kind = OpKind::NormalizeRows;
    n.parents = {a.id()};
    n.rows = a.rows();
    n.cols = a.cols();
    n.scalar = zero_jitter;
    return a.graph().append(std::move(n));
}

namespace {

double finite_item(const Array& a) {
    const double v = a.item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check encountered a non-finite function value");
    return v;
}

}  // namespace

double grad_check(Graph& graph, Var root, const Bindings& inputs, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check step must be positive");
    graph.forward(root, inputs);
    const Gradients analytic = graph.backward(root);
    Bindings probe = inputs;
    double worst = 0.0;
    for (auto& [name, arr] : probe) {
        auto it = analytic.find(name);
        if (it == analytic.end()) continue;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const double saved = arr[i];
            arr[i] = saved + step;
            const double up = finite_item(graph.forward(root, probe));
            arr[i] = saved - step;
            const double down = finite_item(graph.forward(root, probe));
            arr[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double exact = it->second[i];
            if (!std::isfinite(exact)) throw NonFiniteError("grad_check encountered a non-finite gradient");
            worst = std::max(worst, std::abs(exact - numeric) / std::max(1.0, std::abs(numeric)));
        }
    }
    graph.forward(root, inputs);
    return worst;
}

double grad_check(const std::function<Var(Var)>& fn, const Array& point, double step) {
    Graph graph;
    Var x = graph.input("x", point.rows(), point.cols());
    Var root = fn(x);
    return grad_check(graph, root, Bindings{{"x", point}}, step);
}

}  // namespace fcmi::ad

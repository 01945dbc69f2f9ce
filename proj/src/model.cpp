#include "fcmi/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "fcmi/error.hpp"

namespace fcmi {

namespace {

std::vector<std::size_t> decoder_dims(const std::vector<std::size_t>& dims) {
    return {dims.rbegin(), dims.rend()};
}

std::vector<DenseLayer> make_stack(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l];
        const std::size_t out = dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer{Array(in, out), Array(1, out)};
        for (double& w : layer.weight.data()) w = dist(rng);
        layers.push_back(std::move(layer));
    }
    return layers;
}

void check_stack(const std::vector<DenseLayer>& layers, const std::vector<std::size_t>& dims, const std::string& what) {
    if (layers.size() + 1 != dims.size()) {
        throw ShapeError(fmt::format("{} has {} layers, expected {}", what, layers.size(), dims.size() - 1));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.rows() != dims[l] || layer.weight.cols() != dims[l + 1] || layer.bias.rows() != 1 ||
            layer.bias.cols() != dims[l + 1]) {
            throw ShapeError(fmt::format("{} layer {} has weight {} / bias {}, expected {}x{}", what, l,
                                         layer.weight.shape_string(), layer.bias.shape_string(), dims[l], dims[l + 1]));
        }
    }
}

}  // namespace

void ModelParams::validate() const {
    if (layer_dims.size() < 2) throw std::invalid_argument("layer_dims needs at least an input and a latent width");
    for (std::size_t d : layer_dims)
        if (d == 0) throw std::invalid_argument("layer widths must be positive");
    if (decoders.empty()) throw std::invalid_argument("model needs at least one decoder branch");
    check_stack(encoder, layer_dims, "encoder");
    const auto mirrored = decoder_dims(layer_dims);
    for (std::size_t t = 0; t < decoders.size(); ++t) check_stack(decoders[t], mirrored, fmt::format("decoder {}", t));
}

void for_each_param(const ModelParams& params, const std::function<void(const std::string&, const Array&)>& fn) {
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        fn(fmt::format("enc.{}.weight", l), params.encoder[l].weight);
        fn(fmt::format("enc.{}.bias", l), params.encoder[l].bias);
    }
    for (std::size_t t = 0; t < params.decoders.size(); ++t) {
        for (std::size_t l = 0; l < params.decoders[t].size(); ++l) {
            fn(fmt::format("dec.{}.{}.weight", t, l), params.decoders[t][l].weight);
            fn(fmt::format("dec.{}.{}.bias", t, l), params.decoders[t][l].bias);
        }
    }
}

void for_each_param(ModelParams& params, const std::function<void(const std::string&, Array&)>& fn) {
    const ModelParams& view = params;
    for_each_param(view, [&](const std::string& name, const Array& a) { fn(name, const_cast<Array&>(a)); });
}

ModelParams init_params(std::span<const std::size_t> layer_dims, std::size_t group_count, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw std::invalid_argument("layer_dims needs at least two entries");
    if (group_count < 1) throw std::invalid_argument("group_count must be at least 1");
    for (std::size_t d : layer_dims)
        if (d == 0) throw std::invalid_argument("layer widths must be positive");
    ModelParams p;
    p.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    std::mt19937_64 rng(seed);
    p.encoder = make_stack(p.layer_dims, rng);
    const auto mirrored = decoder_dims(p.layer_dims);
    for (std::size_t t = 0; t < group_count; ++t) p.decoders.push_back(make_stack(mirrored, rng));
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z = params;
    for_each_param(z, [](const std::string&, Array& a) { std::fill(a.data().begin(), a.data().end(), 0.0); });
    return z;
}

ModelGraph::ModelGraph(ad::Graph& graph, const ModelParams& shape_source) {
    shape_source.validate();
    auto make = [&](const std::string& prefix, const DenseLayer& layer) {
        return LayerVars{graph.input(prefix + ".weight", layer.weight.rows(), layer.weight.cols()),
                         graph.input(prefix + ".bias", 1, layer.bias.cols())};
    };
    for (std::size_t l = 0; l < shape_source.encoder.size(); ++l)
        encoder_.push_back(make(fmt::format("enc.{}", l), shape_source.encoder[l]));
    for (std::size_t t = 0; t < shape_source.decoders.size(); ++t) {
        decoders_.emplace_back();
        for (std::size_t l = 0; l < shape_source.decoders[t].size(); ++l)
            decoders_.back().push_back(make(fmt::format("dec.{}.{}", t, l), shape_source.decoders[t][l]));
    }
}

ad::Var ModelGraph::apply(std::span<const LayerVars> layers, ad::Var x) {
    ad::Var z = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        z = ad::matmul(z, layers[l].weight) + layers[l].bias;
        if (l + 1 < layers.size()) z = ad::tanh(z);
    }
    return z;
}

ad::Var ModelGraph::encode(ad::Var x) const { return apply(encoder_, x); }

ad::Var ModelGraph::decode(ad::Var h, std::span<const int> groups) const {
    if (groups.size() != h.rows()) {
        throw ShapeError(fmt::format("decode got {} group ids for {} latent rows", groups.size(), h.rows()));
    }
    std::vector<std::vector<std::size_t>> rows_of(decoders_.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= decoders_.size()) {
            throw std::invalid_argument(
                fmt::format("group id {} at row {} outside [0, {})", groups[i], i, decoders_.size()));
        }
        rows_of[static_cast<std::size_t>(groups[i])].push_back(i);
    }
    std::vector<ad::Var> parts;
    std::vector<std::vector<std::size_t>> index_lists;
    for (std::size_t t = 0; t < decoders_.size(); ++t) {
        if (rows_of[t].empty()) continue;
        ad::Var branch_in = rows_of[t].size() == h.rows() ? h : ad::select_rows(h, rows_of[t]);
        parts.push_back(apply(decoders_[t], branch_in));
        index_lists.push_back(std::move(rows_of[t]));
    }
    if (parts.size() == 1) return parts.front();
    return ad::merge_rows(parts, std::move(index_lists), h.rows());
}

ad::Bindings ModelGraph::bindings(const ModelParams& params) {
    ad::Bindings b;
    for_each_param(params, [&](const std::string& name, const Array& a) { b.emplace(name, a); });
    return b;
}

ModelParams ModelGraph::gradients(const ModelParams& shape_source, const ad::Gradients& grads) {
    ModelParams g = shape_source;
    for_each_param(g, [&](const std::string& name, Array& a) {
        auto it = grads.find(name);
        if (it == grads.end()) throw std::invalid_argument(fmt::format("no gradient for parameter {}", name));
        a = it->second;
    });
    return g;
}

LatentBatch encode(const ModelParams& params, const Array& x) {
    if (x.cols() != params.input_dim()) {
        throw ShapeError(fmt::format("encode expects {} features, got {}", params.input_dim(), x.cols()));
    }
    ad::Graph graph;
    ModelGraph model(graph, params);
    ad::Var in = graph.input("x", x.rows(), x.cols());
    ad::Var h = model.encode(in);
    auto bindings = ModelGraph::bindings(params);
    bindings.emplace("x", x);
    return {graph.forward(h, bindings)};
}

Array decode(const ModelParams& params, const LatentBatch& latent, std::span<const int> groups) {
    if (latent.h.cols() != params.latent_dim()) {
        throw ShapeError(fmt::format("decode expects latent width {}, got {}", params.latent_dim(), latent.h.cols()));
    }
    ad::Graph graph;
    ModelGraph model(graph, params);
    ad::Var in = graph.input("h", latent.h.rows(), latent.h.cols());
    ad::Var out = model.decode(in, groups);
    auto bindings = ModelGraph::bindings(params);
    bindings.emplace("h", latent.h);
    return graph.forward(out, bindings);
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    params.validate();
    detail::BinaryWriter w(path);
    w.header(detail::kKindModel);
    w.put(static_cast<std::uint32_t>(params.layer_dims.size()));
    for (std::size_t d : params.layer_dims) w.put(static_cast<std::uint64_t>(d));
    w.put(static_cast<std::uint32_t>(params.group_count()));
    for_each_param(params, [&](const std::string&, const Array& a) { w.put_doubles(a.data()); });
    w.finish();
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_header(detail::kKindModel);
    const auto dim_count = r.get<std::uint32_t>();
    if (dim_count < 2 || dim_count > 64) throw FormatError(fmt::format("{}: implausible layer count {}", path.string(), dim_count));
    std::vector<std::size_t> dims;
    for (std::uint32_t i = 0; i < dim_count; ++i) {
        const auto d = r.get<std::uint64_t>();
        if (d == 0 || d > (1u << 24)) throw FormatError(fmt::format("{}: implausible layer width {}", path.string(), d));
        dims.push_back(static_cast<std::size_t>(d));
    }
    const auto groups = r.get<std::uint32_t>();
    if (groups == 0 || groups > (1u << 16)) throw FormatError(fmt::format("{}: implausible group count {}", path.string(), groups));
    ModelParams p = zeros_like(init_params(dims, groups, 0));
    for_each_param(p, [&](const std::string&, Array& a) { r.get_doubles(a.data()); });
    r.expect_end();
    for_each_param(p, [&](const std::string& name, const Array& a) {
        if (!a.all_finite()) throw FormatError(fmt::format("{}: non-finite values in {}", path.string(), name));
    });
    return p;
}

}  // namespace fcmi

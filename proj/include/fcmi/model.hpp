#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fcmi/array.hpp"
#include "fcmi/autodiff.hpp"

namespace fcmi {

struct DenseLayer {
    Array weight;  // d_in × d_out
    Array bias;    // 1 × d_out

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Shared encoder plus one decoder branch per sensitive group.
///
/// layer_dims lists the encoder widths from input to latent, e.g. {D, 256, 64, 16};
/// every decoder branch mirrors it ({16, 64, 256, D}). Hidden layers use tanh,
/// the last encoder layer and the last decoder layer are linear. Branches share
/// nothing.
struct ModelParams {
    std::vector<std::size_t> layer_dims;
    std::vector<DenseLayer> encoder;
    std::vector<std::vector<DenseLayer>> decoders;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t latent_dim() const { return layer_dims.back(); }
    std::size_t group_count() const { return decoders.size(); }

    /// Throws if shapes do not chain or branches disagree.
    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Visits every parameter array in declaration order: encoder layers (weight,
/// bias), then branch 0 layers, branch 1 layers, ... The name is the one used
/// for graph inputs ("enc.0.weight", "dec.1.2.bias").
void for_each_param(const ModelParams& params, const std::function<void(const std::string&, const Array&)>& fn);
void for_each_param(ModelParams& params, const std::function<void(const std::string&, Array&)>& fn);

ModelParams init_params(std::span<const std::size_t> layer_dims, std::size_t group_count, std::uint64_t seed);

/// Same layout as params with every array zeroed.
ModelParams zeros_like(const ModelParams& params);

struct LatentBatch {
    Array h;  // n × latent_dim
};

LatentBatch encode(const ModelParams& params, const Array& x);
Array decode(const ModelParams& params, const LatentBatch& latent, std::span<const int> groups);

/// Graph-side view of a ModelParams: one input node per parameter array.
class ModelGraph {
public:
    ModelGraph(ad::Graph& graph, const ModelParams& shape_source);

    ad::Var encode(ad::Var x) const;
    /// Routes row i through branch groups[i]; branches with no rows are skipped.
    ad::Var decode(ad::Var h, std::span<const int> groups) const;

    static ad::Bindings bindings(const ModelParams& params);
    /// Collects parameter gradients back into ModelParams layout.
    static ModelParams gradients(const ModelParams& shape_source, const ad::Gradients& grads);

private:
    struct LayerVars {
        ad::Var weight;
        ad::Var bias;
    };
    static ad::Var apply(std::span<const LayerVars> layers, ad::Var x);

    std::vector<LayerVars> encoder_;
    std::vector<std::vector<LayerVars>> decoders_;
};

// Checkpoint container. Little-endian throughout:
//   char[4] "FCMI" | u32 version (1) | u32 kind (1 = model)
//   u32 dim_count | u64 dims[dim_count] | u32 group_count
//   f64 values for every parameter array in for_each_param order, row-major.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fcmi

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "synchrony/adjacency.hpp"
#include "synchrony/grid.hpp"
#include "synchrony/tensor.hpp"

namespace synchrony {

/// How the N x T frequency matrix flows through the network.
///   Literal: the whole series enters the GC stack as node features, the FC
///     output (fc_width) becomes a one-channel sequence for the TC stack.
///   TemporalPreserving: GC weights are shared across time steps and the TC
///     stack runs over the original T positions with fc_width channels.
enum class DataFlow : int { Literal = 0, TemporalPreserving = 1 };

struct ModelConfig {
    std::size_t nodes = 0;
    std::size_t window = 101;
    std::size_t gc_layers = 2;
    std::size_t gc_width = 16;
    std::size_t fc_width = 64;
    std::size_t blocks = 5;
    std::size_t kernel = 2;
    std::size_t filters = 32;
    std::size_t mlp_hidden = 32;
    AdjacencyVariant adjacency = AdjacencyVariant::Capacity;
    DataFlow flow = DataFlow::Literal;

    /// Throws ContractError for zero widths.
    void check() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

struct GcLayer {
    nn::Tensor weight;  // [C, F]
    nn::Tensor bias;    // [N, F]
    nn::Tensor bn_gamma;
    nn::Tensor bn_beta;
    nn::BatchNormState bn;
};

struct TcBlock {
    std::size_t dilation = 1;
    nn::Tensor conv1_weight, conv1_bias;
    nn::Tensor conv2_weight, conv2_bias;
    nn::Tensor ln_gamma, ln_beta;
    // 1x1 residual projection, present only when input channels != filters.
    nn::Tensor proj_weight, proj_bias;
};

/// Temporal and topological embedding network: GC modules -> flatten -> FC
/// -> TC residual blocks -> last-position readout -> MLP -> sigmoid.
class TtednnModel {
public:
    TtednnModel(ModelConfig config, const DenseMatrix& graph_operator, const Fingerprint& grid,
                std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const Fingerprint& grid_fingerprint() const noexcept { return grid_; }
    const nn::Tensor& graph_operator() const noexcept { return operator_; }

    /// batch: [B, N, T]. Returns probabilities [B].
    nn::Tensor forward(const nn::Tensor& batch, nn::Mode mode);

    /// H: [B, N, C] -> [B, N, F] for GC layer `layer`.
    nn::Tensor gc_module_forward(const nn::Tensor& h, std::size_t layer, nn::Mode mode);
    /// x: [B, C, L] -> [B, filters, L] for residual block `block` (0-based).
    nn::Tensor tc_residual_block(const nn::Tensor& x, std::size_t block) const;

    /// Probability for one N x T sample (infer mode).
    double predict(std::span<const double> omega);

    std::vector<std::pair<std::string, nn::Tensor>> named_parameters() const;
    std::vector<nn::Tensor> parameters() const;
    /// Weights and biases of the affine/convolution layers, i.e. the groups
    /// carried by the L2 penalty (norm scales/shifts excluded).
    std::vector<nn::Tensor> regularized_parameters() const;

    std::vector<GcLayer>& gc_layers() noexcept { return gc_; }
    std::vector<TcBlock>& tc_blocks() noexcept { return tc_; }
    nn::Tensor& fc_weight() noexcept { return fc_weight_; }
    nn::Tensor& fc_bias() noexcept { return fc_bias_; }
    nn::Tensor& head_weight(std::size_t k) { return k == 0 ? mlp1_weight_ : mlp2_weight_; }
    nn::Tensor& head_bias(std::size_t k) { return k == 0 ? mlp1_bias_ : mlp2_bias_; }

    /// Snapshot/restore of every parameter value and running statistic.
    struct State {
        std::vector<std::vector<double>> values;
        std::vector<nn::BatchNormState> bn;
    };
    State snapshot() const;
    void restore(const State& state);

    void save(const std::filesystem::path& path) const;
    std::vector<std::uint8_t> encode() const;
    /// `expected` (when given) must match the stored grid fingerprint.
    static TtednnModel load(const std::filesystem::path& path, const Fingerprint* expected = nullptr);
    static TtednnModel decode(std::span<const std::uint8_t> bytes, const std::string& context,
                              const Fingerprint* expected = nullptr);

private:
    nn::Tensor tc_stack(nn::Tensor seq) const;
    nn::Tensor head(const nn::Tensor& features) const;

    ModelConfig config_;
    Fingerprint grid_{};
    nn::Tensor operator_;
    std::vector<GcLayer> gc_;
    nn::Tensor fc_weight_, fc_bias_;
    std::vector<TcBlock> tc_;
    nn::Tensor mlp1_weight_, mlp1_bias_, mlp2_weight_, mlp2_bias_;
};

/// Receptive field of the TC stack: 1 + 2 (k - 1) (2^R - 1).
std::size_t receptive_field(std::size_t blocks, std::size_t kernel);

}  // namespace synchrony

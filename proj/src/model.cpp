#include "synchrony/model.hpp"

#include <cmath>

#include "json.hpp"
#include "synchrony/binary_io.hpp"
#include "synchrony/error.hpp"
#include "synchrony/rng.hpp"

namespace synchrony {

using nn::Mode;
using nn::Shape;
using nn::Tensor;

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'T', 'N', 'N'};
constexpr std::uint16_t kCheckpointVersion = 1;

Tensor uniform_weight(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(nn::numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

void check_finite(const Tensor& t, const std::string& layer) {
    for (double v : t.data())
        if (!std::isfinite(v)) throw NumericalError("non-finite activation in " + layer);
}

}  // namespace

std::size_t receptive_field(std::size_t blocks, std::size_t kernel) {
    return 1 + 2 * (kernel - 1) * ((std::size_t{1} << blocks) - 1);
}

void ModelConfig::check() const {
    if (nodes < 1 || window < 1) throw ContractError("model input dimensions must be positive");
    if (gc_layers < 1 || gc_width < 1 || fc_width < 1 || blocks < 1 || kernel < 1 || filters < 1 ||
        mlp_hidden < 1)
        throw ContractError("model widths must be at least 1");
    if (blocks > 20) throw ContractError("too many residual blocks");
}

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["nodes"] = nodes;
    j["window"] = window;
    j["gc_layers"] = gc_layers;
    j["gc_width"] = gc_width;
    j["fc_width"] = fc_width;
    j["blocks"] = blocks;
    j["kernel"] = kernel;
    j["filters"] = filters;
    j["mlp_hidden"] = mlp_hidden;
    j["adjacency"] = static_cast<int>(adjacency);
    j["flow"] = flow == DataFlow::Literal ? "literal" : "temporal";
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ModelConfig c;
        c.nodes = j.at("nodes").get<std::size_t>();
        c.window = j.at("window").get<std::size_t>();
        c.gc_layers = j.at("gc_layers").get<std::size_t>();
        c.gc_width = j.at("gc_width").get<std::size_t>();
        c.fc_width = j.at("fc_width").get<std::size_t>();
        c.blocks = j.at("blocks").get<std::size_t>();
        c.kernel = j.at("kernel").get<std::size_t>();
        c.filters = j.at("filters").get<std::size_t>();
        c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
        c.adjacency = adjacency_variant_from_int(j.at("adjacency").get<int>());
        const auto flow = j.at("flow").get<std::string>();
        if (flow == "literal")
            c.flow = DataFlow::Literal;
        else if (flow == "temporal")
            c.flow = DataFlow::TemporalPreserving;
        else
            throw ParseError("unknown data flow '" + flow + "'");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
}

TtednnModel::TtednnModel(ModelConfig config, const DenseMatrix& graph_operator, const Fingerprint& grid,
                         std::uint64_t seed)
    : config_(config), grid_(grid) {
    config_.check();
    const std::size_t n = config_.nodes;
    if (graph_operator.n != n)
        throw ContractError("graph operator is " + std::to_string(graph_operator.n) + "x" +
                            std::to_string(graph_operator.n) + " but the model expects N = " + std::to_string(n));
    operator_ = Tensor({n, n}, graph_operator.data, false);

    Rng rng(derive_seed(seed, 0x7ed11ULL));
    const bool literal = config_.flow == DataFlow::Literal;
    std::size_t width = literal ? config_.window : 1;
    for (std::size_t i = 0; i < config_.gc_layers; ++i) {
        GcLayer layer;
        layer.weight = uniform_weight({width, config_.gc_width}, width, rng);
        layer.bias = zeros({n, config_.gc_width});
        layer.bn_gamma = ones({config_.gc_width});
        layer.bn_beta = zeros({config_.gc_width});
        layer.bn = nn::BatchNormState(config_.gc_width);
        gc_.push_back(std::move(layer));
        width = config_.gc_width;
    }
    const std::size_t flat = n * config_.gc_width;
    fc_weight_ = uniform_weight({flat, config_.fc_width}, flat, rng);
    fc_bias_ = zeros({config_.fc_width});

    std::size_t channels = literal ? 1 : config_.fc_width;
    const std::size_t f = config_.filters, k = config_.kernel;
    for (std::size_t r = 0; r < config_.blocks; ++r) {
        TcBlock b;
        b.dilation = std::size_t{1} << r;
        b.conv1_weight = uniform_weight({f, channels, k}, channels * k, rng);
        b.conv1_bias = zeros({f});
        b.conv2_weight = uniform_weight({f, f, k}, f * k, rng);
        b.conv2_bias = zeros({f});
        b.ln_gamma = ones({f});
        b.ln_beta = zeros({f});
        if (channels != f) {
            b.proj_weight = uniform_weight({f, channels, 1}, channels, rng);
            b.proj_bias = zeros({f});
        }
        tc_.push_back(std::move(b));
        channels = f;
    }
    mlp1_weight_ = uniform_weight({f, config_.mlp_hidden}, f, rng);
    mlp1_bias_ = zeros({config_.mlp_hidden});
    mlp2_weight_ = uniform_weight({config_.mlp_hidden, 1}, config_.mlp_hidden, rng);
    mlp2_bias_ = zeros({1});
}

Tensor TtednnModel::gc_module_forward(const Tensor& h, std::size_t layer, Mode mode) {
    auto& gc = gc_.at(layer);
    if (h.rank() != 3 || h.dim(1) != config_.nodes || h.dim(2) != gc.weight.dim(0))
        throw ContractError("GC layer " + std::to_string(layer) + ": expected [B, " + std::to_string(config_.nodes) +
                            ", " + std::to_string(gc.weight.dim(0)) + "] input, got " + nn::shape_string(h.shape()));
    const std::size_t batch = h.dim(0), n = config_.nodes, f = config_.gc_width;
    // B' H W + b, then BN over the feature axis with batch and nodes pooled.
    auto mixed = nn::node_mix(operator_, h);
    auto projected = nn::matmul(nn::reshape(mixed, {batch * n, h.dim(2)}), gc.weight);
    auto biased = nn::add_broadcast(nn::reshape(projected, {batch, n, f}), gc.bias);
    auto normed = nn::batch_norm(nn::reshape(biased, {batch * n, f}), gc.bn_gamma, gc.bn_beta, gc.bn, mode);
    return nn::relu(nn::reshape(normed, {batch, n, f}));
}

Tensor TtednnModel::tc_residual_block(const Tensor& x, std::size_t block) const {
    const auto& b = tc_.at(block);
    if (x.rank() != 3 || x.dim(1) != b.conv1_weight.dim(1))
        throw ContractError("TC block " + std::to_string(block) + ": expected [B, " +
                            std::to_string(b.conv1_weight.dim(1)) + ", L] input, got " + nn::shape_string(x.shape()));
    auto y = nn::causal_conv1d(x, b.conv1_weight, b.conv1_bias, b.dilation);
    y = nn::causal_conv1d(y, b.conv2_weight, b.conv2_bias, b.dilation);
    // Layer norm over channels at each time position keeps the block causal.
    y = nn::layer_norm(y, b.ln_gamma, b.ln_beta, 1e-5, 1);
    const auto residual = b.proj_weight.defined() ? nn::causal_conv1d(x, b.proj_weight, b.proj_bias, 1) : x;
    return nn::relu(nn::add(residual, y));
}

Tensor TtednnModel::tc_stack(Tensor seq) const {
    for (std::size_t r = 0; r < tc_.size(); ++r) {
        seq = tc_residual_block(seq, r);
        check_finite(seq, "TC block " + std::to_string(r + 1));
    }
    return seq;
}

Tensor TtednnModel::head(const Tensor& features) const {
    auto hidden = nn::relu(nn::dense(features, mlp1_weight_, mlp1_bias_));
    auto logit = nn::dense(hidden, mlp2_weight_, mlp2_bias_);
    check_finite(logit, "MLP head");
    auto p = nn::sigmoid(logit);
    return nn::reshape(p, {features.dim(0)});
}

Tensor TtednnModel::forward(const Tensor& batch, Mode mode) {
    const std::size_t n = config_.nodes, t = config_.window;
    if (batch.rank() != 3 || batch.dim(1) != n || batch.dim(2) != t)
        throw ContractError("forward: expected [B, " + std::to_string(n) + ", " + std::to_string(t) + "] input, got " +
                            nn::shape_string(batch.shape()));
    const std::size_t b = batch.dim(0);
    if (config_.flow == DataFlow::Literal) {
        Tensor h = batch;
        for (std::size_t i = 0; i < gc_.size(); ++i) {
            h = gc_module_forward(h, i, mode);
            check_finite(h, "GC module " + std::to_string(i + 1));
        }
        auto fc = nn::dense(nn::flatten(h), fc_weight_, fc_bias_);
        check_finite(fc, "FC layer");
        auto seq = tc_stack(nn::reshape(fc, {b, 1, config_.fc_width}));
        return head(nn::select_last(seq));
    }
    // Per-time-step GC with shared weights: [B, N, T] -> [B*T, N, 1].
    Tensor h = nn::reshape(nn::transpose_last2(batch), {b * t, n, 1});
    for (std::size_t i = 0; i < gc_.size(); ++i) {
        h = gc_module_forward(h, i, mode);
        check_finite(h, "GC module " + std::to_string(i + 1));
    }
    auto fc = nn::dense(nn::reshape(h, {b * t, n * config_.gc_width}), fc_weight_, fc_bias_);
    check_finite(fc, "FC layer");
    auto seq = nn::transpose_last2(nn::reshape(fc, {b, t, config_.fc_width}));
    seq = tc_stack(seq);
    return head(nn::select_last(seq));
}

double TtednnModel::predict(std::span<const double> omega) {
    if (omega.size() != config_.nodes * config_.window)
        throw ContractError("predict: sample has " + std::to_string(omega.size()) + " values, expected " +
                            std::to_string(config_.nodes * config_.window));
    Tensor x({1, config_.nodes, config_.window}, std::vector<double>(omega.begin(), omega.end()));
    return forward(x, Mode::Infer).item();
}

std::vector<std::pair<std::string, Tensor>> TtednnModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < gc_.size(); ++i) {
        const auto p = "gc" + std::to_string(i) + ".";
        out.emplace_back(p + "weight", gc_[i].weight);
        out.emplace_back(p + "bias", gc_[i].bias);
        out.emplace_back(p + "bn_gamma", gc_[i].bn_gamma);
        out.emplace_back(p + "bn_beta", gc_[i].bn_beta);
    }
    out.emplace_back("fc.weight", fc_weight_);
    out.emplace_back("fc.bias", fc_bias_);
    for (std::size_t r = 0; r < tc_.size(); ++r) {
        const auto p = "tc" + std::to_string(r) + ".";
        const auto& b = tc_[r];
        out.emplace_back(p + "conv1_weight", b.conv1_weight);
        out.emplace_back(p + "conv1_bias", b.conv1_bias);
        out.emplace_back(p + "conv2_weight", b.conv2_weight);
        out.emplace_back(p + "conv2_bias", b.conv2_bias);
        out.emplace_back(p + "ln_gamma", b.ln_gamma);
        out.emplace_back(p + "ln_beta", b.ln_beta);
        if (b.proj_weight.defined()) {
            out.emplace_back(p + "proj_weight", b.proj_weight);
            out.emplace_back(p + "proj_bias", b.proj_bias);
        }
    }
    out.emplace_back("mlp1.weight", mlp1_weight_);
    out.emplace_back("mlp1.bias", mlp1_bias_);
    out.emplace_back("mlp2.weight", mlp2_weight_);
    out.emplace_back("mlp2.bias", mlp2_bias_);
    return out;
}

std::vector<Tensor> TtednnModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::vector<Tensor> TtednnModel::regularized_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters())
        if (name.find("_gamma") == std::string::npos && name.find("_beta") == std::string::npos) out.push_back(t);
    return out;
}

TtednnModel::State TtednnModel::snapshot() const {
    State s;
    for (const auto& t : parameters()) s.values.emplace_back(t.data().begin(), t.data().end());
    for (const auto& g : gc_) s.bn.push_back(g.bn);
    return s;
}

void TtednnModel::restore(const State& state) {
    auto params = parameters();
    if (state.values.size() != params.size() || state.bn.size() != gc_.size())
        throw ContractError("restore: snapshot does not match model layout");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].mutable_data();
        if (dst.size() != state.values[i].size()) throw ContractError("restore: parameter size mismatch");
        std::copy(state.values[i].begin(), state.values[i].end(), dst.begin());
    }
    for (std::size_t i = 0; i < gc_.size(); ++i) gc_[i].bn = state.bn[i];
}

namespace {

void put_blob(io::ByteWriter& w, const std::string& name, const Shape& shape, std::span<const double> data) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_doubles(data);
}

}  // namespace

std::vector<std::uint8_t> TtednnModel::encode() const {
    io::ByteWriter w;
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4});
    w.put<std::uint16_t>(kCheckpointVersion);
    const auto cfg = config_.to_json();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
    w.put_string(cfg);
    w.put_bytes(grid_);

    const auto params = named_parameters();
    const std::uint32_t blobs = static_cast<std::uint32_t>(params.size() + 1 + 2 * gc_.size());
    w.put<std::uint32_t>(blobs);
    put_blob(w, "adjacency", operator_.shape(), operator_.data());
    for (std::size_t i = 0; i < gc_.size(); ++i) {
        const auto p = "gc" + std::to_string(i) + ".";
        put_blob(w, p + "running_mean", {gc_[i].bn.running_mean.size()}, gc_[i].bn.running_mean);
        put_blob(w, p + "running_var", {gc_[i].bn.running_var.size()}, gc_[i].bn.running_var);
    }
    for (const auto& [name, t] : params) put_blob(w, name, t.shape(), t.data());
    w.put<std::uint32_t>(io::crc32(w.bytes()));
    return std::move(w.bytes());
}

void TtednnModel::save(const std::filesystem::path& path) const { io::write_file(path, encode()); }

TtednnModel TtednnModel::decode(std::span<const std::uint8_t> bytes, const std::string& context,
                                const Fingerprint* expected) {
    if (bytes.size() < 4 ||
        !std::equal(bytes.begin(), bytes.begin() + 4, reinterpret_cast<const std::uint8_t*>(kCheckpointMagic)))
        throw ParseError(context + ": not a checkpoint file");
    if (bytes.size() < 8) throw ParseError(context + ": unexpected end of record");
    const std::size_t payload = bytes.size() - 4;
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + payload, 4);
    if (stored != io::crc32(bytes.first(payload)))
        throw ParseError(context + ": checksum mismatch (corrupted checkpoint)");

    io::ByteReader r(bytes.first(payload), context);
    r.get_bytes(4);
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion)
        throw ParseError(context + ": unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = r.get<std::uint32_t>();
    const auto config = ModelConfig::from_json(r.get_string(cfg_len));
    Fingerprint fp{};
    auto fpb = r.get_bytes(32);
    std::copy(fpb.begin(), fpb.end(), fp.begin());
    if (expected && *expected != fp)
        throw FingerprintError(context + ": checkpoint was trained on grid " + to_hex(fp) + " but grid " +
                               to_hex(*expected) + " was supplied");

    std::vector<std::pair<std::string, Tensor>> blobs;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint16_t>();
        auto name = r.get_string(name_len);
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw ParseError(context + ": blob " + name + " has implausible rank");
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>();
        std::vector<double> values(nn::numel(shape));
        r.get_doubles(values);
        blobs.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (r.remaining() != 0) throw ParseError(context + ": trailing bytes in checkpoint");

    auto find = [&](const std::string& name) -> const Tensor& {
        for (const auto& [n, t] : blobs)
            if (n == name) return t;
        throw ParseError(context + ": missing blob '" + name + "'");
    };
    const auto& adj = find("adjacency");
    if (adj.shape() != Shape{config.nodes, config.nodes})
        throw ParseError(context + ": adjacency blob has wrong shape");
    DenseMatrix op(config.nodes);
    std::copy(adj.data().begin(), adj.data().end(), op.data.begin());
    TtednnModel model(config, op, fp, 0);
    for (auto& [name, t] : model.named_parameters()) {
        const auto& src = find(name);
        if (src.shape() != t.shape())
            throw ParseError(context + ": blob '" + name + "' has shape " + nn::shape_string(src.shape()) +
                             ", expected " + nn::shape_string(t.shape()));
        auto dst = t.mutable_data();
        std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
    for (std::size_t i = 0; i < model.gc_.size(); ++i) {
        const auto p = "gc" + std::to_string(i) + ".";
        auto& bn = model.gc_[i].bn;
        const auto& mean = find(p + "running_mean");
        const auto& var = find(p + "running_var");
        if (mean.size() != bn.running_mean.size() || var.size() != bn.running_var.size())
            throw ParseError(context + ": running statistics have wrong width");
        bn.running_mean.assign(mean.data().begin(), mean.data().end());
        bn.running_var.assign(var.data().begin(), var.data().end());
    }
    return model;
}

TtednnModel TtednnModel::load(const std::filesystem::path& path, const Fingerprint* expected) {
    const auto bytes = io::read_file(path);
    return decode(bytes, path.string(), expected);
}

}  // namespace synchrony

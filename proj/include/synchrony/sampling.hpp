#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "synchrony/dynamics.hpp"
#include "synchrony/grid.hpp"
#include "synchrony/rng.hpp"

namespace synchrony {

enum class PerturbationMode : std::uint8_t { Single = 0, Multi = 1 };

/// Frequency-kick protocol: single mode kicks each node `per_node` times;
/// multi mode picks `combos` node sets of size `nodes_per_combo` and kicks
/// each `per_combo` times. Kicks are uniform in [-omega_bound, omega_bound].
struct PerturbationSpec {
    PerturbationMode mode = PerturbationMode::Single;
    double omega_bound = 20.0;
    std::size_t nodes_per_combo = 1;
    std::size_t per_node = 1000;
    std::size_t combos = 60;
    std::size_t per_combo = 1000;
    std::uint64_t seed = 0;
    std::size_t window = 101;
    // Also kick the phase of perturbed nodes uniformly in [-pi, pi].
    bool perturb_delta = false;
    LabelConfig label;

    /// Throws ContractError when these settings cannot be applied to an n-node grid.
    void check(std::size_t n) const;
    std::size_t sample_count(std::size_t n) const;
};

struct Sample {
    std::vector<double> omega;  // N x T, row-major (node-major)
    int label = 0;
    std::vector<std::size_t> nodes;  // perturbed nodes, ascending
    std::uint64_t seed = 0;          // per-sample stream seed

    bool operator==(const Sample&) const = default;
};

struct ClassCounts {
    std::size_t stable = 0;
    std::size_t unstable = 0;
};

struct Dataset {
    Fingerprint grid{};
    std::size_t nodes = 0;
    std::size_t window = 0;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    ClassCounts counts() const;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// delta = delta*, w_i ~ U(-bound, bound) for i in `nodes`, 0 elsewhere.
SystemState sample_initial_state(const SystemState& equilibrium, const std::vector<std::size_t>& nodes,
                                 Rng& rng, double omega_bound, bool perturb_delta = false);

/// `count` distinct sorted node sets of size m drawn uniformly without replacement.
std::vector<std::vector<std::size_t>> choose_combinations(std::size_t n, std::size_t m,
                                                          std::size_t count, Rng& rng);

/// C(n, m), saturating at UINT64_MAX.
std::uint64_t binomial(std::size_t n, std::size_t m);

/// Generates, labels and records every sample. `threads` = 0 uses the
/// hardware concurrency. Output is independent of the thread count.
Dataset generate_dataset(const PowerGrid& grid, const PerturbationSpec& spec, unsigned threads = 1);
Dataset generate_dataset(const PowerGrid& grid, const SystemState& equilibrium,
                         const PerturbationSpec& spec, unsigned threads = 1);

/// Reconstructs the initial state of a stored sample (uses the recorded
/// first column of omega and, for phase kicks, the sample seed).
SystemState initial_state_of(const Sample& sample, const SystemState& equilibrium,
                             const PerturbationSpec& spec);

/// Shuffles `single` and assigns 60/20/20 to train/val/test; every `multi`
/// sample is appended to test.
DatasetSplit split_dataset(const Dataset& single, const Dataset& multi, std::uint64_t seed);

/// Binary dataset file plus a `<path>.json` sidecar manifest.
void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  const PerturbationSpec* spec = nullptr);
Dataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context = "dataset");

}  // namespace synchrony

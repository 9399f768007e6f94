#include "synchrony/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include "json.hpp"
#include "synchrony/binary_io.hpp"
#include "synchrony/error.hpp"

namespace synchrony {

namespace {

constexpr std::uint16_t kDatasetVersion = 1;
constexpr char kDatasetMagic[4] = {'T', 'T', 'D', 'S'};

// Salts separating the combination stream from per-sample streams.
constexpr std::uint64_t kComboStream = 0xc0b1a7105ULL;

}  // namespace

void PerturbationSpec::check(std::size_t n) const {
    if (!(omega_bound > 0.0)) throw ContractError("omega bound must be positive");
    if (window < 1) throw ContractError("window length must be at least 1");
    if (!(label.dt > 0.0) || !(label.t_label >= label.dt))
        throw ContractError("label horizon must span at least one step");
    if (window > step_count(label.t_label, label.dt) + 1)
        throw ContractError("window of " + std::to_string(window) +
                            " samples exceeds the labeling horizon");
    if (mode == PerturbationMode::Single) {
        if (per_node < 1) throw ContractError("per-node sample count must be at least 1");
    } else {
        if (nodes_per_combo < 1 || nodes_per_combo >= n)
            throw ContractError("nodes per combination must satisfy 1 <= m < N (m = " +
                                std::to_string(nodes_per_combo) + ", N = " + std::to_string(n) + ")");
        if (combos < 1 || per_combo < 1) throw ContractError("combination counts must be at least 1");
        if (combos > binomial(n, nodes_per_combo))
            throw ContractError("requested " + std::to_string(combos) + " combinations but only " +
                                std::to_string(binomial(n, nodes_per_combo)) + " exist");
    }
}

std::size_t PerturbationSpec::sample_count(std::size_t n) const {
    return mode == PerturbationMode::Single ? n * per_node : combos * per_combo;
}

ClassCounts Dataset::counts() const {
    ClassCounts c;
    for (const auto& s : samples) (s.label == 1 ? c.stable : c.unstable) += 1;
    return c;
}

SystemState sample_initial_state(const SystemState& equilibrium, const std::vector<std::size_t>& nodes,
                                 Rng& rng, double omega_bound, bool perturb_delta) {
    if (nodes.empty()) throw ContractError("perturbed node set is empty");
    SystemState s(equilibrium.delta, std::vector<double>(equilibrium.size(), 0.0));
    for (auto i : nodes) {
        if (i >= s.size()) throw ContractError("perturbed node " + std::to_string(i) + " out of range");
        s.omega[i] = rng.uniform(-omega_bound, omega_bound);
    }
    if (perturb_delta)
        for (auto i : nodes) s.delta[i] += rng.uniform(-std::numbers::pi, std::numbers::pi);
    return s;
}

std::uint64_t binomial(std::size_t n, std::size_t m) {
    if (m > n) return 0;
    m = std::min(m, n - m);
    std::uint64_t c = 1;
    for (std::size_t k = 1; k <= m; ++k) {
        // c * (n - m + k) / k stays integral at every step.
        const std::uint64_t num = n - m + k;
        if (c > std::numeric_limits<std::uint64_t>::max() / num)
            return std::numeric_limits<std::uint64_t>::max();
        c = c * num / k;
    }
    return c;
}

std::vector<std::vector<std::size_t>> choose_combinations(std::size_t n, std::size_t m,
                                                          std::size_t count, Rng& rng) {
    if (m < 1 || m > n) throw ContractError("combination size must satisfy 1 <= m <= N");
    const std::uint64_t total = binomial(n, m);
    if (count > total)
        throw ContractError("requested " + std::to_string(count) + " combinations but only " +
                            std::to_string(total) + " exist");

    std::vector<std::vector<std::size_t>> out;
    out.reserve(count);
    constexpr std::uint64_t kEnumerateLimit = 1u << 20;
    if (total <= kEnumerateLimit) {
        std::vector<std::vector<std::size_t>> all;
        all.reserve(total);
        std::vector<std::size_t> cur(m);
        for (std::size_t i = 0; i < m; ++i) cur[i] = i;
        while (true) {
            all.push_back(cur);
            std::size_t k = m;
            while (k > 0 && cur[k - 1] == n - m + k - 1) --k;
            if (k == 0) break;
            ++cur[k - 1];
            for (std::size_t j = k; j < m; ++j) cur[j] = cur[j - 1] + 1;
        }
        // Partial Fisher-Yates: the first `count` slots are a uniform draw.
        for (std::size_t i = 0; i < count; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
            std::swap(all[i], all[j]);
            out.push_back(all[i]);
        }
        return out;
    }
    std::set<std::vector<std::size_t>> seen;
    std::vector<std::size_t> pool(n);
    while (out.size() < count) {
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < m; ++i)
            std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.below(n - i))]);
        std::vector<std::size_t> pick(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(pick.begin(), pick.end());
        if (seen.insert(pick).second) out.push_back(std::move(pick));
    }
    return out;
}

namespace {

struct SampleTask {
    std::vector<std::size_t> nodes;
    std::uint64_t seed;
};

std::vector<SampleTask> plan_tasks(std::size_t n, const PerturbationSpec& spec) {
    std::vector<SampleTask> tasks;
    tasks.reserve(spec.sample_count(n));
    std::uint64_t index = 0;
    if (spec.mode == PerturbationMode::Single) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < spec.per_node; ++k)
                tasks.push_back({{i}, derive_seed(spec.seed, index++)});
    } else {
        Rng combo_rng(derive_seed(spec.seed ^ kComboStream, 0));
        auto combos = choose_combinations(n, spec.nodes_per_combo, spec.combos, combo_rng);
        for (const auto& c : combos)
            for (std::size_t k = 0; k < spec.per_combo; ++k)
                tasks.push_back({c, derive_seed(spec.seed, index++)});
    }
    return tasks;
}

}  // namespace

Dataset generate_dataset(const PowerGrid& grid, const PerturbationSpec& spec, unsigned threads) {
    spec.check(grid.size());
    const auto equilibrium = solve_equilibrium(grid);
    return generate_dataset(grid, equilibrium, spec, threads);
}

Dataset generate_dataset(const PowerGrid& grid, const SystemState& equilibrium,
                         const PerturbationSpec& spec, unsigned threads) {
    const std::size_t n = grid.size();
    spec.check(n);
    if (equilibrium.size() != n) throw ContractError("equilibrium dimension does not match grid");

    const auto tasks = plan_tasks(n, spec);
    Dataset ds;
    ds.grid = fingerprint(grid);
    ds.nodes = n;
    ds.window = spec.window;
    ds.samples.resize(tasks.size());

    const SwingSystem system(grid);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (std::size_t k = next++; k < tasks.size(); k = next++) {
                const auto& task = tasks[k];
                Rng rng(task.seed);
                const auto s0 = sample_initial_state(equilibrium, task.nodes, rng, spec.omega_bound,
                                                     spec.perturb_delta);
                auto& sample = ds.samples[k];
                sample.omega.assign(n * spec.window, 0.0);
                const auto verdict =
                    classify_stability(system, grid, s0, spec.label, sample.omega, spec.window);
                sample.label = verdict.label;
                sample.nodes = task.nodes;
                sample.seed = task.seed;
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = tasks.size();
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, tasks.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return ds;
}

SystemState initial_state_of(const Sample& sample, const SystemState& equilibrium,
                             const PerturbationSpec& spec) {
    if (spec.perturb_delta) {
        Rng rng(sample.seed);
        return sample_initial_state(equilibrium, sample.nodes, rng, spec.omega_bound, true);
    }
    const std::size_t n = equilibrium.size();
    const std::size_t t = sample.omega.size() / n;
    SystemState s(equilibrium.delta, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) s.omega[i] = sample.omega[i * t];
    return s;
}

DatasetSplit split_dataset(const Dataset& single, const Dataset& multi, std::uint64_t seed) {
    if (!multi.empty() && (multi.grid != single.grid))
        throw FingerprintError("single-node and multi-node datasets come from different grids");
    if (!multi.empty() && (multi.nodes != single.nodes || multi.window != single.window))
        throw ContractError("single-node and multi-node datasets have different shapes");

    std::vector<std::size_t> order(single.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5b117ULL));
    rng.shuffle(order);

    const std::size_t total = single.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(total)));
    const auto n_val = std::min(total - n_train,
                                static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(total))));

    DatasetSplit out;
    for (auto* part : {&out.train, &out.val, &out.test}) {
        part->grid = single.grid;
        part->nodes = single.nodes;
        part->window = single.window;
    }
    for (std::size_t k = 0; k < total; ++k) {
        const auto& s = single.samples[order[k]];
        if (k < n_train)
            out.train.samples.push_back(s);
        else if (k < n_train + n_val)
            out.val.samples.push_back(s);
        else
            out.test.samples.push_back(s);
    }
    out.test.samples.insert(out.test.samples.end(), multi.samples.begin(), multi.samples.end());
    return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    io::ByteWriter w;
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4});
    w.put<std::uint16_t>(kDatasetVersion);
    w.put_bytes(ds.grid);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.nodes));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.window));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.samples.size()));
    const std::size_t bitmap_bytes = (ds.nodes + 7) / 8;
    std::vector<std::uint8_t> bitmap(bitmap_bytes);
    for (const auto& s : ds.samples) {
        if (s.omega.size() != ds.nodes * ds.window)
            throw ContractError("sample matrix size does not match dataset shape");
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label));
        std::fill(bitmap.begin(), bitmap.end(), 0);
        for (auto i : s.nodes) bitmap[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        w.put_bytes(bitmap);
        w.put<std::uint64_t>(s.seed);
        w.put_doubles(s.omega);
    }
    w.put<std::uint32_t>(io::crc32(w.bytes()));
    return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context) {
    if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4,
                                        reinterpret_cast<const std::uint8_t*>(kDatasetMagic)))
        throw ParseError(context + ": not a dataset file");
    io::ByteReader r(bytes, context);
    r.get_bytes(4);
    const auto version = r.get<std::uint16_t>();
    if (version != kDatasetVersion)
        throw ParseError(context + ": unsupported dataset version " + std::to_string(version));
    Dataset ds;
    auto fp = r.get_bytes(32);
    std::copy(fp.begin(), fp.end(), ds.grid.begin());
    ds.nodes = r.get<std::uint32_t>();
    ds.window = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    if (ds.nodes == 0 || ds.window == 0) throw ParseError(context + ": empty sample shape");
    const std::size_t bitmap_bytes = (ds.nodes + 7) / 8;
    const std::size_t record = 1 + bitmap_bytes + 8 + 8 * ds.nodes * ds.window;
    if (r.remaining() < static_cast<std::size_t>(count) * record + 4)
        throw ParseError(context + ": unexpected end of record (file holds fewer than " +
                         std::to_string(count) + " samples)");
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        const auto label = r.get<std::uint8_t>();
        if (label > 1) throw ParseError(context + ": invalid label byte " + std::to_string(label));
        s.label = label;
        auto bitmap = r.get_bytes(bitmap_bytes);
        for (std::size_t i = 0; i < ds.nodes; ++i)
            if (bitmap[i / 8] & (1u << (i % 8))) s.nodes.push_back(i);
        s.seed = r.get<std::uint64_t>();
        s.omega.resize(ds.nodes * ds.window);
        r.get_doubles(s.omega);
    }
    const std::size_t payload = r.position();
    const auto stored = r.get<std::uint32_t>();
    if (r.remaining() != 0) throw ParseError(context + ": trailing bytes after dataset");
    if (stored != io::crc32(bytes.first(payload)))
        throw ParseError(context + ": checksum mismatch (corrupted dataset or fingerprint)");
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path, const PerturbationSpec* spec) {
    io::write_file(path, encode_dataset(ds));

    nlohmann::ordered_json manifest;
    manifest["format"] = "TTDS";
    manifest["version"] = kDatasetVersion;
    manifest["grid_fingerprint"] = to_hex(ds.grid);
    manifest["nodes"] = ds.nodes;
    manifest["window"] = ds.window;
    manifest["samples"] = ds.size();
    const auto c = ds.counts();
    manifest["stable"] = c.stable;
    manifest["unstable"] = c.unstable;
    if (spec) {
        nlohmann::ordered_json s;
        s["mode"] = spec->mode == PerturbationMode::Single ? "single" : "multi";
        s["omega_bound"] = spec->omega_bound;
        s["nodes_per_combo"] = spec->nodes_per_combo;
        s["per_node"] = spec->per_node;
        s["combos"] = spec->combos;
        s["per_combo"] = spec->per_combo;
        s["seed"] = spec->seed;
        s["window"] = spec->window;
        s["perturb_delta"] = spec->perturb_delta;
        s["t_label"] = spec->label.t_label;
        s["dt"] = spec->label.dt;
        s["eps_omega"] = spec->label.eps_omega;
        s["terminal_window"] = spec->label.window;
        s["gamma"] = spec->label.gamma;
        manifest["spec"] = std::move(s);
    }
    std::ofstream out(path.string() + ".json");
    if (!out) throw ParseError("cannot write dataset manifest for " + path.string());
    out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return decode_dataset(bytes, path.string());
}

}  // namespace synchrony

#include "synchrony/grid.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "synchrony/error.hpp"

namespace synchrony {

using nlohmann::json;

double PowerGrid::symmetric_coupling(const GridEdge& e) const {
    return e.coupling / std::sqrt(nodes[e.from].divisor * nodes[e.to].divisor);
}

double PowerGrid::power_sum() const {
    double s = 0.0;
    for (const auto& n : nodes) s += n.power;
    return s;
}

double PowerGrid::power_over_damping_sum() const {
    double s = 0.0;
    for (const auto& n : nodes) s += n.power / n.alpha;
    return s;
}

bool PowerGrid::is_normalized() const {
    for (const auto& n : nodes)
        if (n.divisor != 1.0) return false;
    return true;
}

namespace {

std::string edge_name(std::size_t a, std::size_t b) {
    return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

std::vector<std::size_t> unreachable_nodes(std::size_t n, const std::vector<GridEdge>& edges) {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : edges) {
        if (e.from >= n || e.to >= n) continue;
        adj[e.from].push_back(e.to);
        adj[e.to].push_back(e.from);
    }
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    if (n > 0) {
        seen[0] = true;
        frontier.push(0);
    }
    while (!frontier.empty()) {
        auto v = frontier.front();
        frontier.pop();
        for (auto w : adj[v]) {
            if (!seen[w]) {
                seen[w] = true;
                frontier.push(w);
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (!seen[i]) out.push_back(i);
    return out;
}

}  // namespace

PowerGrid normalize_parameters(const RawMachineParams& raw, std::span<const RawLine> lines) {
    const std::size_t n = raw.inertia.size();
    if (raw.damping.size() != n || raw.p_mech.size() != n)
        throw ParameterError("inertia, damping and p_mech must have equal length");
    if (n == 0) throw ParameterError("empty machine list");
    if (!(raw.omega_syn > 0.0) || !std::isfinite(raw.omega_syn))
        throw ParameterError("omega_syn must be positive");

    PowerGrid grid;
    grid.omega_syn = raw.omega_syn;
    grid.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(raw.inertia[i] > 0.0))
            throw ParameterError("node " + std::to_string(i) + ": inertia must be positive");
        if (!(raw.damping[i] > 0.0))
            throw ParameterError("node " + std::to_string(i) + ": damping must be positive");
        auto& node = grid.nodes[i];
        node.divisor = raw.inertia[i] * raw.omega_syn;
        node.alpha = raw.damping[i] / node.divisor;
        node.power = raw.p_mech[i] / node.divisor;
        node.inertia = raw.inertia[i];
        node.damping = raw.damping[i];
        node.p_mech = raw.p_mech[i];
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& l : lines) {
        if (l.from >= n || l.to >= n)
            throw TopologyError("line " + edge_name(l.from, l.to) + " references an unknown node");
        if (l.from == l.to) throw TopologyError("self edge " + edge_name(l.from, l.to));
        if (!seen.insert(std::minmax(l.from, l.to)).second)
            throw TopologyError("duplicate edge " + edge_name(l.from, l.to));
        if (!(l.p_max > 0.0))
            throw ParameterError("nonpositive coupling on edge " + edge_name(l.from, l.to));
        grid.edges.push_back({l.from, l.to, l.p_max});
    }
    if (auto lost = unreachable_nodes(n, grid.edges); !lost.empty())
        throw TopologyError("disconnected topology: node " + std::to_string(lost.front()) +
                            " unreachable");
    return grid;
}

std::vector<std::string> validate(const PowerGrid& grid) {
    std::vector<std::string> out;
    const std::size_t n = grid.size();
    if (n == 0) {
        out.emplace_back("grid has no nodes");
        return out;
    }
    if (!(grid.omega_syn > 0.0) || !std::isfinite(grid.omega_syn))
        out.emplace_back("omega_syn must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = grid.nodes[i];
        if (!(node.alpha > 0.0) || !std::isfinite(node.alpha))
            out.push_back("node " + std::to_string(i) + " nonpositive damping rate");
        if (!std::isfinite(node.power))
            out.push_back("node " + std::to_string(i) + " non-finite power");
        if (!(node.divisor > 0.0) || !std::isfinite(node.divisor))
            out.push_back("node " + std::to_string(i) + " nonpositive inertia");
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : grid.edges) {
        const auto name = edge_name(e.from, e.to);
        if (e.from >= n || e.to >= n) {
            out.push_back("edge " + name + " references an unknown node");
            continue;
        }
        if (e.from == e.to) out.push_back("self edge " + name);
        if (!seen.insert(std::minmax(e.from, e.to)).second) out.push_back("duplicate edge " + name);
        if (!(e.coupling > 0.0) || !std::isfinite(e.coupling))
            out.push_back("nonpositive coupling on edge " + name);
    }
    for (auto v : unreachable_nodes(n, grid.edges))
        out.push_back("node " + std::to_string(v) + " unreachable");
    return out;
}

std::vector<std::string> warnings(const PowerGrid& grid) {
    std::vector<std::string> out;
    const double imbalance = grid.power_sum();
    if (std::abs(imbalance) > 1e-9) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "power imbalance: sum of P_i = " << imbalance
            << "; synchronized state rotates relative to the reference frame";
        out.push_back(msg.str());
    }
    return out;
}

namespace {

std::string position_of(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

double number_field(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + "." + key + ": missing field");
    if (!it->is_number()) throw ParseError(where + "." + key + ": expected number");
    return it->get<double>();
}

std::optional<double> optional_number(const json& obj, const std::string& key,
                                      const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ParseError(where + "." + key + ": expected number");
    return it->get<double>();
}

std::size_t index_field(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + "." + key + ": missing field");
    if (!it->is_number_integer() || it->get<long long>() < 0)
        throw ParseError(where + "." + key + ": expected non-negative integer");
    return it->get<std::size_t>();
}

}  // namespace

PowerGrid parse_grid(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("grid file " + position_of(text, e.byte > 0 ? e.byte - 1 : 0) +
                         ": malformed JSON");
    }
    if (!doc.is_object()) throw ParseError("grid file: top level must be an object");
    auto version = doc.find("version");
    if (version == doc.end() || !version->is_number_integer())
        throw ParseError("version: missing or not an integer");
    if (version->get<int>() != 1)
        throw ParseError("version: unsupported grid format version " +
                         std::to_string(version->get<int>()));

    PowerGrid grid;
    if (auto it = doc.find("name"); it != doc.end()) {
        if (!it->is_string()) throw ParseError("name: expected string");
        grid.name = it->get<std::string>();
    }
    grid.omega_syn = optional_number(doc, "omega_syn", "grid").value_or(1.0);

    auto nodes = doc.find("nodes");
    if (nodes == doc.end() || !nodes->is_array()) throw ParseError("nodes: expected array");
    grid.nodes.resize(nodes->size());
    std::vector<bool> assigned(nodes->size(), false);
    for (std::size_t k = 0; k < nodes->size(); ++k) {
        const auto& obj = (*nodes)[k];
        const std::string where = "nodes[" + std::to_string(k) + "]";
        if (!obj.is_object()) throw ParseError(where + ": expected object");
        const auto id = index_field(obj, "id", where);
        if (id >= grid.nodes.size())
            throw ParseError(where + ".id: node ids must be consecutive from 0");
        if (assigned[id]) throw ParseError(where + ".id: duplicate node id " + std::to_string(id));
        assigned[id] = true;
        auto& node = grid.nodes[id];
        node.alpha = number_field(obj, "alpha", where);
        node.power = number_field(obj, "power", where);
        node.inertia = optional_number(obj, "inertia", where);
        node.damping = optional_number(obj, "damping", where);
        node.p_mech = optional_number(obj, "p_mech", where);
        if (node.inertia) node.divisor = *node.inertia * grid.omega_syn;
        if (auto it = obj.find("label"); it != obj.end()) {
            if (!it->is_string()) throw ParseError(where + ".label: expected string");
            node.label = it->get<std::string>();
        }
    }

    auto edges = doc.find("edges");
    if (edges == doc.end() || !edges->is_array()) throw ParseError("edges: expected array");
    for (std::size_t k = 0; k < edges->size(); ++k) {
        const auto& obj = (*edges)[k];
        const std::string where = "edges[" + std::to_string(k) + "]";
        if (!obj.is_object()) throw ParseError(where + ": expected object");
        GridEdge e;
        e.from = index_field(obj, "from", where);
        e.to = index_field(obj, "to", where);
        if (e.from >= grid.size() || e.to >= grid.size())
            throw ValidationError(where + ": edge " + edge_name(e.from, e.to) +
                                  " references an unknown node");
        const bool has_k = obj.contains("k");
        const bool has_pmax = obj.contains("p_max");
        if (has_k == has_pmax) throw ParseError(where + ": exactly one of k or p_max is required");
        if (has_pmax) {
            e.coupling = number_field(obj, "p_max", where);
        } else {
            e.coupling = number_field(obj, "k", where) *
                         std::sqrt(grid.nodes[e.from].divisor * grid.nodes[e.to].divisor);
        }
        grid.edges.push_back(e);
    }

    if (auto violations = validate(grid); !violations.empty()) {
        std::string msg = "invalid grid:";
        for (const auto& v : violations) msg += " " + v + ";";
        msg.pop_back();
        throw ValidationError(msg);
    }
    return grid;
}

PowerGrid load_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open grid file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_grid(buf.str());
}

namespace {

json canonical_json(const PowerGrid& grid) {
    json doc;
    doc["version"] = 1;
    doc["name"] = grid.name;
    doc["omega_syn"] = grid.omega_syn;
    json nodes = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& n = grid.nodes[i];
        json obj;
        obj["id"] = i;
        obj["alpha"] = n.alpha;
        obj["power"] = n.power;
        if (n.inertia) obj["inertia"] = *n.inertia;
        if (n.damping) obj["damping"] = *n.damping;
        if (n.p_mech) obj["p_mech"] = *n.p_mech;
        if (!n.label.empty()) obj["label"] = n.label;
        nodes.push_back(std::move(obj));
    }
    json edges = json::array();
    for (const auto& e : grid.edges) {
        json obj;
        obj["from"] = e.from;
        obj["to"] = e.to;
        if (grid.nodes[e.from].divisor == 1.0 && grid.nodes[e.to].divisor == 1.0)
            obj["k"] = e.coupling;
        else
            obj["p_max"] = e.coupling;
        edges.push_back(std::move(obj));
    }
    doc["nodes"] = std::move(nodes);
    doc["edges"] = std::move(edges);
    return doc;
}

}  // namespace

std::string serialize_grid(const PowerGrid& grid) { return canonical_json(grid).dump(1) + "\n"; }

void save_grid(const PowerGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write grid file " + path.string());
    out << serialize_grid(grid);
}

Fingerprint sha256(std::span<const std::uint8_t> bytes) {
    Fingerprint fp{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), fp.data(), &len, EVP_sha256(), nullptr);
    return fp;
}

Fingerprint fingerprint(const PowerGrid& grid) {
    const std::string text = canonical_json(grid).dump();
    return sha256({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string to_hex(const Fingerprint& fp) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : fp) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

}  // namespace synchrony

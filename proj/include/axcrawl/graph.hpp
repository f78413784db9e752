#ifndef AXCRAWL_GRAPH_HPP
#define AXCRAWL_GRAPH_HPP

#include <deque>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "axcrawl/ax_model.hpp"

namespace axcrawl {

class ParseError : public std::runtime_error {
public:
    ParseError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// An action recorded on a node because executing it caused no significant
/// change. `setup` holds the prefix actions needed to reproduce it from the
/// node's state (opening a menu, dismissing a popup); when setup is
/// non-empty, `pre_state` is the transient observation the action actually
/// ran against.
struct SafeAction {
    ActionSpec action;
    std::vector<ActionSpec> setup;
    std::string description;
    std::optional<ScreenState> pre_state;

    bool operator==(const SafeAction&) const = default;
};

struct GraphNode {
    int id = 0;
    ScreenState state;
    std::vector<SafeAction> safe_actions;

    bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
    int from_node = 0;
    ActionSpec action;
    std::vector<ActionSpec> setup;
    std::string action_description;
    int out_vertex = 0;
    std::optional<ScreenState> pre_state;  // present iff setup is non-empty

    bool operator==(const GraphEdge&) const = default;
};

struct InteractionGraph {
    int root = 0;
    std::map<int, GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::string app_name;
    std::string genre;

    bool operator==(const InteractionGraph&) const = default;
};

/// Shortest-path edge distance from root per reachable node.
inline std::map<int, int> depths_from_root(const InteractionGraph& g) {
    std::map<int, std::vector<int>> adj;
    for (const auto& e : g.edges) adj[e.from_node].push_back(e.out_vertex);
    std::map<int, int> depth;
    std::deque<int> queue;
    if (g.nodes.count(g.root)) {
        depth[g.root] = 0;
        queue.push_back(g.root);
    }
    while (!queue.empty()) {
        const int n = queue.front();
        queue.pop_front();
        for (int m : adj[n])
            if (!depth.count(m)) {
                depth[m] = depth[n] + 1;
                queue.push_back(m);
            }
    }
    return depth;
}

/// Maximum shortest-path depth over all nodes.
inline int depth(const InteractionGraph& g) {
    int best = 0;
    for (const auto& [_, d] : depths_from_root(g)) best = std::max(best, d);
    return best;
}

inline bool all_nodes_reachable(const InteractionGraph& g) {
    return depths_from_root(g).size() == g.nodes.size();
}

// ---------------------------------------------------------------------------
// Canonical serialization: nodes sorted by id, fixed field order. Equal
// graphs always produce identical bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline ordered_json actions_to_json(const std::vector<ActionSpec>& setup) {
    ordered_json arr = ordered_json::array();
    for (const auto& a : setup) arr.push_back(action_to_json(a));
    return arr;
}

inline std::vector<ActionSpec> actions_from_json(const ordered_json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(path, "expected array of actions");
    std::vector<ActionSpec> out;
    int i = 0;
    for (const auto& aj : j) out.push_back(action_from_json(aj, path + "[" + std::to_string(i++) + "]"));
    return out;
}

}  // namespace detail

inline std::string serialize(const InteractionGraph& g) {
    ordered_json j;
    j["app_name"] = g.app_name;
    j["genre"] = g.genre;
    j["root"] = g.root;
    ordered_json nodes = ordered_json::array();
    for (const auto& [id, node] : g.nodes) {  // std::map iterates sorted by id
        ordered_json nj;
        nj["id"] = id;
        nj["state"] = screen_state_to_json(node.state);
        ordered_json safes = ordered_json::array();
        for (const auto& sa : node.safe_actions) {
            ordered_json sj;
            sj["action"] = action_to_json(sa.action);
            sj["setup"] = detail::actions_to_json(sa.setup);
            sj["description"] = sa.description;
            sj["pre_state"] = sa.pre_state ? screen_state_to_json(*sa.pre_state)
                                           : ordered_json(nullptr);
            safes.push_back(std::move(sj));
        }
        nj["safe_actions"] = std::move(safes);
        nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    ordered_json edges = ordered_json::array();
    for (const auto& e : g.edges) {
        ordered_json ej;
        ej["from"] = e.from_node;
        ej["action"] = action_to_json(e.action);
        ej["setup"] = detail::actions_to_json(e.setup);
        ej["description"] = e.action_description;
        ej["out"] = e.out_vertex;
        ej["pre_state"] = e.pre_state ? screen_state_to_json(*e.pre_state) : ordered_json(nullptr);
        edges.push_back(std::move(ej));
    }
    j["edges"] = std::move(edges);
    return j.dump(2) + "\n";
}

inline InteractionGraph deserialize(const std::string& bytes) {
    ordered_json j;
    try {
        j = ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("$", "graph must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "app_name" && key != "genre" && key != "root" && key != "nodes" && key != "edges")
            throw ParseError("$." + key, "unknown field");
    for (const char* req : {"app_name", "genre", "root", "nodes", "edges"})
        if (!j.contains(req)) throw ParseError(std::string("$.") + req, "missing required field");

    InteractionGraph g;
    if (!j["app_name"].is_string()) throw ParseError("$.app_name", "expected string");
    if (!j["genre"].is_string()) throw ParseError("$.genre", "expected string");
    if (!j["root"].is_number_integer()) throw ParseError("$.root", "expected integer");
    g.app_name = j["app_name"].get<std::string>();
    g.genre = j["genre"].get<std::string>();
    g.root = j["root"].get<int>();

    if (!j["nodes"].is_array()) throw ParseError("$.nodes", "expected array");
    int ni = 0;
    for (const auto& nj : j["nodes"]) {
        const std::string npath = "$.nodes[" + std::to_string(ni++) + "]";
        if (!nj.is_object()) throw ParseError(npath, "node must be an object");
        for (const auto& [key, _] : nj.items())
            if (key != "id" && key != "state" && key != "safe_actions")
                throw ParseError(npath + "." + key, "unknown field");
        if (!nj.contains("id") || !nj["id"].is_number_integer())
            throw ParseError(npath + ".id", "missing integer id");
        GraphNode node;
        node.id = nj["id"].get<int>();
        if (!nj.contains("state")) throw ParseError(npath + ".state", "missing state");
        try {
            node.state = screen_state_from_json(nj["state"], npath + ".state");
        } catch (const SchemaError& e) {
            throw ParseError(e.path(), e.what());
        }
        if (nj.contains("safe_actions")) {
            if (!nj["safe_actions"].is_array()) throw ParseError(npath + ".safe_actions", "expected array");
            int si = 0;
            for (const auto& sj : nj["safe_actions"]) {
                const std::string spath = npath + ".safe_actions[" + std::to_string(si++) + "]";
                if (!sj.is_object() || !sj.contains("action"))
                    throw ParseError(spath, "safe action requires an action");
                SafeAction sa;
                try {
                    sa.action = action_from_json(sj["action"], spath + ".action");
                    if (sj.contains("setup")) sa.setup = detail::actions_from_json(sj["setup"], spath + ".setup");
                    if (sj.contains("pre_state") && !sj["pre_state"].is_null())
                        sa.pre_state = screen_state_from_json(sj["pre_state"], spath + ".pre_state");
                } catch (const SchemaError& e) {
                    throw ParseError(e.path(), e.what());
                }
                if (sj.contains("description")) {
                    if (!sj["description"].is_string())
                        throw ParseError(spath + ".description", "expected string");
                    sa.description = sj["description"].get<std::string>();
                }
                node.safe_actions.push_back(std::move(sa));
            }
        }
        if (g.nodes.count(node.id)) throw ParseError(npath + ".id", "duplicate node id");
        g.nodes.emplace(node.id, std::move(node));
    }

    if (!j["edges"].is_array()) throw ParseError("$.edges", "expected array");
    int ei = 0;
    for (const auto& ej : j["edges"]) {
        const std::string epath = "$.edges[" + std::to_string(ei++) + "]";
        if (!ej.is_object()) throw ParseError(epath, "edge must be an object");
        for (const auto& [key, _] : ej.items())
            if (key != "from" && key != "action" && key != "setup" && key != "description" &&
                key != "out" && key != "pre_state")
                throw ParseError(epath + "." + key, "unknown field");
        for (const char* req : {"from", "action", "out"})
            if (!ej.contains(req)) throw ParseError(epath + "." + req, "missing required field");
        GraphEdge e;
        if (!ej["from"].is_number_integer()) throw ParseError(epath + ".from", "expected integer");
        if (!ej["out"].is_number_integer()) throw ParseError(epath + ".out", "expected integer");
        e.from_node = ej["from"].get<int>();
        e.out_vertex = ej["out"].get<int>();
        try {
            e.action = action_from_json(ej["action"], epath + ".action");
            if (ej.contains("setup")) e.setup = detail::actions_from_json(ej["setup"], epath + ".setup");
            if (ej.contains("pre_state") && !ej["pre_state"].is_null())
                e.pre_state = screen_state_from_json(ej["pre_state"], epath + ".pre_state");
        } catch (const SchemaError& ex) {
            throw ParseError(ex.path(), ex.what());
        }
        if (ej.contains("description")) {
            if (!ej["description"].is_string()) throw ParseError(epath + ".description", "expected string");
            e.action_description = ej["description"].get<std::string>();
        }
        if (!g.nodes.count(e.from_node)) throw ParseError(epath + ".from", "unknown node id");
        if (!g.nodes.count(e.out_vertex)) throw ParseError(epath + ".out", "unknown node id");
        g.edges.push_back(std::move(e));
    }
    if (!g.nodes.count(g.root)) throw ParseError("$.root", "unknown node id");
    return g;
}

// ---------------------------------------------------------------------------
// Visualization.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace detail

inline std::string export_dot(const InteractionGraph& g) {
    std::ostringstream out;
    out << "digraph \"" << detail::dot_escape(g.app_name) << "\" {\n";
    out << "  rankdir=TB;\n";
    for (const auto& [id, _] : g.nodes)
        out << "  n" << id << " [label=\"" << detail::dot_escape(g.app_name) << "/" << id
            << "\", shape=box];\n";
    for (const auto& e : g.edges)
        out << "  n" << e.from_node << " -> n" << e.out_vertex << " [label=\""
            << detail::dot_escape(e.action_description) << "\"];\n";
    out << "}\n";
    return out.str();
}

/// Layered SVG: one horizontal layer per shortest-path depth, deterministic
/// coordinates, no external layout engine.
inline std::string export_svg(const InteractionGraph& g) {
    const auto node_depths = depths_from_root(g);
    std::map<int, std::vector<int>> layers;  // depth -> node ids (sorted via map order)
    for (const auto& [id, d] : node_depths) layers[d].push_back(id);

    constexpr int box_w = 160, box_h = 48, gap_x = 40, gap_y = 80, margin = 24;
    std::map<int, std::pair<int, int>> pos;  // node id -> top-left
    std::size_t widest = 1;
    for (const auto& [d, ids] : layers) {
        widest = std::max(widest, ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
            pos[ids[i]] = {margin + static_cast<int>(i) * (box_w + gap_x),
                           margin + d * (box_h + gap_y)};
    }
    const int width = margin * 2 + static_cast<int>(widest) * (box_w + gap_x) - gap_x;
    const int height = margin * 2 + (static_cast<int>(layers.size())) * (box_h + gap_y) - gap_y;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max(width, box_w)
        << "\" height=\"" << std::max(height, box_h) << "\">\n";
    for (const auto& e : g.edges) {
        if (!pos.count(e.from_node) || !pos.count(e.out_vertex)) continue;
        const auto [x1, y1] = pos[e.from_node];
        const auto [x2, y2] = pos[e.out_vertex];
        const int ax = x1 + box_w / 2, ay = y1 + box_h;
        const int bx = x2 + box_w / 2, by = y2;
        out << "  <line x1=\"" << ax << "\" y1=\"" << ay << "\" x2=\"" << bx << "\" y2=\"" << by
            << "\" stroke=\"#667\" stroke-width=\"1\"/>\n";
        out << "  <text x=\"" << (ax + bx) / 2 << "\" y=\"" << (ay + by) / 2
            << "\" font-size=\"9\" fill=\"#445\">" << detail::xml_escape(e.action_description)
            << "</text>\n";
    }
    for (const auto& [id, p] : pos) {
        out << "  <rect x=\"" << p.first << "\" y=\"" << p.second << "\" width=\"" << box_w
            << "\" height=\"" << box_h << "\" fill=\"#dce6f4\" stroke=\"#557\"/>\n";
        out << "  <text x=\"" << p.first + 8 << "\" y=\"" << p.second + 20 << "\" font-size=\"11\">"
            << detail::xml_escape(g.app_name) << "/" << id << "</text>\n";
        out << "  <text x=\"" << p.first + 8 << "\" y=\"" << p.second + 36
            << "\" font-size=\"9\" fill=\"#556\">"
            << detail::xml_escape(g.nodes.at(id).state.image_name) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace axcrawl

#endif  // AXCRAWL_GRAPH_HPP

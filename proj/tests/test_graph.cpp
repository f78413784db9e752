#include <catch_amalgamated.hpp>

#include "axcrawl/crawler.hpp"
#include "axcrawl/graph.hpp"
#include "test_util.hpp"

using namespace axcrawl;
namespace tu = test_util;

namespace {

InteractionGraph chain_graph(int n) {
    InteractionGraph g;
    g.app_name = "chain";
    g.genre = "Utilities";
    g.root = 0;
    for (int i = 0; i < n; ++i) {
        GraphNode node;
        node.id = i;
        node.state.tree = tu::random_tree(100 + i, 6);
        node.state.image_name = "screen_" + std::to_string(i) + ".ppm";
        g.nodes.emplace(i, std::move(node));
        if (i > 0) {
            GraphEdge e;
            e.from_node = i - 1;
            e.out_vertex = i;
            e.action = ActionSpec::click_at({10.0 * i, 8.0}, i);
            e.action_description = "step " + std::to_string(i);
            g.edges.push_back(std::move(e));
        }
    }
    return g;
}

// Brute-force shortest-path depth oracle over the serialized edge list.
int brute_force_depth(const InteractionGraph& g) {
    std::map<int, int> dist;
    dist[g.root] = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& e : g.edges) {
            auto it = dist.find(e.from_node);
            if (it == dist.end()) continue;
            auto out = dist.find(e.out_vertex);
            if (out == dist.end() || out->second > it->second + 1) {
                dist[e.out_vertex] = it->second + 1;
                changed = true;
            }
        }
    }
    int best = 0;
    for (const auto& [_, d] : dist) best = std::max(best, d);
    return best;
}

}  // namespace

TEST_CASE("depth of trivial and chain graphs", "[graph]") {
    REQUIRE(depth(chain_graph(1)) == 0);
    REQUIRE(depth(chain_graph(3)) == 2);
}

TEST_CASE("depth of a diamond uses shortest paths", "[graph]") {
    InteractionGraph g = chain_graph(2);  // 0 -> 1
    GraphNode b;
    b.id = 2;
    b.state.tree = tu::random_tree(7, 5);
    g.nodes.emplace(2, std::move(b));
    GraphNode c;
    c.id = 3;
    c.state.tree = tu::random_tree(8, 5);
    g.nodes.emplace(3, std::move(c));
    auto edge = [](int from, int to) {
        GraphEdge e;
        e.from_node = from;
        e.out_vertex = to;
        e.action = ActionSpec::click_at({1, 1});
        return e;
    };
    g.edges.push_back(edge(0, 2));
    g.edges.push_back(edge(1, 3));
    g.edges.push_back(edge(2, 3));
    REQUIRE(depth(g) == 2);
    REQUIRE(depth(g) == brute_force_depth(g));
}

TEST_CASE("duplicate rate follows its definition", "[graph]") {
    CrawlReport report;
    report.duplicates_linked = 0;
    report.nodes_created = 10;
    REQUIRE(duplicate_rate(InteractionGraph{}, report) == 0.0);
    report.duplicates_linked = 1;
    report.nodes_created = 9;
    REQUIRE(duplicate_rate(InteractionGraph{}, report) == Catch::Approx(0.1));
}

TEST_CASE("graph serialization round trips and is canonical", "[graph]") {
    const InteractionGraph g = tu::random_graph(42);
    const std::string bytes = serialize(g);
    const InteractionGraph back = deserialize(bytes);
    REQUIRE(back == g);
    REQUIRE(serialize(back) == bytes);

    // A structurally equal graph built independently serializes identically.
    const InteractionGraph twin = tu::random_graph(42);
    REQUIRE(twin == g);
    REQUIRE(serialize(twin) == bytes);
}

TEST_CASE("truncated graph files are parse errors", "[graph]") {
    const std::string bytes = serialize(tu::random_graph(7));
    REQUIRE_THROWS_AS(deserialize(bytes.substr(0, bytes.size() / 2)), ParseError);
    REQUIRE_THROWS_AS(deserialize("{\"nope\": 1}"), ParseError);
}

TEST_CASE("deserialize validates endpoints", "[graph]") {
    InteractionGraph g = chain_graph(2);
    g.edges[0].out_vertex = 99;
    const std::string bytes = serialize(g);
    try {
        deserialize(bytes);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(std::string(e.path()).find("edges[0]") != std::string::npos);
    }
}

TEST_CASE("DOT export lists nodes and labeled edges", "[graph]") {
    const InteractionGraph g1 = chain_graph(1);
    const std::string dot1 = export_dot(g1);
    REQUIRE(dot1.find("n0") != std::string::npos);
    REQUIRE(dot1.find("->") == std::string::npos);

    const InteractionGraph g3 = chain_graph(3);
    const std::string dot3 = export_dot(g3);
    REQUIRE(dot3.find("n0 -> n1") != std::string::npos);
    REQUIRE(dot3.find("step 2") != std::string::npos);
}

TEST_CASE("SVG export is layered by depth and deterministic", "[graph]") {
    InteractionGraph g = chain_graph(3);  // three levels
    const std::string svg = export_svg(g);
    REQUIRE(svg == export_svg(g));

    // One distinct y coordinate per depth layer.
    std::set<std::string> rect_ys;
    std::size_t pos = 0;
    while ((pos = svg.find("<rect", pos)) != std::string::npos) {
        const auto y = svg.find("y=\"", pos);
        rect_ys.insert(svg.substr(y + 3, svg.find('"', y + 3) - y - 3));
        ++pos;
    }
    REQUIRE(rect_ys.size() == 3);
}

TEST_CASE("reachability helper notices orphans", "[graph]") {
    InteractionGraph g = chain_graph(3);
    REQUIRE(all_nodes_reachable(g));
    GraphNode orphan;
    orphan.id = 50;
    orphan.state.tree = tu::random_tree(3, 4);
    g.nodes.emplace(50, std::move(orphan));
    REQUIRE_FALSE(all_nodes_reachable(g));
}

TEST_CASE("property: 500-case serialization corpus round trips", "[graph][property]") {
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        const InteractionGraph g = tu::random_graph(seed);
        const std::string bytes = serialize(g);
        const InteractionGraph back = deserialize(bytes);
        REQUIRE(back == g);
        REQUIRE(serialize(back) == bytes);
    }
}

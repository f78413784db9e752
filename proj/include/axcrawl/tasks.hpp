#ifndef AXCRAWL_TASKS_HPP
#define AXCRAWL_TASKS_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "axcrawl/agents.hpp"
#include "axcrawl/ax_model.hpp"
#include "axcrawl/crawler.hpp"
#include "axcrawl/graph.hpp"
#include "axcrawl/sim_backend.hpp"

namespace axcrawl {

class MalformedAction : public std::runtime_error {
public:
    explicit MalformedAction(const std::string& what) : std::runtime_error(what) {}
};

class DegenerateSplit : public std::runtime_error {
public:
    explicit DegenerateSplit(const std::string& what) : std::runtime_error(what) {}
};

/// One grounded task in the dataset schema.
struct TaskRecord {
    int screen_id = 0;
    std::string app_name;
    std::string task;
    std::string raw_action;
    std::string action;  // "left click, (x, y)" or "type <text>"
    UiElement element_data;
    double scaling_factor = 1.0;
    bool original_task = true;
    AxTree a11y_path;  // full tree before the action
    std::string image_ref;
    std::string cropped_image_ref;
    std::string task_category;
    std::string element_category;

    bool operator==(const TaskRecord&) const = default;
};

/// Structured action grammar of the dataset.
inline std::string format_action(const ActionSpec& a) {
    switch (a.kind) {
        case ActionKind::Click: {
            if (!a.point) throw MalformedAction("click action has no point");
            std::ostringstream out;
            out << "left click, (" << std::llround(a.point->x) << ", " << std::llround(a.point->y)
                << ")";
            return out.str();
        }
        case ActionKind::Move: {
            if (!a.point) throw MalformedAction("move action has no point");
            std::ostringstream out;
            out << "move, (" << std::llround(a.point->x) << ", " << std::llround(a.point->y) << ")";
            return out.str();
        }
        case ActionKind::Type:
            if (!a.text) throw MalformedAction("type action has no text");
            return "type " + *a.text;
        case ActionKind::PressEnter: return "press enter";
    }
    throw MalformedAction("unknown action kind");
}

inline ordered_json record_to_json(const TaskRecord& r) {
    ordered_json j;
    j["screen_id"] = r.screen_id;
    j["app_name"] = r.app_name;
    j["task"] = r.task;
    j["raw_action"] = r.raw_action;
    j["action"] = r.action;
    j["element_data"] = element_to_json(r.element_data);
    j["scaling_factor"] = r.scaling_factor;
    j["original_task"] = r.original_task;
    j["a11y_path"] = tree_to_json(r.a11y_path);
    j["image_ref"] = r.image_ref;
    j["cropped_image_ref"] = r.cropped_image_ref;
    j["task_category"] = r.task_category;
    j["element_category"] = r.element_category;
    return j;
}

inline TaskRecord record_from_json(const ordered_json& j, const std::string& path = "$") {
    if (!j.is_object()) throw ParseError(path, "record must be an object");
    static const std::set<std::string> known = {
        "screen_id",  "app_name",      "task",      "raw_action",        "action",
        "element_data", "scaling_factor", "original_task", "a11y_path", "image_ref",
        "cropped_image_ref", "task_category", "element_category"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ParseError(path + "." + key, "unknown field");
    for (const auto& key : known)
        if (!j.contains(key)) throw ParseError(path + "." + key, "missing required field");
    TaskRecord r;
    try {
        r.screen_id = j["screen_id"].get<int>();
        r.app_name = j["app_name"].get<std::string>();
        r.task = j["task"].get<std::string>();
        r.raw_action = j["raw_action"].get<std::string>();
        r.action = j["action"].get<std::string>();
        r.element_data = element_from_json(j["element_data"], path + ".element_data");
        r.scaling_factor = j["scaling_factor"].get<double>();
        r.original_task = j["original_task"].get<bool>();
        r.a11y_path = tree_from_json(j["a11y_path"], path + ".a11y_path");
        r.image_ref = j["image_ref"].get<std::string>();
        r.cropped_image_ref = j["cropped_image_ref"].get<std::string>();
        r.task_category = j["task_category"].get<std::string>();
        r.element_category = j["element_category"].get<std::string>();
    } catch (const SchemaError& e) {
        throw ParseError(e.path(), e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, e.what());
    }
    if (r.scaling_factor <= 0) throw ParseError(path + ".scaling_factor", "must be positive");
    return r;
}

// ---------------------------------------------------------------------------
// No-op filtering.
// ---------------------------------------------------------------------------

/// Keeps edges whose endpoint states actually differ, and collapses repeats
/// of the same action from the same node into the same out-vertex.
inline std::vector<GraphEdge> filter_noop_edges(const InteractionGraph& g) {
    std::vector<GraphEdge> kept;
    std::set<std::string> seen;
    for (const auto& e : g.edges) {
        const auto& before = g.nodes.at(e.from_node).state.tree;
        const auto& after = g.nodes.at(e.out_vertex).state.tree;
        if (canonical_hash(before, HashMode::Strict) == canonical_hash(after, HashMode::Strict))
            continue;
        const std::string key = std::to_string(e.from_node) + "|" +
                                action_to_json(e.action).dump() + "|" +
                                std::to_string(e.out_vertex);
        if (!seen.insert(key).second) continue;
        kept.push_back(e);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Task synthesis.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string crop_ref_for(int screen_id, int element_id) {
    return "crop_" + std::to_string(screen_id) + "_" + std::to_string(element_id) + ".ppm";
}

inline std::string raw_click_string(const UiElement& el) {
    std::string out = el.role;
    if (el.name && !el.name->empty()) out += " " + *el.name;
    return out;
}

/// Map of element id to its handler-resolved flat copy (children stripped,
/// empty metadata resolved when the crawl ran with handlers).
inline std::map<int, UiElement> resolved_elements_of(const ScreenState& state,
                                                     bool handlers_enabled) {
    std::vector<UiElement> flats;
    for (const UiElement* el : flatten(state.tree)) {
        UiElement flat = *el;
        flat.children.clear();
        flats.push_back(std::move(flat));
    }
    std::map<int, UiElement> out;
    if (handlers_enabled) {
        for (const auto& el : resolve_empty_elements(flats)) out.emplace(el.id, el);
    } else {
        for (const auto& el : flats) out.emplace(el.id, el);
    }
    return out;
}

struct TypedInput {
    int field_id = 0;
    std::string text;
};

/// A typed-input interaction behind an action: either a Type action itself or
/// a PressEnter whose setup ends with the Type that armed it.
inline std::optional<TypedInput> typed_input_of(const ActionSpec& action,
                                                const std::vector<ActionSpec>& setup) {
    if (action.kind == ActionKind::Type)
        return TypedInput{*action.target_id, *action.text};
    if (action.kind == ActionKind::PressEnter) {
        for (auto it = setup.rbegin(); it != setup.rend(); ++it)
            if (it->kind == ActionKind::Type) return TypedInput{*it->target_id, *it->text};
    }
    return std::nullopt;
}

}  // namespace detail

namespace detail {

inline const UiElement* modal_fragment_of(const AxTree& tree) {
    return find_modal_fragment(tree.root);
}

}  // namespace detail

/// Multi-stage task synthesis over a sealed graph: phase 1 turns kept click
/// edges into click tasks, phase 2 turns typed-input interactions into input
/// tasks; additional records are generated over node safe actions
/// (original_task = false). Every candidate is judged against the state the
/// action actually ran in (the edge's pre_state when it had setup actions,
/// the node state otherwise); agent rejections and obstructed or mislanding
/// targets shrink the output.
inline std::vector<TaskRecord> synthesize(const InteractionGraph& g, const AgentSuite& agents,
                                          const CrawlReport& report) {
    if (!report.task_collection)
        throw std::invalid_argument("graph was collected without task collection");

    std::vector<TaskRecord> records;
    std::set<std::string> dedup;  // (screen_id, action) pairs

    std::map<int, std::vector<const GraphEdge*>> edges_by_node;
    const auto kept = filter_noop_edges(g);
    for (const auto& e : kept) edges_by_node[e.from_node].push_back(&e);

    for (const auto& [node_id, node] : g.nodes) {
        auto emit_click = [&](const ActionSpec& action, const ScreenState& state, bool original) {
            if (!action.target_id || !action.point) return;
            const auto resolved = detail::resolved_elements_of(state, report.handlers_enabled);
            auto it = resolved.find(*action.target_id);
            if (it == resolved.end()) return;
            const UiElement& el = it->second;
            if (!is_visible(el, state.tree.window_bbox)) return;
            // The click must actually land on its element in this state.
            const UiElement* hit = locate(state.tree, *action.point);
            if (!hit || hit->id != el.id) return;

            const std::string action_str = format_action(action);
            const std::string key = std::to_string(node_id) + "|" + action_str;
            if (dedup.count(key)) return;

            const std::string crop_ref = detail::crop_ref_for(node_id, el.id);
            const TaskAnnotation ann = click_task_agent(state.image_name, crop_ref, el, agents);
            if (ann.rejected()) return;

            dedup.insert(key);
            TaskRecord r;
            r.screen_id = node_id;
            r.app_name = g.app_name;
            r.task = ann.task;
            r.raw_action = detail::raw_click_string(el);
            r.action = action_str;
            r.element_data = el;
            r.scaling_factor = state.scaling_factor;
            r.original_task = original;
            r.a11y_path = state.tree;
            r.image_ref = state.image_name;
            r.cropped_image_ref = crop_ref;
            r.task_category = ann.task_category;
            r.element_category = ann.element_category;
            records.push_back(std::move(r));
        };

        auto emit_typed = [&](const detail::TypedInput& input, const ScreenState& state,
                              bool original) {
            const auto resolved = detail::resolved_elements_of(state, report.handlers_enabled);
            auto it = resolved.find(input.field_id);
            if (it == resolved.end()) return;
            const UiElement& el = it->second;
            if (!is_visible(el, state.tree.window_bbox)) return;
            // Modal content swallows typing into fields outside of it.
            if (const UiElement* modal = detail::modal_fragment_of(state.tree))
                if (!detail::find_in_element(*modal, input.field_id)) return;

            const std::string field_name = el.name.value_or(el.role);
            const std::string raw = "type '" + input.text + "' into " + detail::raw_click_string(el);
            const std::string crop_ref = detail::crop_ref_for(node_id, el.id);
            const InputTaskAnnotation ann = input_task_agent(
                raw, state.image_name, crop_ref, input.text, field_name, agents);

            const std::string key = std::to_string(node_id) + "|" + ann.action;
            if (dedup.count(key)) return;
            dedup.insert(key);

            TaskRecord r;
            r.screen_id = node_id;
            r.app_name = g.app_name;
            r.task = ann.task;
            r.raw_action = raw;
            r.action = ann.action;
            r.element_data = el;
            r.scaling_factor = state.scaling_factor;
            r.original_task = original;
            r.a11y_path = state.tree;
            r.image_ref = state.image_name;
            r.cropped_image_ref = crop_ref;
            r.task_category = "Input";
            r.element_category = "Input field";
            records.push_back(std::move(r));
        };

        auto it = edges_by_node.find(node_id);
        if (it != edges_by_node.end()) {
            for (const GraphEdge* e : it->second) {
                const ScreenState& state = e->pre_state ? *e->pre_state : node.state;
                if (auto typed = detail::typed_input_of(e->action, e->setup))
                    emit_typed(*typed, state, true);
                else if (e->action.kind == ActionKind::Click)
                    emit_click(e->action, state, true);
            }
        }
        for (const SafeAction& sa : node.safe_actions) {
            const ScreenState& state = sa.pre_state ? *sa.pre_state : node.state;
            if (auto typed = detail::typed_input_of(sa.action, sa.setup))
                emit_typed(*typed, state, false);
            else if (sa.action.kind == ActionKind::Click)
                emit_click(sa.action, state, false);
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Train/test split.
// ---------------------------------------------------------------------------

struct SplitManifest {
    std::set<std::string> train_apps;
    std::set<std::string> test_apps;
    int train_count = 0;
    int test_count = 0;
};

struct SplitResult {
    SplitManifest manifest;
    std::vector<TaskRecord> train;
    std::vector<TaskRecord> test;
};

inline ordered_json manifest_to_json(const SplitManifest& m) {
    ordered_json j;
    j["train_apps"] = m.train_apps;
    j["test_apps"] = m.test_apps;
    j["train_count"] = m.train_count;
    j["test_count"] = m.test_count;
    return j;
}

/// Apps ranked by mean accessibility-tree size; the largest `fraction_test_apps`
/// share goes to test, so the test side carries the more complicated trees.
inline SplitResult split(const std::vector<TaskRecord>& records, double fraction_test_apps = 0.2) {
    if (records.empty()) throw DegenerateSplit("no records to split");
    std::map<std::string, std::pair<double, int>> sums;  // app -> (sum of counts, n)
    for (const auto& r : records) {
        auto& [sum, n] = sums[r.app_name];
        sum += r.a11y_path.element_count();
        n += 1;
    }
    std::vector<std::pair<double, std::string>> ranked;  // (mean size, app)
    for (const auto& [app, sn] : sums) ranked.push_back({sn.first / sn.second, app});
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    const int n_apps = static_cast<int>(ranked.size());
    const int n_test = static_cast<int>(std::llround(fraction_test_apps * n_apps));
    if (n_test <= 0 || n_test >= n_apps)
        throw DegenerateSplit("split would leave train or test empty (" + std::to_string(n_apps) +
                              " apps, " + std::to_string(n_test) + " in test)");

    SplitResult out;
    for (int i = 0; i < n_apps; ++i)
        (i < n_test ? out.manifest.test_apps : out.manifest.train_apps).insert(ranked[i].second);
    for (const auto& r : records) {
        if (out.manifest.test_apps.count(r.app_name)) out.test.push_back(r);
        else out.train.push_back(r);
    }
    out.manifest.train_count = static_cast<int>(out.train.size());
    out.manifest.test_count = static_cast<int>(out.test.size());
    return out;
}

// ---------------------------------------------------------------------------
// JSONL dataset files.
// ---------------------------------------------------------------------------

inline std::string dataset_to_jsonl(const std::vector<TaskRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump() + "\n";
    return out;
}

inline std::vector<TaskRecord> dataset_from_jsonl(const std::string& text) {
    std::vector<TaskRecord> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(line_no), e.what());
        }
        try {
            out.push_back(record_from_json(j));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no), e.what());
        }
    }
    return out;
}

inline void write_dataset(const std::vector<TaskRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << dataset_to_jsonl(records);
}

inline std::vector<TaskRecord> read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return dataset_from_jsonl(buf.str());
}

// ---------------------------------------------------------------------------
// Replay verification against a live backend.
// ---------------------------------------------------------------------------

/// Replays every record's action path on a fresh session and checks the
/// ground truth: clicks land inside the target bbox on the target element,
/// typed text arrives byte-exact. Returns one message per failing record.
inline std::vector<std::string> verify_replay(const std::vector<TaskRecord>& records,
                                              const InteractionGraph& g,
                                              const SessionFactory& factory) {
    std::vector<std::string> failures;
    const auto paths = replay_paths(g);

    auto fail = [&](const TaskRecord& r, const std::string& why) {
        failures.push_back("screen " + std::to_string(r.screen_id) + " action '" + r.action +
                           "': " + why);
    };

    for (const auto& r : records) {
        auto path_it = paths.find(r.screen_id);
        if (path_it == paths.end()) {
            fail(r, "screen is unreachable in the graph");
            continue;
        }
        const GraphNode& node = g.nodes.at(r.screen_id);

        // Recover the setup actions from the matching edge or safe action.
        std::vector<ActionSpec> setup;
        ActionSpec replay_action;
        bool found = false;
        auto matches = [&](const ActionSpec& action, const std::vector<ActionSpec>& sa_setup) {
            if (auto typed = detail::typed_input_of(action, sa_setup)) {
                if (r.action == "type " + typed->text && typed->field_id == r.element_data.id) {
                    setup = sa_setup;
                    if (action.kind == ActionKind::PressEnter && !setup.empty()) setup.pop_back();
                    replay_action = ActionSpec::type_into(typed->field_id, typed->text);
                    return true;
                }
                return false;
            }
            if (action.kind == ActionKind::Click && format_action(action) == r.action) {
                setup = sa_setup;
                replay_action = action;
                return true;
            }
            return false;
        };
        for (const auto& e : g.edges)
            if (!found && e.from_node == r.screen_id && matches(e.action, e.setup)) found = true;
        for (const auto& sa : node.safe_actions)
            if (!found && matches(sa.action, sa.setup)) found = true;
        if (!found) {
            fail(r, "no matching edge or safe action in the graph");
            continue;
        }

        try {
            auto session = factory();
            for (const auto& a : path_it->second) session->perform(a);
            for (const auto& a : setup) session->perform(a);
            const ScreenState live = session->observe();

            if (replay_action.kind == ActionKind::Click) {
                const Point p = *replay_action.point;
                if (!r.element_data.bbox.contains(p)) {
                    fail(r, "click point is outside the recorded element bbox");
                    continue;
                }
                const UiElement* hit = locate(live.tree, p);
                if (!hit || hit->id != r.element_data.id) {
                    fail(r, "click lands on a different element in the live state");
                    continue;
                }
                session->perform(replay_action);
            } else {
                const StepOutcome out = session->perform(replay_action);
                const UiElement* field = find_by_id(out.observation.tree, r.element_data.id);
                if (!field || !field->value || *field->value != *replay_action.text) {
                    fail(r, "typed text did not arrive in the field");
                    continue;
                }
            }
        } catch (const std::exception& e) {
            fail(r, std::string("backend error: ") + e.what());
        }
    }
    return failures;
}

}  // namespace axcrawl

#endif  // AXCRAWL_TASKS_HPP

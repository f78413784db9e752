#ifndef AXCRAWL_CRAWLER_HPP
#define AXCRAWL_CRAWLER_HPP

#include <chrono>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "axcrawl/agents.hpp"
#include "axcrawl/ax_model.hpp"
#include "axcrawl/graph.hpp"
#include "axcrawl/sim_backend.hpp"

namespace axcrawl {

/// Whether "more than N changed elements" counts additions and removals
/// jointly or either kind alone. Joint is the default reading.
enum class ChangeRule { JointCount, EitherAlone };

struct CrawlerConfig {
    double max_duration_minutes = 120.0;
    std::string default_text = "DEFAULT";
    int max_depth = 25;
    bool cursor_move_before_click = false;
    bool agent_usage = true;
    bool task_collection = true;
    int significant_change_threshold = 10;
    std::uint64_t rng_seed = 0;
    bool handlers_enabled = true;
    ChangeRule change_rule = ChangeRule::JointCount;
};

enum class HaltedReason { Budget, DepthExhausted, Complete, LoginFlagged };

inline const char* to_string(HaltedReason r) {
    switch (r) {
        case HaltedReason::Budget: return "Budget";
        case HaltedReason::DepthExhausted: return "DepthExhausted";
        case HaltedReason::Complete: return "Complete";
        case HaltedReason::LoginFlagged: return "LoginFlagged";
    }
    return "?";
}

struct CrawlReport {
    int nodes_created = 0;
    int edges_created = 0;
    int duplicates_linked = 0;
    std::map<std::string, int> handler_counters = {
        {"popup", 0}, {"invisible", 0}, {"menu", 0}, {"empty", 0}};
    int restore_failures = 0;
    double elapsed_seconds = 0.0;
    HaltedReason halted_reason = HaltedReason::Complete;
    bool handlers_enabled = true;
    bool task_collection = true;
    std::optional<std::string> backend_error;
};

inline ordered_json report_to_json(const CrawlReport& r) {
    ordered_json j;
    j["nodes_created"] = r.nodes_created;
    j["edges_created"] = r.edges_created;
    j["duplicates_linked"] = r.duplicates_linked;
    ordered_json counters;
    for (const auto& [k, v] : r.handler_counters) counters[k] = v;
    j["handler_counters"] = counters;
    j["restore_failures"] = r.restore_failures;
    j["elapsed_seconds"] = r.elapsed_seconds;
    j["halted_reason"] = to_string(r.halted_reason);
    j["handlers_enabled"] = r.handlers_enabled;
    j["task_collection"] = r.task_collection;
    j["backend_error"] = r.backend_error ? ordered_json(*r.backend_error) : ordered_json(nullptr);
    // Duplicate rate as documented: duplicates_linked / (duplicates_linked + nodes_created).
    j["duplicate_rate"] = (r.duplicates_linked + r.nodes_created) == 0
                              ? 0.0
                              : static_cast<double>(r.duplicates_linked) /
                                    (r.duplicates_linked + r.nodes_created);
    return j;
}

inline CrawlReport report_from_json(const ordered_json& j) {
    CrawlReport r;
    r.nodes_created = j.at("nodes_created").get<int>();
    r.edges_created = j.at("edges_created").get<int>();
    r.duplicates_linked = j.at("duplicates_linked").get<int>();
    for (const auto& [k, v] : j.at("handler_counters").items())
        r.handler_counters[k] = v.get<int>();
    if (j.contains("restore_failures")) r.restore_failures = j["restore_failures"].get<int>();
    r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    const std::string reason = j.at("halted_reason").get<std::string>();
    if (reason == "Budget") r.halted_reason = HaltedReason::Budget;
    else if (reason == "DepthExhausted") r.halted_reason = HaltedReason::DepthExhausted;
    else if (reason == "LoginFlagged") r.halted_reason = HaltedReason::LoginFlagged;
    else r.halted_reason = HaltedReason::Complete;
    if (j.contains("handlers_enabled")) r.handlers_enabled = j["handlers_enabled"].get<bool>();
    if (j.contains("task_collection")) r.task_collection = j["task_collection"].get<bool>();
    if (j.contains("backend_error") && !j["backend_error"].is_null())
        r.backend_error = j["backend_error"].get<std::string>();
    return r;
}

/// Linked duplicates over all discovered states.
inline double duplicate_rate(const InteractionGraph&, const CrawlReport& report) {
    const double denom = report.duplicates_linked + report.nodes_created;
    return denom == 0 ? 0.0 : report.duplicates_linked / denom;
}

// ---------------------------------------------------------------------------
// Significant-change rule.
// ---------------------------------------------------------------------------

/// True iff strictly more than `threshold` elements were added or removed,
/// counted jointly. Value-only changes never count.
inline bool is_significant(const TreeDiff& d, int threshold) {
    return static_cast<int>(d.added.size() + d.removed.size()) > threshold;
}

inline bool is_significant(const TreeDiff& d, int threshold, ChangeRule rule) {
    if (rule == ChangeRule::JointCount) return is_significant(d, threshold);
    return static_cast<int>(d.added.size()) > threshold ||
           static_cast<int>(d.removed.size()) > threshold;
}

// ---------------------------------------------------------------------------
// Handlers.
// ---------------------------------------------------------------------------

inline bool is_modal_role(const std::string& role) {
    return role == "AXSheet" || role == "AXDialog" || role == "AXPopover";
}

inline bool is_menu_anchor_role(const std::string& role) {
    return role == "AXMenuButton" || role == "AXPopUpButton" || role == "AXMenuBarItem";
}

inline bool is_container_role(const std::string& role) {
    static const std::set<std::string> containers = {"AXWindow", "AXGroup",   "AXScrollArea",
                                                     "AXToolbar", "AXList",   "AXSheet",
                                                     "AXDialog",  "AXPopover", "AXMenu"};
    return containers.count(role) != 0;
}

/// Anything enabled that is not a pure container can be clicked.
inline bool is_actionable(const UiElement& el) {
    return el.enabled && !is_container_role(el.role);
}

/// Visible, enabled elements only.
inline std::vector<const UiElement*> filter_invisible(const ScreenState& state) {
    std::vector<const UiElement*> out;
    for (const UiElement* el : flatten(state.tree))
        if (el->enabled && is_visible(*el, state.tree.window_bbox)) out.push_back(el);
    return out;
}

/// Elements with no name and no description get a synthesized
/// "<role>@<x>,<y>" name; ones that are also degenerate (zero-size bbox with
/// neither role nor children) are dropped.
inline std::vector<UiElement> resolve_empty_elements(const std::vector<UiElement>& elements) {
    std::vector<UiElement> out;
    for (const UiElement& el : elements) {
        const bool empty_meta = (!el.name || el.name->empty()) &&
                                (!el.description || el.description->empty());
        if (!empty_meta) {
            out.push_back(el);
            continue;
        }
        const bool has_area = el.bbox.w > 0 && el.bbox.h > 0;
        if (!has_area || (el.role.empty() && el.children.empty())) continue;  // dropped
        UiElement fixed = el;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "@%ld,%ld", std::lround(el.bbox.x), std::lround(el.bbox.y));
        fixed.name = el.role + buf;
        out.push_back(std::move(fixed));
    }
    return out;
}

namespace detail {

inline const UiElement* find_modal_fragment(const UiElement& el) {
    if (is_modal_role(el.role)) return &el;
    for (const auto& c : el.children)
        if (const UiElement* f = find_modal_fragment(c)) return f;
    return nullptr;
}

inline const UiElement* pick_dismiss_element(const UiElement& fragment) {
    static const char* preferred[] = {"close", "dismiss", "cancel", "done", "ok", "x"};
    auto lowered = [](const std::string& s) {
        std::string out = s;
        for (char& c : out)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return out;
    };
    std::vector<const UiElement*> buttons;
    struct Walk {
        std::vector<const UiElement*>* buttons;
        void operator()(const UiElement& el) {
            if (el.role.find("Button") != std::string::npos && el.enabled) buttons->push_back(&el);
            for (const auto& c : el.children) (*this)(c);
        }
    };
    Walk{&buttons}(fragment);
    for (const char* want : preferred)
        for (const UiElement* b : buttons)
            if (b->name && lowered(*b->name) == want) return b;
    return buttons.empty() ? nullptr : buttons.back();
}

}  // namespace detail

/// Detects an open modal fragment and, when present, returns the click plan
/// for it: every actionable element inside the fragment first, the dismiss
/// click last.
inline std::optional<std::vector<ActionSpec>> handle_popup(const ScreenState& state) {
    const UiElement* fragment = detail::find_modal_fragment(state.tree.root);
    if (!fragment) return std::nullopt;
    const UiElement* dismiss = detail::pick_dismiss_element(*fragment);
    std::vector<ActionSpec> plan;
    for (const UiElement* el : flatten_subtree(*fragment)) {
        if (!is_actionable(*el) || !is_visible(*el, state.tree.window_bbox)) continue;
        if (dismiss && el->id == dismiss->id) continue;
        plan.push_back(ActionSpec::click_at(el->bbox.center(), el->id));
    }
    if (dismiss) plan.push_back(ActionSpec::click_at(dismiss->bbox.center(), dismiss->id));
    if (plan.empty()) return std::nullopt;
    return plan;
}

struct MenuExpansion {
    int anchor_id = 0;
    ScreenState expanded;
    std::vector<ActionSpec> item_actions;
    std::vector<ActionSpec> setup;  // anchor clicks reproducing the expansion
};

struct UnrollResult {
    std::vector<MenuExpansion> expansions;
    std::vector<std::string> restore_failures;
};

namespace detail {

inline std::optional<Point> background_point(const AxTree& tree) {
    const BBox& win = tree.window_bbox;
    for (double y = win.y + 8; y < win.y + win.h; y += 16)
        for (double x = win.x + 8; x < win.x + win.w; x += 16) {
            const UiElement* hit = locate(tree, {x, y});
            if (hit && hit->id == tree.root.id) return Point{x, y};
        }
    return std::nullopt;
}

inline std::set<int> id_set(const AxTree& tree) {
    std::set<int> ids;
    for (const UiElement* el : flatten(tree)) ids.insert(el->id);
    return ids;
}

}  // namespace detail

/// Opens each menu-bearing anchor, records the expanded state and its item
/// actions, then restores by clicking outside the fragment. Menus whose
/// expansion is itself a significant change are skipped here; the ordinary
/// anchor click will surface them as graph nodes. Nested menus recurse up to
/// `depth_budget` levels.
inline UnrollResult unroll_menus(Session& session, const ScreenState& state, int threshold,
                                 int depth_budget) {
    UnrollResult result;
    const ScreenState base = session.observe();
    const std::uint64_t pre_hash = canonical_hash(base.tree, HashMode::Strict);

    struct Explorer {
        Session& session;
        int threshold;
        UnrollResult& result;

        // Close any open menu by clicking the window background.
        void close_all() {
            const ScreenState now = session.observe();
            if (auto p = detail::background_point(now.tree))
                session.perform(ActionSpec::click_at(*p));
        }

        void explore(const ScreenState& from, const std::vector<ActionSpec>& prefix, int budget) {
            if (budget <= 0) return;
            for (const UiElement* el : flatten(from.tree)) {
                if (!is_menu_anchor_role(el->role) || !el->enabled) continue;
                bool already = false;
                for (const auto& a : prefix)
                    if (a.target_id && *a.target_id == el->id) already = true;
                if (already) continue;

                // Normalize to the closed state, then reopen the parent chain
                // so the anchor is actually on screen.
                close_all();
                for (const auto& a : prefix) session.perform(a);
                const ActionSpec open_click = ActionSpec::click_at(el->bbox.center(), el->id);
                session.perform(open_click);
                const ScreenState expanded = session.observe();
                const auto before_ids = detail::id_set(from.tree);
                std::vector<const UiElement*> fresh;
                for (const UiElement* item : flatten(expanded.tree))
                    if (!before_ids.count(item->id)) fresh.push_back(item);

                // Expansions past the significance threshold become ordinary
                // graph nodes through the anchor's own click; skip them here.
                if (!fresh.empty() && static_cast<int>(fresh.size()) <= threshold) {
                    MenuExpansion exp;
                    exp.anchor_id = el->id;
                    exp.expanded = expanded;
                    exp.setup = prefix;
                    exp.setup.push_back(open_click);
                    for (const UiElement* item : fresh)
                        if (is_actionable(*item) && !is_menu_anchor_role(item->role) &&
                            is_visible(*item, expanded.tree.window_bbox))
                            exp.item_actions.push_back(
                                ActionSpec::click_at(item->bbox.center(), item->id));
                    const auto nested_prefix = exp.setup;
                    bool has_nested = false;
                    for (const UiElement* item : fresh)
                        if (is_menu_anchor_role(item->role)) has_nested = true;
                    if (!exp.item_actions.empty()) result.expansions.push_back(std::move(exp));
                    if (has_nested) explore(expanded, nested_prefix, budget - 1);
                }
            }
        }
    };

    Explorer explorer{session, threshold, result};
    explorer.explore(state, {}, depth_budget);
    explorer.close_all();

    const ScreenState after = session.observe();
    if (canonical_hash(after.tree, HashMode::Strict) != pre_hash)
        result.restore_failures.push_back("menu unroll left the session in a different state");
    return result;
}

// ---------------------------------------------------------------------------
// Action planning.
// ---------------------------------------------------------------------------

struct ActionPlan {
    std::vector<int> ordered_ids;
    bool login_page = false;
    bool system_access_required = false;
    bool used_fallback = false;
};

namespace detail {

inline bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

}  // namespace detail

/// Orders the candidate elements for execution. With agents enabled the order
/// agent's plan is applied with group semantics: dynamic_* groups contribute
/// at most 2 representatives, repeated_* groups exactly 1. Plans that fail
/// validation fall back to the deterministic order (document order with
/// destructive elements last).
inline ActionPlan plan_actions(const ScreenState& state, const CrawlerConfig& config,
                               const AgentSuite& suite,
                               const std::vector<const UiElement*>& candidates) {
    ActionPlan plan;
    OrderPlan order;
    if (config.agent_usage && suite.client) {
        order = order_agent(state, suite, candidates);
    } else {
        order = deterministic_order_plan(candidates);
    }
    plan.login_page = order.login_page;
    plan.system_access_required = order.system_access_required;
    for (const auto& group : order.action_order) {
        std::size_t take = group.ids.size();
        if (detail::starts_with(group.name, "repeated_")) take = 1;
        else if (detail::starts_with(group.name, "dynamic_")) take = std::min<std::size_t>(2, take);
        for (std::size_t i = 0; i < take && i < group.ids.size(); ++i)
            plan.ordered_ids.push_back(group.ids[i]);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// The crawl loop.
// ---------------------------------------------------------------------------

struct FrontierItem {
    int node_id = 0;
    int depth = 0;
};

struct PendingAction {
    std::vector<ActionSpec> setup;
    ActionSpec action;
    std::string description;
};

struct CrawlResult {
    InteractionGraph graph;
    CrawlReport report;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::uint64_t s = seed;
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = splitmix64(s) % i;
        std::swap(v[i - 1], v[j]);
    }
}

inline std::string image_name_for(int ordinal) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "screen_%06d.ppm", ordinal);
    return buf;
}

inline std::string short_label(const UiElement& el) {
    if (el.name && !el.name->empty()) return "'" + *el.name + "'";
    return el.role + "#" + std::to_string(el.id);
}

}  // namespace detail

/// Breadth-first exploration through the abstract session interface. Each
/// candidate action runs exactly once on a fresh session restored by
/// replaying the node's action path. Significant changes become nodes (or
/// duplicate links via the layout-insensitive hash); everything else lands in
/// the node's safe-actions list.
inline CrawlResult crawl(const SessionFactory& factory, const CrawlerConfig& config,
                         const AgentSuite& agents) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    const auto deadline =
        start + std::chrono::duration_cast<Clock::duration>(
                    std::chrono::duration<double, std::ratio<60>>(config.max_duration_minutes));
    auto out_of_time = [&] { return Clock::now() > deadline; };

    CrawlResult result;
    InteractionGraph& graph = result.graph;
    CrawlReport& report = result.report;
    report.handlers_enabled = config.handlers_enabled;
    report.task_collection = config.task_collection;

    AgentSuite suite = agents;
    suite.default_text = config.default_text;
    if (!config.agent_usage) suite.client = nullptr;

    auto finish = [&](HaltedReason reason) {
        report.halted_reason = reason;
        report.nodes_created = static_cast<int>(graph.nodes.size());
        report.edges_created = static_cast<int>(graph.edges.size());
        report.elapsed_seconds =
            std::chrono::duration<double>(Clock::now() - start).count();
        return result;
    };

    std::map<int, std::vector<ActionSpec>> paths;
    std::map<std::uint64_t, int> state_index;

    auto restore_session = [&](int node_id,
                               const std::vector<ActionSpec>& setup) -> std::unique_ptr<Session> {
        auto session = factory();
        for (const auto& a : paths.at(node_id)) session->perform(a);
        for (const auto& a : setup) session->perform(a);
        return session;
    };

    try {
        auto session = factory();
        ScreenState first = session->observe();
        first.image_name = detail::image_name_for(0);
        GraphNode root;
        root.id = 0;
        root.state = std::move(first);
        graph.root = 0;
        graph.nodes.emplace(0, std::move(root));
        paths[0] = {};
        state_index[canonical_hash(graph.nodes.at(0).state.tree, HashMode::LayoutInsensitive)] = 0;
    } catch (const std::exception& e) {
        report.backend_error = e.what();
        return finish(HaltedReason::Complete);
    }

    std::deque<FrontierItem> frontier;
    frontier.push_back({0, 0});
    bool depth_blocked = false;

    while (!frontier.empty()) {
        if (out_of_time()) return finish(HaltedReason::Budget);
        const FrontierItem item = frontier.front();
        frontier.pop_front();
        if (item.depth >= config.max_depth) {
            depth_blocked = true;
            continue;
        }
        const ScreenState node_state = graph.nodes.at(item.node_id).state;

        // --- Assemble candidates through the handlers (or raw, when off). ---
        std::vector<UiElement> candidates;
        std::set<int> popup_ids;
        std::vector<ActionSpec> base_setup;
        std::vector<PendingAction> pending;

        if (config.handlers_enabled) {
            const auto visible = filter_invisible(node_state);
            int enabled_total = 0;
            for (const UiElement* el : flatten(node_state.tree))
                if (el->enabled) ++enabled_total;
            report.handler_counters["invisible"] += enabled_total - static_cast<int>(visible.size());

            std::vector<UiElement> visible_copy;
            visible_copy.reserve(visible.size());
            for (const UiElement* el : visible) {
                UiElement flat = *el;
                flat.children.clear();  // candidates are individual elements
                visible_copy.push_back(std::move(flat));
            }
            const auto resolved = resolve_empty_elements(visible_copy);
            // Count both outcomes of the handler: dropped and renamed.
            int touched = static_cast<int>(visible_copy.size() - resolved.size());
            for (const auto& orig : visible_copy) {
                const bool was_empty = (!orig.name || orig.name->empty()) &&
                                       (!orig.description || orig.description->empty());
                if (!was_empty) continue;
                for (const auto& el : resolved)
                    if (el.id == orig.id) ++touched;
            }
            report.handler_counters["empty"] += touched;
            for (const auto& el : resolved)
                if (is_actionable(el)) candidates.push_back(el);
        } else {
            for (const UiElement* el : flatten(node_state.tree)) {
                if (!el->enabled || !is_actionable(*el)) continue;
                UiElement flat = *el;
                flat.children.clear();
                candidates.push_back(std::move(flat));
            }
        }

        auto candidate_by_id = [&](int id) -> const UiElement* {
            for (const auto& el : candidates)
                if (el.id == id) return &el;
            return nullptr;
        };

        // --- Popup handler: modal content first, dismiss last. ---
        bool skip_base_elements = false;
        if (config.handlers_enabled) {
            if (auto popup_plan = handle_popup(node_state)) {
                report.handler_counters["popup"] += 1;
                const UiElement* fragment = detail::find_modal_fragment(node_state.tree.root);
                for (const UiElement* el : flatten_subtree(*fragment)) popup_ids.insert(el->id);

                const ActionSpec dismiss = popup_plan->back();
                for (const auto& a : *popup_plan) {
                    const UiElement* el = a.target_id ? candidate_by_id(*a.target_id) : nullptr;
                    std::string label = el ? detail::short_label(*el)
                                           : "#" + std::to_string(a.target_id.value_or(-1));
                    pending.push_back({{}, a, "popup: click " + label});
                }
                if (static_cast<int>(popup_ids.size()) > config.significant_change_threshold) {
                    // Dismissing is itself a significant change; the clean
                    // state becomes its own node and explores the base
                    // elements, so planning them here would only manufacture
                    // duplicates.
                    skip_base_elements = true;
                } else {
                    base_setup.push_back(dismiss);
                }
            }
        }

        // --- Ordering. ---
        std::vector<const UiElement*> candidate_ptrs;
        for (const auto& el : candidates) candidate_ptrs.push_back(&el);

        std::vector<int> ordered_ids;
        if (config.handlers_enabled) {
            const ActionPlan plan = plan_actions(node_state, config, suite, candidate_ptrs);
            if (plan.login_page) return finish(HaltedReason::LoginFlagged);
            ordered_ids = plan.ordered_ids;
        } else {
            for (const auto& el : candidates) ordered_ids.push_back(el.id);
            detail::seeded_shuffle(ordered_ids,
                                   config.rng_seed ^ (0x9E3779B9ULL * (item.node_id + 1)));
        }

        // --- Contextual input strings for this node's text fields. ---
        InputMap input_map;
        bool node_has_text_fields = false;
        for (const auto& el : candidates)
            if (is_text_field_role(el.role)) node_has_text_fields = true;
        if (node_has_text_fields) input_map = input_agent(node_state, suite);

        // --- Per-element pending actions. ---
        for (int id : ordered_ids) {
            const UiElement* el = candidate_by_id(id);
            if (!el) continue;
            if (!popup_ids.empty() && popup_ids.count(id)) continue;  // already planned
            if (skip_base_elements && popup_ids.count(id) == 0 && config.handlers_enabled) continue;
            std::vector<ActionSpec> setup = base_setup;
            if (is_text_field_role(el->role)) {
                std::string text = suite.default_text;
                auto it = input_map.entries.find(id);
                if (it != input_map.entries.end()) text = it->second;
                const ActionSpec type_action = ActionSpec::type_into(id, text);
                pending.push_back(
                    {setup, type_action, "type '" + text + "' into " + detail::short_label(*el)});
                auto enter_setup = setup;
                enter_setup.push_back(type_action);
                pending.push_back({enter_setup, ActionSpec::press_enter(),
                                   "press enter in " + detail::short_label(*el)});
            } else {
                auto click_setup = setup;
                const Point p = el->bbox.center();
                if (config.cursor_move_before_click)
                    click_setup.push_back(ActionSpec::move_to(p, id));
                pending.push_back({click_setup, ActionSpec::click_at(p, id),
                                   "click " + detail::short_label(*el) + " (" + el->role + ")"});
            }
        }

        // --- Menu unrolling. ---
        if (config.handlers_enabled) {
            bool has_anchor = false;
            for (const auto& el : candidates)
                if (is_menu_anchor_role(el.role)) has_anchor = true;
            if (has_anchor) {
                try {
                    auto menu_session = restore_session(item.node_id, base_setup);
                    const ScreenState positioned = menu_session->observe();
                    UnrollResult unrolled = unroll_menus(*menu_session, positioned,
                                                         config.significant_change_threshold,
                                                         config.max_depth);
                    report.restore_failures += static_cast<int>(unrolled.restore_failures.size());
                    for (const auto& exp : unrolled.expansions) {
                        report.handler_counters["menu"] += 1;
                        for (const auto& ia : exp.item_actions) {
                            std::vector<ActionSpec> setup = base_setup;
                            setup.insert(setup.end(), exp.setup.begin(), exp.setup.end());
                            const UiElement* item_el =
                                ia.target_id ? find_by_id(exp.expanded.tree, *ia.target_id) : nullptr;
                            const std::string label =
                                item_el ? detail::short_label(*item_el)
                                        : "#" + std::to_string(ia.target_id.value_or(-1));
                            pending.push_back({setup, ia, "menu: click " + label});
                        }
                    }
                } catch (const std::exception& e) {
                    report.backend_error = e.what();
                    return finish(HaltedReason::Complete);
                }
            }
        }

        // --- Execute. ---
        for (const auto& p : pending) {
            if (out_of_time()) return finish(HaltedReason::Budget);
            std::unique_ptr<Session> sess;
            ScreenState before;
            StepOutcome outcome;
            try {
                sess = restore_session(item.node_id, p.setup);
                before = sess->observe();
                outcome = sess->perform(p.action);
            } catch (const std::exception& e) {
                report.backend_error = e.what();
                return finish(HaltedReason::Complete);
            }
            // Actions behind setup ran against a transient state the node
            // itself does not show; keep that observation on the record.
            std::optional<ScreenState> pre_state;
            if (!p.setup.empty()) {
                pre_state = before;
                char tag[48];
                std::snprintf(tag, sizeof(tag), "screen_%06d_pre_%08llx.ppm", item.node_id,
                              static_cast<unsigned long long>(
                                  canonical_hash(before.tree, HashMode::Strict) & 0xFFFFFFFFULL));
                pre_state->image_name = tag;
            }
            const TreeDiff d = diff(before.tree, outcome.observation.tree);
            if (is_significant(d, config.significant_change_threshold, config.change_rule)) {
                const std::uint64_t h =
                    canonical_hash(outcome.observation.tree, HashMode::LayoutInsensitive);
                auto seen = state_index.find(h);
                int out_vertex;
                if (seen != state_index.end()) {
                    out_vertex = seen->second;
                    report.duplicates_linked += 1;
                } else {
                    const int new_id = static_cast<int>(graph.nodes.size());
                    GraphNode node;
                    node.id = new_id;
                    node.state = outcome.observation;
                    node.state.image_name = detail::image_name_for(new_id);
                    graph.nodes.emplace(new_id, std::move(node));
                    auto path = paths.at(item.node_id);
                    path.insert(path.end(), p.setup.begin(), p.setup.end());
                    path.push_back(p.action);
                    paths[new_id] = std::move(path);
                    state_index[h] = new_id;
                    frontier.push_back({new_id, item.depth + 1});
                    out_vertex = new_id;
                }
                GraphEdge edge;
                edge.from_node = item.node_id;
                edge.action = p.action;
                edge.setup = p.setup;
                edge.action_description = p.description;
                edge.out_vertex = out_vertex;
                edge.pre_state = pre_state;
                graph.edges.push_back(std::move(edge));
            } else {
                graph.nodes.at(item.node_id).safe_actions.push_back(
                    {p.action, p.setup, p.description, pre_state});
            }
        }
    }

    return finish(depth_blocked ? HaltedReason::DepthExhausted : HaltedReason::Complete);
}

/// Shortest action path from the root to each node, following graph edges
/// (setup actions included). Any path through the graph reproduces the target
/// node's state on a deterministic backend.
inline std::map<int, std::vector<ActionSpec>> replay_paths(const InteractionGraph& g) {
    std::map<int, std::vector<const GraphEdge*>> adj;
    for (const auto& e : g.edges) adj[e.from_node].push_back(&e);
    std::map<int, std::vector<ActionSpec>> paths;
    std::deque<int> queue;
    if (g.nodes.count(g.root)) {
        paths[g.root] = {};
        queue.push_back(g.root);
    }
    while (!queue.empty()) {
        const int n = queue.front();
        queue.pop_front();
        for (const GraphEdge* e : adj[n]) {
            if (paths.count(e->out_vertex)) continue;
            auto path = paths[n];
            path.insert(path.end(), e->setup.begin(), e->setup.end());
            path.push_back(e->action);
            paths[e->out_vertex] = std::move(path);
            queue.push_back(e->out_vertex);
        }
    }
    return paths;
}

}  // namespace axcrawl

#endif  // AXCRAWL_CRAWLER_HPP

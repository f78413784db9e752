#ifndef AXCRAWL_SIM_BACKEND_HPP
#define AXCRAWL_SIM_BACKEND_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "axcrawl/ax_model.hpp"

namespace axcrawl {

class DanglingReference : public std::runtime_error {
public:
    explicit DanglingReference(const std::string& ref, const std::string& what)
        : std::runtime_error(what + " ('" + ref + "')"), ref_(ref) {}
    const std::string& ref() const { return ref_; }

private:
    std::string ref_;
};

class DeadSession : public std::runtime_error {
public:
    DeadSession() : std::runtime_error("session used after close") {}
};

struct StepOutcome {
    bool state_changed = false;
    ScreenState observation;
};

/// Abstract driving surface: everything the crawler needs from a live
/// application. Implementations must be deterministic for identical action
/// sequences.
class Session {
public:
    virtual ~Session() = default;
    virtual ScreenState observe() = 0;
    virtual StepOutcome perform(const ActionSpec& action) = 0;
    virtual void close() = 0;
};

using SessionFactory = std::function<std::unique_ptr<Session>()>;

// ---------------------------------------------------------------------------
// Declarative app specs.
// ---------------------------------------------------------------------------

struct PredicateSpec {
    enum class Kind { None, NonEmpty, Equals };
    Kind kind = Kind::None;
    std::string text;

    bool operator==(const PredicateSpec&) const = default;

    bool matches(const std::string& typed) const {
        switch (kind) {
            case Kind::None: return true;
            case Kind::NonEmpty: return !typed.empty();
            case Kind::Equals: return typed == text;
        }
        return false;
    }

    std::string canonical() const {
        switch (kind) {
            case Kind::None: return "none";
            case Kind::NonEmpty: return "non_empty";
            case Kind::Equals: return "equals:" + text;
        }
        return "?";
    }
};

struct TransitionSpec {
    std::string from_state;
    int element_id = 0;
    ActionKind kind = ActionKind::Click;
    PredicateSpec predicate;
    std::string to_state;

    bool operator==(const TransitionSpec&) const = default;
};

struct PopupSpec {
    UiElement fragment;
    int dismiss_id = 0;
    int open_at_step = 0;

    bool operator==(const PopupSpec&) const = default;
};

struct MenuSpec {
    int anchor_id = 0;
    UiElement fragment;

    bool operator==(const MenuSpec&) const = default;
};

struct StateSpec {
    AxTree tree;
    std::optional<PopupSpec> popup;
    std::vector<MenuSpec> menus;

    bool operator==(const StateSpec&) const = default;
};

/// Injected accessibility defects. Application is a pure function of
/// (state, config): the underlying transition system is never affected.
struct QuirkConfig {
    std::map<std::string, std::set<int>> stale_element_ids;  // state -> ids kept in tree, bbox voided
    std::map<int, std::string> wrong_role_map;
    std::map<int, Point> offscreen_shift;
    std::set<int> empty_metadata_ids;
    std::uint64_t seed = 0;

    bool operator==(const QuirkConfig&) const = default;
};

struct AppSpec {
    std::string app_name;
    std::string genre;
    std::string initial_state;
    std::map<std::string, StateSpec> states;
    std::vector<TransitionSpec> transitions;
    QuirkConfig quirks;

    bool operator==(const AppSpec&) const = default;
};

namespace detail {

inline void collect_ids(const UiElement& el, std::set<int>& out, const std::string& path) {
    if (!out.insert(el.id).second)
        throw SchemaError(path, "duplicate element id " + std::to_string(el.id));
    for (const auto& c : el.children) collect_ids(c, out, path);
}

inline const UiElement* find_in_element(const UiElement& el, int id) {
    if (el.id == id) return &el;
    for (const auto& c : el.children)
        if (const UiElement* f = find_in_element(c, id)) return f;
    return nullptr;
}

inline PredicateSpec predicate_from_json(const ordered_json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "predicate must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "type" && key != "text") throw SchemaError(path + "." + key, "unknown field");
    if (!j.contains("type") || !j["type"].is_string())
        throw SchemaError(path + ".type", "predicate requires string type");
    PredicateSpec p;
    const std::string type = j["type"].get<std::string>();
    if (type == "non_empty") {
        p.kind = PredicateSpec::Kind::NonEmpty;
    } else if (type == "equals") {
        p.kind = PredicateSpec::Kind::Equals;
        if (!j.contains("text") || !j["text"].is_string())
            throw SchemaError(path + ".text", "equals predicate requires text");
        p.text = j["text"].get<std::string>();
    } else {
        throw SchemaError(path + ".type", "unknown predicate type '" + type + "'");
    }
    return p;
}

}  // namespace detail

/// Parses and fully validates an app spec from UTF-8 JSON. Unknown fields are
/// rejected with the offending path; references to missing states or elements
/// raise DanglingReference.
inline AppSpec load_app_spec(const std::string& bytes) {
    ordered_json j;
    try {
        j = ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("$", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("$", "app spec must be an object");
    static const std::set<std::string> top = {"app_name", "genre", "initial_state",
                                              "states",   "transitions", "quirks"};
    for (const auto& [key, _] : j.items())
        if (!top.count(key)) throw SchemaError("$." + key, "unknown field");
    for (const auto& key : top)
        if (!j.contains(key)) throw SchemaError("$." + key, "missing required field");

    AppSpec spec;
    if (!j["app_name"].is_string()) throw SchemaError("$.app_name", "expected string");
    if (!j["genre"].is_string()) throw SchemaError("$.genre", "expected string");
    if (!j["initial_state"].is_string()) throw SchemaError("$.initial_state", "expected string");
    spec.app_name = j["app_name"].get<std::string>();
    spec.genre = j["genre"].get<std::string>();
    spec.initial_state = j["initial_state"].get<std::string>();

    if (!j["states"].is_object() || j["states"].empty())
        throw SchemaError("$.states", "expected non-empty object");
    for (const auto& [sid, sj] : j["states"].items()) {
        const std::string spath = "$.states." + sid;
        if (!sj.is_object()) throw SchemaError(spath, "state must be an object");
        for (const auto& [key, _] : sj.items())
            if (key != "tree" && key != "popup" && key != "menus")
                throw SchemaError(spath + "." + key, "unknown field");
        if (!sj.contains("tree")) throw SchemaError(spath + ".tree", "missing tree");
        StateSpec st;
        st.tree = tree_from_json(sj["tree"], spath + ".tree");

        std::set<int> ids;
        detail::collect_ids(st.tree.root, ids, spath + ".tree");

        if (sj.contains("popup")) {
            const auto& pj = sj["popup"];
            if (!pj.is_object()) throw SchemaError(spath + ".popup", "popup must be an object");
            for (const auto& [key, _] : pj.items())
                if (key != "fragment" && key != "dismiss_id" && key != "open_at_step")
                    throw SchemaError(spath + ".popup." + key, "unknown field");
            if (!pj.contains("fragment")) throw SchemaError(spath + ".popup.fragment", "missing fragment");
            if (!pj.contains("dismiss_id") || !pj["dismiss_id"].is_number_integer())
                throw SchemaError(spath + ".popup.dismiss_id", "missing integer dismiss_id");
            PopupSpec popup;
            popup.fragment = element_from_json(pj["fragment"], spath + ".popup.fragment");
            popup.dismiss_id = pj["dismiss_id"].get<int>();
            if (pj.contains("open_at_step")) {
                if (!pj["open_at_step"].is_number_integer())
                    throw SchemaError(spath + ".popup.open_at_step", "expected integer");
                popup.open_at_step = pj["open_at_step"].get<int>();
            }
            detail::collect_ids(popup.fragment, ids, spath + ".popup.fragment");
            if (!detail::find_in_element(popup.fragment, popup.dismiss_id))
                throw DanglingReference(std::to_string(popup.dismiss_id),
                                        spath + ".popup.dismiss_id: not in popup fragment");
            st.popup = std::move(popup);
        }
        if (sj.contains("menus")) {
            if (!sj["menus"].is_array()) throw SchemaError(spath + ".menus", "expected array");
            int mi = 0;
            for (const auto& mj : sj["menus"]) {
                const std::string mpath = spath + ".menus[" + std::to_string(mi++) + "]";
                if (!mj.is_object()) throw SchemaError(mpath, "menu must be an object");
                for (const auto& [key, _] : mj.items())
                    if (key != "anchor_id" && key != "fragment")
                        throw SchemaError(mpath + "." + key, "unknown field");
                if (!mj.contains("anchor_id") || !mj["anchor_id"].is_number_integer())
                    throw SchemaError(mpath + ".anchor_id", "missing integer anchor_id");
                if (!mj.contains("fragment")) throw SchemaError(mpath + ".fragment", "missing fragment");
                MenuSpec menu;
                menu.anchor_id = mj["anchor_id"].get<int>();
                menu.fragment = element_from_json(mj["fragment"], mpath + ".fragment");
                if (!detail::find_in_element(st.tree.root, menu.anchor_id))
                    throw DanglingReference(std::to_string(menu.anchor_id),
                                            mpath + ".anchor_id: not in state tree");
                detail::collect_ids(menu.fragment, ids, mpath + ".fragment");
                st.menus.push_back(std::move(menu));
            }
        }
        spec.states.emplace(sid, std::move(st));
    }

    if (!spec.states.count(spec.initial_state))
        throw DanglingReference(spec.initial_state, "$.initial_state: unknown state");

    if (!j["transitions"].is_array()) throw SchemaError("$.transitions", "expected array");
    std::set<std::string> transition_keys;
    int ti = 0;
    for (const auto& tj : j["transitions"]) {
        const std::string tpath = "$.transitions[" + std::to_string(ti++) + "]";
        if (!tj.is_object()) throw SchemaError(tpath, "transition must be an object");
        for (const auto& [key, _] : tj.items())
            if (key != "from_state" && key != "element_id" && key != "kind" && key != "predicate" &&
                key != "to_state")
                throw SchemaError(tpath + "." + key, "unknown field");
        for (const char* req : {"from_state", "element_id", "kind", "to_state"})
            if (!tj.contains(req)) throw SchemaError(tpath + "." + req, "missing required field");
        TransitionSpec t;
        if (!tj["from_state"].is_string()) throw SchemaError(tpath + ".from_state", "expected string");
        if (!tj["to_state"].is_string()) throw SchemaError(tpath + ".to_state", "expected string");
        if (!tj["element_id"].is_number_integer())
            throw SchemaError(tpath + ".element_id", "expected integer");
        if (!tj["kind"].is_string()) throw SchemaError(tpath + ".kind", "expected string");
        t.from_state = tj["from_state"].get<std::string>();
        t.to_state = tj["to_state"].get<std::string>();
        t.element_id = tj["element_id"].get<int>();
        t.kind = action_kind_from_string(tj["kind"].get<std::string>());
        if (tj.contains("predicate")) t.predicate = detail::predicate_from_json(tj["predicate"], tpath + ".predicate");

        auto from_it = spec.states.find(t.from_state);
        if (from_it == spec.states.end())
            throw DanglingReference(t.from_state, tpath + ".from_state: unknown state");
        if (!spec.states.count(t.to_state))
            throw DanglingReference(t.to_state, tpath + ".to_state: unknown state");

        // The trigger element must exist in the from-state tree or one of its
        // declared fragments.
        const StateSpec& from = from_it->second;
        bool found = detail::find_in_element(from.tree.root, t.element_id) != nullptr;
        if (!found && from.popup) found = detail::find_in_element(from.popup->fragment, t.element_id);
        if (!found)
            for (const auto& m : from.menus)
                if (detail::find_in_element(m.fragment, t.element_id)) found = true;
        if (!found)
            throw DanglingReference(std::to_string(t.element_id),
                                    tpath + ".element_id: not in from-state tree");

        const std::string key = t.from_state + "|" + std::to_string(t.element_id) + "|" +
                                to_string(t.kind) + "|" + t.predicate.canonical();
        if (!transition_keys.insert(key).second)
            throw SchemaError(tpath, "duplicate transition for (" + key + ")");
        spec.transitions.push_back(std::move(t));
    }

    const auto& qj = j["quirks"];
    if (!qj.is_object()) throw SchemaError("$.quirks", "expected object");
    for (const auto& [key, _] : qj.items())
        if (key != "stale" && key != "wrong_role" && key != "offscreen_shift" &&
            key != "empty_metadata" && key != "seed")
            throw SchemaError("$.quirks." + key, "unknown field");
    auto element_exists_somewhere = [&](int id) {
        for (const auto& [_, st] : spec.states) {
            if (detail::find_in_element(st.tree.root, id)) return true;
            if (st.popup && detail::find_in_element(st.popup->fragment, id)) return true;
            for (const auto& m : st.menus)
                if (detail::find_in_element(m.fragment, id)) return true;
        }
        return false;
    };
    if (qj.contains("stale")) {
        if (!qj["stale"].is_object()) throw SchemaError("$.quirks.stale", "expected object");
        for (const auto& [sid, idsj] : qj["stale"].items()) {
            if (!spec.states.count(sid))
                throw DanglingReference(sid, "$.quirks.stale: unknown state");
            if (!idsj.is_array()) throw SchemaError("$.quirks.stale." + sid, "expected array");
            for (const auto& idj : idsj) {
                if (!idj.is_number_integer())
                    throw SchemaError("$.quirks.stale." + sid, "expected integer ids");
                const int id = idj.get<int>();
                if (!element_exists_somewhere(id))
                    throw DanglingReference(std::to_string(id), "$.quirks.stale." + sid + ": unknown element");
                if (detail::find_in_element(spec.states.at(sid).tree.root, id))
                    throw SchemaError("$.quirks.stale." + sid,
                                      "stale id " + std::to_string(id) + " collides with host tree");
                spec.quirks.stale_element_ids[sid].insert(id);
            }
        }
    }
    if (qj.contains("wrong_role")) {
        if (!qj["wrong_role"].is_object()) throw SchemaError("$.quirks.wrong_role", "expected object");
        for (const auto& [idstr, rj] : qj["wrong_role"].items()) {
            if (!rj.is_string()) throw SchemaError("$.quirks.wrong_role." + idstr, "expected string role");
            const int id = std::stoi(idstr);
            if (!element_exists_somewhere(id))
                throw DanglingReference(idstr, "$.quirks.wrong_role: unknown element");
            spec.quirks.wrong_role_map[id] = rj.get<std::string>();
        }
    }
    if (qj.contains("offscreen_shift")) {
        if (!qj["offscreen_shift"].is_object())
            throw SchemaError("$.quirks.offscreen_shift", "expected object");
        for (const auto& [idstr, dj] : qj["offscreen_shift"].items()) {
            if (!dj.is_array() || dj.size() != 2 || !dj[0].is_number() || !dj[1].is_number())
                throw SchemaError("$.quirks.offscreen_shift." + idstr, "expected [dx, dy]");
            const int id = std::stoi(idstr);
            if (!element_exists_somewhere(id))
                throw DanglingReference(idstr, "$.quirks.offscreen_shift: unknown element");
            spec.quirks.offscreen_shift[id] = Point{dj[0].get<double>(), dj[1].get<double>()};
        }
    }
    if (qj.contains("empty_metadata")) {
        if (!qj["empty_metadata"].is_array())
            throw SchemaError("$.quirks.empty_metadata", "expected array");
        for (const auto& idj : qj["empty_metadata"]) {
            if (!idj.is_number_integer())
                throw SchemaError("$.quirks.empty_metadata", "expected integer ids");
            const int id = idj.get<int>();
            if (!element_exists_somewhere(id))
                throw DanglingReference(std::to_string(id), "$.quirks.empty_metadata: unknown element");
            spec.quirks.empty_metadata_ids.insert(id);
        }
    }
    if (qj.contains("seed")) {
        if (!qj["seed"].is_number_integer()) throw SchemaError("$.quirks.seed", "expected integer");
        spec.quirks.seed = qj["seed"].get<std::uint64_t>();
    }
    return spec;
}

// Display scaling used for all simulated observations.
constexpr double kSimScalingFactor = 2.0;

/// Deterministic in-memory application. Single-owner; distinct sessions from
/// the same spec are independent.
class SimSession : public Session {
public:
    explicit SimSession(std::shared_ptr<const AppSpec> spec)
        : spec_(std::move(spec)), current_state_(spec_->initial_state) {}

    ScreenState observe() override {
        ensure_live();
        ScreenState s;
        s.tree = compose();
        s.scaling_factor = kSimScalingFactor;
        return s;
    }

    StepOutcome perform(const ActionSpec& action) override {
        ensure_live();
        action.validate();
        const AxTree before = compose();
        ++step_counter_;
        switch (action.kind) {
            case ActionKind::Click: apply_click(before, *action.point); break;
            case ActionKind::Move: apply_move(before, *action.point); break;
            case ActionKind::Type: apply_type(before, *action.target_id, *action.text); break;
            case ActionKind::PressEnter: apply_press_enter(); break;
        }
        StepOutcome out;
        out.observation = observe();
        out.state_changed =
            canonical_hash(before, HashMode::Strict) != canonical_hash(out.observation.tree, HashMode::Strict);
        return out;
    }

    void close() override { dead_ = true; }

    const std::string& current_state() const { return current_state_; }
    bool open_popup() const { return popup_open(); }
    std::optional<int> open_menu() const { return open_menu_; }
    const std::map<int, std::string>& typed_values() const { return typed_values_; }
    int step_counter() const { return step_counter_; }

private:
    void ensure_live() const {
        if (dead_) throw DeadSession();
    }

    const StateSpec& state_spec() const { return spec_->states.at(current_state_); }

    bool popup_open() const {
        const auto& st = state_spec();
        return st.popup && step_counter_ >= st.popup->open_at_step &&
               !dismissed_popups_.count(current_state_);
    }

    // Composition order fixes paint order: base, stale clones, open menu
    // fragment, popup fragment last (topmost).
    AxTree compose() const {
        const auto& st = state_spec();
        AxTree tree = st.tree;
        auto stale_it = spec_->quirks.stale_element_ids.find(current_state_);
        if (stale_it != spec_->quirks.stale_element_ids.end()) {
            for (int id : stale_it->second) {
                const UiElement* src = find_element_anywhere(id);
                if (!src) continue;
                UiElement ghost = *src;
                ghost.children.clear();
                ghost.bbox.w = 0;  // voided: present in the tree, gone from view
                ghost.bbox.h = 0;
                tree.root.children.push_back(std::move(ghost));
            }
        }
        if (open_menu_) {
            for (const auto& m : st.menus)
                if (m.anchor_id == *open_menu_) tree.root.children.push_back(m.fragment);
        }
        if (popup_open()) tree.root.children.push_back(st.popup->fragment);
        apply_overlays(tree.root);
        return tree;
    }

    void apply_overlays(UiElement& el) const {
        auto typed = typed_values_.find(el.id);
        if (typed != typed_values_.end()) el.value = typed->second;
        auto role_it = spec_->quirks.wrong_role_map.find(el.id);
        if (role_it != spec_->quirks.wrong_role_map.end()) el.role = role_it->second;
        auto shift_it = spec_->quirks.offscreen_shift.find(el.id);
        if (shift_it != spec_->quirks.offscreen_shift.end()) {
            el.bbox.x += shift_it->second.x;
            el.bbox.y += shift_it->second.y;
        }
        if (spec_->quirks.empty_metadata_ids.count(el.id)) {
            el.name.reset();
            el.description.reset();
        }
        for (auto& c : el.children) apply_overlays(c);
    }

    const UiElement* find_element_anywhere(int id) const {
        for (const auto& [_, st] : spec_->states) {
            if (const UiElement* f = detail::find_in_element(st.tree.root, id)) return f;
            if (st.popup)
                if (const UiElement* f = detail::find_in_element(st.popup->fragment, id)) return f;
            for (const auto& m : st.menus)
                if (const UiElement* f = detail::find_in_element(m.fragment, id)) return f;
        }
        return nullptr;
    }

    bool in_popup_fragment(int id) const {
        const auto& st = state_spec();
        return st.popup && detail::find_in_element(st.popup->fragment, id);
    }

    bool in_open_menu_fragment(int id) const {
        if (!open_menu_) return false;
        for (const auto& m : state_spec().menus)
            if (m.anchor_id == *open_menu_ && detail::find_in_element(m.fragment, id)) return true;
        return false;
    }

    const TransitionSpec* match_transition(int element_id, ActionKind kind,
                                           const std::string& typed) const {
        for (const auto& t : spec_->transitions)
            if (t.from_state == current_state_ && t.element_id == element_id && t.kind == kind &&
                t.predicate.matches(typed))
                return &t;
        return nullptr;
    }

    void enter_state(const std::string& to) {
        current_state_ = to;
        open_menu_.reset();
    }

    std::string typed_for(int id) const {
        auto it = typed_values_.find(id);
        return it == typed_values_.end() ? std::string() : it->second;
    }

    void apply_click(const AxTree& tree, Point p) {
        const UiElement* target = locate(tree, p);
        if (!target) return;
        const bool popup = popup_open();
        if (popup && !in_popup_fragment(target->id)) return;  // modal content swallows the click
        if (popup && target->id == state_spec().popup->dismiss_id) {
            dismissed_popups_.insert(current_state_);
            return;
        }
        if (open_menu_ && !in_open_menu_fragment(target->id) && target->id != *open_menu_)
            open_menu_.reset();
        bool anchors_menu = false;
        for (const auto& m : state_spec().menus)
            if (m.anchor_id == target->id) anchors_menu = true;
        if (anchors_menu) {
            open_menu_ = (open_menu_ && *open_menu_ == target->id) ? std::nullopt
                                                                   : std::optional<int>(target->id);
            return;
        }
        if (const TransitionSpec* t = match_transition(target->id, ActionKind::Click, typed_for(target->id)))
            enter_state(t->to_state);
    }

    void apply_move(const AxTree& tree, Point p) {
        const UiElement* target = locate(tree, p);
        if (!target) return;
        if (popup_open() && !in_popup_fragment(target->id)) return;
        if (const TransitionSpec* t = match_transition(target->id, ActionKind::Move, typed_for(target->id)))
            enter_state(t->to_state);
    }

    void apply_type(const AxTree& tree, int target_id, const std::string& text) {
        if (!detail::find_in_element(tree.root, target_id)) return;
        if (popup_open() && !in_popup_fragment(target_id)) return;
        typed_values_[target_id] = text;
        focused_ = target_id;
        if (const TransitionSpec* t = match_transition(target_id, ActionKind::Type, text))
            enter_state(t->to_state);
    }

    void apply_press_enter() {
        if (!focused_) return;
        if (popup_open() && !in_popup_fragment(*focused_)) return;
        if (const TransitionSpec* t =
                match_transition(*focused_, ActionKind::PressEnter, typed_for(*focused_)))
            enter_state(t->to_state);
    }

    std::shared_ptr<const AppSpec> spec_;
    std::string current_state_;
    std::optional<int> open_menu_;
    std::optional<int> focused_;
    std::map<int, std::string> typed_values_;
    std::set<std::string> dismissed_popups_;
    int step_counter_ = 0;
    bool dead_ = false;
};

inline SessionFactory sim_session_factory(AppSpec spec) {
    auto shared = std::make_shared<const AppSpec>(std::move(spec));
    return [shared]() -> std::unique_ptr<Session> { return std::make_unique<SimSession>(shared); };
}

}  // namespace axcrawl

#endif  // AXCRAWL_SIM_BACKEND_HPP

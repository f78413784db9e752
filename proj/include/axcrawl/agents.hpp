#ifndef AXCRAWL_AGENTS_HPP
#define AXCRAWL_AGENTS_HPP

#include <atomic>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "axcrawl/ax_model.hpp"

namespace axcrawl {

class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string json_path, const std::string& what)
        : std::runtime_error(json_path + ": " + what), json_path_(std::move(json_path)) {}
    const std::string& json_path() const { return json_path_; }

private:
    std::string json_path_;
};

class ClientError : public std::runtime_error {
public:
    explicit ClientError(const std::string& what) : std::runtime_error(what) {}
};

class RejectedAnnotation : public std::runtime_error {
public:
    explicit RejectedAnnotation(const std::string& what) : std::runtime_error(what) {}
};

struct LlmClientConfig {
    std::string endpoint_url;
    std::string model_name;
    std::string api_key_env_var;
    double timeout_seconds = 60.0;
    int max_retries = 2;
    double temperature = 0.0;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

/// Chat-completion style client. Implementations return the first message
/// content of the response and throw ClientError on transport failures.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

struct AgentTelemetry {
    std::atomic<std::uint64_t> client_calls{0};
    std::atomic<std::uint64_t> client_errors{0};
    std::atomic<std::uint64_t> malformed_responses{0};
    std::atomic<std::uint64_t> fallbacks{0};

    struct Snapshot {
        std::uint64_t client_calls = 0;
        std::uint64_t client_errors = 0;
        std::uint64_t malformed_responses = 0;
        std::uint64_t fallbacks = 0;
    };
    Snapshot snapshot() const {
        return {client_calls.load(), client_errors.load(), malformed_responses.load(),
                fallbacks.load()};
    }
};

/// The agent stack handed to the crawler and task pipeline. A null client
/// means deterministic fallbacks everywhere, which keeps the whole pipeline
/// offline and reproducible.
struct AgentSuite {
    std::shared_ptr<ChatClient> client;
    LlmClientConfig config;
    std::string default_text = "DEFAULT";
    std::shared_ptr<AgentTelemetry> telemetry = std::make_shared<AgentTelemetry>();
};

inline AgentSuite deterministic_agents(std::string default_text = "DEFAULT") {
    AgentSuite s;
    s.default_text = std::move(default_text);
    return s;
}

// ---------------------------------------------------------------------------
// Validated agent output types.
// ---------------------------------------------------------------------------

struct InputMap {
    std::map<int, std::string> entries;

    bool operator==(const InputMap&) const = default;
};

struct OrderGroup {
    std::string name;
    std::vector<int> ids;

    bool operator==(const OrderGroup&) const = default;
};

struct OrderPlan {
    std::vector<OrderGroup> action_order;
    bool login_page = false;
    bool system_access_required = false;

    bool operator==(const OrderPlan&) const = default;
};

struct TaskAnnotation {
    std::string task;  // empty = rejected
    std::string task_category;
    std::string element_category;

    bool operator==(const TaskAnnotation&) const = default;
    bool rejected() const { return task.empty(); }
};

struct InputTaskAnnotation {
    std::string task;
    std::string action;  // always "type " + text

    bool operator==(const InputTaskAnnotation&) const = default;
};

inline const std::vector<std::string>& task_categories() {
    static const std::vector<std::string> cats = {
        "Navigation", "Settings", "Files", "Apps", "Search & Information", "Media",
        "Accounts", "Communication", "Input", "Connectivity", "Modes", "E-commerce"};
    return cats;
}

inline const std::vector<std::string>& element_categories() {
    static const std::vector<std::string> cats = {"Image",      "Text",   "Checkbox/Control",
                                                  "Menu item",  "Input field", "Button",
                                                  "Group",      "Link"};
    return cats;
}

inline bool is_task_category(const std::string& s) {
    for (const auto& c : task_categories())
        if (c == s) return true;
    return false;
}

inline bool is_element_category(const std::string& s) {
    for (const auto& c : element_categories())
        if (c == s) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Strict JSON validation. Unknown fields are rejected, enums checked, id
// references checked against the supplied context. Errors carry the JSON
// path of the first violation.
// ---------------------------------------------------------------------------

enum class SchemaId { InputMap, OrderPlan, TaskAnnotation, InputTaskAnnotation };

struct ValidationContext {
    std::set<int> valid_ids;  // text-field ids or presented element ids
};

namespace detail {

inline ordered_json parse_json_or_throw(const std::string& bytes) {
    try {
        return ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("$", std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace detail

inline InputMap parse_input_map(const std::string& bytes, const ValidationContext& ctx) {
    const ordered_json j = detail::parse_json_or_throw(bytes);
    if (!j.is_object()) throw ValidationError("$", "input map must be an object");
    InputMap m;
    for (const auto& [key, vj] : j.items()) {
        int id = 0;
        try {
            std::size_t pos = 0;
            id = std::stoi(key, &pos);
            if (pos != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw ValidationError("$." + key, "keys must be integer element ids");
        }
        if (!ctx.valid_ids.count(id))
            throw ValidationError("$." + key, "id does not reference a text field in the tree");
        if (!vj.is_string()) throw ValidationError("$." + key, "expected string input value");
        m.entries[id] = vj.get<std::string>();
    }
    return m;
}

inline OrderPlan parse_order_plan(const std::string& bytes, const ValidationContext& ctx) {
    const ordered_json j = detail::parse_json_or_throw(bytes);
    if (!j.is_object()) throw ValidationError("$", "order plan must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "action_order" && key != "login_page" && key != "system_access_required")
            throw ValidationError("$." + key, "unknown field");
    if (!j.contains("action_order") || !j["action_order"].is_array())
        throw ValidationError("$.action_order", "missing action_order array");

    OrderPlan plan;
    if (j.contains("login_page")) {
        if (!j["login_page"].is_boolean()) throw ValidationError("$.login_page", "expected boolean");
        plan.login_page = j["login_page"].get<bool>();
    }
    if (j.contains("system_access_required")) {
        if (!j["system_access_required"].is_boolean())
            throw ValidationError("$.system_access_required", "expected boolean");
        plan.system_access_required = j["system_access_required"].get<bool>();
    }

    if (j["action_order"].size() > 8)
        throw ValidationError("$.action_order", "more than 8 groups");

    std::set<int> seen;
    int gi = 0;
    for (const auto& gj : j["action_order"]) {
        const std::string gpath = "$.action_order[" + std::to_string(gi++) + "]";
        if (!gj.is_object() || gj.size() != 1)
            throw ValidationError(gpath, "each group must be a single-key object");
        OrderGroup group;
        for (const auto& [name, idsj] : gj.items()) {
            group.name = name;
            if (!idsj.is_array()) throw ValidationError(gpath + "." + name, "expected array of ids");
            int ii = 0;
            for (const auto& idj : idsj) {
                const std::string ipath = gpath + "." + name + "[" + std::to_string(ii++) + "]";
                if (!idj.is_number_integer()) throw ValidationError(ipath, "expected integer id");
                const int id = idj.get<int>();
                if (!ctx.valid_ids.count(id)) throw ValidationError(ipath, "unknown element id");
                if (!seen.insert(id).second)
                    throw ValidationError(ipath, "id appears in more than one group");
                group.ids.push_back(id);
            }
        }
        plan.action_order.push_back(std::move(group));
    }
    if (seen != ctx.valid_ids)
        throw ValidationError("$.action_order", "plan does not cover all presented element ids");
    return plan;
}

inline TaskAnnotation parse_task_annotation(const std::string& bytes) {
    const ordered_json j = detail::parse_json_or_throw(bytes);
    if (!j.is_object()) throw ValidationError("$", "task annotation must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "task" && key != "task_category" && key != "element_category")
            throw ValidationError("$." + key, "unknown field");
    if (!j.contains("task") || !j["task"].is_string())
        throw ValidationError("$.task", "missing string task");
    TaskAnnotation a;
    a.task = j["task"].get<std::string>();
    if (a.task.empty()) return a;  // rejection: categories not required
    if (!j.contains("task_category") || !j["task_category"].is_string())
        throw ValidationError("$.task_category", "missing string task_category");
    if (!j.contains("element_category") || !j["element_category"].is_string())
        throw ValidationError("$.element_category", "missing string element_category");
    a.task_category = j["task_category"].get<std::string>();
    a.element_category = j["element_category"].get<std::string>();
    if (!is_task_category(a.task_category))
        throw ValidationError("$.task_category", "not a known task category: " + a.task_category);
    if (!is_element_category(a.element_category))
        throw ValidationError("$.element_category",
                              "not a known element category: " + a.element_category);
    return a;
}

inline InputTaskAnnotation parse_input_task_annotation(const std::string& bytes) {
    const ordered_json j = detail::parse_json_or_throw(bytes);
    if (!j.is_object()) throw ValidationError("$", "input task annotation must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "task" && key != "action") throw ValidationError("$." + key, "unknown field");
    if (!j.contains("task") || !j["task"].is_string() || j["task"].get<std::string>().empty())
        throw ValidationError("$.task", "missing non-empty string task");
    if (!j.contains("action") || !j["action"].is_string())
        throw ValidationError("$.action", "missing string action");
    InputTaskAnnotation a;
    a.task = j["task"].get<std::string>();
    a.action = j["action"].get<std::string>();
    if (a.action.rfind("type ", 0) != 0 || a.action.size() <= 5)
        throw ValidationError("$.action", "action must start with 'type ' followed by text");
    return a;
}

/// Generic entry point: strict parse of agent output against one of the four
/// schemas. Returns the validated JSON; throws ValidationError with the JSON
/// path of the first violation.
inline ordered_json validate_json(const std::string& bytes, SchemaId schema,
                                  const ValidationContext& ctx = {}) {
    switch (schema) {
        case SchemaId::InputMap: parse_input_map(bytes, ctx); break;
        case SchemaId::OrderPlan: parse_order_plan(bytes, ctx); break;
        case SchemaId::TaskAnnotation: parse_task_annotation(bytes); break;
        case SchemaId::InputTaskAnnotation: parse_input_task_annotation(bytes); break;
    }
    return detail::parse_json_or_throw(bytes);
}

// ---------------------------------------------------------------------------
// Deterministic fallbacks and the agent operations.
// ---------------------------------------------------------------------------

inline bool is_text_field_role(const std::string& role) {
    return role == "AXTextField" || role == "AXSearchField" || role == "AXTextArea";
}

inline bool has_destructive_keyword(const UiElement& el) {
    static const char* keywords[] = {"delete", "remove", "clear", "reset"};
    auto lowered = [](const std::string& s) {
        std::string out = s;
        for (char& c : out)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return out;
    };
    const std::string text = lowered(el.name.value_or("")) + " " + lowered(el.description.value_or(""));
    for (const char* k : keywords)
        if (text.find(k) != std::string::npos) return true;
    return false;
}

inline std::string element_category_for_role(const std::string& role) {
    if (role == "AXTextField" || role == "AXSearchField" || role == "AXTextArea" ||
        role == "AXComboBox")
        return "Input field";
    if (role == "AXImage") return "Image";
    if (role == "AXMenuItem" || role == "AXMenuBarItem") return "Menu item";
    if (role == "AXCheckBox" || role == "AXRadioButton" || role == "AXSlider" || role == "AXSwitch")
        return "Checkbox/Control";
    if (role == "AXLink") return "Link";
    if (role == "AXGroup") return "Group";
    if (role.find("Button") != std::string::npos) return "Button";
    return "Text";
}

namespace detail {

inline std::string summarize_elements(const std::vector<const UiElement*>& elements) {
    std::ostringstream out;
    for (const UiElement* el : elements) {
        out << el->id << " " << el->role;
        if (el->name) out << " name='" << *el->name << "'";
        if (el->description) out << " desc='" << *el->description << "'";
        if (el->value) out << " value='" << *el->value << "'";
        out << "\n";
    }
    return out.str();
}

inline std::string summarize_tree(const ScreenState& state) {
    return summarize_elements(flatten(state.tree));
}

// One guarded client exchange: call, parse, retry on malformed output, give
// up after max_retries and let the caller fall back.
template <typename T, typename ParseFn>
std::optional<T> client_exchange(const AgentSuite& suite, const std::vector<ChatMessage>& messages,
                                 ParseFn parse) {
    if (!suite.client) return std::nullopt;
    for (int attempt = 0; attempt <= suite.config.max_retries; ++attempt) {
        std::string raw;
        try {
            suite.telemetry->client_calls.fetch_add(1);
            raw = suite.client->complete(messages);
        } catch (const std::exception&) {
            suite.telemetry->client_errors.fetch_add(1);
            continue;
        }
        try {
            return parse(raw);
        } catch (const ValidationError&) {
            suite.telemetry->malformed_responses.fetch_add(1);
        }
    }
    suite.telemetry->fallbacks.fetch_add(1);
    return std::nullopt;
}

}  // namespace detail

/// Collects text fields of the observed tree that an input agent should fill.
inline std::vector<const UiElement*> text_fields_of(const ScreenState& state) {
    std::vector<const UiElement*> out;
    for (const UiElement* el : flatten(state.tree))
        if (el->enabled && is_text_field_role(el->role) && is_visible(*el, state.tree.window_bbox))
            out.push_back(el);
    return out;
}

/// Contextual input strings per text field. Without a client every field gets
/// the configured default text; with a client, malformed or out-of-tree
/// responses are retried and finally fall back.
inline InputMap input_agent(const ScreenState& state, const AgentSuite& suite) {
    const auto fields = text_fields_of(state);
    ValidationContext ctx;
    for (const UiElement* f : fields) ctx.valid_ids.insert(f->id);

    if (suite.client && !fields.empty()) {
        std::vector<ChatMessage> messages = {
            {"system",
             "You fill text fields of a desktop application sensibly. Reply with a JSON object "
             "mapping text-field element ids (integers) to realistic input strings. No other text."},
            {"user", detail::summarize_tree(state)}};
        auto got = detail::client_exchange<InputMap>(
            suite, messages, [&](const std::string& raw) { return parse_input_map(raw, ctx); });
        if (got) return *got;
    }
    InputMap m;
    for (const UiElement* f : fields) m.entries[f->id] = suite.default_text;
    return m;
}

/// Deterministic ordering: chunks of up to 8 consecutive document-order
/// elements (merged so the plan never exceeds 8 groups), destructive-keyword
/// elements deferred to the final group.
inline OrderPlan deterministic_order_plan(const std::vector<const UiElement*>& elements) {
    OrderPlan plan;
    std::vector<int> normal, destructive;
    for (const UiElement* el : elements)
        (has_destructive_keyword(*el) ? destructive : normal).push_back(el->id);

    const int max_normal_groups = destructive.empty() ? 8 : 7;
    std::size_t group_size = 8;
    if (normal.size() > group_size * max_normal_groups)
        group_size = (normal.size() + max_normal_groups - 1) / max_normal_groups;
    for (std::size_t i = 0; i < normal.size(); i += group_size) {
        OrderGroup g;
        g.name = "elements_" + std::to_string(plan.action_order.size() + 1);
        for (std::size_t k = i; k < std::min(normal.size(), i + group_size); ++k)
            g.ids.push_back(normal[k]);
        plan.action_order.push_back(std::move(g));
    }
    if (!destructive.empty()) {
        OrderGroup g;
        g.name = "destructive_last";
        g.ids = destructive;
        plan.action_order.push_back(std::move(g));
    }
    return plan;
}

/// Safest-first interaction order over the presented elements. Client plans
/// are strictly validated (coverage, disjointness, at most 8 groups); any
/// violation falls back to the deterministic plan.
inline OrderPlan order_agent(const ScreenState& state, const AgentSuite& suite,
                             const std::vector<const UiElement*>& presented) {
    ValidationContext ctx;
    for (const UiElement* el : presented) ctx.valid_ids.insert(el->id);

    if (suite.client && !presented.empty()) {
        std::vector<ChatMessage> messages = {
            {"system",
             "Order the given UI elements into a safe interaction sequence. Reply with JSON: "
             "{\"action_order\": [{\"group_name\": [ids...]}, ...], \"login_page\": bool, "
             "\"system_access_required\": bool}. At most 8 groups; include every element id "
             "exactly once. Use dynamic_* group names for dynamic lists and repeated_* for "
             "options where only one is needed. Put destructive elements last."},
            {"user", detail::summarize_elements(presented)}};
        auto got = detail::client_exchange<OrderPlan>(
            suite, messages, [&](const std::string& raw) { return parse_order_plan(raw, ctx); });
        if (got) return *got;
    }
    return deterministic_order_plan(presented);
}

/// Click-task annotation. Deterministic rule: named, non-static elements get
/// "click <name>" in the Navigation category with the role-mapped element
/// category; unnamed or static-text targets are rejected with an empty task.
inline TaskAnnotation click_task_agent(const std::string& full_image_ref,
                                       const std::string& crop_image_ref, const UiElement& element,
                                       const AgentSuite& suite) {
    if (suite.client) {
        std::ostringstream user;
        user << "Full screenshot: " << full_image_ref << "\n";
        user << "Element crop: " << crop_image_ref << "\n";
        user << "Element: id=" << element.id << " role=" << element.role;
        if (element.name) user << " name='" << *element.name << "'";
        if (element.description) user << " desc='" << *element.description << "'";
        std::vector<ChatMessage> messages = {
            {"system",
             "Describe the action needed to click the highlighted element. Describe the function, "
             "not the appearance; keep it short, unique for the screen, and in plain English. If "
             "no human would do this as a task, return an empty task string. Reply with JSON "
             "{\"task\": ..., \"task_category\": ..., \"element_category\": ...} where "
             "task_category is one of Navigation, Settings, Files, Apps, Search & Information, "
             "Media, Accounts, Communication, Input, Connectivity, Modes, E-commerce and "
             "element_category is one of Image, Text, Checkbox/Control, Menu item, Input field, "
             "Button, Group, Link."},
            {"user", user.str()}};
        auto got = detail::client_exchange<TaskAnnotation>(
            suite, messages, [](const std::string& raw) { return parse_task_annotation(raw); });
        if (got) return *got;
    }
    TaskAnnotation a;
    if (!element.name || element.name->empty() || element.role == "AXStaticText") return a;
    a.task = "click " + *element.name;
    a.task_category = "Navigation";
    a.element_category = element_category_for_role(element.role);
    return a;
}

/// Text-input task annotation. The action always carries the exact text to
/// type; deterministic output uses the crawl-time typed value.
inline InputTaskAnnotation input_task_agent(const std::string& task_string,
                                            const std::string& full_image_ref,
                                            const std::string& crop_image_ref,
                                            const std::string& typed_text,
                                            const std::string& field_name, const AgentSuite& suite) {
    if (suite.client) {
        std::ostringstream user;
        user << "Original task: " << task_string << "\n";
        user << "Full screenshot: " << full_image_ref << "\n";
        user << "Element crop: " << crop_image_ref << "\n";
        std::vector<ChatMessage> messages = {
            {"system",
             "Rewrite the task as a natural English instruction that involves only typing text. "
             "Reply with JSON {\"task\": ..., \"action\": ...} where action starts with 'type ' "
             "followed by the exact text to input. No placeholders."},
            {"user", user.str()}};
        auto got = detail::client_exchange<InputTaskAnnotation>(
            suite, messages,
            [](const std::string& raw) { return parse_input_task_annotation(raw); });
        if (got) return *got;
    }
    InputTaskAnnotation a;
    a.task = "Type '" + typed_text + "' into " + field_name;
    a.action = "type " + typed_text;
    return a;
}

}  // namespace axcrawl

#endif  // AXCRAWL_AGENTS_HPP

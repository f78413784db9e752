#include <catch_amalgamated.hpp>

#include "axcrawl/agents.hpp"
#include "test_util.hpp"

using namespace axcrawl;

namespace {

class ScriptedClient final : public ChatClient {
public:
    explicit ScriptedClient(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}
    std::string complete(const std::vector<ChatMessage>&) override {
        if (next_ >= responses_.size()) throw ClientError("script exhausted");
        return responses_[next_++];
    }
    std::size_t calls() const { return next_; }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

class ErroringClient final : public ChatClient {
public:
    std::string complete(const std::vector<ChatMessage>&) override {
        throw ClientError("endpoint down");
    }
};

AgentSuite suite_with(std::shared_ptr<ChatClient> client, int retries = 2) {
    AgentSuite s = deterministic_agents();
    s.client = std::move(client);
    s.config.max_retries = retries;
    return s;
}

UiElement field(int id, const std::string& name, BBox bbox) {
    UiElement el;
    el.id = id;
    el.role = "AXTextField";
    el.name = name;
    el.bbox = bbox;
    return el;
}

UiElement button(int id, const std::string& name, BBox bbox) {
    UiElement el;
    el.id = id;
    el.role = "AXButton";
    el.name = name;
    el.bbox = bbox;
    return el;
}

ScreenState three_field_state() {
    ScreenState s;
    s.tree.window_bbox = {0, 0, 300, 200};
    s.tree.root = UiElement{1, "AXWindow", "Contacts", std::nullopt, std::nullopt,
                            {0, 0, 300, 200}, true, {}};
    s.tree.root.children.push_back(field(12, "First name", {10, 10, 120, 20}));
    s.tree.root.children.push_back(field(15, "Last name", {10, 40, 120, 20}));
    s.tree.root.children.push_back(field(21, "Phone", {10, 70, 120, 20}));
    return s;
}

}  // namespace

TEST_CASE("validate_json accepts a well-formed order plan", "[agents]") {
    ValidationContext ctx;
    ctx.valid_ids = {1, 2, 3, 4};
    const std::string body = R"({
      "action_order": [{"menu_buttons": [1, 2, 3]}, {"popover_buttons": [4]}],
      "login_page": false,
      "system_access_required": false
    })";
    REQUIRE_NOTHROW(validate_json(body, SchemaId::OrderPlan, ctx));
    const OrderPlan plan = parse_order_plan(body, ctx);
    REQUIRE(plan.action_order.size() == 2);
    REQUIRE(plan.action_order[0].name == "menu_buttons");
    REQUIRE_FALSE(plan.login_page);
}

TEST_CASE("validate_json rejects unknown fields with their path", "[agents]") {
    ValidationContext ctx;
    ctx.valid_ids = {1};
    try {
        validate_json(R"({"action_order": [{"g": [1]}], "notes": "hi"})", SchemaId::OrderPlan, ctx);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(e.json_path() == "$.notes");
    }
}

TEST_CASE("validate_json rejects ids straddling two groups", "[agents]") {
    ValidationContext ctx;
    ctx.valid_ids = {1, 2};
    try {
        parse_order_plan(R"({"action_order": [{"a": [1, 2]}, {"b": [2]}]})", ctx);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(e.json_path() == "$.action_order[1].b[0]");
    }
}

TEST_CASE("input agent fallback fills every text field with the default", "[agents]") {
    const AgentSuite suite = deterministic_agents("DEFAULT");
    const InputMap m = input_agent(three_field_state(), suite);
    REQUIRE(m.entries.size() == 3);
    for (const auto& [id, text] : m.entries) REQUIRE(text == "DEFAULT");
}

TEST_CASE("input agent accepts a contextual client response", "[agents]") {
    ScreenState s;
    s.tree.window_bbox = {0, 0, 300, 200};
    s.tree.root = UiElement{1, "AXWindow", "Music", std::nullopt, std::nullopt,
                            {0, 0, 300, 200}, true, {}};
    s.tree.root.children.push_back(field(7, "Search", {10, 10, 150, 22}));

    const AgentSuite suite = suite_with(
        std::make_shared<ScriptedClient>(std::vector<std::string>{R"({"7": "Yellow Submarine"})"}));
    const InputMap m = input_agent(s, suite);
    REQUIRE(m.entries.at(7) == "Yellow Submarine");
    REQUIRE(suite.telemetry->snapshot().client_calls == 1);
}

TEST_CASE("input agent rejects out-of-tree ids, retries, then falls back", "[agents]") {
    const auto client = std::make_shared<ScriptedClient>(std::vector<std::string>{
        R"({"99": "nope"})", R"({"99": "still nope"})", R"({"99": "forever"})"});
    const AgentSuite suite = suite_with(client, 2);
    const InputMap m = input_agent(three_field_state(), suite);
    REQUIRE(m.entries.size() == 3);
    for (const auto& [id, text] : m.entries) REQUIRE(text == "DEFAULT");
    const auto t = suite.telemetry->snapshot();
    REQUIRE(t.malformed_responses == 3);  // initial try + 2 retries
    REQUIRE(t.fallbacks == 1);
}

TEST_CASE("order agent deterministic plan groups and flags", "[agents]") {
    std::vector<UiElement> owned;
    for (int i = 1; i <= 4; ++i) owned.push_back(button(i, "b" + std::to_string(i), {0, 0, 10, 10}));
    std::vector<const UiElement*> elements;
    for (const auto& el : owned) elements.push_back(&el);

    const ScreenState state = three_field_state();
    const OrderPlan plan = order_agent(state, deterministic_agents(), elements);
    REQUIRE(plan.action_order.size() == 1);
    REQUIRE(plan.action_order[0].ids == std::vector<int>{1, 2, 3, 4});
    REQUIRE_FALSE(plan.login_page);
    REQUIRE_FALSE(plan.system_access_required);
}

TEST_CASE("destructive elements land in the final group", "[agents]") {
    std::vector<UiElement> owned;
    owned.push_back(button(1, "Open", {0, 0, 10, 10}));
    owned.push_back(button(2, "Delete All", {0, 0, 10, 10}));
    owned.push_back(button(3, "Save", {0, 0, 10, 10}));
    std::vector<const UiElement*> elements;
    for (const auto& el : owned) elements.push_back(&el);

    const OrderPlan plan = deterministic_order_plan(elements);
    REQUIRE(plan.action_order.back().ids == std::vector<int>{2});
    REQUIRE(plan.action_order.front().ids == std::vector<int>{1, 3});
}

TEST_CASE("client plans with more than 8 groups fall back", "[agents]") {
    std::vector<UiElement> owned;
    std::string groups;
    for (int i = 1; i <= 9; ++i) {
        owned.push_back(button(i, "b" + std::to_string(i), {0, 0, 10, 10}));
        groups += (i > 1 ? "," : "") + std::string("{\"g") + std::to_string(i) + "\": [" +
                  std::to_string(i) + "]}";
    }
    std::vector<const UiElement*> elements;
    for (const auto& el : owned) elements.push_back(&el);

    const std::string nine_groups = "{\"action_order\": [" + groups + "]}";
    const AgentSuite suite = suite_with(std::make_shared<ScriptedClient>(
        std::vector<std::string>{nine_groups, nine_groups, nine_groups}));
    const OrderPlan plan = order_agent(three_field_state(), suite, elements);
    // Deterministic fallback: 9 elements, chunks of 8.
    REQUIRE(plan.action_order.size() == 2);
    REQUIRE(suite.telemetry->snapshot().fallbacks == 1);
}

TEST_CASE("click task agent deterministic mapping", "[agents]") {
    const TaskAnnotation a =
        click_task_agent("s.ppm", "c.ppm", button(5, "Open Media", {0, 0, 40, 20}),
                         deterministic_agents());
    REQUIRE(a.task == "click Open Media");
    REQUIRE(a.task_category == "Navigation");
    REQUIRE(a.element_category == "Button");

    UiElement text = button(6, "label", {0, 0, 40, 10});
    text.role = "AXStaticText";
    REQUIRE(click_task_agent("s.ppm", "c.ppm", text, deterministic_agents()).rejected());

    UiElement unnamed = button(7, "", {0, 0, 40, 10});
    unnamed.name.reset();
    REQUIRE(click_task_agent("s.ppm", "c.ppm", unnamed, deterministic_agents()).rejected());
}

TEST_CASE("click task agent accepts a valid client annotation", "[agents]") {
    const AgentSuite suite = suite_with(std::make_shared<ScriptedClient>(std::vector<std::string>{
        R"({"task": "Open the menu to see tutorials", "task_category": "Search & Information",
            "element_category": "Button"})"}));
    const TaskAnnotation a =
        click_task_agent("s.ppm", "c.ppm", button(5, "Menu", {0, 0, 40, 20}), suite);
    REQUIRE(a.task == "Open the menu to see tutorials");
    REQUIRE(a.task_category == "Search & Information");
}

TEST_CASE("click task agent rejects invalid category enums", "[agents]") {
    const auto bad = R"({"task": "browse", "task_category": "Browsing", "element_category": "Button"})";
    const AgentSuite suite = suite_with(
        std::make_shared<ScriptedClient>(std::vector<std::string>{bad, bad, bad}));
    const TaskAnnotation a =
        click_task_agent("s.ppm", "c.ppm", button(5, "Shop", {0, 0, 40, 20}), suite);
    // Fell back to the deterministic annotation.
    REQUIRE(a.task == "click Shop");
    REQUIRE(suite.telemetry->snapshot().malformed_responses == 3);
}

TEST_CASE("input task agent validates the type prefix", "[agents]") {
    const AgentSuite ok = suite_with(std::make_shared<ScriptedClient>(std::vector<std::string>{
        R"({"task": "Use john.doe@example.com as your login email",
            "action": "type john.doe@example.com"})"}));
    const InputTaskAnnotation a =
        input_task_agent("raw", "s.ppm", "c.ppm", "john.doe@example.com", "Email", ok);
    REQUIRE(a.action == "type john.doe@example.com");

    const auto bad = R"({"task": "Click the field", "action": "click field"})";
    const AgentSuite rejecting = suite_with(
        std::make_shared<ScriptedClient>(std::vector<std::string>{bad, bad, bad}));
    const InputTaskAnnotation fallback =
        input_task_agent("raw", "s.ppm", "c.ppm", "DEFAULT", "City", rejecting);
    REQUIRE(fallback.task == "Type 'DEFAULT' into City");
    REQUIRE(fallback.action == "type DEFAULT");
    REQUIRE(rejecting.telemetry->snapshot().fallbacks == 1);

    REQUIRE_THROWS_AS(parse_input_task_annotation(bad), ValidationError);
}

TEST_CASE("category enums are closed", "[agents]") {
    REQUIRE(task_categories().size() == 12);
    REQUIRE(element_categories().size() == 8);
    REQUIRE(is_task_category("E-commerce"));
    REQUIRE_FALSE(is_task_category("Browsing"));
    REQUIRE(is_element_category("Checkbox/Control"));
    REQUIRE_FALSE(is_element_category("Slider"));
}

TEST_CASE("property: erroring clients leave output exactly deterministic", "[agents][property]") {
    const ScreenState state = three_field_state();
    std::vector<const UiElement*> elements;
    for (const auto& el : state.tree.root.children) elements.push_back(&el);

    const AgentSuite broken = suite_with(std::make_shared<ErroringClient>(), 1);
    const AgentSuite plain = deterministic_agents();

    REQUIRE(input_agent(state, broken) == input_agent(state, plain));
    REQUIRE(order_agent(state, broken, elements) == order_agent(state, plain, elements));
    const UiElement target = button(5, "Go", {0, 0, 10, 10});
    REQUIRE(click_task_agent("a", "b", target, broken) == click_task_agent("a", "b", target, plain));
    REQUIRE(input_task_agent("r", "a", "b", "x", "F", broken) ==
            input_task_agent("r", "a", "b", "x", "F", plain));
    REQUIRE(broken.telemetry->snapshot().client_errors > 0);
}

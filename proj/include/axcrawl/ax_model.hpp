#ifndef AXCRAWL_AX_MODEL_HPP
#define AXCRAWL_AX_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace axcrawl {

using ordered_json = nlohmann::ordered_json;

class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Axis-aligned rectangle in screen points. Containment is inclusive on all
/// four edges; width and height are never negative.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool operator==(const BBox&) const = default;

    bool contains(const Point& p) const {
        return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h;
    }

    Point center() const { return {x + w / 2.0, y + h / 2.0}; }

    double intersection_area(const BBox& other) const {
        const double ix = std::max(0.0, std::min(x + w, other.x + other.w) - std::max(x, other.x));
        const double iy = std::max(0.0, std::min(y + h, other.y + other.h) - std::max(y, other.y));
        return ix * iy;
    }
};

/// One node of an accessibility tree. Ids are unique within a tree and the
/// child list is in document order.
struct UiElement {
    int id = 0;
    std::string role;
    std::optional<std::string> name;
    std::optional<std::string> description;
    std::optional<std::string> value;
    BBox bbox;
    bool enabled = true;
    std::vector<UiElement> children;

    bool operator==(const UiElement&) const = default;
};

struct AxTree {
    UiElement root;
    BBox window_bbox;

    bool operator==(const AxTree&) const = default;

    int element_count() const {
        int n = 0;
        count_nodes(root, n);
        return n;
    }

private:
    static void count_nodes(const UiElement& el, int& n) {
        ++n;
        for (const auto& c : el.children) count_nodes(c, n);
    }
};

/// One observed UI state: the tree, the screenshot it was rendered to, and
/// the display scaling factor (points -> pixels).
struct ScreenState {
    AxTree tree;
    std::string image_name;
    double scaling_factor = 1.0;

    bool operator==(const ScreenState&) const = default;
};

enum class ActionKind { Click, Move, Type, PressEnter };

inline const char* to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Click: return "click";
        case ActionKind::Move: return "move";
        case ActionKind::Type: return "type";
        case ActionKind::PressEnter: return "press_enter";
    }
    return "?";
}

inline ActionKind action_kind_from_string(const std::string& s) {
    if (s == "click") return ActionKind::Click;
    if (s == "move") return ActionKind::Move;
    if (s == "type") return ActionKind::Type;
    if (s == "press_enter") return ActionKind::PressEnter;
    throw SchemaError("$.kind", "unknown action kind '" + s + "'");
}

struct ActionSpec {
    ActionKind kind = ActionKind::Click;
    std::optional<int> target_id;
    std::optional<Point> point;
    std::optional<std::string> text;

    bool operator==(const ActionSpec&) const = default;

    // Click/Move carry a point, Type carries target and text, PressEnter is bare.
    void validate() const {
        switch (kind) {
            case ActionKind::Click:
            case ActionKind::Move:
                if (!point) throw SchemaError("$.point", "click/move action requires a point");
                break;
            case ActionKind::Type:
                if (!text) throw SchemaError("$.text", "type action requires text");
                if (!target_id) throw SchemaError("$.target_id", "type action requires a target element");
                break;
            case ActionKind::PressEnter:
                if (point || text) throw SchemaError("$", "press_enter action carries no payload");
                break;
        }
    }

    static ActionSpec click_at(Point p, std::optional<int> target = std::nullopt) {
        ActionSpec a;
        a.kind = ActionKind::Click;
        a.point = p;
        a.target_id = target;
        return a;
    }
    static ActionSpec move_to(Point p, std::optional<int> target = std::nullopt) {
        ActionSpec a;
        a.kind = ActionKind::Move;
        a.point = p;
        a.target_id = target;
        return a;
    }
    static ActionSpec type_into(int target, std::string t) {
        ActionSpec a;
        a.kind = ActionKind::Type;
        a.target_id = target;
        a.text = std::move(t);
        return a;
    }
    static ActionSpec press_enter() {
        ActionSpec a;
        a.kind = ActionKind::PressEnter;
        return a;
    }
};

/// Result of diffing two trees. Entries are element signatures: canonical
/// strings over (path-from-root, role, name, description, value). Elements
/// are matched across trees by everything except the value; a value change
/// on a matched element lands in `changed`.
struct TreeDiff {
    std::set<std::string> added;
    std::set<std::string> removed;
    std::set<std::string> changed;

    bool empty() const { return added.empty() && removed.empty() && changed.empty(); }
};

enum class HashMode { Strict, LayoutInsensitive };

// ---------------------------------------------------------------------------
// Canonical JSON serialization of trees.
// Element fields in fixed order: id, role, name, description, value, bbox,
// enabled, children; bbox as [x, y, w, h]. Absent optional fields serialize
// as null. Parsing rejects unknown fields.
// ---------------------------------------------------------------------------

inline ordered_json bbox_to_json(const BBox& b) {
    return ordered_json::array({b.x, b.y, b.w, b.h});
}

inline BBox bbox_from_json(const ordered_json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 4)
        throw SchemaError(path, "bbox must be an array [x, y, w, h]");
    for (const auto& v : j)
        if (!v.is_number()) throw SchemaError(path, "bbox entries must be numbers");
    BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (b.w < 0 || b.h < 0) throw SchemaError(path, "bbox width/height must be non-negative");
    return b;
}

inline ordered_json element_to_json(const UiElement& el) {
    ordered_json j;
    j["id"] = el.id;
    j["role"] = el.role;
    j["name"] = el.name ? ordered_json(*el.name) : ordered_json(nullptr);
    j["description"] = el.description ? ordered_json(*el.description) : ordered_json(nullptr);
    j["value"] = el.value ? ordered_json(*el.value) : ordered_json(nullptr);
    j["bbox"] = bbox_to_json(el.bbox);
    j["enabled"] = el.enabled;
    ordered_json kids = ordered_json::array();
    for (const auto& c : el.children) kids.push_back(element_to_json(c));
    j["children"] = kids;
    return j;
}

inline std::optional<std::string> optional_string_field(const ordered_json& j, const char* key,
                                                        const std::string& path) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw SchemaError(path + "." + key, "expected string or null");
    return j[key].get<std::string>();
}

inline UiElement element_from_json(const ordered_json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "element must be an object");
    static const std::set<std::string> known = {"id",    "role",    "name",     "description",
                                                "value", "bbox",    "enabled",  "children"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw SchemaError(path + "." + key, "unknown field");
    if (!j.contains("id") || !j["id"].is_number_integer())
        throw SchemaError(path + ".id", "element requires integer id");
    if (!j.contains("role") || !j["role"].is_string())
        throw SchemaError(path + ".role", "element requires string role");
    if (!j.contains("bbox")) throw SchemaError(path + ".bbox", "element requires bbox");

    UiElement el;
    el.id = j["id"].get<int>();
    el.role = j["role"].get<std::string>();
    el.name = optional_string_field(j, "name", path);
    el.description = optional_string_field(j, "description", path);
    el.value = optional_string_field(j, "value", path);
    el.bbox = bbox_from_json(j["bbox"], path + ".bbox");
    if (j.contains("enabled")) {
        if (!j["enabled"].is_boolean()) throw SchemaError(path + ".enabled", "expected boolean");
        el.enabled = j["enabled"].get<bool>();
    }
    if (j.contains("children")) {
        if (!j["children"].is_array()) throw SchemaError(path + ".children", "expected array");
        int i = 0;
        for (const auto& c : j["children"]) {
            el.children.push_back(element_from_json(c, path + ".children[" + std::to_string(i) + "]"));
            ++i;
        }
    }
    return el;
}

inline ordered_json tree_to_json(const AxTree& t) {
    ordered_json j;
    j["window_bbox"] = bbox_to_json(t.window_bbox);
    j["root"] = element_to_json(t.root);
    return j;
}

inline AxTree tree_from_json(const ordered_json& j, const std::string& path = "$") {
    if (!j.is_object()) throw SchemaError(path, "tree must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "window_bbox" && key != "root") throw SchemaError(path + "." + key, "unknown field");
    if (!j.contains("window_bbox")) throw SchemaError(path + ".window_bbox", "missing window_bbox");
    if (!j.contains("root")) throw SchemaError(path + ".root", "missing root");
    AxTree t;
    t.window_bbox = bbox_from_json(j["window_bbox"], path + ".window_bbox");
    if (t.window_bbox.w <= 0 || t.window_bbox.h <= 0)
        throw SchemaError(path + ".window_bbox", "window must have positive size");
    t.root = element_from_json(j["root"], path + ".root");
    return t;
}

inline ordered_json action_to_json(const ActionSpec& a) {
    ordered_json j;
    j["kind"] = to_string(a.kind);
    j["target_id"] = a.target_id ? ordered_json(*a.target_id) : ordered_json(nullptr);
    j["point"] = a.point ? ordered_json::array({a.point->x, a.point->y}) : ordered_json(nullptr);
    j["text"] = a.text ? ordered_json(*a.text) : ordered_json(nullptr);
    return j;
}

inline ActionSpec action_from_json(const ordered_json& j, const std::string& path = "$") {
    if (!j.is_object()) throw SchemaError(path, "action must be an object");
    static const std::set<std::string> known = {"kind", "target_id", "point", "text"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw SchemaError(path + "." + key, "unknown field");
    if (!j.contains("kind") || !j["kind"].is_string())
        throw SchemaError(path + ".kind", "action requires string kind");
    ActionSpec a;
    a.kind = action_kind_from_string(j["kind"].get<std::string>());
    if (j.contains("target_id") && !j["target_id"].is_null()) {
        if (!j["target_id"].is_number_integer())
            throw SchemaError(path + ".target_id", "expected integer or null");
        a.target_id = j["target_id"].get<int>();
    }
    if (j.contains("point") && !j["point"].is_null()) {
        const auto& p = j["point"];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw SchemaError(path + ".point", "expected [x, y]");
        a.point = Point{p[0].get<double>(), p[1].get<double>()};
    }
    a.text = optional_string_field(j, "text", path);
    a.validate();
    return a;
}

inline ordered_json screen_state_to_json(const ScreenState& s) {
    ordered_json j;
    j["image_name"] = s.image_name;
    j["scaling_factor"] = s.scaling_factor;
    j["tree"] = tree_to_json(s.tree);
    return j;
}

inline ScreenState screen_state_from_json(const ordered_json& j, const std::string& path = "$") {
    if (!j.is_object()) throw SchemaError(path, "state must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "image_name" && key != "scaling_factor" && key != "tree")
            throw SchemaError(path + "." + key, "unknown field");
    ScreenState s;
    if (j.contains("image_name")) {
        if (!j["image_name"].is_string()) throw SchemaError(path + ".image_name", "expected string");
        s.image_name = j["image_name"].get<std::string>();
    }
    if (j.contains("scaling_factor")) {
        if (!j["scaling_factor"].is_number()) throw SchemaError(path + ".scaling_factor", "expected number");
        s.scaling_factor = j["scaling_factor"].get<double>();
        if (s.scaling_factor <= 0) throw SchemaError(path + ".scaling_factor", "must be positive");
    }
    if (!j.contains("tree")) throw SchemaError(path + ".tree", "missing tree");
    s.tree = tree_from_json(j["tree"], path + ".tree");
    return s;
}

// ---------------------------------------------------------------------------
// Tree operations.
// ---------------------------------------------------------------------------

/// Preorder traversal of one element's subtree.
inline std::vector<const UiElement*> flatten_subtree(const UiElement& root) {
    std::vector<const UiElement*> out;
    struct Walk {
        std::vector<const UiElement*>* out;
        void operator()(const UiElement& el) {
            out->push_back(&el);
            for (const auto& c : el.children) (*this)(c);
        }
    };
    Walk{&out}(root);
    return out;
}

/// Preorder traversal; result length equals element_count().
inline std::vector<const UiElement*> flatten(const AxTree& tree) {
    return flatten_subtree(tree.root);
}

inline const UiElement* find_by_id(const AxTree& tree, int id) {
    for (const UiElement* el : flatten(tree))
        if (el->id == id) return el;
    return nullptr;
}

/// Throws SchemaError if ids are not unique across the tree.
inline void validate_tree(const AxTree& tree, const std::string& path = "$") {
    std::set<int> seen;
    for (const UiElement* el : flatten(tree)) {
        if (!seen.insert(el->id).second)
            throw SchemaError(path, "duplicate element id " + std::to_string(el->id));
        if (el->bbox.w < 0 || el->bbox.h < 0)
            throw SchemaError(path, "negative bbox size on element " + std::to_string(el->id));
    }
    if (tree.window_bbox.w <= 0 || tree.window_bbox.h <= 0)
        throw SchemaError(path, "window must have positive size");
}

namespace detail {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

inline void fnv_u32(std::uint64_t& h, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    fnv_bytes(h, b, 4);
}

inline void fnv_i64(std::uint64_t& h, std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    fnv_bytes(h, b, 8);
}

inline void fnv_str(std::uint64_t& h, const std::string& s) {
    fnv_u32(h, static_cast<std::uint32_t>(s.size()));
    fnv_bytes(h, s.data(), s.size());
}

inline void fnv_opt_str(std::uint64_t& h, const std::optional<std::string>& s) {
    unsigned char present = s ? 1 : 0;
    fnv_bytes(h, &present, 1);
    if (s) fnv_str(h, *s);
}

// Strict mode folds geometry quantized to a 4-point grid so that sub-grid
// jitter does not change the digest.
inline std::int64_t grid4(double v) { return static_cast<std::int64_t>(std::floor(v / 4.0)); }

inline void hash_element(std::uint64_t& h, const UiElement& el, HashMode mode) {
    unsigned char marker = 0x01;
    fnv_bytes(h, &marker, 1);
    fnv_str(h, el.role);
    fnv_opt_str(h, el.name);
    fnv_opt_str(h, el.description);
    fnv_opt_str(h, el.value);
    if (mode == HashMode::Strict) {
        unsigned char geo = 0x02;
        fnv_bytes(h, &geo, 1);
        fnv_i64(h, grid4(el.bbox.x));
        fnv_i64(h, grid4(el.bbox.y));
        fnv_i64(h, grid4(el.bbox.w));
        fnv_i64(h, grid4(el.bbox.h));
    }
    fnv_u32(h, static_cast<std::uint32_t>(el.children.size()));
    for (const auto& c : el.children) hash_element(h, c, mode);
}

}  // namespace detail

/// Stable 64-bit digest of a tree: FNV-1a over a canonical, length-prefixed
/// byte serialization of (role, name, description, value, child order).
/// Strict mode additionally folds bbox coordinates quantized to a 4-point
/// grid. Element ids never contribute, so renumbering leaves the digest
/// unchanged.
inline std::uint64_t canonical_hash(const AxTree& tree, HashMode mode) {
    std::uint64_t h = detail::kFnvOffset;
    detail::hash_element(h, tree.root, mode);
    return h;
}

namespace detail {

struct SignatureEntry {
    std::string identity;  // path + role + name + description
    std::string full;      // identity + value
};

inline std::string signature_string(const std::string& path, const UiElement& el, bool with_value) {
    ordered_json j = ordered_json::array();
    j.push_back(path);
    j.push_back(el.role);
    j.push_back(el.name ? ordered_json(*el.name) : ordered_json(nullptr));
    j.push_back(el.description ? ordered_json(*el.description) : ordered_json(nullptr));
    if (with_value) j.push_back(el.value ? ordered_json(*el.value) : ordered_json(nullptr));
    return j.dump();
}

inline void collect_signatures(const UiElement& el, const std::string& path,
                               std::map<std::string, std::pair<std::optional<std::string>, std::string>>& out) {
    out[signature_string(path, el, false)] = {el.value, signature_string(path, el, true)};
    for (std::size_t i = 0; i < el.children.size(); ++i)
        collect_signatures(el.children[i], path + "/" + std::to_string(i), out);
}

}  // namespace detail

/// Structural diff keyed by (role, name, description, path-from-root).
/// Elements present only in `after` are added, only in `before` removed;
/// matched elements whose value differs are changed.
inline TreeDiff diff(const AxTree& before, const AxTree& after) {
    std::map<std::string, std::pair<std::optional<std::string>, std::string>> b, a;
    detail::collect_signatures(before.root, "", b);
    detail::collect_signatures(after.root, "", a);
    TreeDiff d;
    for (const auto& [identity, va] : a) {
        auto it = b.find(identity);
        if (it == b.end())
            d.added.insert(va.second);
        else if (it->second.first != va.first)
            d.changed.insert(va.second);
    }
    for (const auto& [identity, vb] : b)
        if (!a.count(identity)) d.removed.insert(vb.second);
    return d;
}

/// Deepest element whose bbox contains the point (edge-inclusive). Depth ties
/// are broken by the later element in document order, i.e. topmost paint
/// order. Points outside the window resolve to nothing.
inline const UiElement* locate(const AxTree& tree, Point p) {
    if (!tree.window_bbox.contains(p)) return nullptr;
    const UiElement* best = nullptr;
    int best_depth = -1;
    struct Walk {
        Point p;
        const UiElement** best;
        int* best_depth;
        // Preorder visit with >= comparison: at equal depth the later element
        // in document order wins.
        void operator()(const UiElement& el, int depth) {
            if (el.bbox.contains(p) && depth >= *best_depth) {
                *best = &el;
                *best_depth = depth;
            }
            for (const auto& c : el.children) (*this)(c, depth + 1);
        }
    };
    Walk{p, &best, &best_depth}(tree.root, 0);
    return best;
}

/// True iff the element overlaps the window with positive area and has a
/// non-degenerate bbox itself.
inline bool is_visible(const UiElement& el, const BBox& window) {
    return el.bbox.w > 0 && el.bbox.h > 0 && el.bbox.intersection_area(window) > 0;
}

}  // namespace axcrawl

#endif  // AXCRAWL_AX_MODEL_HPP

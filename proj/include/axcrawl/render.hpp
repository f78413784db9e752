#ifndef AXCRAWL_RENDER_HPP
#define AXCRAWL_RENDER_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "axcrawl/ax_model.hpp"

namespace axcrawl {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

    static Image filled(int w, int h, Rgb c) {
        Image img;
        img.width = w;
        img.height = h;
        img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
        for (int i = 0; i < w * h; ++i) {
            img.rgb[3 * i] = c.r;
            img.rgb[3 * i + 1] = c.g;
            img.rgb[3 * i + 2] = c.b;
        }
        return img;
    }

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = c.r;
        rgb[i + 1] = c.g;
        rgb[i + 2] = c.b;
    }

    void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
        for (int y = std::max(0, y0); y < std::min(height, y1); ++y)
            for (int x = std::max(0, x0); x < std::min(width, x1); ++x) set(x, y, c);
    }

    void stroke_rect(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
        for (int t = 0; t < thickness; ++t) {
            for (int x = x0 + t; x < x1 - t; ++x) {
                set(x, y0 + t, c);
                set(x, y1 - 1 - t, c);
            }
            for (int y = y0 + t; y < y1 - t; ++y) {
                set(x0 + t, y, c);
                set(x1 - 1 - t, y, c);
            }
        }
    }

    bool operator==(const Image&) const = default;
};

namespace detail {

// 5x7 glyphs, one byte per row, low 5 bits used. Lowercase maps onto the
// uppercase forms; anything without a glyph draws as a hollow box.
struct Glyph {
    char ch;
    std::array<std::uint8_t, 7> rows;
};

inline const Glyph* find_glyph(char ch) {
    static const Glyph table[] = {
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
        {'@', {0x0E, 0x11, 0x17, 0x15, 0x17, 0x10, 0x0E}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'&', {0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D}},
        {'\'', {0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
        {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04}},
        {'!', {0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04}},
        {'"', {0x0A, 0x0A, 0x14, 0x00, 0x00, 0x00, 0x00}},
    };
    char up = (ch >= 'a' && ch <= 'z') ? static_cast<char>(ch - 'a' + 'A') : ch;
    for (const auto& g : table)
        if (g.ch == up) return &g;
    return nullptr;
}

inline Rgb role_color(const std::string& role) {
    static const Rgb palette[] = {
        {0x8E, 0xB8, 0xE5}, {0xF2, 0xB1, 0x80}, {0xA8, 0xD5, 0xA2}, {0xE5, 0xA0, 0xA0},
        {0xC5, 0xA8, 0xD5}, {0xD5, 0xC8, 0x8E}, {0x8E, 0xD5, 0xC8}, {0xD5, 0x8E, 0xB8},
        {0xB8, 0xC4, 0x9A}, {0x9A, 0xB8, 0xC4}, {0xC4, 0x9A, 0xB8}, {0xB0, 0xB0, 0xC8},
    };
    std::uint64_t h = detail::kFnvOffset;
    detail::fnv_str(h, role);
    return palette[h % (sizeof(palette) / sizeof(palette[0]))];
}

inline Rgb darken(Rgb c) {
    return {static_cast<std::uint8_t>(c.r * 2 / 3), static_cast<std::uint8_t>(c.g * 2 / 3),
            static_cast<std::uint8_t>(c.b * 2 / 3)};
}

}  // namespace detail

/// Draws `text` at pixel position (x, y) with each font pixel scaled by
/// `scale`. Characters without a glyph render as hollow boxes.
inline void draw_label(Image& img, int x, int y, const std::string& text, Rgb color, int scale = 1) {
    int cx = x;
    for (char ch : text) {
        const detail::Glyph* g = detail::find_glyph(ch);
        if (g) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (g->rows[row] & (1 << (4 - col)))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                img.set(cx + col * scale + sx, y + row * scale + sy, color);
        } else {
            img.stroke_rect(cx, y, cx + 5 * scale, y + 7 * scale, color);
        }
        cx += 6 * scale;
    }
}

/// Deterministic schematic raster of a UI state: window background, one
/// filled role-colored rectangle per visible element, the element name (and
/// value, when present) as bitmap-font labels. Image size is the window bbox
/// scaled by the state's scaling factor.
inline Image render(const ScreenState& state) {
    const BBox& win = state.tree.window_bbox;
    const double s = state.scaling_factor;
    const int w = std::max(1, static_cast<int>(std::lround(win.w * s)));
    const int h = std::max(1, static_cast<int>(std::lround(win.h * s)));
    Image img = Image::filled(w, h, {0xF0, 0xF0, 0xF0});
    const int label_scale = std::max(1, static_cast<int>(std::lround(s)));

    for (const UiElement* el : flatten(state.tree)) {
        if (!is_visible(*el, win)) continue;
        const int x0 = static_cast<int>(std::lround((el->bbox.x - win.x) * s));
        const int y0 = static_cast<int>(std::lround((el->bbox.y - win.y) * s));
        const int x1 = static_cast<int>(std::lround((el->bbox.x + el->bbox.w - win.x) * s));
        const int y1 = static_cast<int>(std::lround((el->bbox.y + el->bbox.h - win.y) * s));
        const Rgb fill = detail::role_color(el->role);
        img.fill_rect(x0, y0, x1, y1, fill);
        img.stroke_rect(x0, y0, x1, y1, detail::darken(fill));
        const Rgb ink{0x20, 0x20, 0x20};
        int ty = y0 + 2 * label_scale;
        if (el->name && !el->name->empty()) {
            draw_label(img, x0 + 2 * label_scale, ty, *el->name, ink, label_scale);
            ty += 8 * label_scale;
        }
        if (el->value && !el->value->empty())
            draw_label(img, x0 + 2 * label_scale, ty, *el->value, ink, label_scale);
    }
    return img;
}

/// Binary PPM (P6) encoding.
inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return out;
}

inline std::string render_ppm(const ScreenState& state) { return encode_ppm(render(state)); }

/// Copy of the state's render with the target bbox stroked in red, for agent
/// prompt attachments.
inline Image render_with_highlight(const ScreenState& state, const BBox& target) {
    Image img = render(state);
    const BBox& win = state.tree.window_bbox;
    const double s = state.scaling_factor;
    const int x0 = static_cast<int>(std::lround((target.x - win.x) * s));
    const int y0 = static_cast<int>(std::lround((target.y - win.y) * s));
    const int x1 = static_cast<int>(std::lround((target.x + target.w - win.x) * s));
    const int y1 = static_cast<int>(std::lround((target.y + target.h - win.y) * s));
    img.stroke_rect(x0 - 2, y0 - 2, x1 + 2, y1 + 2, {0xE0, 0x10, 0x10}, 2);
    return img;
}

/// Crop of the element's region, clamped to the image bounds.
inline Image crop(const Image& img, const ScreenState& state, const BBox& target) {
    const BBox& win = state.tree.window_bbox;
    const double s = state.scaling_factor;
    const int x0 = std::max(0, static_cast<int>(std::lround((target.x - win.x) * s)));
    const int y0 = std::max(0, static_cast<int>(std::lround((target.y - win.y) * s)));
    const int x1 = std::min(img.width, static_cast<int>(std::lround((target.x + target.w - win.x) * s)));
    const int y1 = std::min(img.height, static_cast<int>(std::lround((target.y + target.h - win.y) * s)));
    const int cw = std::max(1, x1 - x0);
    const int ch = std::max(1, y1 - y0);
    Image out = Image::filled(cw, ch, {0xFF, 0xFF, 0xFF});
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            const int sx = x0 + x;
            const int sy = y0 + y;
            if (sx < img.width && sy < img.height) {
                const std::size_t i = (static_cast<std::size_t>(sy) * img.width + sx) * 3;
                out.set(x, y, {img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]});
            }
        }
    return out;
}

}  // namespace axcrawl

#endif  // AXCRAWL_RENDER_HPP

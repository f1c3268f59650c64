#include <algorithm>
#include <array>
#include <string>
#include <string_view>

#include "mdb/error.hpp"
#include "mdb/synthgrid.hpp"

namespace mdb {
namespace {

// Glyph bitmaps, one per class. Each is 2-4 strokes of width 2 on a 12x12
// canvas; every pair differs in at least 37% of the larger foreground.
constexpr std::array<std::array<std::string_view, kTemplateSize>, kTemplateCount> kGlyphArt{{
    // class 0: top + bot + left + right
    {
        "............",
        ".##########.",
        ".##########.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##########.",
        ".##########.",
        "............",
    },
    // class 1: cen + top
    {
        "............",
        ".##########.",
        ".##########.",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        "............",
    },
    // class 2: bs + fs
    {
        "............",
        ".##......##.",
        "..##....##..",
        "...##..##...",
        "....####....",
        ".....##.....",
        "....####....",
        "...##..##...",
        "..##....##..",
        ".##......##.",
        ".#........#.",
        "............",
    },
    // class 3: left + bot
    {
        "............",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##.........",
        ".##########.",
        ".##########.",
        "............",
    },
    // class 4: cen + mid
    {
        "............",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".##########.",
        ".##########.",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        ".....##.....",
        "............",
    },
    // class 5: fs + mid
    {
        "............",
        ".........##.",
        "........##..",
        ".......##...",
        "......##....",
        ".##########.",
        ".##########.",
        "...##.......",
        "..##........",
        ".##.........",
        ".#..........",
        "............",
    },
    // class 6: right + top + mid
    {
        "............",
        ".##########.",
        ".##########.",
        ".........##.",
        ".........##.",
        ".##########.",
        ".##########.",
        ".........##.",
        ".........##.",
        ".........##.",
        ".........##.",
        "............",
    },
    // class 7: left + right
    {
        "............",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        ".##......##.",
        "............",
    },
    // class 8: top + mid + bot
    {
        "............",
        ".##########.",
        ".##########.",
        "............",
        "............",
        ".##########.",
        ".##########.",
        "............",
        "............",
        ".##########.",
        ".##########.",
        "............",
    },
    // class 9: top + left + bs
    {
        "............",
        ".##########.",
        ".##########.",
        ".####.......",
        ".##.##......",
        ".##..##.....",
        ".##...##....",
        ".##....##...",
        ".##.....##..",
        ".##......##.",
        ".##.......#.",
        "............",
    },
}};

constexpr auto make_bitmaps() {
    std::array<std::array<std::uint8_t, kTemplateSize * kTemplateSize>, kTemplateCount> out{};
    for (int k = 0; k < kTemplateCount; ++k) {
        for (int y = 0; y < kTemplateSize; ++y) {
            for (int x = 0; x < kTemplateSize; ++x) {
                out[k][y * kTemplateSize + x] = kGlyphArt[k][y][x] == '#' ? 1 : 0;
            }
        }
    }
    return out;
}

constexpr auto kBitmaps = make_bitmaps();

}  // namespace

std::span<const std::uint8_t, kTemplateSize * kTemplateSize> glyph_template(int class_id) {
    if (class_id < 0 || class_id >= kTemplateCount) {
        throw ArgumentError("glyph_template: class_id " + std::to_string(class_id) +
                            " outside [0, " + std::to_string(kTemplateCount) + ")");
    }
    return kBitmaps[class_id];
}

}  // namespace mdb

#pragma once

#include "attn/core.hpp"
#include "attn/dronesim.hpp"
#include "attn/image.hpp"

namespace attn {

// Palette of the schematic frame renderer. All defaults are multiples of ten
// so brightness manipulations used in tests stay exact in 8-bit.
struct RenderStyle {
    std::uint8_t bg = 70;
    std::uint8_t box = 130;
    std::uint8_t inner = 100;
    std::uint8_t hl_r = 240, hl_g = 210, hl_b = 0;  // highlight fill
};

// Flat background, one gray box per icon with a darker inner bar; the
// highlighted element (if any) is filled yellow.
Image render_layout(const Layout& layout, int highlighted_element = -1,
                    const RenderStyle& style = {});

// Convenience: render the frame of a scenario trace, resolving the
// highlighted element from the frame's critical record.
Image render_frame(const ScenarioTrace& trace, std::size_t frame_index, const Layout& layout,
                   const RenderStyle& style = {});

// Index of the element highlighted in a frame, -1 if none.
int highlighted_element_index(const Frame& frame, const Layout& layout);

}  // namespace attn

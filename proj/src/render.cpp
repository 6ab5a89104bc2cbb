#include "attn/render.hpp"

#include <stdexcept>

namespace attn {

int highlighted_element_index(const Frame& frame, const Layout& layout) {
    if (!frame.critical || !frame.critical->highlighted) return -1;
    return layout.find(frame.critical->drone, critical_icon(frame.critical->kind));
}

Image render_layout(const Layout& layout, int highlighted_element, const RenderStyle& style) {
    Image img(layout.width_px, layout.height_px);
    img.fill(style.bg, style.bg, style.bg);
    for (std::size_t i = 0; i < layout.elements.size(); ++i) {
        const BBox& b = layout.elements[i].bbox;
        if (static_cast<int>(i) == highlighted_element) {
            img.fill_rect(b.x, b.y, b.w, b.h, style.hl_r, style.hl_g, style.hl_b);
        } else {
            img.fill_rect(b.x, b.y, b.w, b.h, style.box, style.box, style.box);
        }
        // inner value bar, common to all icons
        int bx = b.x + b.w / 6, by = b.y + b.h / 2, bw = b.w * 2 / 3, bh = b.h / 5;
        std::uint8_t v = style.inner;
        img.fill_rect(bx, by, bw, bh, v, v, v);
    }
    return img;
}

Image render_frame(const ScenarioTrace& trace, std::size_t frame_index, const Layout& layout,
                   const RenderStyle& style) {
    if (frame_index >= trace.frames.size())
        throw std::out_of_range("render_frame: frame index out of range");
    return render_layout(layout, highlighted_element_index(trace.frames[frame_index], layout),
                         style);
}

}  // namespace attn

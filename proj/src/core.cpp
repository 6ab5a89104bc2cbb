#include "attn/core.hpp"

#include <fstream>

#include <json.hpp>

namespace attn {

namespace {

const char* kIconNames[kNumIconKinds] = {"battery", "wind",     "rotor",    "zone",
                                         "h_speed", "altitude", "distance", "weather"};

}  // namespace

const char* icon_kind_name(IconKind k) { return kIconNames[static_cast<int>(k)]; }

IconKind icon_kind_from_name(const std::string& name) {
    for (int i = 0; i < kNumIconKinds; ++i)
        if (name == kIconNames[i]) return static_cast<IconKind>(i);
    throw LayoutError("unknown icon kind: " + name);
}

void Layout::validate() const {
    if (width_px <= 0 || height_px <= 0) throw LayoutError("layout has non-positive dimensions");
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const Element& e = elements[i];
        if (e.bbox.w <= 0 || e.bbox.h <= 0)
            throw LayoutError("element " + e.id + " has a degenerate bbox");
        if (e.bbox.x < 0 || e.bbox.y < 0 || e.bbox.x + e.bbox.w > width_px ||
            e.bbox.y + e.bbox.h > height_px)
            throw LayoutError("element " + e.id + " is out of screen bounds");
        for (std::size_t j = 0; j < i; ++j) {
            if (elements[j].id == e.id) throw LayoutError("duplicate element id: " + e.id);
            if (elements[j].bbox.overlaps(e.bbox))
                throw LayoutError("elements " + elements[j].id + " and " + e.id + " overlap");
        }
    }
}

int Layout::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < elements.size(); ++i)
        if (elements[i].id == id) return static_cast<int>(i);
    return -1;
}

int Layout::find(int drone_index, IconKind kind) const {
    for (std::size_t i = 0; i < elements.size(); ++i)
        if (elements[i].drone_index == drone_index && elements[i].kind == kind)
            return static_cast<int>(i);
    return -1;
}

Layout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LayoutError("cannot open layout file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw LayoutError("layout parse error in " + path + ": " + e.what());
    }
    Layout layout;
    try {
        layout.width_px = j.at("width_px").get<int>();
        layout.height_px = j.at("height_px").get<int>();
        for (const auto& je : j.at("elements")) {
            Element e;
            e.id = je.at("id").get<std::string>();
            e.drone_index = je.at("drone").get<int>();
            e.kind = icon_kind_from_name(je.at("kind").get<std::string>());
            const auto& b = je.at("bbox");
            e.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                      b.at(3).get<int>()};
            layout.elements.push_back(e);
        }
    } catch (const nlohmann::json::exception& e) {
        throw LayoutError("layout schema error in " + path + ": " + e.what());
    }
    layout.validate();
    return layout;
}

void save_layout(const Layout& layout, const std::string& path) {
    layout.validate();
    nlohmann::ordered_json j;
    j["width_px"] = layout.width_px;
    j["height_px"] = layout.height_px;
    j["elements"] = nlohmann::ordered_json::array();
    for (const Element& e : layout.elements) {
        nlohmann::ordered_json je;
        je["id"] = e.id;
        je["drone"] = e.drone_index;
        je["kind"] = icon_kind_name(e.kind);
        je["bbox"] = {e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h};
        j["elements"].push_back(je);
    }
    std::ofstream out(path);
    if (!out) throw LayoutError("cannot write layout file: " + path);
    out << j.dump(2) << "\n";
}

Layout default_layout() {
    Layout layout;
    layout.width_px = 1920;
    layout.height_px = 1200;
    // Four drone blocks in the screen corners, each 4x2 icons of 142x128 px
    // with an 8 px gutter; the center column is left for the map display.
    const int icon_w = 142, icon_h = 128, gap = 8;
    const int block_w = 4 * icon_w + 3 * gap;   // 592
    const int block_h = 2 * icon_h + 1 * gap;   // 264
    const int block_x[4] = {48, 1920 - 48 - block_w, 48, 1920 - 48 - block_w};
    const int block_y[4] = {96, 96, 1200 - 96 - block_h, 1200 - 96 - block_h};
    for (int d = 0; d < 4; ++d) {
        for (int k = 0; k < kNumIconKinds; ++k) {
            int row = k / 4, col = k % 4;
            Element e;
            e.drone_index = d;
            e.kind = static_cast<IconKind>(k);
            e.id = "d" + std::to_string(d) + "_" + icon_kind_name(e.kind);
            e.bbox = {block_x[d] + col * (icon_w + gap), block_y[d] + row * (icon_h + gap),
                      icon_w, icon_h};
            layout.elements.push_back(e);
        }
    }
    layout.validate();
    return layout;
}

std::optional<std::size_t> element_index_at(const Layout& layout, double x, double y) {
    for (std::size_t i = 0; i < layout.elements.size(); ++i)
        if (layout.elements[i].bbox.contains(x, y)) return i;
    return std::nullopt;
}

std::optional<std::string> element_at(const Layout& layout, double x, double y) {
    auto i = element_index_at(layout, x, y);
    if (!i) return std::nullopt;
    return layout.elements[*i].id;
}

}  // namespace attn

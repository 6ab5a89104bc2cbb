#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace attn {

enum class IconKind { battery, wind, rotor, zone, h_speed, altitude, distance, weather };

constexpr int kNumIconKinds = 8;

const char* icon_kind_name(IconKind k);
IconKind icon_kind_from_name(const std::string& name);

// Half-open box: a point (px,py) is inside iff x <= px < x+w and y <= py < y+h.
struct BBox {
    int x = 0, y = 0, w = 0, h = 0;

    bool contains(double px, double py) const {
        return px >= x && px < x + w && py >= y && py < y + h;
    }
    bool overlaps(const BBox& o) const {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }
    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
};

struct Element {
    std::string id;
    int drone_index = 0;
    IconKind kind = IconKind::battery;
    BBox bbox;
};

struct LayoutError : std::runtime_error {
    explicit LayoutError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Layout {
    int width_px = 0;
    int height_px = 0;
    std::vector<Element> elements;

    // Throws LayoutError on duplicate ids, out-of-bounds or overlapping boxes.
    void validate() const;

    int index_of(const std::string& id) const;  // -1 if absent
    // Index of the first element matching (drone, kind), -1 if absent.
    int find(int drone_index, IconKind kind) const;
};

Layout load_layout(const std::string& path);
void save_layout(const Layout& layout, const std::string& path);

// The shipped 1920x1200 layout: 4 drone blocks of 8 icons, 142x128 px each.
Layout default_layout();

std::optional<std::size_t> element_index_at(const Layout& layout, double x, double y);
std::optional<std::string> element_at(const Layout& layout, double x, double y);

// Sampling grid shared by the NS series and the temporal model input:
// 60 slices of 0.1 s covering -1 s .. +5 s around a critical onset.
struct TimeGrid {
    double frame_rate_hz = 24.0;
    double ns_step_s = 0.1;
    double window_start_s = -1.0;
    double window_end_s = 5.0;
    int steps = 60;

    double t_rel(int k) const { return window_start_s + ns_step_s * k; }
};

// Shared gaze sample / fixation types (producers: gazegen, eye-tracker files;
// consumers: gazeproc, saliency).
struct GazeSample {
    double t_ms = 0.0;
    double x_px = 0.0;
    double y_px = 0.0;
    bool valid = true;
};

struct Fixation {
    double start_ms = 0.0;
    double end_ms = 0.0;
    double duration_ms = 0.0;
    double cx_px = 0.0;
    double cy_px = 0.0;
};

}  // namespace attn

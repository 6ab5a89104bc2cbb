#include "attn/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace attn {

double SaliencyMap::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double SaliencyMap::max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
}

void SaliencyMap::normalize(NormMode m) {
    if (m == NormMode::raw) {
        mode = m;
        return;
    }
    double d = (m == NormMode::unit_max) ? max_value() : sum();
    if (d > 0.0)
        for (double& v : values) v /= d;
    mode = m;
}

SaliencyMap fixation_map(const std::vector<Fixation>& fixations, double bin_start_ms,
                         double bin_end_ms, int width, int height) {
    SaliencyMap map(width, height);
    for (const Fixation& f : fixations) {
        if (f.end_ms <= bin_start_ms || f.start_ms >= bin_end_ms) continue;
        int x = static_cast<int>(std::lround(f.cx_px));
        int y = static_cast<int>(std::lround(f.cy_px));
        if (x < 0 || x >= width || y < 0 || y >= height) continue;
        map.at(x, y) += 1.0;
    }
    return map;
}

std::vector<double> gaussian_kernel_1d(int window_px) {
    if (window_px < 3) throw std::invalid_argument("gaussian window must be >= 3 px");
    if (window_px % 2 == 0) ++window_px;
    const double sigma = window_px / 6.0;
    const int r = window_px / 2;
    std::vector<double> k(window_px);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace {

SaliencyMap convolve_separable(const SaliencyMap& src, const std::vector<double>& k) {
    const int r = static_cast<int>(k.size()) / 2;
    const int w = src.width, h = src.height;
    SaliencyMap tmp(w, h), dst(w, h);
    // horizontal
    for (int y = 0; y < h; ++y) {
        const double* row = &src.values[static_cast<std::size_t>(y) * w];
        double* out = &tmp.values[static_cast<std::size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            if (row[x] == 0.0) continue;
            const double v = row[x];
            int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
            for (int i = lo; i <= hi; ++i) out[i] += v * k[i - x + r];
        }
    }
    // vertical (scatter per nonzero row entry)
    for (int y = 0; y < h; ++y) {
        const double* row = &tmp.values[static_cast<std::size_t>(y) * w];
        int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
        for (int x = 0; x < w; ++x) {
            if (row[x] == 0.0) continue;
            const double v = row[x];
            for (int j = lo; j <= hi; ++j)
                dst.values[static_cast<std::size_t>(j) * w + x] += v * k[j - y + r];
        }
    }
    return dst;
}

}  // namespace

SaliencyMap smooth_map_raw(const SaliencyMap& fix_map, int window_px) {
    auto k = gaussian_kernel_1d(window_px);
    SaliencyMap out = convolve_separable(fix_map, k);
    out.mode = NormMode::raw;
    return out;
}

SaliencyMap smooth_map(const SaliencyMap& fix_map, int window_px) {
    SaliencyMap out = smooth_map_raw(fix_map, window_px);
    out.normalize(NormMode::unit_max);
    return out;
}

double element_saliency(const SaliencyMap& map, const Element& element) {
    const BBox& b = element.bbox;
    if (b.x < 0 || b.y < 0 || b.x + b.w > map.width || b.y + b.h > map.height)
        throw std::out_of_range("element bbox outside saliency map: " + element.id);
    double s = 0.0;
    for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) s += map.at(x, y);
    return s;
}

std::vector<NsValue> normalized_saliency_all(const SaliencyMap& map, const Layout& layout) {
    const std::size_t n = layout.elements.size();
    std::vector<double> s(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = element_saliency(map, layout.elements[i]);
        total += s[i];
    }
    std::vector<NsValue> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (total > 0.0) {
            out[i] = {s[i] / total, false};
        } else {
            out[i] = {1.0 / static_cast<double>(n), true};
        }
    }
    return out;
}

NsValue normalized_saliency(const SaliencyMap& map, const Layout& layout, int element_index) {
    return normalized_saliency_all(map, layout)[element_index];
}

std::vector<double> element_saliency_from_points(const std::vector<WeightedPoint>& points,
                                                 const Layout& layout, int window_px) {
    auto k = gaussian_kernel_1d(window_px);
    const int r = static_cast<int>(k.size()) / 2;
    std::vector<double> out(layout.elements.size(), 0.0);
    for (const WeightedPoint& p : points) {
        int px = static_cast<int>(std::lround(p.x));
        int py = static_cast<int>(std::lround(p.y));
        if (px < 0 || px >= layout.width_px || py < 0 || py >= layout.height_px) continue;
        for (std::size_t e = 0; e < layout.elements.size(); ++e) {
            const BBox& b = layout.elements[e].bbox;
            int x0 = std::max(b.x, px - r), x1 = std::min(b.x + b.w - 1, px + r);
            int y0 = std::max(b.y, py - r), y1 = std::min(b.y + b.h - 1, py + r);
            if (x0 > x1 || y0 > y1) continue;
            double sx = 0.0, sy = 0.0;
            for (int x = x0; x <= x1; ++x) sx += k[x - px + r];
            for (int y = y0; y <= y1; ++y) sy += k[y - py + r];
            out[e] += p.weight * sx * sy;
        }
    }
    return out;
}

namespace {

std::vector<NsValue> ns_from_points(const std::vector<WeightedPoint>& pts, const Layout& layout,
                                    int window_px) {
    const std::size_t n = layout.elements.size();
    std::vector<NsValue> out(n);
    if (pts.empty()) {
        for (auto& v : out) v = {1.0 / static_cast<double>(n), true};
        return out;
    }
    std::vector<double> s = element_saliency_from_points(pts, layout, window_px);
    double total = 0.0;
    for (double v : s) total += v;
    if (total <= 0.0) {
        for (auto& v : out) v = {1.0 / static_cast<double>(n), true};
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = {s[i] / total, false};
    return out;
}

}  // namespace

std::vector<std::vector<NsValue>> ns_slices(const std::vector<Fixation>& pooled_fixations,
                                            const Layout& layout, const TimeGrid& grid,
                                            double onset_s, int window_px) {
    std::vector<std::vector<NsValue>> out(grid.steps);
    for (int kslice = 0; kslice < grid.steps; ++kslice) {
        double t0 = (onset_s + grid.t_rel(kslice)) * 1000.0;
        double t1 = t0 + grid.ns_step_s * 1000.0;
        std::vector<WeightedPoint> pts;
        for (const Fixation& f : pooled_fixations) {
            if (f.end_ms <= t0 || f.start_ms >= t1) continue;
            pts.push_back({std::lround(f.cx_px) * 1.0, std::lround(f.cy_px) * 1.0, 1.0});
        }
        out[kslice] = ns_from_points(pts, layout, window_px);
    }
    return out;
}

NsSeries ns_time_series(const std::vector<Fixation>& pooled_fixations, const Layout& layout,
                        int element_index, const TimeGrid& grid, double onset_s, int window_px) {
    NsSeries series;
    series.element_id = layout.elements[element_index].id;
    auto slices = ns_slices(pooled_fixations, layout, grid, onset_s, window_px);
    for (int k = 0; k < grid.steps; ++k) {
        series.t_rel_s.push_back(grid.t_rel(k));
        series.ns.push_back(slices[k][element_index].value);
        series.uniform_flag.push_back(slices[k][element_index].uniform_flag);
    }
    return series;
}

void write_smap(const SaliencyMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write smap: " + path);
    const char magic[4] = {'S', 'M', 'A', 'P'};
    std::uint32_t w = map.width, h = map.height, reserved = 0;
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&reserved), 4);
    std::vector<float> buf(map.values.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(map.values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

SaliencyMap read_smap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open smap: " + path);
    char magic[4];
    std::uint32_t w = 0, h = 0, reserved = 0;
    in.read(magic, 4);
    if (std::memcmp(magic, "SMAP", 4) != 0) throw std::runtime_error("bad smap magic: " + path);
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&reserved), 4);
    SaliencyMap map(static_cast<int>(w), static_cast<int>(h));
    std::vector<float> buf(map.values.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated smap: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) map.values[i] = buf[i];
    return map;
}

void write_ns_csv(const NsSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ns csv: " + path);
    out << "t_rel_s,element_id,ns,flag\n";
    char line[160];
    for (std::size_t i = 0; i < series.ns.size(); ++i) {
        std::snprintf(line, sizeof(line), "%.1f,%s,%.9f,%d\n", series.t_rel_s[i],
                      series.element_id.c_str(), series.ns[i], series.uniform_flag[i] ? 1 : 0);
        out << line;
    }
}

}  // namespace attn

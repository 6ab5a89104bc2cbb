#pragma once

#include <string>
#include <vector>

#include "attn/core.hpp"

namespace attn {

enum class NormMode { raw, unit_max, unit_sum };

struct SaliencyMap {
    int width = 0;
    int height = 0;
    NormMode mode = NormMode::raw;
    std::vector<double> values;  // row-major, non-negative

    SaliencyMap() = default;
    SaliencyMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    double sum() const;
    double max_value() const;
    void normalize(NormMode m);
};

// Binary impulse map of the fixations active during [bin_start_ms, bin_end_ms).
// A fixation is active in every bin its [start,end) span overlaps. Pooled
// input (several participants) may stack impulses on one pixel.
SaliencyMap fixation_map(const std::vector<Fixation>& fixations, double bin_start_ms,
                         double bin_end_ms, int width, int height);

// Truncated Gaussian, sigma = window/6, renormalized to sum 1. window is
// rounded up to the next odd value and must be >= 3.
std::vector<double> gaussian_kernel_1d(int window_px);

// Separable Gaussian blur followed by max-normalization to [0,1].
SaliencyMap smooth_map(const SaliencyMap& fix_map, int window_px = 35);

// Same blur without the final normalization (NS and CC work on raw mass).
SaliencyMap smooth_map_raw(const SaliencyMap& fix_map, int window_px = 35);

// Sum of raster values over the element bbox. Throws if the bbox leaves the map.
double element_saliency(const SaliencyMap& map, const Element& element);

struct NsValue {
    double value = 0.0;
    bool uniform_flag = false;  // set when the slice had no saliency mass at all
};

std::vector<NsValue> normalized_saliency_all(const SaliencyMap& map, const Layout& layout);
NsValue normalized_saliency(const SaliencyMap& map, const Layout& layout, int element_index);

// Exact sparse route: per-element integral of the smoothed impulse map,
// evaluated per impulse from the separable kernel. Equals the dense
// fixation_map -> smooth -> element_saliency chain up to float rounding.
struct WeightedPoint {
    double x = 0.0, y = 0.0, weight = 1.0;
};
std::vector<double> element_saliency_from_points(const std::vector<WeightedPoint>& points,
                                                 const Layout& layout, int window_px = 35);

struct NsSeries {
    std::string element_id;
    std::vector<double> t_rel_s;
    std::vector<double> ns;
    std::vector<bool> uniform_flag;
};

// Empirical NS of one element around a critical onset. Fixations are the
// pooled fixations of all participants on the task clock (ms).
NsSeries ns_time_series(const std::vector<Fixation>& pooled_fixations, const Layout& layout,
                        int element_index, const TimeGrid& grid, double onset_s,
                        int window_px = 35);

// All-element NS slices over the grid; result[k][e]. Used by dataset assembly.
std::vector<std::vector<NsValue>> ns_slices(const std::vector<Fixation>& pooled_fixations,
                                            const Layout& layout, const TimeGrid& grid,
                                            double onset_s, int window_px = 35);

// SMAP raster file: "SMAP" magic, u32 width, u32 height, u32 reserved,
// row-major little-endian f32.
void write_smap(const SaliencyMap& map, const std::string& path);
SaliencyMap read_smap(const std::string& path);

void write_ns_csv(const NsSeries& series, const std::string& path);

}  // namespace attn

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "attn/gazeproc.hpp"
#include "attn/hism.hpp"
#include "attn/rng.hpp"

namespace attn {

StackedInput stack_input(const Image& frame, const Layout& layout, int element_index, int size) {
    if (element_index < 0 || element_index >= static_cast<int>(layout.elements.size()))
        throw std::out_of_range("stack_input: element index out of range");
    if (size <= 0) throw std::invalid_argument("stack_input: size must be positive");

    StackedInput s;
    s.size = size;
    s.channels = 4;
    s.data.assign(static_cast<std::size_t>(4) * size * size, 0.0);

    // frame channels: bilinear resample to size x size
    const double sx = static_cast<double>(frame.width) / size;
    const double sy = static_cast<double>(frame.height) / size;
    auto clampi = [](int v, int lo, int hi) { return std::min(hi, std::max(lo, v)); };
    for (int y = 0; y < size; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = clampi(static_cast<int>(std::floor(fy)), 0, frame.height - 1);
        int y1 = clampi(y0 + 1, 0, frame.height - 1);
        double ay = fy < 0 ? 0.0 : fy - std::floor(fy);
        for (int x = 0; x < size; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = clampi(static_cast<int>(std::floor(fx)), 0, frame.width - 1);
            int x1 = clampi(x0 + 1, 0, frame.width - 1);
            double ax = fx < 0 ? 0.0 : fx - std::floor(fx);
            for (int ch = 0; ch < 3; ++ch) {
                double v = (1 - ay) * ((1 - ax) * frame.px(x0, y0)[ch] + ax * frame.px(x1, y0)[ch]) +
                           ay * ((1 - ax) * frame.px(x0, y1)[ch] + ax * frame.px(x1, y1)[ch]);
                s.data[(static_cast<std::size_t>(ch) * size + y) * size + x] = v / 255.0;
            }
        }
    }

    // mask channel: nearest-neighbor membership of the element bbox
    const BBox& b = layout.elements[element_index].bbox;
    for (int y = 0; y < size; ++y) {
        double py = (y + 0.5) * static_cast<double>(layout.height_px) / size;
        for (int x = 0; x < size; ++x) {
            double px = (x + 0.5) * static_cast<double>(layout.width_px) / size;
            if (b.contains(px, py))
                s.data[(static_cast<std::size_t>(3) * size + y) * size + x] = 1.0;
        }
    }
    return s;
}

double normalized_icon_state(const DroneState& state, IconKind kind) {
    auto unit = [](double v, double lo, double hi) {
        return std::min(1.0, std::max(0.0, (v - lo) / (hi - lo)));
    };
    switch (kind) {
        case IconKind::battery: return unit(state.battery_pct, 0.0, 100.0);
        case IconKind::wind: return unit(state.wind_mps, 0.0, 15.0);
        case IconKind::rotor: return state.rotor == RotorState::on ? 1.0 : 0.0;
        case IconKind::zone: return state.zone == ZoneState::no_fly ? 1.0 : 0.0;
        case IconKind::h_speed: return unit(state.h_speed_mps, 0.0, 15.0);
        case IconKind::altitude: return unit(state.altitude_m, 0.0, 150.0);
        case IconKind::distance: return unit(state.distance_m, 0.0, 30000.0);
        case IconKind::weather:
            switch (state.weather) {
                case WeatherState::clear: return 0.0;
                case WeatherState::cloudy: return 0.5;
                case WeatherState::rain: return 1.0;
            }
    }
    return 0.0;
}

TemporalInput temporal_inputs(const ScenarioTrace& trace, const Interval& interval,
                              const Layout& layout, int element_index, double t_query_s,
                              const TimeGrid& grid) {
    if (element_index < 0 || element_index >= static_cast<int>(layout.elements.size()))
        throw std::out_of_range("temporal_inputs: element index out of range");
    const double window_start = interval.onset_s + grid.window_start_s;
    const double window_end = interval.onset_s + grid.window_end_s;
    if (t_query_s < window_start - 1e-9 || t_query_s > window_end + 1e-9)
        throw std::invalid_argument("temporal_inputs: query time outside the window");

    const Element& el = layout.elements[element_index];
    const int T = grid.steps;
    TemporalInput tin;
    tin.v.assign(T, 0.0);
    tin.c.assign(T, 0.0);

    // number of window slices complete at the query time
    int m = static_cast<int>(std::floor((t_query_s - window_start) / grid.ns_step_s + 1e-9));
    m = std::max(0, std::min(T, m));

    const double fps = grid.frame_rate_hz;
    for (int i = 0; i < m; ++i) {
        const double mid = window_start + (i + 0.5) * grid.ns_step_s;
        long fidx = static_cast<long>(std::floor(mid * fps));
        fidx = std::max(0L, std::min(static_cast<long>(trace.frames.size()) - 1, fidx));
        const Frame& fr = trace.frames[static_cast<std::size_t>(fidx)];
        const int pos = T - m + i;
        tin.v[pos] = highlighted_element_index(fr, layout) == element_index ? 1.0 : -1.0;
        tin.c[pos] = normalized_icon_state(fr.drones[el.drone_index], el.kind);
    }
    return tin;
}

HismDataset build_dataset(const DatasetConfig& cfg, const Layout& layout) {
    if (cfg.participants < 1 || cfg.slices_per_trial < 1 ||
        cfg.slices_per_trial > cfg.grid.steps)
        throw std::invalid_argument("build_dataset: bad configuration");

    HismDataset ds;
    // stacked images are shared: per (element, highlighted?) pair
    std::map<std::pair<int, bool>, int> image_ids;
    const Image plain_frame = render_layout(layout, -1);
    auto image_for = [&](int element, bool highlighted) {
        auto key = std::make_pair(element, highlighted);
        auto it = image_ids.find(key);
        if (it != image_ids.end()) return it->second;
        const Image frame = highlighted ? render_layout(layout, element) : plain_frame;
        ds.images.push_back(stack_input(frame, layout, element, cfg.image_size));
        int id = static_cast<int>(ds.images.size()) - 1;
        image_ids.emplace(key, id);
        return id;
    };

    int need_hl = cfg.highlighted_trials, need_plain = cfg.plain_trials;
    const int pre_slices = static_cast<int>(std::lround(-cfg.grid.window_start_s /
                                                        cfg.grid.ns_step_s));
    const int max_tasks = std::max(cfg.tasks, 2 * cfg.tasks + 2);  // safety margin

    for (int task = 0; task < max_tasks && (need_hl > 0 || need_plain > 0); ++task) {
        const ScenarioTrace trace =
            simulate_task(cfg.sim, hash_u64(cfg.seed ^ hash_u64(1000 + task)), task);

        // pooled fixations of the synthetic cohort on this task
        std::vector<Fixation> pooled;
        for (int p = 0; p < cfg.participants; ++p) {
            GazeTrace gt = generate_gaze(trace, layout, cfg.behavior,
                                         hash_u64(cfg.seed ^ hash_u64(7000 + 100 * task + p)), p);
            std::vector<Fixation> fx = detect_fixations(gt.samples);
            pooled.insert(pooled.end(), fx.begin(), fx.end());
        }

        for (const Interval& iv : trace.plan.intervals) {
            if (!iv.is_critical) continue;
            if (iv.highlighted ? need_hl <= 0 : need_plain <= 0) continue;
            const int element = layout.find(iv.drone_index, critical_icon(iv.kind));
            if (element < 0) continue;

            NsSeries series =
                ns_time_series(pooled, layout, element, cfg.grid, iv.onset_s);

            HismTrial trial;
            trial.task_id = trace.task_id;
            trial.interval_index = iv.index;
            trial.element_index = element;
            trial.highlighted = iv.highlighted;
            trial.onset_s = iv.onset_s;
            const int trial_id = static_cast<int>(ds.trials.size());

            const int plain_img = image_for(element, false);
            const int hl_img = iv.highlighted ? image_for(element, true) : plain_img;
            for (int k = 0; k < cfg.slices_per_trial; ++k) {
                HismSample smp;
                smp.trial = trial_id;
                smp.image = k < pre_slices ? plain_img : hl_img;
                smp.slice = k;
                smp.highlighted = iv.highlighted;
                const double t_query =
                    iv.onset_s + cfg.grid.t_rel(k) + cfg.grid.ns_step_s;  // slice end
                smp.tin = temporal_inputs(trace, iv, layout, element, t_query, cfg.grid);
                smp.target = series.ns[k];
                trial.target_series.push_back(series.ns[k]);
                ds.samples.push_back(std::move(smp));
            }
            ds.trials.push_back(std::move(trial));
            (iv.highlighted ? need_hl : need_plain)--;
        }
    }
    if (need_hl > 0 || need_plain > 0)
        throw std::runtime_error("build_dataset: not enough critical intervals generated");
    return ds;
}

}  // namespace attn

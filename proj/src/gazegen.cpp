#include "attn/gazegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace attn {

namespace {

struct Segment {
    double t0_ms = 0.0;
    double t1_ms = 0.0;
    double x0 = 0.0, y0 = 0.0;  // position at t0
    double x1 = 0.0, y1 = 0.0;  // position at t1 (== x0/y0 for fixations)
    bool is_fixation = true;
};

struct Interrupt {
    double t_go_ms = 0.0;
    double dwell_ms = 0.0;
    double press_ms = 0.0;
    int element = -1;
};

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// Landing point for a scan or capture fixation: icon center plus scatter,
// clamped to stay inside the icon box.
void landing(const Element& e, double noise_px, Rng& rng, double* x, double* y) {
    *x = clampd(e.bbox.cx() + rng.normal(0.0, noise_px), e.bbox.x + 2.0,
                e.bbox.x + e.bbox.w - 2.0);
    *y = clampd(e.bbox.cy() + rng.normal(0.0, noise_px), e.bbox.y + 2.0,
                e.bbox.y + e.bbox.h - 2.0);
}

double normal_cdf_local(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double lgamma_safe(double x) { return std::lgamma(x); }

// Shifted-gamma latency density at u seconds after onset.
double latency_pdf(const BehaviorParams& p, double u) {
    double v = u - p.capture_latency_shift_s;
    if (v <= 0.0) return 0.0;
    double k = p.capture_latency_shape, th = p.capture_latency_scale;
    return std::exp((k - 1.0) * std::log(v) - v / th - lgamma_safe(k) - k * std::log(th));
}

// P(dwell > t) for the log-normal dwell distribution.
double dwell_survival(const BehaviorParams& p, double t) {
    if (t <= 0.0) return 1.0;
    return 1.0 - normal_cdf_local((std::log(t) - p.dwell_log_mu) / p.dwell_log_sigma);
}

}  // namespace

// P(dwell overlaps [t0, t1)) = P(land < t1 and land + dwell > t0).
double capture_occupancy(const BehaviorParams& params, double t0_s, double t1_s) {
    if (t1_s <= params.capture_latency_shift_s) return 0.0;
    const double du = 0.005;
    double acc = 0.0;
    for (double u = params.capture_latency_shift_s + du / 2.0; u < t1_s; u += du)
        acc += latency_pdf(params, u) * dwell_survival(params, t0_s - u) * du;
    return std::min(1.0, acc);
}

double hazard_occupancy(const BehaviorParams& params, double t0_s, double t1_s) {
    if (t1_s <= 0.0) return 0.0;
    const double h = params.baseline_detect_hazard;
    const double du = 0.005;
    double acc = 0.0;
    for (double u = du / 2.0; u < t1_s; u += du)
        acc += h * std::exp(-h * u) * dwell_survival(params, t0_s - u) * du;
    return std::min(1.0, acc);
}

GazeTrace generate_gaze(const ScenarioTrace& trace, const Layout& layout,
                        const BehaviorParams& params, std::uint64_t seed, int participant_id) {
    if (layout.elements.empty()) throw std::invalid_argument("generate_gaze: empty layout");
    const double task_ms = trace.frames.empty() ? 300000.0 : trace.frames.back().t_ms + 1000.0 / 24.0;

    Rng root(seed);
    Rng scan_rng = root.fork(1);
    Rng intr_rng = root.fork(2);
    Rng noise_rng = root.fork(3);

    // Decide, per critical interval, if and when attention moves to the target.
    std::vector<Interrupt> interrupts;
    for (const Interval& iv : trace.plan.intervals) {
        if (!iv.is_critical) continue;
        int target = layout.find(iv.drone_index, critical_icon(iv.kind));
        if (target < 0) continue;
        double onset_ms = iv.onset_s * 1000.0;
        double end_ms = onset_ms + 15000.0;
        bool captured = iv.highlighted && intr_rng.bernoulli(params.capture_prob);
        double delay_s;
        if (captured) {
            delay_s = params.capture_latency_shift_s +
                      intr_rng.gamma(params.capture_latency_shape, params.capture_latency_scale);
        } else {
            // Highlight missed (or never shown): the critical value can still
            // be spotted during routine scanning, at a constant hazard.
            delay_s = intr_rng.exponential(params.baseline_detect_hazard);
        }
        double t_go = onset_ms + delay_s * 1000.0;
        double dwell_ms = intr_rng.lognormal(params.dwell_log_mu, params.dwell_log_sigma) * 1000.0;
        double motor = std::max(0.05, intr_rng.normal(params.motor_delay_mean_s,
                                                      params.motor_delay_sigma_s));
        if (t_go >= end_ms) continue;
        interrupts.push_back({t_go, dwell_ms, t_go + motor * 1000.0, target});
    }
    std::sort(interrupts.begin(), interrupts.end(),
              [](const Interrupt& a, const Interrupt& b) { return a.t_go_ms < b.t_go_ms; });

    // Build the fixation/saccade script.
    std::vector<Segment> script;
    const int n_elem = static_cast<int>(layout.elements.size());
    int scan_pos = scan_rng.uniform_int(n_elem);
    double t = 0.0;
    double cx, cy;
    landing(layout.elements[scan_pos], params.saccade_noise_px, scan_rng, &cx, &cy);
    std::size_t k = 0;

    auto next_scan_target = [&]() {
        if (params.scan_strategy == ScanStrategy::round_robin) {
            scan_pos = (scan_pos + 1) % n_elem;
        } else {
            int step = 1 + scan_rng.uniform_int(n_elem - 1);
            scan_pos = (scan_pos + step) % n_elem;
        }
        return scan_pos;
    };

    auto add_saccade_to = [&](double nx, double ny) {
        double dur = scan_rng.uniform(20.0, 60.0);
        script.push_back({t, t + dur, cx, cy, nx, ny, false});
        t += dur;
        cx = nx;
        cy = ny;
    };

    while (t < task_ms) {
        // Pending interrupt whose time has come?
        if (k < interrupts.size() && t >= interrupts[k].t_go_ms) {
            const Interrupt& in = interrupts[k];
            double nx, ny;
            landing(layout.elements[in.element], params.saccade_noise_px, scan_rng, &nx, &ny);
            add_saccade_to(nx, ny);
            // The dwell is a burst of re-fixations inside the icon, so its
            // fixation statistics look like everyday scanning.
            double dwell_end = t + in.dwell_ms;
            bool first = true;
            while (t < dwell_end) {
                if (!first) {
                    double rx, ry;
                    landing(layout.elements[in.element], params.saccade_noise_px, scan_rng, &rx,
                            &ry);
                    double sd = std::min(scan_rng.uniform(20.0, 40.0), dwell_end - t);
                    script.push_back({t, t + sd, cx, cy, rx, ry, false});
                    t += sd;
                    cx = rx;
                    cy = ry;
                    if (t >= dwell_end) break;
                }
                double ep = clampd(scan_rng.lognormal(params.fixation_dur_log_mu,
                                                      params.fixation_dur_log_sigma),
                                   params.fixation_dur_min_ms, params.fixation_dur_max_ms);
                ep = std::min(ep, dwell_end - t);
                script.push_back({t, t + ep, cx, cy, cx, cy, true});
                t += ep;
                first = false;
            }
            ++k;
            // leave the target right away; the scan loop fixates after landing
            landing(layout.elements[next_scan_target()], params.saccade_noise_px, scan_rng, &nx,
                    &ny);
            add_saccade_to(nx, ny);
            continue;
        }
        double dur = clampd(scan_rng.lognormal(params.fixation_dur_log_mu,
                                               params.fixation_dur_log_sigma),
                            params.fixation_dur_min_ms, params.fixation_dur_max_ms);
        double t_end = t + dur;
        if (k < interrupts.size() && t_end > interrupts[k].t_go_ms)
            t_end = std::max(t, interrupts[k].t_go_ms);
        if (t_end > t) script.push_back({t, t_end, cx, cy, cx, cy, true});
        t = t_end;
        if (k < interrupts.size() && t >= interrupts[k].t_go_ms) continue;
        double nx, ny;
        landing(layout.elements[next_scan_target()], params.saccade_noise_px, scan_rng, &nx, &ny);
        add_saccade_to(nx, ny);
    }

    // Sample the script at the tracker rate.
    GazeTrace out;
    out.participant_id = participant_id;
    out.task_id = trace.task_id;
    const double dt_ms = 1000.0 / params.sample_rate_hz;
    const int n_samples = static_cast<int>(task_ms / dt_ms);
    out.samples.reserve(n_samples);
    std::size_t si = 0;
    for (int i = 0; i < n_samples; ++i) {
        double tm = i * dt_ms;
        while (si + 1 < script.size() && script[si].t1_ms <= tm) ++si;
        const Segment& s = script[si];
        double x, y;
        if (s.is_fixation || s.t1_ms <= s.t0_ms) {
            x = s.x0 + noise_rng.normal(0.0, params.tremor_px);
            y = s.y0 + noise_rng.normal(0.0, params.tremor_px);
        } else {
            double a = clampd((tm - s.t0_ms) / (s.t1_ms - s.t0_ms), 0.0, 1.0);
            x = s.x0 + a * (s.x1 - s.x0) + noise_rng.normal(0.0, params.tremor_px);
            y = s.y0 + a * (s.y1 - s.y0) + noise_rng.normal(0.0, params.tremor_px);
        }
        bool valid = x >= 0.0 && x < layout.width_px && y >= 0.0 && y < layout.height_px;
        out.samples.push_back({tm, x, y, valid});
    }
    for (const Interrupt& in : interrupts) out.keypress_ms.push_back(in.press_ms);
    std::sort(out.keypress_ms.begin(), out.keypress_ms.end());
    return out;
}

GroundTruthAttention behavior_ground_truth(const ScenarioTrace& trace, const Layout& layout,
                                           const BehaviorParams& params) {
    GroundTruthAttention gt;
    const int n = static_cast<int>(layout.elements.size());
    if (n == 0) throw std::invalid_argument("behavior_ground_truth: empty layout");
    const double task_s = trace.frames.empty() ? 300.0 : (trace.frames.back().t_ms / 1000.0);
    const int n_slices = static_cast<int>(std::ceil(task_s / gt.step_s));
    gt.slices.assign(n_slices, std::vector<double>(n, 1.0 / n));

    for (const Interval& iv : trace.plan.intervals) {
        if (!iv.is_critical) continue;
        int target = layout.find(iv.drone_index, critical_icon(iv.kind));
        if (target < 0) continue;
        int s0 = static_cast<int>(iv.onset_s / gt.step_s);
        int s1 = std::min(n_slices, s0 + static_cast<int>(15.0 / gt.step_s));
        for (int s = s0; s < s1; ++s) {
            double tau0 = s * gt.step_s - iv.onset_s;
            double tau1 = tau0 + gt.step_s;
            double p_on;
            if (iv.highlighted) {
                p_on = params.capture_prob * capture_occupancy(params, tau0, tau1) +
                       (1.0 - params.capture_prob) * hazard_occupancy(params, tau0, tau1);
            } else {
                p_on = hazard_occupancy(params, tau0, tau1);
            }
            for (int e = 0; e < n; ++e) gt.slices[s][e] = (1.0 - p_on) / n;
            gt.slices[s][target] += p_on;
        }
    }
    return gt;
}

void write_gaze_csv(const GazeTrace& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "t_ms,x_px,y_px,valid\n";
    char buf[96];
    for (const GazeSample& s : trace.samples) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%.3f,%d\n", s.t_ms, s.x_px, s.y_px,
                      s.valid ? 1 : 0);
        f << buf;
    }
}

GazeTrace read_gaze_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    GazeTrace out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        GazeSample s;
        int valid = 1;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &s.t_ms, &s.x_px, &s.y_px, &valid) != 4)
            throw std::runtime_error("bad gaze CSV row: " + line);
        s.valid = valid != 0;
        out.samples.push_back(s);
    }
    return out;
}

}  // namespace attn

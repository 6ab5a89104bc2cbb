#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attn/core.hpp"
#include "attn/dronesim.hpp"
#include "attn/rng.hpp"

namespace attn {

enum class ScanStrategy { round_robin, random_walk };

// Behavior model of one synthetic operator. The defaults are calibrated so
// that, pooled over the default cohort, the target icon's normalized saliency
// peaks near 0.5 within a second of a highlight onset and averages about 0.1
// over the five seconds after a non-highlighted critical.
struct BehaviorParams {
    ScanStrategy scan_strategy = ScanStrategy::round_robin;

    // Log-normal fixation duration during free scanning, in ms (log-space).
    double fixation_dur_log_mu = 5.55;    // median ~257 ms
    double fixation_dur_log_sigma = 0.35;
    double fixation_dur_min_ms = 80.0;
    double fixation_dur_max_ms = 1200.0;

    double saccade_noise_px = 14.0;  // landing scatter around the icon center
    double tremor_px = 1.5;          // per-sample jitter inside a fixation

    // Highlight capture: probability the highlight wins attention, and the
    // shifted-gamma latency from onset to the landing on the target.
    double capture_prob = 0.85;
    double capture_latency_shape = 2.2;
    double capture_latency_scale = 0.20;
    double capture_latency_shift_s = 0.25;

    // Dwell on the target icon once captured (log-normal, seconds).
    double dwell_log_mu = -0.85;   // median ~0.43 s
    double dwell_log_sigma = 0.75;

    // Detection of a non-highlighted critical value: constant hazard per
    // second while the interval is active.
    double baseline_detect_hazard = 0.16;

    // Key press follows the landing on the target by a motor delay.
    double motor_delay_mean_s = 0.35;
    double motor_delay_sigma_s = 0.08;

    double sample_rate_hz = 250.0;
};

struct GazeTrace {
    int participant_id = 0;
    int task_id = 0;
    std::vector<GazeSample> samples;
    // Space-bar presses emitted by the behavior model (ms from task start).
    std::vector<double> keypress_ms;
};

GazeTrace generate_gaze(const ScenarioTrace& trace, const Layout& layout,
                        const BehaviorParams& params, std::uint64_t seed,
                        int participant_id = 0);

// The generator's intended attention, free of sampling noise: one probability
// vector over the layout's elements per 0.1 s slice of the task, computed by
// numeric convolution of the latency and dwell distributions.
struct GroundTruthAttention {
    double step_s = 0.1;
    std::vector<std::vector<double>> slices;  // [slice][element]
};

GroundTruthAttention behavior_ground_truth(const ScenarioTrace& trace, const Layout& layout,
                                           const BehaviorParams& params);

// Probability that the target dwell overlaps the slice [t0, t1) seconds after
// a highlight onset (capture path only); the slice convention matches the
// NS estimator, which counts a fixation in every slice it overlaps. The
// building block of the ground truth above.
double capture_occupancy(const BehaviorParams& params, double t0_s, double t1_s);
// Same for a non-highlighted critical (hazard detection path).
double hazard_occupancy(const BehaviorParams& params, double t0_s, double t1_s);

// Gaze CSV: t_ms,x_px,y_px,valid.
void write_gaze_csv(const GazeTrace& trace, const std::string& path);
GazeTrace read_gaze_csv(const std::string& path);

}  // namespace attn

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attn/core.hpp"
#include "attn/dronesim.hpp"
#include "attn/rng.hpp"
#include "attn/saliency.hpp"

namespace attn {

// Dispersion-threshold fixation detection: every member sample lies within
// dispersion_px of the fixation's first sample, fixations last at least
// min_dur_ms, and invalid samples terminate any open candidate.
std::vector<Fixation> detect_fixations(const std::vector<GazeSample>& samples,
                                       double dispersion_px = 25.0, double min_dur_ms = 50.0);

// Independent O(n^2) reference used to cross-check the detector.
std::vector<Fixation> detect_fixations_reference(const std::vector<GazeSample>& samples,
                                                 double dispersion_px = 25.0,
                                                 double min_dur_ms = 50.0);

struct QualityResult {
    bool accept = false;
    double dx_px = 0.0;
    double dy_px = 0.0;
};

// Picks the 1 s window whose samples are on average closest to the target and
// rejects the participant if the mean offset exceeds max_offset_px on either
// axis.
QualityResult quality_filter(const std::vector<GazeSample>& calib_gaze, double target_x,
                             double target_y, double window_s = 1.0,
                             double max_offset_px = 70.0);

enum class TrialLabel { hit, miss, false_alarm, correct_reject };

struct Trial {
    Interval interval;
    std::vector<Fixation> fixations;
    std::optional<double> keypress_ms;
    TrialLabel label = TrialLabel::correct_reject;
    double rt_s = 0.0;  // valid for hits only
};

std::vector<Trial> segment_trials(const std::vector<Fixation>& fixations,
                                  const ScenarioTrace& trace,
                                  const std::vector<double>& keypress_ms);

struct DetectionMetrics {
    std::optional<double> hit_rate;          // empty when no critical trials
    std::optional<double> mean_rt_s;         // empty when no hits
    std::optional<double> false_alarm_rate;  // empty when no non-critical trials
};

DetectionMetrics detection_metrics(const std::vector<Trial>& trials);

struct GazeMetrics {
    int fixation_count = 0;           // fixations inside the AOI
    double fixation_duration_s = 0.0; // total dwell inside the AOI
    int revisits = 0;                 // AOI entries minus one, floored at 0
    double mean_saccade_amplitude_px = 0.0;
    double scanpath_len_per_s_px = 0.0;
    double aoi_transition_rate_per_s = 0.0;
};

GazeMetrics aoi_gaze_metrics(const std::vector<Fixation>& fixations, const BBox& aoi,
                             const Layout& layout, double span_s);

// Mean CC between pooled smoothed fixation maps of random half-splits of the
// cohort.
double split_half_reliability(const std::vector<SaliencyMap>& fixation_maps_by_participant,
                              int iterations, Rng& rng, int smooth_window_px = 35);

// Fixation CSV: start_ms,end_ms,duration_ms,x_px,y_px.
void write_fixation_csv(const std::vector<Fixation>& fixations, const std::string& path);
// Trial summary CSV: interval,critical,highlighted,label,rt_s.
void write_trial_csv(const std::vector<Trial>& trials, const std::string& path);

}  // namespace attn

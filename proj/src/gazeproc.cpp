#include "attn/gazeproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "attn/metrics.hpp"

namespace attn {

namespace {

double dist(const GazeSample& a, const GazeSample& b) {
    return std::hypot(a.x_px - b.x_px, a.y_px - b.y_px);
}

Fixation make_fixation(const std::vector<GazeSample>& s, std::size_t i, std::size_t j) {
    Fixation f;
    f.start_ms = s[i].t_ms;
    f.end_ms = s[j].t_ms;
    f.duration_ms = f.end_ms - f.start_ms;
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = i; k <= j; ++k) {
        sx += s[k].x_px;
        sy += s[k].y_px;
    }
    f.cx_px = sx / static_cast<double>(j - i + 1);
    f.cy_px = sy / static_cast<double>(j - i + 1);
    return f;
}

}  // namespace

std::vector<Fixation> detect_fixations(const std::vector<GazeSample>& samples,
                                       double dispersion_px, double min_dur_ms) {
    std::vector<Fixation> out;
    const std::size_t n = samples.size();
    std::size_t i = 0;
    while (i < n) {
        if (!samples[i].valid) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && samples[j + 1].valid &&
               dist(samples[j + 1], samples[i]) <= dispersion_px)
            ++j;
        if (samples[j].t_ms - samples[i].t_ms >= min_dur_ms) {
            out.push_back(make_fixation(samples, i, j));
            i = j + 1;
        } else {
            ++i;
        }
    }
    return out;
}

std::vector<Fixation> detect_fixations_reference(const std::vector<GazeSample>& samples,
                                                 double dispersion_px, double min_dur_ms) {
    // Deliberately naive: for every candidate end, re-check the whole window.
    std::vector<Fixation> out;
    const std::size_t n = samples.size();
    std::size_t i = 0;
    while (i < n) {
        if (!samples[i].valid) {
            ++i;
            continue;
        }
        std::size_t best_end = i;
        for (std::size_t j = i; j < n; ++j) {
            bool ok = true;
            for (std::size_t k = i; k <= j && ok; ++k)
                ok = samples[k].valid && dist(samples[k], samples[i]) <= dispersion_px;
            if (!ok) break;
            best_end = j;
        }
        if (samples[best_end].t_ms - samples[i].t_ms >= min_dur_ms) {
            out.push_back(make_fixation(samples, i, best_end));
            i = best_end + 1;
        } else {
            ++i;
        }
    }
    return out;
}

QualityResult quality_filter(const std::vector<GazeSample>& calib_gaze, double target_x,
                             double target_y, double window_s, double max_offset_px) {
    if (calib_gaze.size() < 2)
        throw std::invalid_argument("quality_filter: calibration segment too short");
    const double window_ms = window_s * 1000.0;
    const double t0 = calib_gaze.front().t_ms, t1 = calib_gaze.back().t_ms;
    const double dt = (t1 - t0) / static_cast<double>(calib_gaze.size() - 1);
    if (t1 - t0 + dt < window_ms - 1e-9)
        throw std::invalid_argument("quality_filter: calibration segment shorter than window");

    double best_score = std::numeric_limits<double>::infinity();
    QualityResult best;
    std::size_t b = 0;
    for (std::size_t a = 0; a < calib_gaze.size(); ++a) {
        if (calib_gaze[a].t_ms + window_ms > t1 + dt + 1e-9) break;
        if (b < a) b = a;
        while (b < calib_gaze.size() && calib_gaze[b].t_ms < calib_gaze[a].t_ms + window_ms) ++b;
        double sx = 0.0, sy = 0.0, sd = 0.0;
        int cnt = 0;
        for (std::size_t k = a; k < b; ++k) {
            if (!calib_gaze[k].valid) continue;
            double dx = calib_gaze[k].x_px - target_x;
            double dy = calib_gaze[k].y_px - target_y;
            sx += dx;
            sy += dy;
            sd += std::hypot(dx, dy);
            ++cnt;
        }
        if (cnt == 0) continue;
        double score = sd / cnt;
        if (score < best_score) {
            best_score = score;
            best.dx_px = sx / cnt;
            best.dy_px = sy / cnt;
        }
    }
    if (!std::isfinite(best_score))
        throw std::invalid_argument("quality_filter: no valid calibration samples");
    best.accept = std::fabs(best.dx_px) <= max_offset_px && std::fabs(best.dy_px) <= max_offset_px;
    return best;
}

std::vector<Trial> segment_trials(const std::vector<Fixation>& fixations,
                                  const ScenarioTrace& trace,
                                  const std::vector<double>& keypress_ms) {
    std::vector<Trial> out;
    const double task_ms =
        trace.frames.empty() ? 300000.0 : trace.frames.back().t_ms + 1000.0 / 24.0;
    for (const Interval& iv : trace.plan.intervals) {
        double onset_ms = iv.onset_s * 1000.0;
        double end_ms = onset_ms + 15000.0;
        if (onset_ms >= task_ms + 1e-6)
            throw std::invalid_argument("segment_trials: interval outside the trace");
        Trial tr;
        tr.interval = iv;
        for (const Fixation& f : fixations)
            if (f.start_ms >= onset_ms && f.start_ms < end_ms) tr.fixations.push_back(f);
        for (double p : keypress_ms)
            if (p >= onset_ms && p < end_ms) {
                if (!tr.keypress_ms || p < *tr.keypress_ms) tr.keypress_ms = p;
            }
        if (iv.is_critical) {
            if (tr.keypress_ms) {
                tr.label = TrialLabel::hit;
                tr.rt_s = (*tr.keypress_ms - onset_ms) / 1000.0;
            } else {
                tr.label = TrialLabel::miss;
            }
        } else {
            tr.label = tr.keypress_ms ? TrialLabel::false_alarm : TrialLabel::correct_reject;
        }
        out.push_back(std::move(tr));
    }
    return out;
}

DetectionMetrics detection_metrics(const std::vector<Trial>& trials) {
    int crit = 0, hits = 0, noncrit = 0, fas = 0;
    double rt_sum = 0.0;
    for (const Trial& t : trials) {
        if (t.interval.is_critical) {
            ++crit;
            if (t.label == TrialLabel::hit) {
                ++hits;
                rt_sum += t.rt_s;
            }
        } else {
            ++noncrit;
            if (t.label == TrialLabel::false_alarm) ++fas;
        }
    }
    DetectionMetrics m;
    if (crit > 0) m.hit_rate = static_cast<double>(hits) / crit;
    if (hits > 0) m.mean_rt_s = rt_sum / hits;
    if (noncrit > 0) m.false_alarm_rate = static_cast<double>(fas) / noncrit;
    return m;
}

GazeMetrics aoi_gaze_metrics(const std::vector<Fixation>& fixations, const BBox& aoi,
                             const Layout& layout, double span_s) {
    if (span_s <= 0.0) throw std::invalid_argument("aoi_gaze_metrics: span must be positive");
    GazeMetrics m;
    int entries = 0;
    bool prev_in = false;
    for (const Fixation& f : fixations) {
        bool in = aoi.contains(f.cx_px, f.cy_px);
        if (in) {
            ++m.fixation_count;
            m.fixation_duration_s += f.duration_ms / 1000.0;
            if (!prev_in) ++entries;
        }
        prev_in = in;
    }
    m.revisits = std::max(0, entries - 1);

    double amp_sum = 0.0;
    int amp_n = 0, transitions = 0;
    for (std::size_t i = 1; i < fixations.size(); ++i) {
        double amp = std::hypot(fixations[i].cx_px - fixations[i - 1].cx_px,
                                fixations[i].cy_px - fixations[i - 1].cy_px);
        amp_sum += amp;
        ++amp_n;
        auto a = element_index_at(layout, fixations[i - 1].cx_px, fixations[i - 1].cy_px);
        auto b = element_index_at(layout, fixations[i].cx_px, fixations[i].cy_px);
        if (a != b) ++transitions;
    }
    if (amp_n > 0) m.mean_saccade_amplitude_px = amp_sum / amp_n;
    m.scanpath_len_per_s_px = amp_sum / span_s;
    m.aoi_transition_rate_per_s = transitions / span_s;
    return m;
}

double split_half_reliability(const std::vector<SaliencyMap>& fixation_maps_by_participant,
                              int iterations, Rng& rng, int smooth_window_px) {
    const std::size_t n = fixation_maps_by_participant.size();
    if (n < 2) throw std::invalid_argument("split_half_reliability: need at least 2 participants");
    const SaliencyMap& first = fixation_maps_by_participant.front();
    for (const SaliencyMap& m : fixation_maps_by_participant)
        if (m.width != first.width || m.height != first.height)
            throw std::invalid_argument("split_half_reliability: map size mismatch");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    double acc = 0.0;
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_int(static_cast<int>(i) + 1)]);
        SaliencyMap a(first.width, first.height), b(first.width, first.height);
        for (std::size_t i = 0; i < n; ++i) {
            const SaliencyMap& src = fixation_maps_by_participant[idx[i]];
            SaliencyMap& dst = (i < n / 2) ? a : b;
            for (std::size_t k = 0; k < src.values.size(); ++k) dst.values[k] += src.values[k];
        }
        acc += cc(smooth_map(a, smooth_window_px), smooth_map(b, smooth_window_px));
    }
    return acc / iterations;
}

void write_fixation_csv(const std::vector<Fixation>& fixations, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "start_ms,end_ms,duration_ms,x_px,y_px\n";
    char buf[128];
    for (const Fixation& fx : fixations) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%.3f,%.3f,%.3f\n", fx.start_ms, fx.end_ms,
                      fx.duration_ms, fx.cx_px, fx.cy_px);
        f << buf;
    }
}

void write_trial_csv(const std::vector<Trial>& trials, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "interval,critical,highlighted,label,rt_s\n";
    char buf[96];
    for (const Trial& t : trials) {
        const char* label = t.label == TrialLabel::hit           ? "hit"
                            : t.label == TrialLabel::miss        ? "miss"
                            : t.label == TrialLabel::false_alarm ? "false_alarm"
                                                                 : "correct_reject";
        if (t.label == TrialLabel::hit)
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,%.3f\n", t.interval.index,
                          t.interval.is_critical ? 1 : 0, t.interval.highlighted ? 1 : 0, label,
                          t.rt_s);
        else
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,\n", t.interval.index,
                          t.interval.is_critical ? 1 : 0, t.interval.highlighted ? 1 : 0, label);
        f << buf;
    }
}

}  // namespace attn

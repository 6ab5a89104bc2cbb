// Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.
// Exit code = number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attn/dronesim.hpp"
#include "attn/gazegen.hpp"
#include "attn/gazeproc.hpp"
#include "attn/hism.hpp"
#include "attn/itti.hpp"
#include "attn/metrics.hpp"
#include "attn/render.hpp"
#include "attn/rng.hpp"
#include "attn/saliency.hpp"
#include "attn/stats.hpp"

using namespace attn;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string why;
    void fail(const std::string& msg) {
        if (ok) why = msg;
        ok = false;
    }
    void expect(bool cond, const std::string& msg) {
        if (!cond) fail(msg);
    }
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. NS correctness: per-slice sums, uniform level, scale invariance.

void criterion_ns(Check& c) {
    Layout layout = default_layout();
    const int n = static_cast<int>(layout.elements.size());

    Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<Fixation> fx;
        for (int i = 0; i < 40; ++i) {
            double x = rng.uniform(0, layout.width_px), y = rng.uniform(0, layout.height_px);
            fx.push_back({i * 50.0, i * 50.0 + 40.0, 40.0, x, y});
        }
        SaliencyMap m = smooth_map_raw(
            fixation_map(fx, 0.0, 3000.0, layout.width_px, layout.height_px));

        auto all = normalized_saliency_all(m, layout);
        double sum = 0.0;
        for (const NsValue& v : all) sum += v.value;
        c.expect(std::fabs(sum - 1.0) <= 1e-9, "slice NS sum off by " + num(sum - 1.0));

        for (double scale : {0.5, 2.0, 10.0}) {
            SaliencyMap ms = m;
            for (double& v : ms.values) v *= scale;
            auto scaled = normalized_saliency_all(ms, layout);
            for (int e = 0; e < n; ++e)
                c.expect(std::fabs(scaled[e].value - all[e].value) <= 1e-9,
                         "NS not scale invariant at c=" + num(scale));
        }
    }

    SaliencyMap uniform(layout.width_px, layout.height_px);
    for (double& v : uniform.values) v = 0.7;
    for (const NsValue& v : normalized_saliency_all(uniform, layout))
        c.expect(std::fabs(v.value - 1.0 / n) <= 1e-9, "uniform map NS != 1/32");

    // full grid of slices around an onset
    Rng rng2(102);
    std::vector<Fixation> fx;
    for (int i = 0; i < 300; ++i) {
        double t = rng2.uniform(9000.0, 21000.0);
        fx.push_back({t, t + 120.0, 120.0, rng2.uniform(0, layout.width_px),
                      rng2.uniform(0, layout.height_px)});
    }
    auto slices = ns_slices(fx, layout, TimeGrid{}, 15.0);
    for (const auto& slice : slices) {
        double sum = 0.0;
        for (const NsValue& v : slice) sum += v.value;
        c.expect(std::fabs(sum - 1.0) <= 1e-9, "grid slice NS sum off by " + num(sum - 1.0));
    }
}

// ---------------------------------------------------------------------------
// 2. Fixation detector equals the brute-force reference on 1,000 traces.

void criterion_detector(Check& c) {
    for (int rep = 0; rep < 1000 && c.ok; ++rep) {
        Rng rng(20000 + rep);
        std::vector<GazeSample> s;
        double x = rng.uniform(0, 1920), y = rng.uniform(0, 1200);
        for (int i = 0; i < 500; ++i) {  // 2 s at 250 Hz
            if (rng.bernoulli(0.03)) {
                x = rng.uniform(0, 1920);
                y = rng.uniform(0, 1200);
            } else {
                x += rng.normal(0, 3.0);
                y += rng.normal(0, 3.0);
            }
            s.push_back({i * 4.0, x, y, !rng.bernoulli(0.01)});
        }
        auto a = detect_fixations(s, 25.0, 50.0);
        auto b = detect_fixations_reference(s, 25.0, 50.0);
        if (a.size() != b.size()) {
            c.fail("size mismatch on trace " + std::to_string(rep));
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].start_ms != b[i].start_ms || a[i].end_ms != b[i].end_ms ||
                a[i].duration_ms != b[i].duration_ms || a[i].cx_px != b[i].cx_px ||
                a[i].cy_px != b[i].cy_px) {
                c.fail("field mismatch on trace " + std::to_string(rep));
                return;
            }
    }
}

// ---------------------------------------------------------------------------
// 3. Metric identities and the constant-map AUC baseline.

void criterion_metrics(Check& c) {
    Rng rng(33);
    SaliencyMap m(48, 32);
    for (double& v : m.values) v = rng.uniform(0.05, 1.0);

    c.expect(std::fabs(sim(m, m) - 1.0) <= 1e-9, "sim(m,m) != 1");
    c.expect(std::fabs(cc(m, m) - 1.0) <= 1e-9, "cc(m,m) != 1");
    c.expect(kl_div(m, m) < 1e-9, "kl(m,m) >= 1e-9");
    c.expect(std::fabs(composite_loss(m, m, {10, -3, -2}) + 5.0) <= 1e-6,
             "composite(m,m) != -5");

    std::vector<double> series = {0.1, 0.4, 0.2, 0.9};
    RegressionMetrics rm = regression_metrics(series, series);
    c.expect(rm.mse == 0.0 && rm.mae == 0.0, "regression metrics not (0,0)");

    SaliencyMap flat(64, 64);
    for (double& v : flat.values) v = 0.42;
    double auc_sum = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        Rng r(40000 + rep);
        std::vector<PixelPoint> fix;
        for (int i = 0; i < 100; ++i) fix.push_back({r.uniform_int(64), r.uniform_int(64)});
        auc_sum += auc_judd(flat, fix);
    }
    double auc_mean = auc_sum / 1000.0;
    c.expect(std::fabs(auc_mean - 0.5) <= 0.02,
             "constant-map AUC = " + num(auc_mean) + " outside 0.5±0.02");
}

// ---------------------------------------------------------------------------
// 4. Gradient verification for all three variants.

void criterion_gradients(Check& c) {
    Rng rng(44);
    HismConfig base;  // image_size 96, seq_len 60
    StackedInput s;
    s.size = base.image_size;
    s.channels = base.image_channels;
    s.data.assign(static_cast<std::size_t>(4) * 96 * 96, 0.0);
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < 96 * 96; ++i)
            s.data[static_cast<std::size_t>(ch) * 96 * 96 + i] = rng.uniform01();
    for (int y = 30; y < 50; ++y)
        for (int x = 20; x < 45; ++x)
            s.data[static_cast<std::size_t>(3) * 96 * 96 + y * 96 + x] = 1.0;

    TemporalInput t;
    t.v.assign(60, 0.0);
    t.c.assign(60, 0.0);
    for (int k = 18; k < 60; ++k) {
        t.v[k] = k < 28 ? -1.0 : 1.0;
        t.c[k] = rng.uniform01();
    }

    for (HismVariant variant :
         {HismVariant::lstm, HismVariant::tran_enc, HismVariant::tran_enc_task}) {
        HismConfig cfg = base;
        cfg.variant = variant;
        HismModel m = hism_init(cfg, 21);
        double err = hism_grad_check(m, s, t, 0.47, 200, 1e-5, 7);
        c.expect(err < 1e-4, std::string(hism_variant_name(variant)) +
                                 " grad error " + num(err));
    }
}

// ---------------------------------------------------------------------------
// 5. Synthetic calibration of the 28-participant cohort.

void criterion_calibration(Check& c) {
    SimConfig sim_cfg;
    BehaviorParams bp;
    Layout layout = default_layout();
    TimeGrid grid;

    std::vector<double> hl_mean(60, 0.0);
    int hl_events = 0;
    double nh_sum = 0.0;
    int nh_slices = 0;
    std::vector<SaliencyMap> participant_maps;

    for (int task = 0; task < 2; ++task) {
        ScenarioTrace trace = simulate_task(sim_cfg, 501 + task, task);
        std::vector<Fixation> pooled;
        for (int p = 0; p < 28; ++p) {
            GazeTrace g =
                generate_gaze(trace, layout, bp, hash_u64(8000 + 100 * task + p), p);
            std::vector<Fixation> fx = detect_fixations(g.samples);
            if (task == 0) {
                // quarter-scale per-participant map for the reliability check
                std::vector<Fixation> scaled = fx;
                for (Fixation& f : scaled) {
                    f.cx_px /= 4.0;
                    f.cy_px /= 4.0;
                }
                SaliencyMap fm = fixation_map(scaled, 0.0, sim_cfg.task_s * 1000.0,
                                              layout.width_px / 4, layout.height_px / 4);
                participant_maps.push_back(smooth_map(fm, 9));
            }
            pooled.insert(pooled.end(), fx.begin(), fx.end());
        }

        for (const Interval& iv : trace.plan.intervals) {
            if (!iv.is_critical) continue;
            int tgt = layout.find(iv.drone_index, critical_icon(iv.kind));
            if (tgt < 0) continue;
            NsSeries s = ns_time_series(pooled, layout, tgt, grid, iv.onset_s);
            if (iv.highlighted) {
                for (int k = 0; k < 60; ++k) hl_mean[k] += s.ns[k];
                ++hl_events;
            } else {
                for (int k = 0; k < 60; ++k)
                    if (s.t_rel_s[k] >= 0.0) {
                        nh_sum += s.ns[k];
                        ++nh_slices;
                    }
            }
        }
    }

    if (hl_events == 0 || nh_slices == 0) {
        c.fail("no critical intervals sampled");
        return;
    }
    double peak = 0.0, peak_t = 0.0;
    for (int k = 0; k < 60; ++k) {
        double v = hl_mean[k] / hl_events;
        if (grid.t_rel(k) >= 0.0 && v > peak) {
            peak = v;
            peak_t = grid.t_rel(k);
        }
    }
    c.expect(peak_t <= 1.0, "highlighted NS peaks at " + num(peak_t) + " s (> 1 s)");
    c.expect(std::fabs(peak - 0.5) <= 0.1, "highlighted NS peak " + num(peak));
    double nh_avg = nh_sum / nh_slices;
    c.expect(std::fabs(nh_avg - 0.10) <= 0.05, "no-highlight mean NS " + num(nh_avg));

    Rng rel_rng(909);
    double rel = split_half_reliability(participant_maps, 20, rel_rng, 9);
    c.expect(rel > 0.8, "split-half CC " + num(rel));
}

// ---------------------------------------------------------------------------
// 6 + 7 share one dataset and one full training run.

struct TrainedState {
    Layout layout = default_layout();
    DatasetConfig dc;
    HismDataset ds;
    TrainResult result;
    bool trained = false;
};

void criterion_training(Check& c, TrainedState& st) {
    st.dc.seed = 11;
    st.ds = build_dataset(st.dc, st.layout);

    int hl = 0;
    for (const HismSample& s : st.ds.samples)
        if (s.highlighted) ++hl;
    c.expect(st.ds.samples.size() == 1920,
             "dataset has " + std::to_string(st.ds.samples.size()) + " pairs");
    c.expect(hl == 800, "dataset has " + std::to_string(hl) + " highlighted pairs");

    TrainConfig tc;
    st.result = hism_train(st.ds, HismVariant::tran_enc_task, tc, 5);
    st.trained = true;
    c.expect(static_cast<int>(st.result.history.size()) <= tc.max_epochs,
             "training exceeded the epoch budget");

    double base = constant_mean_mse(st.ds, st.result.split.train_trials,
                                    st.result.split.test_trials);
    double test = dataset_mse(st.result.model, st.ds, st.result.split.test_trials);
    c.expect(test <= 0.5 * base,
             "test MSE ratio " + num(test / base) + " exceeds 0.5");

    // seeded determinism: two short runs write byte-identical checkpoints
    TrainConfig short_tc = tc;
    short_tc.max_epochs = 3;
    short_tc.early_stop_epochs = 3;
    fs::path dir = fs::temp_directory_path() / "attn_accept";
    fs::create_directories(dir);
    auto run_and_save = [&](const fs::path& p) {
        TrainResult r = hism_train(st.ds, HismVariant::tran_enc_task, short_tc, 5);
        save_checkpoint(r.model, p.string());
    };
    run_and_save(dir / "a.ckpt");
    run_and_save(dir / "b.ckpt");
    auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    c.expect(bytes(dir / "a.ckpt") == bytes(dir / "b.ckpt"),
             "checkpoints differ between identically seeded runs");
}

void criterion_prediction(Check& c, const TrainedState& st) {
    if (!st.trained) {
        c.fail("no trained model available (criterion 6 run failed)");
        return;
    }
    int hits = 0, hl_trials = 0, plain_trials = 0;
    double hl_peak_sum = 0.0, plain_mean_sum = 0.0;
    for (int t : st.result.split.test_trials) {
        const HismTrial& trial = st.ds.trials[t];
        std::vector<double> pred, gt;
        for (const HismSample& s : st.ds.samples)
            if (s.trial == t) {
                pred.push_back(hism_forward(st.result.model, st.ds.images[s.image], s.tin));
                gt.push_back(s.target);
            }
        if (trial.highlighted) {
            std::size_t pi = std::max_element(pred.begin(), pred.end()) - pred.begin();
            std::size_t gi = std::max_element(gt.begin(), gt.end()) - gt.begin();
            if (0.1 * std::fabs(double(pi) - double(gi)) <= 0.3) ++hits;
            ++hl_trials;
            hl_peak_sum += *std::max_element(pred.begin(), pred.end());
        } else {
            double m = 0.0;
            for (double v : pred) m += v;
            plain_mean_sum += m / static_cast<double>(pred.size());
            ++plain_trials;
        }
    }
    if (hl_trials == 0 || plain_trials == 0) {
        c.fail("test split lacks a highlight condition");
        return;
    }
    double frac = static_cast<double>(hits) / hl_trials;
    c.expect(frac >= 0.8, "peak-time hit rate " + num(frac) + " (" + std::to_string(hits) +
                              "/" + std::to_string(hl_trials) + ")");
    double hl_peak = hl_peak_sum / hl_trials;
    double plain_mean = plain_mean_sum / plain_trials;
    c.expect(hl_peak > plain_mean, "highlighted peak " + num(hl_peak) +
                                       " <= no-highlight mean " + num(plain_mean));
}

// ---------------------------------------------------------------------------
// 8. Simulator contracts.

void criterion_simulator(Check& c) {
    SimConfig cfg;
    ScenarioTrace trace = simulate_task(cfg, 5, 0);
    c.expect(trace.frames.size() == 7200,
             std::to_string(trace.frames.size()) + " frames per task");

    for (const Frame& f : trace.frames)
        if (f.critical &&
            !indicator_critical(f.drones[f.critical->drone], f.critical->kind)) {
            c.fail("critical frame without a hazardous indicator at t=" + num(f.t_ms));
            break;
        }

    // thresholds on the injected values themselves
    for (const Frame& f : trace.frames) {
        if (!f.critical) continue;
        const DroneState& d = f.drones[f.critical->drone];
        if (f.critical->kind == CriticalKind::battery)
            c.expect(d.battery_pct < 10.0, "critical battery not < 10%");
        if (f.critical->kind == CriticalKind::wind)
            c.expect(d.wind_mps > 10.0, "critical wind not > 10 m/s");
        if (!c.ok) break;
    }

    Rng master(424242);
    long criticals = 0, highlighted = 0, total = 0;
    for (int i = 0; i < 10000; ++i) {
        Rng r = master.fork(i);
        IntervalPlan plan = schedule_intervals(r, cfg);
        for (const Interval& iv : plan.intervals) {
            ++total;
            if (iv.is_critical) {
                ++criticals;
                if (iv.highlighted) ++highlighted;
            }
        }
    }
    double crit_frac = static_cast<double>(criticals) / total;
    double hl_frac = static_cast<double>(highlighted) / criticals;
    c.expect(std::fabs(crit_frac - 0.8) <= 0.01, "critical frequency " + num(crit_frac));
    c.expect(std::fabs(hl_frac - 0.5) <= 0.015, "highlight frequency " + num(hl_frac));

    ScenarioTrace again = simulate_task(cfg, 5, 0);
    c.expect(trace_jsonl_string(trace) == trace_jsonl_string(again),
             "rerun with the same seed is not bit-exact");
}

// ---------------------------------------------------------------------------
// 9. Statistics oracles.

void criterion_stats(Check& c) {
    // exact Mann-Whitney vs brute-force enumeration, n_a = n_b = 4, no ties
    std::set<int> u_seen;
    for (int rep = 0; rep < 300 && c.ok; ++rep) {
        Rng rng(60000 + rep);
        std::vector<double> a, b, pooled;
        do {
            a.clear();
            b.clear();
            pooled.clear();
            for (int i = 0; i < 4; ++i) a.push_back(rng.uniform01());
            for (int i = 0; i < 4; ++i) b.push_back(rng.uniform01());
            pooled = a;
            pooled.insert(pooled.end(), b.begin(), b.end());
            std::sort(pooled.begin(), pooled.end());
        } while (std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end());

        // observed U for group a
        auto u_of = [&](unsigned mask) {
            double ranksum = 0.0;
            for (int r = 0; r < 8; ++r)
                if (mask & (1u << r)) ranksum += r + 1;
            return static_cast<int>(std::lround(ranksum - 4.0 * 5.0 / 2.0));
        };
        unsigned obs_mask = 0;
        for (double v : a) {
            int r = static_cast<int>(std::lower_bound(pooled.begin(), pooled.end(), v) -
                                     pooled.begin());
            obs_mask |= 1u << r;
        }
        int u_obs = u_of(obs_mask);
        u_seen.insert(u_obs);
        int lo = std::min(u_obs, 16 - u_obs), hi = 16 - lo;
        int mass = 0, n_masks = 0;
        for (unsigned mask = 0; mask < 256; ++mask) {
            if (__builtin_popcount(mask) != 4) continue;
            ++n_masks;
            int u = u_of(mask);
            if (u <= lo || u >= hi) ++mass;
        }
        double p_oracle = std::min(1.0, static_cast<double>(mass) / n_masks);
        double p_impl = mann_whitney_u(a, b).p_value;
        if (std::fabs(p_impl - p_oracle) > 1e-12)
            c.fail("exact p " + num(p_impl) + " != enumeration " + num(p_oracle) +
                   " at U=" + std::to_string(u_obs));
    }
    c.expect(u_seen.size() >= 10, "random cases covered too few U values");

    TestResult t = t_test_ind({1, 2, 3}, {4, 5, 6});
    c.expect(std::fabs(t.statistic - (-3.674)) <= 1e-3,
             "t statistic " + num(t.statistic));

    // Shapiro & Wilk's men's-weights reference: W = 0.789 to 3 decimals
    TestResult sw =
        shapiro_wilk({148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236});
    c.expect(std::fabs(sw.statistic - 0.7888) <= 5e-4, "W statistic " + num(sw.statistic));
}

// ---------------------------------------------------------------------------
// 10. Bottom-up saliency sanity.

void criterion_itti(Check& c) {
    Layout layout = default_layout();
    const int target = 10;
    Image frame = render_layout(layout, target);
    SaliencyMap sal = itti_saliency(frame);

    int best = -1;
    double best_v = -1.0, total = 0.0;
    std::vector<double> per_element;
    for (const Element& e : layout.elements) {
        double v = element_saliency(sal, e);
        per_element.push_back(v);
        total += v;
    }
    for (std::size_t i = 0; i < per_element.size(); ++i)
        if (per_element[i] > best_v) {
            best_v = per_element[i];
            best = static_cast<int>(i);
        }
    c.expect(best == target, "highlighted element ranks " + std::to_string(best) +
                                 " instead of " + std::to_string(target));
    c.expect(total > 0.0 && best_v / total > 1.0 / 32.0,
             "highlighted element NS not above the uniform share");

    Image flat(256, 256);
    flat.fill(128, 128, 128);
    SaliencyMap fs_map = itti_saliency(flat);
    double mean = 0.0;
    for (double v : fs_map.values) mean += v;
    mean /= static_cast<double>(fs_map.values.size());
    double var = 0.0;
    for (double v : fs_map.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(fs_map.values.size());
    c.expect(var < 1e-6, "uniform frame variance " + num(var));
}

}  // namespace

int main() {
    TrainedState st;
    struct Entry {
        int id;
        const char* name;
        std::function<void(Check&)> fn;
    };
    const std::vector<Entry> entries = {
        {1, "NS correctness", criterion_ns},
        {2, "fixation detector equivalence", criterion_detector},
        {3, "metric identities", criterion_metrics},
        {4, "gradient verification", criterion_gradients},
        {5, "synthetic calibration", criterion_calibration},
        {6, "training efficacy", [&st](Check& c) { criterion_training(c, st); }},
        {7, "prediction dynamics", [&st](Check& c) { criterion_prediction(c, st); }},
        {8, "simulator contracts", criterion_simulator},
        {9, "statistics oracles", criterion_stats},
        {10, "bottom-up saliency sanity", criterion_itti},
    };

    int failed = 0;
    for (const Entry& e : entries) {
        Check c;
        auto t0 = std::chrono::steady_clock::now();
        try {
            e.fn(c);
        } catch (const std::exception& ex) {
            c.fail(std::string("exception: ") + ex.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        if (c.ok) {
            std::printf("criterion %2d (%s): PASS [%.1fs]\n", e.id, e.name, secs);
        } else {
            std::printf("criterion %2d (%s): FAIL — %s [%.1fs]\n", e.id, e.name,
                        c.why.c_str(), secs);
            ++failed;
        }
        std::fflush(stdout);
    }
    return failed;
}

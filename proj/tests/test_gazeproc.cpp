#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "attn/gazeproc.hpp"
#include "attn/rng.hpp"

using namespace attn;

namespace {

std::vector<GazeSample> steady(double t0_ms, int n, double x, double y, double jitter,
                               Rng& rng, double dt_ms = 4.0) {
    std::vector<GazeSample> out;
    for (int i = 0; i < n; ++i)
        out.push_back({t0_ms + i * dt_ms, x + rng.uniform(-jitter, jitter),
                       y + rng.uniform(-jitter, jitter), true});
    return out;
}

}  // namespace

TEST_CASE("detect_fixations basic examples") {
    Rng rng(1);
    // 30 samples (116 ms) within 5 px -> exactly one fixation
    auto s = steady(0.0, 30, 400, 300, 2.5, rng);
    auto fx = detect_fixations(s);
    REQUIRE(fx.size() == 1);
    CHECK(fx[0].duration_ms >= 100.0);
    CHECK(fx[0].cx_px == doctest::Approx(400.0).epsilon(0.02));

    // alternating samples 50 px apart -> none
    std::vector<GazeSample> alt;
    for (int i = 0; i < 100; ++i) alt.push_back({i * 4.0, i % 2 ? 100.0 : 150.0, 100.0, true});
    CHECK(detect_fixations(alt).empty());

    // 12 stable samples (44 ms) then a jump -> below the 50 ms minimum
    auto shortfix = steady(0.0, 12, 200, 200, 1.0, rng);
    auto far = steady(48.0, 12, 800, 800, 1.0, rng);
    shortfix.insert(shortfix.end(), far.begin(), far.end());
    CHECK(detect_fixations(shortfix).empty());

    CHECK(detect_fixations({}).empty());
}

TEST_CASE("invalid samples split fixations") {
    Rng rng(2);
    auto s = steady(0.0, 60, 500, 500, 2.0, rng);
    s[30].valid = false;
    auto fx = detect_fixations(s);
    REQUIRE(fx.size() == 2);
    CHECK(fx[0].end_ms < fx[1].start_ms);
    // ordered and disjoint
    for (std::size_t i = 1; i < fx.size(); ++i) CHECK(fx[i].start_ms > fx[i - 1].end_ms);
}

TEST_CASE("detector equals the brute-force reference on random traces") {
    for (int rep = 0; rep < 200; ++rep) {
        Rng rng(10000 + rep);
        std::vector<GazeSample> s;
        double x = rng.uniform(0, 1920), y = rng.uniform(0, 1200);
        for (int i = 0; i < 500; ++i) {  // 2 s at 250 Hz
            if (rng.bernoulli(0.03)) {  // saccade jump
                x = rng.uniform(0, 1920);
                y = rng.uniform(0, 1200);
            } else {
                x += rng.normal(0, 3.0);
                y += rng.normal(0, 3.0);
            }
            s.push_back({i * 4.0, x, y, !rng.bernoulli(0.01)});
        }
        auto a = detect_fixations(s);
        auto b = detect_fixations_reference(s);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].start_ms == b[i].start_ms);
            CHECK(a[i].end_ms == b[i].end_ms);
            CHECK(a[i].cx_px == b[i].cx_px);
            CHECK(a[i].cy_px == b[i].cy_px);
        }
    }
}

TEST_CASE("quality_filter accepts/rejects on the 70 px rule") {
    Rng rng(3);
    // constant offset (80, 0) -> reject
    auto off = steady(0.0, 500, 1040, 600, 1.0, rng);
    auto r = quality_filter(off, 960, 600);
    CHECK(!r.accept);
    CHECK(r.dx_px == doctest::Approx(80.0).epsilon(0.02));

    // zero offset -> accept
    auto ok = steady(0.0, 500, 960, 600, 1.0, rng);
    CHECK(quality_filter(ok, 960, 600).accept);

    // segment shorter than the window -> error
    auto shortseg = steady(0.0, 100, 960, 600, 1.0, rng);
    CHECK_THROWS(quality_filter(shortseg, 960, 600));
}

TEST_CASE("quality_filter picks the same window as an exhaustive sweep") {
    Rng rng(4);
    // drifting trace: offset shrinks then grows
    std::vector<GazeSample> s;
    for (int i = 0; i < 1000; ++i) {
        double drift = std::fabs(i - 620) * 0.2;
        s.push_back({i * 4.0, 960 + drift + rng.uniform(-1, 1), 600.0, true});
    }
    auto r = quality_filter(s, 960, 600);

    // brute-force sweep over every admissible start index
    double best_score = 1e18, best_dx = 0.0;
    for (std::size_t a = 0; a + 250 <= s.size(); ++a) {
        double sd = 0.0, sx = 0.0;
        for (std::size_t k = a; k < a + 250; ++k) {
            sd += std::fabs(s[k].x_px - 960.0);
            sx += s[k].x_px - 960.0;
        }
        if (sd / 250 < best_score) {
            best_score = sd / 250;
            best_dx = sx / 250;
        }
    }
    CHECK(r.dx_px == doctest::Approx(best_dx).epsilon(1e-9));
}

TEST_CASE("segment_trials labels hits, misses and false alarms") {
    ScenarioTrace trace;
    for (int i = 0; i < 20; ++i) {
        Interval iv;
        iv.index = i;
        iv.onset_s = i * 15.0;
        iv.is_critical = (i == 1 || i == 3);
        trace.plan.intervals.push_back(iv);
    }
    Frame last;
    last.t_ms = 300000.0 - 1000.0 / 24.0;
    trace.frames.push_back(last);

    // press at onset+1.2 s of interval 1 (hit), none in 3 (miss), press in 5 (FA)
    std::vector<double> presses = {16200.0, 76000.0};
    auto trials = segment_trials({}, trace, presses);
    REQUIRE(trials.size() == 20);
    CHECK(trials[1].label == TrialLabel::hit);
    CHECK(trials[1].rt_s == doctest::Approx(1.2));
    CHECK(trials[3].label == TrialLabel::miss);
    CHECK(trials[5].label == TrialLabel::false_alarm);
    CHECK(trials[0].label == TrialLabel::correct_reject);

    auto m = detection_metrics(trials);
    CHECK(*m.hit_rate == doctest::Approx(0.5));
    CHECK(*m.mean_rt_s == doctest::Approx(1.2));
    CHECK(*m.false_alarm_rate == doctest::Approx(1.0 / 18.0));

    // hit + miss rates partition the criticals
    int hits = 0, misses = 0, crit = 0;
    for (const auto& t : trials)
        if (t.interval.is_critical) {
            ++crit;
            if (t.label == TrialLabel::hit) ++hits;
            if (t.label == TrialLabel::miss) ++misses;
        }
    CHECK(hits + misses == crit);
}

TEST_CASE("detection_metrics counting example and empty denominators") {
    std::vector<Trial> ts(4);
    ts[0].interval.is_critical = true;
    ts[0].label = TrialLabel::hit;
    ts[0].rt_s = 1.0;
    ts[1].interval.is_critical = true;
    ts[1].label = TrialLabel::miss;
    ts[2].interval.is_critical = true;
    ts[2].label = TrialLabel::hit;
    ts[2].rt_s = 2.0;
    ts[3].interval.is_critical = false;
    ts[3].label = TrialLabel::false_alarm;
    auto m = detection_metrics(ts);
    CHECK(*m.hit_rate == doctest::Approx(2.0 / 3.0));
    CHECK(*m.false_alarm_rate == doctest::Approx(1.0));
    CHECK(*m.mean_rt_s == doctest::Approx(1.5));

    auto empty = detection_metrics({});
    CHECK(!empty.hit_rate.has_value());
    CHECK(!empty.mean_rt_s.has_value());
    CHECK(!empty.false_alarm_rate.has_value());
}

TEST_CASE("aoi_gaze_metrics definitions") {
    Layout layout = default_layout();
    BBox aoi = layout.elements[0].bbox;
    double in_x = aoi.x + 10.0, in_y = aoi.y + 10.0;

    // in / out / in -> one revisit
    std::vector<Fixation> f1 = {{0, 100, 100, in_x, in_y},
                                {150, 300, 150, 1500, 1000},
                                {350, 500, 150, in_x + 5, in_y + 5}};
    auto m1 = aoi_gaze_metrics(f1, aoi, layout, 0.5);
    CHECK(m1.fixation_count == 2);
    CHECK(m1.revisits == 1);

    // two fixations 100 px apart over 0.5 s
    std::vector<Fixation> f2 = {{0, 100, 100, 500, 500}, {200, 300, 100, 600, 500}};
    auto m2 = aoi_gaze_metrics(f2, aoi, layout, 0.5);
    CHECK(m2.mean_saccade_amplitude_px == doctest::Approx(100.0));
    CHECK(m2.scanpath_len_per_s_px == doctest::Approx(200.0));

    // single fixation -> degenerate zeros
    auto m3 = aoi_gaze_metrics({{0, 100, 100, in_x, in_y}}, aoi, layout, 1.0);
    CHECK(m3.mean_saccade_amplitude_px == 0.0);
    CHECK(m3.aoi_transition_rate_per_s == 0.0);
    CHECK(m3.fixation_count == 1);
    CHECK(m3.revisits == 0);

    auto m4 = aoi_gaze_metrics({}, aoi, layout, 1.0);
    CHECK(m4.fixation_count == 0);
    CHECK_THROWS(aoi_gaze_metrics({}, aoi, layout, 0.0));
}

TEST_CASE("split_half_reliability extremes") {
    Rng rng(6);
    SaliencyMap proto(128, 96);
    for (int i = 0; i < 25; ++i) proto.at(rng.uniform_int(128), rng.uniform_int(96)) += 1.0;
    std::vector<SaliencyMap> same(8, proto);
    Rng r1(7);
    CHECK(split_half_reliability(same, 5, r1) == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<SaliencyMap> indep;
    for (int p = 0; p < 10; ++p) {
        SaliencyMap m(128, 96);
        for (int i = 0; i < 25; ++i) m.at(rng.uniform_int(128), rng.uniform_int(96)) += 1.0;
        indep.push_back(std::move(m));
    }
    Rng r2(8);
    CHECK(std::fabs(split_half_reliability(indep, 20, r2)) < 0.25);

    Rng r3(9);
    CHECK_THROWS(split_half_reliability({proto}, 3, r3));
}

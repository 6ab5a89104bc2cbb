#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "attn/dronesim.hpp"

using namespace attn;

TEST_CASE("plan_route determinism and haversine oracle") {
    SimConfig cfg;
    Rng r1(77), r2(77);
    auto a = plan_route(r1, cfg.bounds);
    auto b = plan_route(r2, cfg.bounds);
    CHECK(a.start_lat == b.start_lat);
    CHECK(a.end_lon == b.end_lon);
    CHECK(a.initial_distance_m == b.initial_distance_m);

    // independent haversine computation for (0,0) -> (0,1 deg)
    double d = haversine_m(0.0, 0.0, 0.0, 1.0);
    double expect = 6371000.0 * M_PI / 180.0;
    CHECK(std::fabs(d - expect) / expect < 0.001);
    CHECK(haversine_m(49.1, 7.0, 49.1, 7.0) == doctest::Approx(0.0));

    LatLonBounds degenerate{49.0, 49.0, 7.0, 7.0};
    CHECK_THROWS(plan_route(r1, degenerate));
}

TEST_CASE("step_state contracts") {
    SimConfig cfg;
    Rng rng(5);
    Route route;
    route.initial_distance_m = 10000.0;
    DroneState s;
    s.distance_m = 10000.0;
    s.battery_pct = 50.0;

    SUBCASE("dt=0 leaves state unchanged") {
        auto s2 = step_state(s, route, 0.0, rng, cfg);
        CHECK(s2.battery_pct == s.battery_pct);
        CHECK(s2.distance_m == s.distance_m);
        CHECK(s2.altitude_m == s.altitude_m);
    }

    SUBCASE("descends within 5% of initial distance") {
        DroneState near = s;
        near.distance_m = 0.04 * route.initial_distance_m;
        auto s2 = step_state(near, route, 1.0 / 24.0, rng, cfg);
        CHECK(s2.altitude_m < near.altitude_m);
    }

    SUBCASE("battery non-increasing and floored over 1000 seeded steps") {
        DroneState cur = s;
        double prev = cur.battery_pct;
        for (int i = 0; i < 1000; ++i) {
            cur = step_state(cur, route, 1.0 / 24.0, rng, cfg);
            CHECK(cur.battery_pct <= prev);
            CHECK(cur.battery_pct >= 10.0);
            prev = cur.battery_pct;
        }
    }

    SUBCASE("distance non-increasing while moving") {
        DroneState cur = s;
        double prev = cur.distance_m;
        for (int i = 0; i < 200; ++i) {
            cur = step_state(cur, route, 1.0 / 24.0, rng, cfg);
            CHECK(cur.distance_m <= prev);
            prev = cur.distance_m;
        }
    }
}

TEST_CASE("inject_critical thresholds") {
    SimConfig cfg;
    Rng rng(8);
    DroneState s;
    for (int rep = 0; rep < 50; ++rep) {
        auto b = inject_critical(s, CriticalKind::battery, rng, cfg);
        CHECK(b.battery_pct < 10.0);
        CHECK(indicator_critical(b, CriticalKind::battery));
        auto w = inject_critical(s, CriticalKind::wind, rng, cfg);
        CHECK(w.wind_mps > 10.0);
        CHECK(indicator_critical(w, CriticalKind::wind));
    }
    auto r = inject_critical(s, CriticalKind::rotor, rng, cfg);
    CHECK(r.rotor == RotorState::off);
    Route route;
    route.initial_distance_m = 10000.0;
    r.distance_m = 10000.0;
    double alt = r.altitude_m;
    for (int i = 0; i < 3; ++i) {
        r = step_state(r, route, 1.0 / 24.0, rng, cfg);
        CHECK(r.altitude_m < alt);
        alt = r.altitude_m;
    }
    auto z = inject_critical(s, CriticalKind::zone, rng, cfg);
    CHECK(z.zone == ZoneState::no_fly);
}

TEST_CASE("schedule_intervals structure and extremes") {
    SimConfig cfg;
    Rng rng(3);
    auto plan = schedule_intervals(rng, cfg);
    REQUIRE(plan.intervals.size() == 20);
    for (int i = 0; i < 20; ++i) CHECK(plan.intervals[i].onset_s == doctest::Approx(i * 15.0));
    for (std::size_t i = 1; i < plan.question_times_s.size(); ++i) {
        double gap = plan.question_times_s[i] - plan.question_times_s[i - 1];
        CHECK(gap >= 30.0);
        CHECK(gap <= 60.0);
    }

    SimConfig all_crit = cfg;
    all_crit.p_critical = 1.0;
    all_crit.p_highlight = 0.0;
    Rng rng2(4);
    auto plan2 = schedule_intervals(rng2, all_crit);
    for (const auto& iv : plan2.intervals) {
        CHECK(iv.is_critical);
        CHECK(!iv.highlighted);
    }

    // deterministic given the seed
    Rng ra(99), rb(99);
    auto pa = schedule_intervals(ra, cfg);
    auto pb = schedule_intervals(rb, cfg);
    for (int i = 0; i < 20; ++i) {
        CHECK(pa.intervals[i].is_critical == pb.intervals[i].is_critical);
        CHECK(pa.intervals[i].highlighted == pb.intervals[i].highlighted);
        CHECK(pa.intervals[i].drone_index == pb.intervals[i].drone_index);
    }
}

TEST_CASE("monte-carlo interval frequencies (reduced-size)") {
    SimConfig cfg;
    int crit = 0, high = 0, total = 0;
    for (int s = 0; s < 2000; ++s) {
        Rng rng(5000 + s);
        auto plan = schedule_intervals(rng, cfg);
        for (const auto& iv : plan.intervals) {
            ++total;
            if (iv.is_critical) {
                ++crit;
                if (iv.highlighted) ++high;
            }
        }
    }
    CHECK(static_cast<double>(crit) / total == doctest::Approx(0.8).epsilon(0.02));
    CHECK(static_cast<double>(high) / crit == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("simulate_task frame contract and determinism") {
    SimConfig cfg;
    auto trace = simulate_task(cfg, 42, 0);
    CHECK(trace.frames.size() == 7200);

    // highlighted critical intervals carry the flag on every frame
    for (const Frame& f : trace.frames) {
        const Interval& iv = trace.plan.intervals[f.interval];
        if (iv.is_critical) {
            REQUIRE(f.critical.has_value());
            CHECK(f.critical->highlighted == iv.highlighted);
            CHECK(f.critical->drone == iv.drone_index);
            // threshold consistency on the labeled drone
            CHECK(indicator_critical(f.drones[f.critical->drone], f.critical->kind));
        } else {
            CHECK(!f.critical.has_value());
        }
        // nominal drones never violate their own labeled threshold set
        for (int d = 0; d < cfg.n_drones; ++d) {
            bool is_crit_drone = f.critical && f.critical->drone == d;
            for (int k = 0; k < 4; ++k) {
                auto kind = static_cast<CriticalKind>(k);
                if (!(is_crit_drone && f.critical->kind == kind))
                    CHECK(!indicator_critical(f.drones[d], kind));
            }
        }
    }

    auto trace2 = simulate_task(cfg, 42, 0);
    CHECK(trace_jsonl_string(trace) == trace_jsonl_string(trace2));

    auto trace3 = simulate_task(cfg, 43, 0);
    CHECK(trace_jsonl_string(trace) != trace_jsonl_string(trace3));
}

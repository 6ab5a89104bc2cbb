#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attn/core.hpp"
#include "attn/rng.hpp"

namespace attn {

enum class RotorState { on, off };
enum class ZoneState { free, no_fly };
enum class WeatherState { clear, cloudy, rain };
enum class CriticalKind { battery, wind, rotor, zone };

const char* critical_kind_name(CriticalKind k);
IconKind critical_icon(CriticalKind k);

struct DroneState {
    double battery_pct = 100.0;
    double wind_mps = 4.0;
    RotorState rotor = RotorState::on;
    ZoneState zone = ZoneState::free;
    double h_speed_mps = 10.0;
    double altitude_m = 100.0;
    double distance_m = 0.0;
    WeatherState weather = WeatherState::clear;
    double lat = 0.0, lon = 0.0;
};

struct Route {
    double start_lat = 0.0, start_lon = 0.0;
    double end_lat = 0.0, end_lon = 0.0;
    double bearing_deg = 0.0;          // [0, 360)
    double initial_distance_m = 0.0;
};

struct LatLonBounds {
    double lat_min = 49.0, lat_max = 49.2;
    double lon_min = 6.9, lon_max = 7.1;
};

struct Interval {
    int index = 0;
    bool is_critical = false;
    CriticalKind kind = CriticalKind::battery;
    int drone_index = 0;
    bool highlighted = false;
    double onset_s = 0.0;
};

struct IntervalPlan {
    std::vector<Interval> intervals;       // exactly 20, 15 s each
    std::vector<double> question_times_s;  // consecutive gaps in [30, 60] s
};

struct FrameCritical {
    int drone = 0;
    CriticalKind kind = CriticalKind::battery;
    bool highlighted = false;
};

struct Frame {
    int interval = 0;
    int index = 0;
    double t_ms = 0.0;
    std::vector<DroneState> drones;
    std::optional<FrameCritical> critical;
    bool question = false;
};

struct CriticalEvent {
    double t_s = 0.0;
    CriticalKind kind = CriticalKind::battery;
    int drone = 0;
    bool highlighted = false;
};

struct ScenarioTrace {
    int task_id = 0;
    IntervalPlan plan;
    std::vector<Frame> frames;
    std::vector<CriticalEvent> events;
};

struct SimConfig {
    int n_drones = 4;
    double task_s = 300.0;
    double fps = 24.0;
    double interval_s = 15.0;
    double p_critical = 0.8;
    double p_highlight = 0.5;
    // Nominal dynamics (the study script names the mechanisms, not the
    // constants; everything here is configurable).
    double battery_drain_pct_per_s = 1.0 / 30.0;
    double battery_floor_pct = 10.0;
    double speed_nominal_mps = 10.0;
    double speed_noise_sigma = 0.3;
    double wind_max_nominal = 8.0;
    double wind_walk_sigma = 0.15;
    double wind_hard_cap = 9.9;          // nominal wind never crosses the 10 m/s threshold
    double altitude_nominal_m = 100.0;
    double altitude_noise_sigma = 0.2;
    double rotor_fail_descent_mps = 2.5;
    double descend_distance_frac = 0.05; // descend within 5% of initial distance
    double weather_step_s = 30.0;
    double question_gap_min_s = 30.0;
    double question_gap_max_s = 60.0;
    // Critical indicator draws.
    double crit_battery_min = 3.0, crit_battery_max = 9.0;
    double crit_wind_min = 10.0, crit_wind_max = 14.0;  // (10, 14]
    LatLonBounds bounds;
};

// Great-circle distance in meters and initial bearing in degrees.
double haversine_m(double lat1, double lon1, double lat2, double lon2);
double initial_bearing_deg(double lat1, double lon1, double lat2, double lon2);

Route plan_route(Rng& rng, const LatLonBounds& bounds);

DroneState step_state(const DroneState& state, const Route& route, double dt_s, Rng& rng,
                      const SimConfig& cfg);

IntervalPlan schedule_intervals(Rng& rng, const SimConfig& cfg);

DroneState inject_critical(const DroneState& state, CriticalKind kind, Rng& rng,
                           const SimConfig& cfg);

// True iff one of the four safety indicators is in its hazardous range.
bool indicator_critical(const DroneState& s, CriticalKind kind);

ScenarioTrace simulate_task(const SimConfig& cfg, std::uint64_t seed, int task_id = 0);

// JSON lines, one record per frame; deterministic byte-for-byte.
void write_trace_jsonl(const ScenarioTrace& trace, const std::string& path);
std::string trace_jsonl_string(const ScenarioTrace& trace);
// CSV: task_id,onset_ms,kind,drone,highlighted
void write_events_csv(const ScenarioTrace& trace, const std::string& path);

}  // namespace attn

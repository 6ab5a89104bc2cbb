#include "attn/dronesim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace attn {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEarthRadiusM = 6371000.0;

const char* kCriticalNames[4] = {"battery", "wind", "rotor", "zone"};
const char* kWeatherNames[3] = {"clear", "cloudy", "rain"};

double deg2rad(double d) { return d * kPi / 180.0; }

}  // namespace

const char* critical_kind_name(CriticalKind k) { return kCriticalNames[static_cast<int>(k)]; }

IconKind critical_icon(CriticalKind k) {
    switch (k) {
        case CriticalKind::battery: return IconKind::battery;
        case CriticalKind::wind: return IconKind::wind;
        case CriticalKind::rotor: return IconKind::rotor;
        case CriticalKind::zone: return IconKind::zone;
    }
    return IconKind::battery;
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    double p1 = deg2rad(lat1), p2 = deg2rad(lat2);
    double dp = deg2rad(lat2 - lat1), dl = deg2rad(lon2 - lon1);
    double a = std::sin(dp / 2) * std::sin(dp / 2) +
               std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

double initial_bearing_deg(double lat1, double lon1, double lat2, double lon2) {
    double p1 = deg2rad(lat1), p2 = deg2rad(lat2), dl = deg2rad(lon2 - lon1);
    double y = std::sin(dl) * std::cos(p2);
    double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
    double b = std::atan2(y, x) * 180.0 / kPi;
    if (b < 0) b += 360.0;
    return b;
}

Route plan_route(Rng& rng, const LatLonBounds& bounds) {
    if (!(bounds.lat_max > bounds.lat_min) || !(bounds.lon_max > bounds.lon_min))
        throw std::invalid_argument("degenerate lat/lon bounds");
    Route r;
    r.start_lat = rng.uniform(bounds.lat_min, bounds.lat_max);
    r.start_lon = rng.uniform(bounds.lon_min, bounds.lon_max);
    r.end_lat = rng.uniform(bounds.lat_min, bounds.lat_max);
    r.end_lon = rng.uniform(bounds.lon_min, bounds.lon_max);
    r.initial_distance_m = haversine_m(r.start_lat, r.start_lon, r.end_lat, r.end_lon);
    r.bearing_deg = initial_bearing_deg(r.start_lat, r.start_lon, r.end_lat, r.end_lon);
    return r;
}

bool indicator_critical(const DroneState& s, CriticalKind kind) {
    switch (kind) {
        case CriticalKind::battery: return s.battery_pct < 10.0;
        case CriticalKind::wind: return s.wind_mps > 10.0;
        case CriticalKind::rotor: return s.rotor == RotorState::off;
        case CriticalKind::zone: return s.zone == ZoneState::no_fly;
    }
    return false;
}

DroneState step_state(const DroneState& state, const Route& route, double dt_s, Rng& rng,
                      const SimConfig& cfg) {
    if (dt_s < 0.0) throw std::invalid_argument("step_state: dt must be >= 0");
    if (dt_s == 0.0) return state;
    DroneState s = state;

    s.battery_pct = std::max(cfg.battery_floor_pct,
                             s.battery_pct - cfg.battery_drain_pct_per_s * dt_s);

    // Speed tapers linearly inside the final 5% of the route.
    double near = cfg.descend_distance_frac * std::max(route.initial_distance_m, 1e-9);
    double taper = std::min(1.0, s.distance_m / near);
    s.h_speed_mps = std::max(0.0, cfg.speed_nominal_mps * taper +
                                      rng.normal(0.0, cfg.speed_noise_sigma));
    s.distance_m = std::max(0.0, s.distance_m - s.h_speed_mps * dt_s);

    if (s.rotor == RotorState::off) {
        s.altitude_m = std::max(0.0, s.altitude_m - cfg.rotor_fail_descent_mps * dt_s);
    } else if (s.distance_m < near) {
        s.altitude_m = std::max(0.0, s.altitude_m - cfg.rotor_fail_descent_mps * dt_s);
    } else {
        s.altitude_m += 0.05 * (cfg.altitude_nominal_m - s.altitude_m) * dt_s +
                        rng.normal(0.0, cfg.altitude_noise_sigma) * dt_s;
    }

    s.wind_mps = std::min(cfg.wind_hard_cap,
                          std::max(0.0, s.wind_mps + rng.normal(0.0, cfg.wind_walk_sigma *
                                                                          std::sqrt(dt_s))));

    double br = deg2rad(route.bearing_deg);
    double dist = s.h_speed_mps * dt_s;
    s.lat += dist * std::cos(br) / 111320.0;
    s.lon += dist * std::sin(br) / (111320.0 * std::max(0.1, std::cos(deg2rad(s.lat))));
    return s;
}

IntervalPlan schedule_intervals(Rng& rng, const SimConfig& cfg) {
    if (cfg.p_critical < 0 || cfg.p_critical > 1 || cfg.p_highlight < 0 || cfg.p_highlight > 1)
        throw std::invalid_argument("probabilities must be in [0,1]");
    IntervalPlan plan;
    int n_intervals = static_cast<int>(cfg.task_s / cfg.interval_s);
    for (int i = 0; i < n_intervals; ++i) {
        Interval iv;
        iv.index = i;
        iv.onset_s = i * cfg.interval_s;
        iv.is_critical = rng.bernoulli(cfg.p_critical);
        if (iv.is_critical) {
            iv.kind = static_cast<CriticalKind>(rng.uniform_int(4));
            iv.drone_index = rng.uniform_int(cfg.n_drones);
            iv.highlighted = rng.bernoulli(cfg.p_highlight);
        }
        plan.intervals.push_back(iv);
    }
    double t = rng.uniform(cfg.question_gap_min_s, cfg.question_gap_max_s);
    while (t < cfg.task_s) {
        plan.question_times_s.push_back(t);
        t += rng.uniform(cfg.question_gap_min_s, cfg.question_gap_max_s);
    }
    return plan;
}

DroneState inject_critical(const DroneState& state, CriticalKind kind, Rng& rng,
                           const SimConfig& cfg) {
    DroneState s = state;
    switch (kind) {
        case CriticalKind::battery:
            s.battery_pct = rng.uniform(cfg.crit_battery_min, cfg.crit_battery_max);
            break;
        case CriticalKind::wind: {
            double u = 1.0 - rng.uniform01();  // (0, 1]
            s.wind_mps = cfg.crit_wind_min + u * (cfg.crit_wind_max - cfg.crit_wind_min);
            break;
        }
        case CriticalKind::rotor:
            s.rotor = RotorState::off;
            break;
        case CriticalKind::zone:
            s.zone = ZoneState::no_fly;
            break;
    }
    return s;
}

ScenarioTrace simulate_task(const SimConfig& cfg, std::uint64_t seed, int task_id) {
    Rng root(seed);
    Rng plan_rng = root.fork(1);
    Rng crit_rng = root.fork(2);
    Rng weather_rng = root.fork(3);

    ScenarioTrace trace;
    trace.task_id = task_id;
    trace.plan = schedule_intervals(plan_rng, cfg);

    std::vector<Route> routes(cfg.n_drones);
    std::vector<DroneState> nominal(cfg.n_drones);
    std::vector<Rng> drone_rng;
    for (int d = 0; d < cfg.n_drones; ++d) {
        drone_rng.push_back(root.fork(100 + static_cast<std::uint64_t>(d)));
        routes[d] = plan_route(drone_rng[d], cfg.bounds);
        DroneState& s = nominal[d];
        s.battery_pct = drone_rng[d].uniform(60.0, 100.0);
        s.wind_mps = drone_rng[d].uniform(0.0, cfg.wind_max_nominal);
        s.h_speed_mps = cfg.speed_nominal_mps;
        s.altitude_m = cfg.altitude_nominal_m;
        s.distance_m = routes[d].initial_distance_m;
        s.weather = static_cast<WeatherState>(weather_rng.uniform_int(3));
        s.lat = routes[d].start_lat;
        s.lon = routes[d].start_lon;
    }

    struct Override {
        bool active = false;
        CriticalKind kind = CriticalKind::battery;
        double battery_val = 0.0, wind_val = 0.0;
        double onset_s = 0.0;
        double base_altitude = 0.0;
    };
    std::vector<Override> overrides(cfg.n_drones);

    for (const Interval& iv : trace.plan.intervals) {
        if (iv.is_critical)
            trace.events.push_back({iv.onset_s, iv.kind, iv.drone_index, iv.highlighted});
    }

    const int n_frames = static_cast<int>(std::lround(cfg.task_s * cfg.fps));
    const double dt = 1.0 / cfg.fps;
    const int n_intervals = static_cast<int>(trace.plan.intervals.size());
    int active_interval = -1;

    std::vector<char> question_frame(n_frames, 0);
    for (double q : trace.plan.question_times_s) {
        int f = static_cast<int>(q * cfg.fps);
        if (f >= 0 && f < n_frames) question_frame[f] = 1;
    }

    trace.frames.reserve(n_frames);
    for (int f = 0; f < n_frames; ++f) {
        const double t = f / cfg.fps;
        int iv_idx = std::min(n_intervals - 1, static_cast<int>(t / cfg.interval_s));
        const Interval& iv = trace.plan.intervals[iv_idx];

        if (iv_idx != active_interval) {
            active_interval = iv_idx;
            for (auto& ov : overrides) ov.active = false;
            if (iv.is_critical) {
                Override& ov = overrides[iv.drone_index];
                ov.active = true;
                ov.kind = iv.kind;
                ov.onset_s = iv.onset_s;
                ov.base_altitude = nominal[iv.drone_index].altitude_m;
                DroneState injected =
                    inject_critical(nominal[iv.drone_index], iv.kind, crit_rng, cfg);
                ov.battery_val = injected.battery_pct;
                ov.wind_val = injected.wind_mps;
            }
        }

        // Weather as a lazy 3-state chain, stepped on the 30 s boundary.
        if (f > 0 && std::fmod(t, cfg.weather_step_s) < dt / 2) {
            for (int d = 0; d < cfg.n_drones; ++d) {
                if (weather_rng.bernoulli(0.2))
                    nominal[d].weather = static_cast<WeatherState>(weather_rng.uniform_int(3));
            }
        }

        Frame frame;
        frame.interval = iv_idx;
        frame.index = f;
        frame.t_ms = t * 1000.0;
        frame.question = question_frame[f] != 0;
        frame.drones.resize(cfg.n_drones);
        for (int d = 0; d < cfg.n_drones; ++d) {
            DroneState shown = nominal[d];
            const Override& ov = overrides[d];
            if (ov.active) {
                switch (ov.kind) {
                    case CriticalKind::battery: shown.battery_pct = ov.battery_val; break;
                    case CriticalKind::wind: shown.wind_mps = ov.wind_val; break;
                    case CriticalKind::rotor:
                        shown.rotor = RotorState::off;
                        shown.altitude_m = std::max(
                            0.0, ov.base_altitude - cfg.rotor_fail_descent_mps * (t - ov.onset_s));
                        break;
                    case CriticalKind::zone: shown.zone = ZoneState::no_fly; break;
                }
            }
            frame.drones[d] = shown;
        }
        if (iv.is_critical) frame.critical = FrameCritical{iv.drone_index, iv.kind, iv.highlighted};
        trace.frames.push_back(std::move(frame));

        for (int d = 0; d < cfg.n_drones; ++d)
            nominal[d] = step_state(nominal[d], routes[d], dt, drone_rng[d], cfg);
    }
    return trace;
}

namespace {

void append_drone_json(std::string& out, const DroneState& s) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"battery\":%.3f,\"wind\":%.3f,\"rotor\":\"%s\",\"zone\":\"%s\","
                  "\"h_speed\":%.3f,\"alt\":%.3f,\"dist\":%.3f,\"weather\":\"%s\"}",
                  s.battery_pct, s.wind_mps, s.rotor == RotorState::on ? "on" : "off",
                  s.zone == ZoneState::free ? "free" : "no_fly", s.h_speed_mps, s.altitude_m,
                  s.distance_m, kWeatherNames[static_cast<int>(s.weather)]);
    out += buf;
}

}  // namespace

std::string trace_jsonl_string(const ScenarioTrace& trace) {
    std::string out;
    out.reserve(trace.frames.size() * 512);
    char buf[256];
    for (const Frame& f : trace.frames) {
        std::snprintf(buf, sizeof(buf), "{\"task_id\":%d,\"interval\":%d,\"frame\":%d,\"t_ms\":%.3f,\"drones\":[",
                      trace.task_id, f.interval, f.index, f.t_ms);
        out += buf;
        for (std::size_t d = 0; d < f.drones.size(); ++d) {
            if (d) out += ',';
            append_drone_json(out, f.drones[d]);
        }
        out += "],\"critical\":";
        if (f.critical) {
            std::snprintf(buf, sizeof(buf), "{\"drone\":%d,\"kind\":\"%s\",\"highlighted\":%s}",
                          f.critical->drone, critical_kind_name(f.critical->kind),
                          f.critical->highlighted ? "true" : "false");
            out += buf;
        } else {
            out += "null";
        }
        out += ",\"question\":";
        out += f.question ? "true" : "false";
        out += "}\n";
    }
    return out;
}

void write_trace_jsonl(const ScenarioTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    out << trace_jsonl_string(trace);
}

void write_events_csv(const ScenarioTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write events csv: " + path);
    out << "task_id,onset_ms,kind,drone,highlighted\n";
    char buf[128];
    for (const CriticalEvent& e : trace.events) {
        std::snprintf(buf, sizeof(buf), "%d,%.0f,%s,%d,%d\n", trace.task_id, e.t_s * 1000.0,
                      critical_kind_name(e.kind), e.drone, e.highlighted ? 1 : 0);
        out << buf;
    }
}

}  // namespace attn

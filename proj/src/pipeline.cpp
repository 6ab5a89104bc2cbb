#include "attn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "attn/gazeproc.hpp"
#include "attn/itti.hpp"
#include "attn/render.hpp"
#include "attn/rng.hpp"

namespace fs = std::filesystem;

namespace attn {

// ------------------------------------------------------------------ config --

namespace {

// Visits every config field as (key, typed pointer); save and load share the
// same registry so the two can never drift apart.
template <typename F>
void for_each_field(PipelineConfig& c, F&& f) {
    f("seed", &c.seed);
    f("participants", &c.participants);
    f("tasks", &c.tasks);
    f("layout", &c.layout_path);
    f("out_dir", &c.out_dir);

    f("fixation.dispersion_px", &c.fixation_dispersion_px);
    f("fixation.min_duration_ms", &c.fixation_min_dur_ms);
    f("saliency.smooth_window_px", &c.smooth_window_px);
    f("quality.max_offset_px", &c.quality_max_offset_px);

    f("grid.frame_rate_hz", &c.grid.frame_rate_hz);
    f("grid.ns_step_s", &c.grid.ns_step_s);
    f("grid.window_start_s", &c.grid.window_start_s);
    f("grid.window_end_s", &c.grid.window_end_s);
    f("grid.steps", &c.grid.steps);

    f("sim.n_drones", &c.sim.n_drones);
    f("sim.task_s", &c.sim.task_s);
    f("sim.fps", &c.sim.fps);  // 24 Hz -> one frame every ~42 ms
    f("sim.interval_s", &c.sim.interval_s);
    f("sim.p_critical", &c.sim.p_critical);
    f("sim.p_highlight", &c.sim.p_highlight);
    f("sim.battery_drain_pct_per_s", &c.sim.battery_drain_pct_per_s);
    f("sim.battery_floor_pct", &c.sim.battery_floor_pct);
    f("sim.speed_nominal_mps", &c.sim.speed_nominal_mps);
    f("sim.speed_noise_sigma", &c.sim.speed_noise_sigma);
    f("sim.wind_max_nominal", &c.sim.wind_max_nominal);
    f("sim.wind_walk_sigma", &c.sim.wind_walk_sigma);
    f("sim.wind_hard_cap", &c.sim.wind_hard_cap);
    f("sim.altitude_nominal_m", &c.sim.altitude_nominal_m);
    f("sim.altitude_noise_sigma", &c.sim.altitude_noise_sigma);
    f("sim.rotor_fail_descent_mps", &c.sim.rotor_fail_descent_mps);
    f("sim.descend_distance_frac", &c.sim.descend_distance_frac);
    f("sim.weather_step_s", &c.sim.weather_step_s);
    f("sim.question_gap_min_s", &c.sim.question_gap_min_s);
    f("sim.question_gap_max_s", &c.sim.question_gap_max_s);
    f("sim.crit_battery_min", &c.sim.crit_battery_min);
    f("sim.crit_battery_max", &c.sim.crit_battery_max);
    f("sim.crit_wind_min", &c.sim.crit_wind_min);
    f("sim.crit_wind_max", &c.sim.crit_wind_max);

    f("behavior.fixation_dur_log_mu", &c.behavior.fixation_dur_log_mu);
    f("behavior.fixation_dur_log_sigma", &c.behavior.fixation_dur_log_sigma);
    f("behavior.fixation_dur_min_ms", &c.behavior.fixation_dur_min_ms);
    f("behavior.fixation_dur_max_ms", &c.behavior.fixation_dur_max_ms);
    f("behavior.saccade_noise_px", &c.behavior.saccade_noise_px);
    f("behavior.tremor_px", &c.behavior.tremor_px);
    f("behavior.capture_prob", &c.behavior.capture_prob);
    f("behavior.capture_latency_shape", &c.behavior.capture_latency_shape);
    f("behavior.capture_latency_scale", &c.behavior.capture_latency_scale);
    f("behavior.capture_latency_shift_s", &c.behavior.capture_latency_shift_s);
    f("behavior.dwell_log_mu", &c.behavior.dwell_log_mu);
    f("behavior.dwell_log_sigma", &c.behavior.dwell_log_sigma);
    f("behavior.baseline_detect_hazard", &c.behavior.baseline_detect_hazard);
    f("behavior.motor_delay_mean_s", &c.behavior.motor_delay_mean_s);
    f("behavior.motor_delay_sigma_s", &c.behavior.motor_delay_sigma_s);
    f("behavior.sample_rate_hz", &c.behavior.sample_rate_hz);

    f("dataset.highlighted_trials", &c.dataset_highlighted_trials);
    f("dataset.plain_trials", &c.dataset_plain_trials);
    f("dataset.slices_per_trial", &c.dataset_slices_per_trial);
    f("dataset.image_size", &c.dataset_image_size);

    f("train.batch", &c.train.batch);
    f("train.lr", &c.train.lr);
    f("train.lr_factor", &c.train.lr_factor);
    f("train.plateau_epochs", &c.train.plateau_epochs);
    f("train.early_stop_epochs", &c.train.early_stop_epochs);
    f("train.max_epochs", &c.train.max_epochs);
    f("train.split_train", &c.train.split_train);
    f("train.split_val", &c.train.split_val);
    f("train.split_test", &c.train.split_test);
    f("train.adam_beta1", &c.train.adam_beta1);
    f("train.adam_beta2", &c.train.adam_beta2);
    f("train.adam_eps", &c.train.adam_eps);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // prefer the short form when it round-trips
    char shortbuf[64];
    std::snprintf(shortbuf, sizeof shortbuf, "%g", v);
    if (std::strtod(shortbuf, nullptr) == v) return shortbuf;
    return buf;
}

struct FieldWriter {
    std::ostringstream& out;
    void operator()(const char* key, double* p) const { out << key << " = " << format_double(*p) << "\n"; }
    void operator()(const char* key, int* p) const { out << key << " = " << *p << "\n"; }
    void operator()(const char* key, std::uint64_t* p) const { out << key << " = " << *p << "\n"; }
    void operator()(const char* key, std::string* p) const { out << key << " = " << *p << "\n"; }
};

struct FieldSetter {
    const std::string& key;
    const std::string& value;
    bool* matched;
    void operator()(const char* k, double* p) const {
        if (key == k) { *p = std::stod(value); *matched = true; }
    }
    void operator()(const char* k, int* p) const {
        if (key == k) { *p = std::stoi(value); *matched = true; }
    }
    void operator()(const char* k, std::uint64_t* p) const {
        if (key == k) { *p = std::stoull(value); *matched = true; }
    }
    void operator()(const char* k, std::string* p) const {
        if (key == k) { *p = value; *matched = true; }
    }
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

const char* scan_strategy_name(ScanStrategy s) {
    return s == ScanStrategy::round_robin ? "round_robin" : "random_walk";
}

}  // namespace

std::string pipeline_config_text(const PipelineConfig& cfg) {
    PipelineConfig c = cfg;  // for_each_field needs mutable access
    std::ostringstream out;
    out << "# attnlab pipeline configuration (key = value, '#' comments)\n";
    out << "variant = " << hism_variant_name(c.variant) << "\n";
    out << "behavior.scan_strategy = " << scan_strategy_name(c.behavior.scan_strategy) << "\n";
    FieldWriter w{out};
    for_each_field(c, w);
    return out.str();
}

PipelineConfig parse_pipeline_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": missing '='");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "variant") {
            cfg.variant = hism_variant_from_name(value);
            continue;
        }
        if (key == "behavior.scan_strategy") {
            if (value == "round_robin")
                cfg.behavior.scan_strategy = ScanStrategy::round_robin;
            else if (value == "random_walk")
                cfg.behavior.scan_strategy = ScanStrategy::random_walk;
            else
                throw std::runtime_error("config: unknown scan strategy '" + value + "'");
            continue;
        }
        bool matched = false;
        FieldSetter s{key, value, &matched};
        for_each_field(cfg, s);
        if (!matched) throw std::runtime_error("config: unknown key '" + key + "'");
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config(ss.str());
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << pipeline_config_text(cfg);
}

DatasetConfig dataset_config_of(const PipelineConfig& cfg) {
    DatasetConfig d;
    d.participants = cfg.participants;
    d.tasks = cfg.tasks;
    d.highlighted_trials = cfg.dataset_highlighted_trials;
    d.plain_trials = cfg.dataset_plain_trials;
    d.slices_per_trial = cfg.dataset_slices_per_trial;
    d.image_size = cfg.dataset_image_size;
    d.seed = cfg.seed;
    d.sim = cfg.sim;
    d.behavior = cfg.behavior;
    d.grid = cfg.grid;
    return d;
}

// ---------------------------------------------------------------- manifest --

void write_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["stages"] = m.stages_run;
    nlohmann::json arts = nlohmann::json::array();
    for (const ManifestEntry& e : m.entries)
        arts.push_back({{"stage", e.stage}, {"path", e.path}, {"sha256", e.sha256}});
    j["artifacts"] = arts;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.stages_run = j.at("stages").get<std::vector<std::string>>();
    for (const auto& a : j.at("artifacts"))
        m.entries.push_back({a.at("stage").get<std::string>(), a.at("path").get<std::string>(),
                             a.at("sha256").get<std::string>()});
    return m;
}

const std::vector<std::string>& pipeline_stage_names() {
    static const std::vector<std::string> names = {"simulate", "gaze-gen", "fixations",
                                                   "saliency", "ns",       "dataset",
                                                   "train",    "eval",     "stats",
                                                   "export"};
    return names;
}

// ------------------------------------------------------------------ export --

namespace {

// Fixed black -> red -> yellow -> white ramp.
void ramp_color(double v, std::uint8_t* rgb) {
    v = std::clamp(v, 0.0, 1.0);
    double r, g, b;
    if (v < 1.0 / 3.0) {
        r = 3.0 * v; g = 0.0; b = 0.0;
    } else if (v < 2.0 / 3.0) {
        r = 1.0; g = 3.0 * v - 1.0; b = 0.0;
    } else {
        r = 1.0; g = 1.0; b = 3.0 * v - 2.0;
    }
    rgb[0] = static_cast<std::uint8_t>(std::lround(255.0 * r));
    rgb[1] = static_cast<std::uint8_t>(std::lround(255.0 * g));
    rgb[2] = static_cast<std::uint8_t>(std::lround(255.0 * b));
}

}  // namespace

void export_heatmap_png(const SaliencyMap& map, const std::string& path) {
    Image img(map.width, map.height);
    const double mx = map.max_value();
    const double scale = mx > 0.0 ? 1.0 / mx : 0.0;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            ramp_color(map.at(x, y) * scale, img.px(x, y));
    write_png(img, path);
}

void export_ns_svg(const NsSeries& series, const std::string& path, int n_elements) {
    const int w = 640, h = 360;
    const int ml = 50, mr = 15, mt = 15, mb = 35;
    const double pw = w - ml - mr, ph = h - mt - mb;
    const std::size_t n = series.ns.size();
    if (n == 0) throw std::runtime_error("export_ns_svg: empty series");
    const double t0 = series.t_rel_s.front(), t1 = series.t_rel_s.back();
    const double tspan = t1 > t0 ? t1 - t0 : 1.0;
    auto X = [&](double t) { return ml + pw * (t - t0) / tspan; };
    auto Y = [&](double v) { return mt + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write svg: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    // uniform 1/n baseline rule
    const double base = 1.0 / std::max(1, n_elements);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<line class=\"baseline\" x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" "
                  "stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
                  double(ml), Y(base), ml + pw, Y(base));
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.2f\" font-size=\"11\" fill=\"gray\">1/%d</text>\n",
                  ml + pw - 34.0, Y(base) - 4.0, std::max(1, n_elements));
    out << buf;
    // polyline through all points
    out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", X(series.t_rel_s[i]),
                      Y(series.ns[i]));
        out << buf;
    }
    out << "\"/>\n";
    // one marker per slice
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.2\" fill=\"#1f77b4\"/>\n",
                      X(series.t_rel_s[i]), Y(series.ns[i]));
        out << buf;
    }
    // labels
    out << "<text x=\"" << ml + pw / 2 - 60 << "\" y=\"" << h - 8
        << "\" font-size=\"12\">time from onset (s)</text>\n";
    out << "<text x=\"12\" y=\"" << mt + ph / 2
        << "\" font-size=\"12\" transform=\"rotate(-90 12 " << mt + ph / 2
        << ")\">normalized saliency</text>\n";
    out << "</svg>\n";
}

NsSeries read_ns_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read ns csv: " + path);
    NsSeries s;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty ns csv: " + path);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string t, id, ns, flag;
        if (!std::getline(ls, t, ',') || !std::getline(ls, id, ',') ||
            !std::getline(ls, ns, ',') || !std::getline(ls, flag))
            throw std::runtime_error("malformed ns csv line: " + line);
        s.element_id = id;
        s.t_rel_s.push_back(std::stod(t));
        s.ns.push_back(std::stod(ns));
        s.uniform_flag.push_back(std::stoi(flag) != 0);
    }
    return s;
}

// ------------------------------------------------------------------ stages --

namespace {

struct Runner {
    const PipelineConfig& cfg;
    Layout layout;
    fs::path out;
    Manifest manifest;

    // In-memory state handed from stage to stage.
    std::vector<ScenarioTrace> traces;
    std::vector<std::vector<GazeTrace>> gaze;                  // [task][participant]
    std::vector<std::vector<std::vector<Fixation>>> fixations; // [task][participant]
    std::vector<std::vector<Fixation>> pooled;                 // [task]
    std::vector<SaliencyMap> task_maps;                        // [task]
    std::vector<NsSeries> ns_series;                           // per critical event of task 0
    HismDataset ds;
    TrainResult tr;
    bool have_ds = false, have_tr = false;

    explicit Runner(const PipelineConfig& c) : cfg(c) {
        layout = c.layout_path.empty() ? default_layout() : load_layout(c.layout_path);
        layout.validate();
        out = fs::path(c.out_dir);
        fs::create_directories(out);
        manifest.seed = c.seed;
    }

    void add(const std::string& stage, const std::string& rel) {
        manifest.entries.push_back({stage, rel, sha256_file((out / rel).string())});
    }

    std::uint64_t task_seed(int task) const {
        return hash_u64(cfg.seed ^ hash_u64(1000 + task));
    }
    std::uint64_t participant_seed(int task, int p) const {
        return hash_u64(cfg.seed ^ hash_u64(7000 + 100 * task + p));
    }

    void stage_simulate() {
        traces.clear();
        for (int t = 0; t < cfg.tasks; ++t) {
            traces.push_back(simulate_task(cfg.sim, task_seed(t), t));
            std::string trace_rel = "trace_task" + std::to_string(t) + ".jsonl";
            std::string events_rel = "events_task" + std::to_string(t) + ".csv";
            write_trace_jsonl(traces.back(), (out / trace_rel).string());
            write_events_csv(traces.back(), (out / events_rel).string());
            add("simulate", trace_rel);
            add("simulate", events_rel);
        }
    }

    void stage_gaze_gen() {
        gaze.assign(traces.size(), {});
        for (std::size_t t = 0; t < traces.size(); ++t) {
            for (int p = 0; p < cfg.participants; ++p) {
                gaze[t].push_back(generate_gaze(traces[t], layout, cfg.behavior,
                                                participant_seed(static_cast<int>(t), p), p));
                std::string rel = "gaze_task" + std::to_string(t) + "_p" + std::to_string(p) +
                                  ".csv";
                write_gaze_csv(gaze[t].back(), (out / rel).string());
                add("gaze-gen", rel);
            }
        }
    }

    void stage_fixations() {
        fixations.assign(gaze.size(), {});
        pooled.assign(gaze.size(), {});
        for (std::size_t t = 0; t < gaze.size(); ++t) {
            for (std::size_t p = 0; p < gaze[t].size(); ++p) {
                std::vector<Fixation> fx = detect_fixations(
                    gaze[t][p].samples, cfg.fixation_dispersion_px, cfg.fixation_min_dur_ms);
                pooled[t].insert(pooled[t].end(), fx.begin(), fx.end());
                std::string rel = "fixations_task" + std::to_string(t) + "_p" +
                                  std::to_string(p) + ".csv";
                write_fixation_csv(fx, (out / rel).string());
                add("fixations", rel);
                fixations[t].push_back(std::move(fx));
            }
        }
    }

    void stage_saliency() {
        task_maps.clear();
        for (std::size_t t = 0; t < pooled.size(); ++t) {
            SaliencyMap fm = fixation_map(pooled[t], 0.0, cfg.sim.task_s * 1000.0,
                                          layout.width_px, layout.height_px);
            SaliencyMap sm = smooth_map(fm, cfg.smooth_window_px);
            std::string smap_rel = "saliency_task" + std::to_string(t) + ".smap";
            std::string png_rel = "heatmap_task" + std::to_string(t) + ".png";
            write_smap(sm, (out / smap_rel).string());
            export_heatmap_png(sm, (out / png_rel).string());
            add("saliency", smap_rel);
            add("saliency", png_rel);
            task_maps.push_back(std::move(sm));
        }
    }

    void stage_ns() {
        ns_series.clear();
        for (std::size_t t = 0; t < traces.size(); ++t) {
            int written = 0;
            for (const Interval& iv : traces[t].plan.intervals) {
                if (!iv.is_critical) continue;
                int element = layout.find(iv.drone_index, critical_icon(iv.kind));
                if (element < 0) continue;
                NsSeries s = ns_time_series(pooled[t], layout, element, cfg.grid, iv.onset_s,
                                            cfg.smooth_window_px);
                std::string rel = "ns_task" + std::to_string(t) + "_iv" +
                                  std::to_string(iv.index) + ".csv";
                write_ns_csv(s, (out / rel).string());
                add("ns", rel);
                if (t == 0) ns_series.push_back(std::move(s));
                ++written;
            }
            if (written == 0)
                throw std::runtime_error("task " + std::to_string(t) +
                                         " produced no critical intervals");
        }
    }

    void stage_dataset() {
        ds = build_dataset(dataset_config_of(cfg), layout);
        have_ds = true;
        std::string trials_rel = "dataset_trials.csv";
        {
            std::ofstream o(out / trials_rel);
            o << "trial,task_id,interval,element,highlighted,onset_s\n";
            for (std::size_t i = 0; i < ds.trials.size(); ++i) {
                const HismTrial& tr0 = ds.trials[i];
                o << i << ',' << tr0.task_id << ',' << tr0.interval_index << ','
                  << tr0.element_index << ',' << (tr0.highlighted ? 1 : 0) << ','
                  << tr0.onset_s << "\n";
            }
        }
        std::string samples_rel = "dataset_samples.csv";
        {
            std::ofstream o(out / samples_rel);
            o << "trial,slice,highlighted,target\n";
            char line[96];
            for (const HismSample& s : ds.samples) {
                std::snprintf(line, sizeof line, "%d,%d,%d,%.9f\n", s.trial, s.slice,
                              s.highlighted ? 1 : 0, s.target);
                o << line;
            }
        }
        add("dataset", trials_rel);
        add("dataset", samples_rel);
    }

    void stage_train() {
        tr = hism_train(ds, cfg.variant, cfg.train, cfg.seed);
        have_tr = true;
        std::string ckpt_rel = "model.ckpt";
        std::string hist_rel = "history.csv";
        save_checkpoint(tr.model, (out / ckpt_rel).string());
        write_history_csv(tr.history, (out / hist_rel).string());
        add("train", ckpt_rel);
        add("train", hist_rel);
    }

    // Per-trial predicted/target series over the sample slices, eval mode.
    void trial_series(int trial, std::vector<double>& pred, std::vector<double>& gt) const {
        pred.clear();
        gt.clear();
        for (const HismSample& s : ds.samples)
            if (s.trial == trial) {
                pred.push_back(hism_forward(tr.model, ds.images[s.image], s.tin));
                gt.push_back(s.target);
            }
    }

    static SaliencyMap series_map(const std::vector<double>& v) {
        SaliencyMap m(static_cast<int>(v.size()), 1);
        m.values.assign(v.begin(), v.end());
        return m;
    }

    MetricReport split_report(const std::string& name, const std::vector<int>& trials) const {
        MetricReport r;
        r.split = name;
        if (trials.empty()) return r;
        std::vector<double> all_pred, all_gt;
        double auc = 0, nss_v = 0, sim_v = 0, cc_v = 0, kl_v = 0;
        int n_map = 0;
        for (int t : trials) {
            std::vector<double> pred, gt;
            trial_series(t, pred, gt);
            all_pred.insert(all_pred.end(), pred.begin(), pred.end());
            all_gt.insert(all_gt.end(), gt.begin(), gt.end());
            SaliencyMap pm = series_map(pred), gm = series_map(gt);
            // map metrics need attention mass on both sides; an all-zero
            // target series (no fixation ever reached the icon) contributes
            // regression terms only
            if (gm.sum() <= 0.0 || pm.sum() <= 0.0) continue;
            int peak = static_cast<int>(std::max_element(gt.begin(), gt.end()) - gt.begin());
            std::vector<PixelPoint> fix = {{peak, 0}};
            auc += auc_judd(pm, fix);
            nss_v += nss(pm, fix);
            sim_v += sim(pm, gm);
            cc_v += cc(pm, gm);
            kl_v += kl_div(gm, pm);
            ++n_map;
        }
        RegressionMetrics reg = regression_metrics(all_pred, all_gt);
        r.mse = reg.mse;
        r.mae = reg.mae;
        r.has_regression = true;
        if (n_map > 0) {
            r.auc = auc / n_map;
            r.nss = nss_v / n_map;
            r.sim = sim_v / n_map;
            r.cc = cc_v / n_map;
            r.kl = kl_v / n_map;
            r.has_pixel = true;
        }
        return r;
    }

    void split_test_trials(std::vector<int>& hl, std::vector<int>& plain) const {
        hl.clear();
        plain.clear();
        for (int t : tr.split.test_trials)
            (ds.trials[t].highlighted ? hl : plain).push_back(t);
    }

    void stage_eval() {
        std::vector<int> hl, plain;
        split_test_trials(hl, plain);
        std::vector<MetricReport> reports;
        reports.push_back(split_report("highlight", hl));
        reports.push_back(split_report("no_highlight", plain));
        reports.push_back(split_report("all", tr.split.test_trials));
        std::string rel = "report.csv";
        write_report_csv(reports, (out / rel).string());
        add("eval", rel);
    }

    void stage_stats() {
        std::vector<int> hl, plain;
        split_test_trials(hl, plain);
        auto trial_means = [&](const std::vector<int>& trials) {
            std::vector<double> means;
            for (int t : trials) {
                std::vector<double> pred, gt;
                trial_series(t, pred, gt);
                double m = 0;
                for (double v : pred) m += v;
                means.push_back(m / static_cast<double>(pred.size()));
            }
            return means;
        };
        std::vector<double> m_hl = trial_means(hl), m_plain = trial_means(plain);
        std::vector<double> all_pred, all_gt;
        for (int t : tr.split.test_trials) {
            std::vector<double> pred, gt;
            trial_series(t, pred, gt);
            all_pred.insert(all_pred.end(), pred.begin(), pred.end());
            all_gt.insert(all_gt.end(), gt.begin(), gt.end());
        }
        std::vector<StatsRow> rows;
        auto push = [&rows](const std::string& metric, const std::string& a,
                            const std::string& b, const std::string& test, const TestResult& r) {
            rows.push_back({metric, a, b, test, r.statistic, r.df, r.p_value});
        };
        if (m_hl.size() >= 3) push("mean_pred_ns", "highlight", "-", "shapiro_wilk",
                                   shapiro_wilk(m_hl));
        if (m_plain.size() >= 3) push("mean_pred_ns", "no_highlight", "-", "shapiro_wilk",
                                      shapiro_wilk(m_plain));
        if (m_hl.size() >= 2 && m_plain.size() >= 2) {
            push("mean_pred_ns", "highlight", "no_highlight", "t_ind",
                 t_test_ind(m_hl, m_plain));
            push("mean_pred_ns", "highlight", "no_highlight", "mann_whitney",
                 mann_whitney_u(m_hl, m_plain));
        }
        if (all_pred.size() >= 3)
            push("pred_vs_target", "test", "-", "pearson", pearson(all_pred, all_gt));
        std::string rel = "stats.csv";
        write_stats_csv(rows, (out / rel).string());
        add("stats", rel);
    }

    void stage_export() {
        fs::create_directories(out / "export");
        if (!task_maps.empty()) {
            std::string rel = "export/heatmap_task0.png";
            export_heatmap_png(task_maps[0], (out / rel).string());
            add("export", rel);
        }
        if (!ns_series.empty()) {
            std::string svg_rel = "export/ns_task0.svg";
            std::string csv_rel = "export/ns_task0.csv";
            export_ns_svg(ns_series[0], (out / svg_rel).string(),
                          static_cast<int>(layout.elements.size()));
            write_ns_csv(ns_series[0], (out / csv_rel).string());
            add("export", svg_rel);
            add("export", csv_rel);
        }
    }

    void run_stage(const std::string& name) {
        if (name == "simulate") stage_simulate();
        else if (name == "gaze-gen") stage_gaze_gen();
        else if (name == "fixations") stage_fixations();
        else if (name == "saliency") stage_saliency();
        else if (name == "ns") stage_ns();
        else if (name == "dataset") stage_dataset();
        else if (name == "train") stage_train();
        else if (name == "eval") stage_eval();
        else if (name == "stats") stage_stats();
        else if (name == "export") stage_export();
        else throw std::runtime_error("unknown stage: " + name);
    }
};

}  // namespace

Manifest run_pipeline(const PipelineConfig& cfg, const std::string& last_stage) {
    const std::vector<std::string>& names = pipeline_stage_names();
    if (!last_stage.empty() &&
        std::find(names.begin(), names.end(), last_stage) == names.end())
        throw StageError(last_stage, "unknown stage: " + last_stage);

    static const std::map<std::string, std::vector<std::string>> deps = {
        {"simulate", {}},
        {"gaze-gen", {"simulate"}},
        {"fixations", {"gaze-gen"}},
        {"saliency", {"fixations"}},
        {"ns", {"fixations"}},
        {"dataset", {}},
        {"train", {"dataset"}},
        {"eval", {"train"}},
        {"stats", {"train"}},
        {"export", {"saliency", "ns"}},
    };

    // Stages to run: everything, or the requested stage's dependency closure.
    std::map<std::string, bool> wanted;
    if (last_stage.empty()) {
        for (const std::string& n : names) wanted[n] = true;
    } else {
        std::function<void(const std::string&)> mark = [&](const std::string& n) {
            if (wanted[n]) return;
            wanted[n] = true;
            for (const std::string& d : deps.at(n)) mark(d);
        };
        mark(last_stage);
    }

    Runner runner(cfg);
    for (const std::string& name : names) {
        if (!wanted[name]) continue;
        try {
            runner.run_stage(name);
        } catch (const std::exception& e) {
            // keep partial artifacts and a partial manifest on disk
            runner.manifest.stages_run.push_back(name);
            write_manifest(runner.manifest, (runner.out / "manifest.json").string());
            throw StageError(name, std::string("stage ") + name + " failed: " + e.what());
        }
        runner.manifest.stages_run.push_back(name);
        if (name == last_stage) break;
    }
    write_manifest(runner.manifest, (runner.out / "manifest.json").string());
    return runner.manifest;
}

}  // namespace attn

// attnlab: end-to-end lab for temporal visual attention under dynamic
// highlights. Every subcommand runs the pipeline stages it depends on from
// the shared key-value config; `pipeline` runs everything.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attn/gazeproc.hpp"
#include "attn/hism.hpp"
#include "attn/itti.hpp"
#include "attn/pipeline.hpp"
#include "attn/render.hpp"
#include "attn/rng.hpp"

namespace fs = std::filesystem;
using namespace attn;

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    std::string stage;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

PipelineConfig make_config(const CliOptions& opt) {
    PipelineConfig cfg;
    if (!opt.config_path.empty()) cfg = load_pipeline_config(opt.config_path);
    if (opt.seed_set) cfg.seed = opt.seed;
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (!opt.variant.empty()) cfg.variant = hism_variant_from_name(opt.variant);
    return cfg;
}

// Bottom-up ITTI saliency of one rendered frame: the first highlighted
// critical interval of task 0 (falling back to a plain frame).
int run_itti(const PipelineConfig& cfg) {
    Layout layout = cfg.layout_path.empty() ? default_layout() : load_layout(cfg.layout_path);
    ScenarioTrace trace = simulate_task(cfg.sim, hash_u64(cfg.seed ^ hash_u64(1000)), 0);
    int highlighted = -1;
    for (const Interval& iv : trace.plan.intervals)
        if (iv.is_critical && iv.highlighted) {
            highlighted = layout.find(iv.drone_index, critical_icon(iv.kind));
            break;
        }
    Image frame = render_layout(layout, highlighted);
    SaliencyMap sal = itti_saliency(frame);
    fs::create_directories(cfg.out_dir);
    fs::path out(cfg.out_dir);
    write_smap(sal, (out / "itti.smap").string());
    export_heatmap_png(sal, (out / "itti_heatmap.png").string());
    std::printf("itti: wrote %s and %s (highlighted element %d)\n",
                (out / "itti.smap").c_str(), (out / "itti_heatmap.png").c_str(), highlighted);
    return 0;
}

// Predicted NS series for every highlighted trial of the dataset's test
// split, using the checkpoint written by `train`.
int run_predict(const PipelineConfig& cfg) {
    fs::path out(cfg.out_dir);
    fs::path ckpt = out / "model.ckpt";
    if (!fs::exists(ckpt))
        throw std::runtime_error("no checkpoint at " + ckpt.string() + "; run train first");
    HismModel model = load_checkpoint(ckpt.string());

    Layout layout = cfg.layout_path.empty() ? default_layout() : load_layout(cfg.layout_path);
    HismDataset ds = build_dataset(dataset_config_of(cfg), layout);
    SplitIndices split = split_trials(ds, cfg.train, cfg.seed);

    std::ofstream csv(out / "predictions.csv");
    csv << "trial,task_id,interval,highlighted,t_rel_s,pred_ns\n";
    int written = 0;
    for (int t : split.test_trials) {
        const HismTrial& trial = ds.trials[t];
        if (!trial.highlighted) continue;
        ScenarioTrace trace = simulate_task(
            cfg.sim, hash_u64(cfg.seed ^ hash_u64(1000 + trial.task_id)), trial.task_id);
        const Interval& iv = trace.plan.intervals.at(trial.interval_index);
        NsSeries series = hism_predict_series(model, trace, layout, iv, trial.element_index,
                                              cfg.grid);
        for (std::size_t k = 0; k < series.ns.size(); ++k) {
            char line[128];
            std::snprintf(line, sizeof line, "%d,%d,%d,1,%.1f,%.9f\n", t, trial.task_id,
                          trial.interval_index, series.t_rel_s[k], series.ns[k]);
            csv << line;
        }
        ++written;
    }
    std::printf("predict: wrote %s (%d highlighted test trials)\n",
                (out / "predictions.csv").c_str(), written);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal visual attention lab: simulation, gaze, saliency, prediction"};
    app.require_subcommand(1);

    CliOptions opt;
    app.add_option("--config", opt.config_path, "key-value config file")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "master seed (overrides config)")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    app.add_option("--out", opt.out_dir, "output directory (overrides config)");
    app.add_option("--variant", opt.variant, "model variant")
        ->check(CLI::IsMember({"lstm", "tranenc", "tranenc-task"}));
    app.add_option("--stage", opt.stage, "last pipeline stage to run (pipeline subcommand)");

    // Stage subcommands share the generic runner.
    const std::vector<std::pair<std::string, std::string>> stage_cmds = {
        {"simulate", "simulate the monitoring tasks"},
        {"gaze-gen", "generate synthetic participant gaze"},
        {"fixations", "detect fixations from gaze"},
        {"saliency", "pooled fixation saliency maps"},
        {"ns", "normalized saliency time series around criticals"},
        {"dataset", "assemble the training dataset"},
        {"train", "train the temporal predictor"},
        {"eval", "metric report on the held-out split"},
        {"stats", "hypothesis tests on the held-out split"},
        {"export", "figures: heatmap PNGs and NS-vs-time SVGs"},
    };
    for (const auto& [name, desc] : stage_cmds) app.add_subcommand(name, desc)->fallthrough();
    app.add_subcommand("itti", "bottom-up saliency of a rendered frame")->fallthrough();
    app.add_subcommand("predict", "predicted NS series from a trained checkpoint")->fallthrough();
    app.add_subcommand("pipeline", "run all stages (or up to --stage)")->fallthrough();

    CLI11_PARSE(app, argc, argv);

    const std::string cmd = app.get_subcommands().front()->get_name();
    std::string failing_stage = cmd;
    try {
        PipelineConfig cfg = make_config(opt);
        if (cmd == "itti") return run_itti(cfg);
        if (cmd == "predict") return run_predict(cfg);
        std::string last = cmd == "pipeline" ? opt.stage : cmd;
        try {
            Manifest m = run_pipeline(cfg, last);
            std::printf("%s: %zu artifacts in %s (manifest.json)\n", cmd.c_str(),
                        m.entries.size(), cfg.out_dir.c_str());
            return 0;
        } catch (const StageError& e) {
            failing_stage = e.stage;
            throw;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "attnlab %s: stage '%s' failed: %s\n", cmd.c_str(),
                     failing_stage.c_str(), e.what());
        return 1;
    }
}

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attn/core.hpp"
#include "attn/dronesim.hpp"
#include "attn/gazegen.hpp"
#include "attn/hism.hpp"
#include "attn/metrics.hpp"
#include "attn/saliency.hpp"
#include "attn/stats.hpp"

namespace attn {

// ------------------------------------------------------------------ hashes --

std::string sha256_hex(const void* data, std::size_t n);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

// ------------------------------------------------------------------ config --

// One human-readable key-value file drives every stage. Every tunable
// constant of the processing chain appears here with its default so any
// deviation is visible in the config itself.
struct PipelineConfig {
    std::uint64_t seed = 1;
    int participants = 28;
    int tasks = 4;
    std::string layout_path;  // empty -> built-in 1920x1200 layout
    std::string out_dir = "out";
    HismVariant variant = HismVariant::tran_enc_task;

    // I-DT fixation detection and the map/NS chain.
    double fixation_dispersion_px = 25.0;
    double fixation_min_dur_ms = 50.0;
    int smooth_window_px = 35;
    double quality_max_offset_px = 70.0;

    TimeGrid grid;
    SimConfig sim;
    BehaviorParams behavior;

    // Dataset assembly and training (participants/tasks/seed/sim/behavior/
    // grid above are forwarded into the dataset build).
    int dataset_highlighted_trials = 20;
    int dataset_plain_trials = 28;
    int dataset_slices_per_trial = 40;
    int dataset_image_size = 96;
    TrainConfig train;
};

// "key = value" lines; '#' starts a comment. Unknown keys throw.
PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);
std::string pipeline_config_text(const PipelineConfig& cfg);
PipelineConfig parse_pipeline_config(const std::string& text);

DatasetConfig dataset_config_of(const PipelineConfig& cfg);

// ------------------------------------------------------------------ stages --

struct ManifestEntry {
    std::string stage;
    std::string path;  // relative to out_dir
    std::string sha256;
};

struct Manifest {
    std::uint64_t seed = 0;
    std::vector<std::string> stages_run;
    std::vector<ManifestEntry> entries;
};

void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

// Stage order of the full pipeline.
const std::vector<std::string>& pipeline_stage_names();

// Runs the stages in order up to and including `last_stage` (empty = all),
// writes each stage's artifacts under cfg.out_dir and a manifest JSON with
// content hashes. Deterministic given the config. Throws StageError naming
// the failing stage; artifacts produced so far stay on disk.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(const std::string& st, const std::string& msg)
        : std::runtime_error(msg), stage(st) {}
};

Manifest run_pipeline(const PipelineConfig& cfg, const std::string& last_stage = "");

// ------------------------------------------------------------------ export --

// PNG heatmap with a fixed black-red-yellow-white color ramp; values are
// scaled by the map's max (an all-zero map renders a uniform color).
void export_heatmap_png(const SaliencyMap& map, const std::string& path);

// NS-vs-time line plot: one marker per slice plus a dashed rule at the
// uniform 1/32 level.
void export_ns_svg(const NsSeries& series, const std::string& path, int n_elements = 32);

// Round-trip for the CSV written by write_ns_csv.
NsSeries read_ns_csv(const std::string& path);

}  // namespace attn

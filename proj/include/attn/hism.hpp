#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attn/core.hpp"
#include "attn/dronesim.hpp"
#include "attn/gazegen.hpp"
#include "attn/image.hpp"
#include "attn/render.hpp"
#include "attn/saliency.hpp"

namespace attn {

// Dual-branch temporal predictor of per-element normalized saliency: a small
// convolutional encoder over the stacked frame+mask image, a temporal branch
// over the highlight/state vectors, and a fully connected fusion head with a
// logistic output. Reverse-mode gradients are implemented in-repo; no
// external ML runtime is involved.

enum class HismVariant { lstm, tran_enc, tran_enc_task };

const char* hism_variant_name(HismVariant v);
HismVariant hism_variant_from_name(const std::string& name);

// ---------------------------------------------------------------- inputs ---

// (C+1)-channel raster: resized RGB frame plus a binary mask of the targeted
// element's bbox (nearest-neighbor, values exactly 0 or 1). Row-major CHW.
struct StackedInput {
    int size = 0;
    int channels = 4;
    std::vector<double> data;

    double at(int ch, int x, int y) const {
        return data[(static_cast<std::size_t>(ch) * size + y) * size + x];
    }
};

StackedInput stack_input(const Image& frame, const Layout& layout, int element_index,
                         int size = 96);

// v: length-T highlight vector (1 shown highlighted, -1 shown plain, 0 left
// padding); c: the targeted icon's state, min-max normalized over the icon
// kind's physical range, 0 at padding positions.
struct TemporalInput {
    std::vector<double> v;
    std::vector<double> c;
};

// Entries cover the grid slices of the window around `interval.onset_s` that
// are complete at query time t (task clock, seconds); earlier positions are
// left padding. Throws if t lies outside the window.
TemporalInput temporal_inputs(const ScenarioTrace& trace, const Interval& interval,
                              const Layout& layout, int element_index, double t_query_s,
                              const TimeGrid& grid = {});

// Min-max normalization of one icon reading over its physical range, in [0,1].
double normalized_icon_state(const DroneState& state, IconKind kind);

// ----------------------------------------------------------------- model ---

struct HismConfig {
    HismVariant variant = HismVariant::tran_enc_task;
    int image_size = 96;  // full-scale runs use 300
    int image_channels = 4;
    int seq_len = 60;
    int conv1 = 8, conv2 = 16, conv3 = 32;  // encoder widths
    int lstm_hidden = 32;
    int d_model = 32, n_heads = 4, n_layers = 2, ffn_dim = 64;
    int fc1 = 128, fc2 = 64;  // fusion head widths
    double dropout = 0.2;
};

struct HismModel {
    HismConfig cfg;
    std::uint64_t init_seed = 0;
    std::vector<double> params;
};

std::size_t hism_param_count(const HismConfig& cfg);
HismModel hism_init(const HismConfig& cfg, std::uint64_t seed);

// Scalar prediction in (0,1). Dropout fires only in train mode, keyed purely
// by `dropout_key` (deterministic). Eval mode ignores the key.
double hism_forward(const HismModel& m, const StackedInput& s, const TemporalInput& t,
                    bool train_mode = false, std::uint64_t dropout_key = 0);

std::vector<double> hism_forward_batch(const HismModel& m,
                                       const std::vector<const StackedInput*>& images,
                                       const std::vector<TemporalInput>& tins);

// Analytic gradient of the squared-error loss vs central finite differences
// on >= `coords` random parameter coordinates (plus a fixed quota from every
// layer family). Returns the maximum relative error. Dropout disabled.
double hism_grad_check(const HismModel& m, const StackedInput& s, const TemporalInput& t,
                       double target, int coords = 200, double eps = 1e-5,
                       std::uint64_t seed = 7);

// ------------------------------------------------------------- dataset -----

struct HismTrial {
    int task_id = 0;
    int interval_index = 0;
    int element_index = 0;
    bool highlighted = false;
    double onset_s = 0.0;
    std::vector<double> target_series;  // empirical NS per used window slice
};

struct HismSample {
    int trial = 0;  // index into trials
    int image = 0;  // index into images
    int slice = 0;  // window slice index
    bool highlighted = false;
    TemporalInput tin;
    double target = 0.0;
};

struct HismDataset {
    std::vector<StackedInput> images;
    std::vector<HismTrial> trials;
    std::vector<HismSample> samples;
};

struct DatasetConfig {
    int participants = 28;
    int tasks = 4;                 // extended automatically if trials run short
    int highlighted_trials = 20;   // x slices_per_trial = 800 pairs
    int plain_trials = 28;         // x slices_per_trial = 1120 pairs
    int slices_per_trial = 40;     // window slices 0..39 (-1 s .. +3 s)
    int image_size = 96;
    std::uint64_t seed = 1;
    SimConfig sim;
    BehaviorParams behavior;
    TimeGrid grid;
};

// Synthetic cohort dataset: simulate the tasks, generate the participants'
// gaze, pool their fixations and take the target element's empirical NS as
// the regression target for every window slice of every selected critical
// interval.
HismDataset build_dataset(const DatasetConfig& cfg, const Layout& layout);

// ------------------------------------------------------------- training ----

struct TrainConfig {
    int batch = 32;
    double lr = 1e-4;
    double lr_factor = 0.8;
    int plateau_epochs = 5;
    int early_stop_epochs = 10;
    int max_epochs = 200;
    double split_train = 0.6, split_val = 0.1, split_test = 0.3;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

// Validation-plateau learning-rate schedule, exposed for direct testing:
// after `patience` consecutive epochs without improvement the rate is
// multiplied by `factor` once and the counter restarts.
struct PlateauScheduler {
    double lr = 1e-4;
    double factor = 0.8;
    int patience = 5;
    double best = 1e300;
    int since_improve = 0;

    // Returns true when this observation triggered a reduction.
    bool observe(double val_loss) {
        if (val_loss < best) {
            best = val_loss;
            since_improve = 0;
            return false;
        }
        if (++since_improve >= patience) {
            lr *= factor;
            since_improve = 0;
            return true;
        }
        return false;
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct SplitIndices {
    std::vector<int> train_trials, val_trials, test_trials;
};

// Trial-level split, stratified by highlight condition; the three parts
// partition the trials exactly.
SplitIndices split_trials(const HismDataset& ds, const TrainConfig& cfg, std::uint64_t seed);

struct TrainResult {
    HismModel model;  // parameters of the best-validation epoch
    std::vector<EpochRecord> history;
    SplitIndices split;
    int best_epoch = 0;
    double best_val_mse = 0.0;
};

TrainResult hism_train(const HismDataset& ds, HismVariant variant, const TrainConfig& cfg,
                       std::uint64_t seed);

// Eval-mode MSE of the model over the samples of the given trials.
double dataset_mse(const HismModel& m, const HismDataset& ds, const std::vector<int>& trials);
// MSE of predicting the mean target of `fit_trials` for every sample of
// `eval_trials` (the constant-mean baseline).
double constant_mean_mse(const HismDataset& ds, const std::vector<int>& fit_trials,
                         const std::vector<int>& eval_trials);

// Predicted NS of one element across the full window around the interval
// onset (eval mode).
NsSeries hism_predict_series(const HismModel& m, const ScenarioTrace& trace, const Layout& layout,
                             const Interval& interval, int element_index,
                             const TimeGrid& grid = {});

// --------------------------------------------------------------- storage ---

// Versioned binary checkpoint: "HISM" magic, u32 version, u32 variant tag,
// a JSON manifest of the configuration and tensor shapes, then the flat
// little-endian f32 parameter blob.
void save_checkpoint(const HismModel& m, const std::string& path);
HismModel load_checkpoint(const std::string& path);

// CSV: epoch,train_mse,val_mse,lr
void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);
std::vector<EpochRecord> read_history_csv(const std::string& path);

}  // namespace attn

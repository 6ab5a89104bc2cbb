#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "attn/rng.hpp"
#include "hism_internal.hpp"

namespace attn {

using hism_detail::ConvCache;
using hism_detail::HeadCache;
using hism_detail::ParamLayout;

SplitIndices split_trials(const HismDataset& ds, const TrainConfig& cfg, std::uint64_t seed) {
    const double sum = cfg.split_train + cfg.split_val + cfg.split_test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");

    std::vector<int> hl, plain;
    for (std::size_t i = 0; i < ds.trials.size(); ++i)
        (ds.trials[i].highlighted ? hl : plain).push_back(static_cast<int>(i));

    Rng rng(hash_u64(seed ^ 0x73706c69ULL));
    auto shuffle = [&rng](std::vector<int>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
            std::swap(v[i], v[rng.uniform_int(i + 1)]);
    };
    shuffle(hl);
    shuffle(plain);

    SplitIndices out;
    auto deal = [&](const std::vector<int>& pool) {
        const int n = static_cast<int>(pool.size());
        int n_train = static_cast<int>(std::lround(cfg.split_train * n));
        int n_val = static_cast<int>(std::lround(cfg.split_val * n));
        n_val = std::max(n_val, n > 2 ? 1 : 0);
        n_train = std::min(n_train, n - n_val);
        for (int i = 0; i < n; ++i) {
            if (i < n_train)
                out.train_trials.push_back(pool[i]);
            else if (i < n_train + n_val)
                out.val_trials.push_back(pool[i]);
            else
                out.test_trials.push_back(pool[i]);
        }
    };
    deal(hl);
    deal(plain);
    if (out.train_trials.empty() || out.val_trials.empty() || out.test_trials.empty())
        throw std::invalid_argument("split produced an empty partition");
    std::sort(out.train_trials.begin(), out.train_trials.end());
    std::sort(out.val_trials.begin(), out.val_trials.end());
    std::sort(out.test_trials.begin(), out.test_trials.end());
    return out;
}

namespace {

std::vector<int> samples_of_trials(const HismDataset& ds, const std::vector<int>& trials) {
    std::vector<bool> take(ds.trials.size(), false);
    for (int t : trials) take[static_cast<std::size_t>(t)] = true;
    std::vector<int> out;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        if (take[static_cast<std::size_t>(ds.samples[i].trial)]) out.push_back(static_cast<int>(i));
    return out;
}

// eval-mode MSE with conv results shared per distinct image
double eval_mse(const HismModel& m, const ParamLayout& L, const HismDataset& ds,
                const std::vector<int>& sample_ids) {
    if (sample_ids.empty()) return 0.0;
    std::vector<int> order = sample_ids;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return ds.samples[static_cast<std::size_t>(a)].image <
               ds.samples[static_cast<std::size_t>(b)].image;
    });
    double total = 0.0;
    int cached_image = -1;
    ConvCache cc;
    HeadCache hc;
    for (int id : order) {
        const HismSample& smp = ds.samples[static_cast<std::size_t>(id)];
        if (smp.image != cached_image) {
            hism_detail::conv_forward(m, L, ds.images[static_cast<std::size_t>(smp.image)], cc);
            cached_image = smp.image;
        }
        const double out = hism_detail::head_forward(m, L, cc.feat.data(), smp.tin, false, 0, hc);
        total += (out - smp.target) * (out - smp.target);
    }
    return total / static_cast<double>(sample_ids.size());
}

}  // namespace

double dataset_mse(const HismModel& m, const HismDataset& ds, const std::vector<int>& trials) {
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    return eval_mse(m, L, ds, samples_of_trials(ds, trials));
}

double constant_mean_mse(const HismDataset& ds, const std::vector<int>& fit_trials,
                         const std::vector<int>& eval_trials) {
    const std::vector<int> fit = samples_of_trials(ds, fit_trials);
    const std::vector<int> ev = samples_of_trials(ds, eval_trials);
    if (fit.empty() || ev.empty()) throw std::invalid_argument("empty trial sets");
    double mean = 0.0;
    for (int id : fit) mean += ds.samples[static_cast<std::size_t>(id)].target;
    mean /= static_cast<double>(fit.size());
    double mse = 0.0;
    for (int id : ev) {
        const double d = ds.samples[static_cast<std::size_t>(id)].target - mean;
        mse += d * d;
    }
    return mse / static_cast<double>(ev.size());
}

TrainResult hism_train(const HismDataset& ds, HismVariant variant, const TrainConfig& cfg,
                       std::uint64_t seed) {
    if (ds.samples.empty()) throw std::invalid_argument("empty dataset");

    HismConfig mc;
    mc.variant = variant;
    if (!ds.images.empty()) mc.image_size = ds.images.front().size;
    mc.seq_len = static_cast<int>(ds.samples.front().tin.v.size());

    TrainResult res;
    res.split = split_trials(ds, cfg, seed);
    HismModel model = hism_init(mc, hash_u64(seed ^ 0x696e6974ULL));
    const ParamLayout L = hism_detail::make_layout(mc);

    const std::vector<int> val_samples = samples_of_trials(ds, res.split.val_trials);
    std::vector<int> train_trials = res.split.train_trials;

    std::vector<double> grads(L.total, 0.0);
    std::vector<double> adam_m(L.total, 0.0), adam_v(L.total, 0.0);
    long adam_t = 0;

    PlateauScheduler sched{cfg.lr, cfg.lr_factor, cfg.plateau_epochs};
    double best_val = 1e300;
    std::vector<double> best_params = model.params;
    int best_epoch = 0;

    Rng shuffle_rng(hash_u64(seed ^ 0x73687566ULL));
    ConvCache cc;
    HeadCache hc;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // trial-coherent order: shuffle trials, keep each trial's slices
        // together so batches reuse conv results
        for (int i = static_cast<int>(train_trials.size()) - 1; i > 0; --i)
            std::swap(train_trials[i], train_trials[shuffle_rng.uniform_int(i + 1)]);
        std::vector<int> order;
        {
            std::vector<std::vector<int>> by_trial(ds.trials.size());
            for (std::size_t i = 0; i < ds.samples.size(); ++i)
                by_trial[static_cast<std::size_t>(ds.samples[i].trial)].push_back(
                    static_cast<int>(i));
            for (int t : train_trials)
                order.insert(order.end(), by_trial[static_cast<std::size_t>(t)].begin(),
                             by_trial[static_cast<std::size_t>(t)].end());
        }

        double train_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const double inv_n = 1.0 / static_cast<double>(b1 - b0);
            std::fill(grads.begin(), grads.end(), 0.0);

            // group the batch by image so each conv runs once
            std::vector<int> batch(order.begin() + static_cast<long>(b0),
                                   order.begin() + static_cast<long>(b1));
            std::stable_sort(batch.begin(), batch.end(), [&](int a, int b) {
                return ds.samples[static_cast<std::size_t>(a)].image <
                       ds.samples[static_cast<std::size_t>(b)].image;
            });
            std::size_t i = 0;
            std::vector<double> dfeat(static_cast<std::size_t>(mc.conv3), 0.0);
            while (i < batch.size()) {
                const int img = ds.samples[static_cast<std::size_t>(batch[i])].image;
                hism_detail::conv_forward(model, L, ds.images[static_cast<std::size_t>(img)], cc);
                std::fill(dfeat.begin(), dfeat.end(), 0.0);
                for (; i < batch.size() &&
                       ds.samples[static_cast<std::size_t>(batch[i])].image == img;
                     ++i) {
                    const HismSample& smp = ds.samples[static_cast<std::size_t>(batch[i])];
                    const std::uint64_t key = hash_u64(
                        seed ^ hash_u64(static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                        static_cast<std::uint64_t>(batch[i])));
                    const double out = hism_detail::head_forward(model, L, cc.feat.data(),
                                                                 smp.tin, true, key, hc);
                    const double err = out - smp.target;
                    train_loss += err * err;
                    hism_detail::head_backward(model, L, smp.tin, hc, 2.0 * err * inv_n,
                                               grads.data(), dfeat.data());
                }
                hism_detail::conv_backward(model, L, cc, dfeat.data(), grads.data());
            }

            // adaptive-moment update
            ++adam_t;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
            for (std::size_t p = 0; p < L.total; ++p) {
                adam_m[p] = cfg.adam_beta1 * adam_m[p] + (1.0 - cfg.adam_beta1) * grads[p];
                adam_v[p] = cfg.adam_beta2 * adam_v[p] + (1.0 - cfg.adam_beta2) * grads[p] * grads[p];
                const double mhat = adam_m[p] / bc1;
                const double vhat = adam_v[p] / bc2;
                model.params[p] -= sched.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            }
        }
        train_loss /= static_cast<double>(order.size());

        const double val_loss = eval_mse(model, L, ds, val_samples);
        res.history.push_back({epoch, train_loss, val_loss, sched.lr});

        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = model.params;
            best_epoch = epoch;
        }
        sched.observe(val_loss);
        if (epoch - best_epoch >= cfg.early_stop_epochs) break;
    }

    model.params = best_params;
    res.model = std::move(model);
    res.best_epoch = best_epoch;
    res.best_val_mse = best_val;
    return res;
}

NsSeries hism_predict_series(const HismModel& m, const ScenarioTrace& trace, const Layout& layout,
                             const Interval& interval, int element_index, const TimeGrid& grid) {
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    const int element = element_index;
    if (element < 0 || element >= static_cast<int>(layout.elements.size()))
        throw std::out_of_range("hism_predict_series: element index out of range");

    const StackedInput plain =
        stack_input(render_layout(layout, -1), layout, element, m.cfg.image_size);
    const StackedInput lit =
        interval.highlighted
            ? stack_input(render_layout(layout, element), layout, element, m.cfg.image_size)
            : plain;

    ConvCache cc_plain, cc_lit;
    hism_detail::conv_forward(m, L, plain, cc_plain);
    if (interval.highlighted) hism_detail::conv_forward(m, L, lit, cc_lit);

    NsSeries series;
    series.element_id = layout.elements[element].id;
    HeadCache hc;
    for (int k = 0; k < grid.steps; ++k) {
        const double t_rel = grid.t_rel(k);
        const double t_query = interval.onset_s + t_rel + grid.ns_step_s;
        TemporalInput tin = temporal_inputs(trace, interval, layout, element, t_query, grid);
        const ConvCache& cc = (t_rel >= 0.0 && interval.highlighted) ? cc_lit : cc_plain;
        const double out = hism_detail::head_forward(m, L, cc.feat.data(), tin, false, 0, hc);
        series.t_rel_s.push_back(t_rel);
        series.ns.push_back(out);
        series.uniform_flag.push_back(false);
    }
    return series;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "epoch,train_mse,val_mse,lr\n";
    f.precision(12);
    for (const EpochRecord& r : history)
        f << r.epoch << ',' << r.train_mse << ',' << r.val_mse << ',' << r.lr << '\n';
}

std::vector<EpochRecord> read_history_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<EpochRecord> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        EpochRecord r;
        char comma;
        ss >> r.epoch >> comma >> r.train_mse >> comma >> r.val_mse >> comma >> r.lr;
        out.push_back(r);
    }
    return out;
}

}  // namespace attn

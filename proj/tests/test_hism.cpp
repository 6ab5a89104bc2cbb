#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "attn/hism.hpp"
#include "attn/rng.hpp"
#include "doctest.h"

using namespace attn;

namespace {

// small spatial size keeps the conv encoder cheap in unit tests; the
// full-size path is exercised by the acceptance suite
HismConfig tiny_config(HismVariant v) {
    HismConfig cfg;
    cfg.variant = v;
    cfg.image_size = 16;
    return cfg;
}

StackedInput random_stacked(Rng& rng, int size) {
    StackedInput s;
    s.size = size;
    s.channels = 4;
    s.data.resize(static_cast<std::size_t>(4) * size * size);
    for (auto& v : s.data) v = rng.uniform01();
    return s;
}

TemporalInput random_temporal(Rng& rng, int len = 60) {
    TemporalInput t;
    t.v.resize(len);
    t.c.resize(len);
    const int pad = rng.uniform_int(len);
    for (int i = 0; i < len; ++i) {
        if (i < pad) {
            t.v[i] = 0.0;
            t.c[i] = 0.0;
        } else {
            t.v[i] = rng.bernoulli(0.5) ? 1.0 : -1.0;
            t.c[i] = rng.uniform01();
        }
    }
    return t;
}

// hand-built dataset whose targets depend only on the last highlight entry;
// 60-token temporal inputs, two tiny shared images
HismDataset toy_dataset(int trials, int slices) {
    HismDataset ds;
    Rng rng(99);
    ds.images.push_back(random_stacked(rng, 16));
    ds.images.push_back(random_stacked(rng, 16));
    for (int tr = 0; tr < trials; ++tr) {
        HismTrial trial;
        trial.highlighted = tr % 2 == 0;
        for (int k = 0; k < slices; ++k) {
            HismSample s;
            s.trial = tr;
            s.image = tr % 2;
            s.slice = k;
            s.highlighted = trial.highlighted;
            s.tin.v.assign(60, -1.0);
            s.tin.c.assign(60, 0.3);
            const bool active = trial.highlighted && k >= slices / 2;
            if (active)
                for (int i = 55; i < 60; ++i) s.tin.v[i] = 1.0;
            s.target = active ? 0.6 : 0.1;
            trial.target_series.push_back(s.target);
            ds.samples.push_back(std::move(s));
        }
        ds.trials.push_back(std::move(trial));
    }
    return ds;
}

ScenarioTrace demo_trace() {
    SimConfig sim;
    sim.p_critical = 1.0;
    sim.p_highlight = 1.0;
    return simulate_task(sim, 4242, 0);
}

}  // namespace

TEST_CASE("stacked input carries a clean nearest-neighbor mask") {
    Layout layout = default_layout();
    Image frame = render_layout(layout);
    StackedInput s = stack_input(frame, layout, 3, 96);
    REQUIRE(s.size == 96);
    REQUIRE(s.channels == 4);

    double mask_sum = 0.0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const double v = s.at(3, x, y);
            CHECK((v == 0.0 || v == 1.0));
            mask_sum += v;
        }
    const BBox& b = layout.elements[3].bbox;
    const double expected = static_cast<double>(b.w) * b.h * 96.0 * 96.0 /
                            (static_cast<double>(layout.width_px) * layout.height_px);
    // one row/column of rounding slack on each edge
    CHECK(mask_sum == doctest::Approx(expected).epsilon(0.35));
    CHECK(mask_sum > 0.0);
}

TEST_CASE("different elements differ only in the mask channel") {
    Layout layout = default_layout();
    Image frame = render_layout(layout);
    StackedInput a = stack_input(frame, layout, 3, 96);
    StackedInput b = stack_input(frame, layout, 17, 96);
    const std::size_t plane = 96 * 96;
    bool rgb_equal = true, mask_differs = false;
    for (std::size_t i = 0; i < 3 * plane; ++i)
        if (a.data[i] != b.data[i]) rgb_equal = false;
    for (std::size_t i = 3 * plane; i < 4 * plane; ++i)
        if (a.data[i] != b.data[i]) mask_differs = true;
    CHECK(rgb_equal);
    CHECK(mask_differs);
}

TEST_CASE("full-scale stacking produces a 300x300 raster") {
    Layout layout = default_layout();
    Image frame = render_layout(layout);
    StackedInput s = stack_input(frame, layout, 0, 300);
    CHECK(s.size == 300);
    CHECK(s.data.size() == static_cast<std::size_t>(4) * 300 * 300);
    CHECK_THROWS(stack_input(frame, layout, 99, 96));
}

TEST_CASE("icon state normalization follows the physical ranges") {
    DroneState st;
    st.battery_pct = 50.0;
    CHECK(normalized_icon_state(st, IconKind::battery) == doctest::Approx(0.5));
    st.wind_mps = 7.5;
    CHECK(normalized_icon_state(st, IconKind::wind) == doctest::Approx(0.5));
    st.battery_pct = 140.0;  // clamped
    CHECK(normalized_icon_state(st, IconKind::battery) == 1.0);
    st.rotor = RotorState::off;
    CHECK(normalized_icon_state(st, IconKind::rotor) == 0.0);
}

TEST_CASE("temporal inputs pad on the left and mark the highlight") {
    Layout layout = default_layout();
    ScenarioTrace trace = demo_trace();
    // pick an interval whose predecessor highlights a *different* element so
    // the pre-onset second of the window shows this element un-highlighted
    const Interval* iv = nullptr;
    for (std::size_t i = 1; i < trace.plan.intervals.size(); ++i) {
        const Interval& cur = trace.plan.intervals[i];
        const Interval& prev = trace.plan.intervals[i - 1];
        if (!cur.is_critical || !cur.highlighted || !prev.is_critical || !prev.highlighted)
            continue;
        if (layout.find(cur.drone_index, critical_icon(cur.kind)) !=
            layout.find(prev.drone_index, critical_icon(prev.kind))) {
            iv = &cur;
            break;
        }
    }
    REQUIRE(iv != nullptr);
    const int element = layout.find(iv->drone_index, critical_icon(iv->kind));
    REQUIRE(element >= 0);
    TimeGrid grid;

    // at the window start everything is padding
    TemporalInput t0 = temporal_inputs(trace, *iv, layout, element,
                                       iv->onset_s + grid.window_start_s, grid);
    for (int i = 0; i < 60; ++i) {
        CHECK(t0.v[i] == 0.0);
        CHECK(t0.c[i] == 0.0);
    }

    // half a second after onset: last five slices highlighted, the ten
    // pre-onset slices before them shown plain
    TemporalInput t1 = temporal_inputs(trace, *iv, layout, element, iv->onset_s + 0.5, grid);
    for (int i = 0; i < 45; ++i) CHECK(t1.v[i] == 0.0);
    for (int i = 45; i < 55; ++i) CHECK(t1.v[i] == -1.0);
    for (int i = 55; i < 60; ++i) CHECK(t1.v[i] == 1.0);
    // padding positions agree between v and c
    for (int i = 0; i < 60; ++i)
        if (t1.v[i] == 0.0) CHECK(t1.c[i] == 0.0);

    CHECK_THROWS(temporal_inputs(trace, *iv, layout, element, iv->onset_s + 9.0, grid));
    CHECK_THROWS(temporal_inputs(trace, *iv, layout, element, iv->onset_s - 3.0, grid));
}

TEST_CASE("forward is deterministic in eval mode and stays inside (0,1)") {
    Rng rng(31);
    for (HismVariant v : {HismVariant::lstm, HismVariant::tran_enc, HismVariant::tran_enc_task}) {
        HismModel m = hism_init(tiny_config(v), 5);
        StackedInput s = random_stacked(rng, 16);
        TemporalInput t = random_temporal(rng);
        CHECK(hism_forward(m, s, t) == hism_forward(m, s, t));
        for (int i = 0; i < 300; ++i) {
            StackedInput si = random_stacked(rng, 16);
            TemporalInput ti = random_temporal(rng);
            const double out = hism_forward(m, si, ti);
            CHECK(out > 0.0);
            CHECK(out < 1.0);
        }
    }
}

TEST_CASE("an untrained model answers near the logistic midpoint") {
    Rng rng(77);
    HismModel m = hism_init(tiny_config(HismVariant::tran_enc_task), 9);
    for (int i = 0; i < 20; ++i) {
        const double out = hism_forward(m, random_stacked(rng, 16), random_temporal(rng));
        CHECK(out == doctest::Approx(0.5).epsilon(0.3));  // 0.5 +- 0.15
    }
}

TEST_CASE("batched forward equals per-sample forward") {
    Rng rng(13);
    HismModel m = hism_init(tiny_config(HismVariant::lstm), 2);
    StackedInput img0 = random_stacked(rng, 16), img1 = random_stacked(rng, 16);
    std::vector<const StackedInput*> imgs = {&img0, &img0, &img1, &img0};
    std::vector<TemporalInput> tins;
    for (int i = 0; i < 4; ++i) tins.push_back(random_temporal(rng));
    std::vector<double> batch = hism_forward_batch(m, imgs, tins);
    REQUIRE(batch.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(batch[i] == hism_forward(m, *imgs[i], tins[i]));
}

TEST_CASE("shape mismatches are rejected") {
    Rng rng(3);
    HismModel m = hism_init(tiny_config(HismVariant::lstm), 2);
    StackedInput wrong = random_stacked(rng, 8);
    TemporalInput t = random_temporal(rng);
    CHECK_THROWS(hism_forward(m, wrong, t));
    StackedInput ok = random_stacked(rng, 16);
    TemporalInput short_t = random_temporal(rng, 30);
    CHECK_THROWS(hism_forward(m, ok, short_t));
}

TEST_CASE("analytic gradients match finite differences for every variant") {
    Rng rng(8);
    for (HismVariant v : {HismVariant::lstm, HismVariant::tran_enc, HismVariant::tran_enc_task}) {
        HismModel m = hism_init(tiny_config(v), 21);
        StackedInput s = random_stacked(rng, 16);
        TemporalInput t = random_temporal(rng);
        const double err = hism_grad_check(m, s, t, 0.37, 200, 1e-5, 11);
        INFO(std::string(hism_variant_name(v)));
        CHECK(err < 1e-4);
    }
}

TEST_CASE("finite-difference error grows with a coarse step") {
    Rng rng(18);
    HismModel m = hism_init(tiny_config(HismVariant::tran_enc_task), 4);
    StackedInput s = random_stacked(rng, 16);
    TemporalInput t = random_temporal(rng);
    const double coarse = hism_grad_check(m, s, t, 0.4, 120, 1e-2, 5);
    const double fine = hism_grad_check(m, s, t, 0.4, 120, 1e-5, 5);
    CHECK(fine < 1e-4);
    CHECK(coarse > fine);
}

TEST_CASE("a flat validation loss cuts the learning rate exactly once") {
    PlateauScheduler sched{1e-4, 0.8, 5};
    int reductions = 0;
    for (int i = 0; i < 6; ++i)
        if (sched.observe(1.0)) ++reductions;
    CHECK(reductions == 1);
    CHECK(sched.lr == doctest::Approx(0.8e-4));
    // an improvement restarts the patience window
    CHECK_FALSE(sched.observe(0.5));
    for (int i = 0; i < 4; ++i) CHECK_FALSE(sched.observe(0.5));
    CHECK(sched.observe(0.5));  // fifth stale epoch
    CHECK(sched.lr == doctest::Approx(0.64e-4));
}

TEST_CASE("the trial split is an exact stratified partition") {
    HismDataset ds = toy_dataset(20, 4);
    TrainConfig cfg;
    SplitIndices sp = split_trials(ds, cfg, 17);
    std::vector<int> all;
    all.insert(all.end(), sp.train_trials.begin(), sp.train_trials.end());
    all.insert(all.end(), sp.val_trials.begin(), sp.val_trials.end());
    all.insert(all.end(), sp.test_trials.begin(), sp.test_trials.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == 20);
    for (int i = 0; i < 20; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);

    auto count_hl = [&](const std::vector<int>& v) {
        int n = 0;
        for (int t : v)
            if (ds.trials[static_cast<std::size_t>(t)].highlighted) ++n;
        return n;
    };
    CHECK(count_hl(sp.train_trials) == 6);  // 60% of the 10 highlighted trials
    CHECK(count_hl(sp.val_trials) == 1);
    CHECK(count_hl(sp.test_trials) == 3);

    SplitIndices again = split_trials(ds, cfg, 17);
    CHECK(again.train_trials == sp.train_trials);
    CHECK(again.test_trials == sp.test_trials);
}

TEST_CASE("training learns the toy rule, deterministically") {
    HismDataset ds = toy_dataset(16, 10);
    TrainConfig cfg;
    cfg.max_epochs = 20;
    TrainResult a = hism_train(ds, HismVariant::lstm, cfg, 123);
    REQUIRE(!a.history.empty());

    // the chosen parameters never lose to the first epoch on validation
    CHECK(a.best_val_mse <= a.history.front().val_mse);
    // it actually learned something
    CHECK(a.history.back().train_mse < a.history.front().train_mse);

    TrainResult b = hism_train(ds, HismVariant::lstm, cfg, 123);
    CHECK(a.model.params == b.model.params);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_mse == b.history[i].train_mse);
        CHECK(a.history[i].val_mse == b.history[i].val_mse);
    }

    TrainResult c = hism_train(ds, HismVariant::lstm, cfg, 124);
    CHECK(a.model.params != c.model.params);
}

TEST_CASE("checkpoints round-trip bit-exactly at f32 precision") {
    HismModel m = hism_init(tiny_config(HismVariant::tran_enc_task), 55);
    const std::string p1 = "/tmp/attn_ckpt1.bin", p2 = "/tmp/attn_ckpt2.bin";
    save_checkpoint(m, p1);
    HismModel back = load_checkpoint(p1);
    CHECK(back.cfg.variant == m.cfg.variant);
    CHECK(back.cfg.image_size == m.cfg.image_size);
    CHECK(back.init_seed == m.init_seed);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i)
        CHECK(back.params[i] == static_cast<double>(static_cast<float>(m.params[i])));

    save_checkpoint(back, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    std::ofstream bad("/tmp/attn_ckpt_bad.bin", std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS(load_checkpoint("/tmp/attn_ckpt_bad.bin"));
    std::remove("/tmp/attn_ckpt_bad.bin");
}

TEST_CASE("history csv round-trips") {
    std::vector<EpochRecord> h = {{1, 0.5, 0.6, 1e-4}, {2, 0.25, 0.3, 1e-4}, {3, 0.2, 0.28, 8e-5}};
    const std::string path = "/tmp/attn_history.csv";
    write_history_csv(h, path);
    std::vector<EpochRecord> back = read_history_csv(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].epoch == h[i].epoch);
        CHECK(back[i].train_mse == doctest::Approx(h[i].train_mse));
        CHECK(back[i].val_mse == doctest::Approx(h[i].val_mse));
        CHECK(back[i].lr == doctest::Approx(h[i].lr));
    }
    std::remove(path.c_str());
}

TEST_CASE("dataset assembly respects the requested trial counts") {
    Layout layout = default_layout();
    DatasetConfig dc;
    dc.participants = 2;
    dc.highlighted_trials = 2;
    dc.plain_trials = 3;
    dc.slices_per_trial = 5;
    dc.image_size = 32;
    dc.seed = 3;
    HismDataset ds = build_dataset(dc, layout);
    CHECK(ds.trials.size() == 5);
    CHECK(ds.samples.size() == 25);
    int hl_trials = 0, hl_samples = 0;
    for (const auto& t : ds.trials) hl_trials += t.highlighted ? 1 : 0;
    for (const auto& s : ds.samples) hl_samples += s.highlighted ? 1 : 0;
    CHECK(hl_trials == 2);
    CHECK(hl_samples == 10);
    for (const auto& s : ds.samples) {
        CHECK(s.target >= 0.0);
        CHECK(s.target <= 1.0);
        CHECK(s.tin.v.size() == 60);
        CHECK(s.image >= 0);
        CHECK(s.image < static_cast<int>(ds.images.size()));
    }
}

TEST_CASE("an untrained predictor emits a roughly flat series") {
    Layout layout = default_layout();
    ScenarioTrace trace = demo_trace();
    // pick an interval whose predecessor highlights a *different* element so
    // the pre-onset second of the window shows this element un-highlighted
    const Interval* iv = nullptr;
    for (std::size_t i = 1; i < trace.plan.intervals.size(); ++i) {
        const Interval& cur = trace.plan.intervals[i];
        const Interval& prev = trace.plan.intervals[i - 1];
        if (!cur.is_critical || !cur.highlighted || !prev.is_critical || !prev.highlighted)
            continue;
        if (layout.find(cur.drone_index, critical_icon(cur.kind)) !=
            layout.find(prev.drone_index, critical_icon(prev.kind))) {
            iv = &cur;
            break;
        }
    }
    REQUIRE(iv != nullptr);
    const int element = layout.find(iv->drone_index, critical_icon(iv->kind));

    HismConfig cfg = tiny_config(HismVariant::tran_enc_task);
    HismModel m = hism_init(cfg, 3);
    NsSeries series = hism_predict_series(m, trace, layout, *iv, element);
    REQUIRE(series.ns.size() == 60);
    for (double v : series.ns) CHECK(v == doctest::Approx(0.5).epsilon(0.3));
}

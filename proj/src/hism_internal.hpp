#pragma once

// Internal layer plumbing of the predictor: parameter layout, forward caches
// and manual reverse-mode passes. Shared between the model core and the
// training loop; not part of the public interface.

#include <cstddef>
#include <vector>

#include "attn/hism.hpp"

namespace attn::hism_detail {

struct TransformerLayerOffsets {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln1g, ln1b;
    std::size_t w1, b1, w2, b2;
    std::size_t ln2g, ln2b;
};

struct ParamLayout {
    // conv encoder
    std::size_t c1w, c1b, c2w, c2b, c3w, c3b;
    // lstm branch (empty ranges when unused)
    std::size_t lstm_w = 0, lstm_b = 0;
    // transformer branch
    std::size_t emb_w = 0, emb_b = 0;
    std::vector<TransformerLayerOffsets> layers;
    // fusion head
    std::size_t f1w, f1b, f2w, f2b, f3w, f3b;
    std::size_t total = 0;
    int temporal_in = 1;  // 1 for v-only variants, 2 when the task vector joins
};

ParamLayout make_layout(const HismConfig& cfg);

// ------------------------------------------------------------------ conv ---

struct ConvCache {
    const StackedInput* input = nullptr;
    std::vector<double> z1, p1, z2, p2, z3, p3;  // pre-activations and pools
    std::vector<double> feat;                    // global average pool output
};

void conv_forward(const HismModel& m, const ParamLayout& L, const StackedInput& s, ConvCache& cc);
// dfeat: gradient w.r.t. the pooled feature vector; accumulates into grads.
void conv_backward(const HismModel& m, const ParamLayout& L, const ConvCache& cc,
                   const double* dfeat, double* grads);

// ------------------------------------------------------- temporal + head ---

struct LstmCache {
    std::vector<double> x;                 // inputs per step
    std::vector<double> i, f, g, o, c, h;  // per step, hidden-major
};

struct TranLayerCache {
    std::vector<double> x_in;               // layer input tokens (T x d)
    std::vector<double> q, k, v;            // T x d
    std::vector<double> attn;               // heads x T x T softmax rows
    std::vector<double> concat;             // T x d (pre-Wo)
    std::vector<double> res1;               // x_in + attn_out
    std::vector<double> ln1_mean, ln1_istd, ln1_xhat, ln1_out;
    std::vector<double> ffn_z, ffn_a;       // T x ffn
    std::vector<double> res2;               // ln1_out + ffn_out
    std::vector<double> ln2_mean, ln2_istd, ln2_xhat, ln2_out;
};

struct HeadCache {
    // temporal branch
    LstmCache lstm;
    std::vector<double> tokens0;  // embedded input + positions
    std::vector<TranLayerCache> tlayers;
    std::vector<double> tvec;  // temporal summary (d or hidden)
    // fusion
    std::vector<double> u;        // concat(spatial, temporal)
    std::vector<double> z1, d1;   // fc1 pre-act, post-dropout activation
    std::vector<double> z2, d2;
    double z3 = 0.0;
    double out = 0.0;
    std::vector<double> mask1, mask2;  // dropout keep-scales (1/(1-p) or 0)
};

// Forward of everything after the conv feature. Returns the prediction.
double head_forward(const HismModel& m, const ParamLayout& L, const double* feat,
                    const TemporalInput& tin, bool train_mode, std::uint64_t dropout_key,
                    HeadCache& hc);

// Backward from d(loss)/d(out); accumulates parameter grads and writes the
// gradient w.r.t. the conv feature into dfeat (accumulating).
void head_backward(const HismModel& m, const ParamLayout& L, const TemporalInput& tin,
                   const HeadCache& hc, double dout, double* grads, double* dfeat);

// Full per-sample gradient (conv included); used by grad_check.
double sample_loss_and_grad(const HismModel& m, const StackedInput& s, const TemporalInput& tin,
                            double target, std::vector<double>& grads);

}  // namespace attn::hism_detail

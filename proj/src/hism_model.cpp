#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "attn/rng.hpp"
#include "hism_internal.hpp"
#include "json.hpp"

namespace attn {

using hism_detail::ConvCache;
using hism_detail::HeadCache;
using hism_detail::ParamLayout;
using hism_detail::TranLayerCache;

const char* hism_variant_name(HismVariant v) {
    switch (v) {
        case HismVariant::lstm: return "lstm";
        case HismVariant::tran_enc: return "tranenc";
        case HismVariant::tran_enc_task: return "tranenc-task";
    }
    return "?";
}

HismVariant hism_variant_from_name(const std::string& name) {
    if (name == "lstm") return HismVariant::lstm;
    if (name == "tranenc" || name == "tran_enc") return HismVariant::tran_enc;
    if (name == "tranenc-task" || name == "tran_enc_task") return HismVariant::tran_enc_task;
    throw std::invalid_argument("unknown model variant: " + name);
}

namespace hism_detail {

ParamLayout make_layout(const HismConfig& cfg) {
    ParamLayout L;
    std::size_t p = 0;
    auto take = [&p](std::size_t n) {
        std::size_t at = p;
        p += n;
        return at;
    };
    const int C0 = cfg.image_channels, C1 = cfg.conv1, C2 = cfg.conv2, C3 = cfg.conv3;
    L.c1w = take(static_cast<std::size_t>(C1) * C0 * 9);
    L.c1b = take(C1);
    L.c2w = take(static_cast<std::size_t>(C2) * C1 * 9);
    L.c2b = take(C2);
    L.c3w = take(static_cast<std::size_t>(C3) * C2 * 9);
    L.c3b = take(C3);

    L.temporal_in = cfg.variant == HismVariant::tran_enc_task ? 2 : 1;
    if (cfg.variant == HismVariant::lstm) {
        const int H = cfg.lstm_hidden;
        L.lstm_w = take(static_cast<std::size_t>(4) * H * (L.temporal_in + H));
        L.lstm_b = take(static_cast<std::size_t>(4) * H);
    } else {
        const int d = cfg.d_model, f = cfg.ffn_dim;
        L.emb_w = take(static_cast<std::size_t>(d) * L.temporal_in);
        L.emb_b = take(d);
        for (int l = 0; l < cfg.n_layers; ++l) {
            TransformerLayerOffsets o;
            o.wq = take(static_cast<std::size_t>(d) * d);
            o.bq = take(d);
            o.wk = take(static_cast<std::size_t>(d) * d);
            o.bk = take(d);
            o.wv = take(static_cast<std::size_t>(d) * d);
            o.bv = take(d);
            o.wo = take(static_cast<std::size_t>(d) * d);
            o.bo = take(d);
            o.ln1g = take(d);
            o.ln1b = take(d);
            o.w1 = take(static_cast<std::size_t>(f) * d);
            o.b1 = take(f);
            o.w2 = take(static_cast<std::size_t>(d) * f);
            o.b2 = take(d);
            o.ln2g = take(d);
            o.ln2b = take(d);
            L.layers.push_back(o);
        }
    }

    const int tdim = cfg.variant == HismVariant::lstm ? cfg.lstm_hidden : cfg.d_model;
    const int fin = cfg.conv3 + tdim;
    L.f1w = take(static_cast<std::size_t>(cfg.fc1) * fin);
    L.f1b = take(cfg.fc1);
    L.f2w = take(static_cast<std::size_t>(cfg.fc2) * cfg.fc1);
    L.f2b = take(cfg.fc2);
    L.f3w = take(cfg.fc2);
    L.f3b = take(1);
    L.total = p;
    return L;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// keep-scale for one dropout unit: 0 (dropped) or 1/(1-p)
double drop_scale(std::uint64_t key, int layer, int unit, double p) {
    std::uint64_t h = hash_u64(key ^ hash_u64(static_cast<std::uint64_t>(layer) * 0x100000001b3ULL +
                                              static_cast<std::uint64_t>(unit)));
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < p ? 0.0 : 1.0 / (1.0 - p);
}

// y = W x + b, W row-major [n_out x n_in]
void linear(const double* W, const double* b, const double* x, double* y, int n_out, int n_in) {
    for (int o = 0; o < n_out; ++o) {
        double s = b ? b[o] : 0.0;
        const double* w = W + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) s += w[i] * x[i];
        y[o] = s;
    }
}

// accumulate dW += dy x^T, db += dy, dx += W^T dy
void linear_backward(const double* W, const double* x, const double* dy, double* dW, double* db,
                     double* dx, int n_out, int n_in) {
    for (int o = 0; o < n_out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        double* dw = dW + static_cast<std::size_t>(o) * n_in;
        const double* w = W + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) dw[i] += g * x[i];
        if (db) db[o] += g;
        if (dx)
            for (int i = 0; i < n_in; ++i) dx[i] += g * w[i];
    }
}

void layer_norm(const double* x, const double* g, const double* b, int d, double* mean_out,
                double* istd_out, double* xhat, double* y) {
    double m = 0.0;
    for (int i = 0; i < d; ++i) m += x[i];
    m /= d;
    double v = 0.0;
    for (int i = 0; i < d; ++i) v += (x[i] - m) * (x[i] - m);
    v /= d;
    double istd = 1.0 / std::sqrt(v + 1e-5);
    for (int i = 0; i < d; ++i) {
        xhat[i] = (x[i] - m) * istd;
        y[i] = g[i] * xhat[i] + b[i];
    }
    *mean_out = m;
    *istd_out = istd;
}

void layer_norm_backward(const double* dy, const double* g, const double* xhat, double istd,
                         int d, double* dg, double* db, double* dx) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int i = 0; i < d; ++i) {
        double dxh = dy[i] * g[i];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xhat[i];
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
    }
    for (int i = 0; i < d; ++i) {
        double dxh = dy[i] * g[i];
        dx[i] += istd * (dxh - sum_dxhat / d - xhat[i] * sum_dxhat_xhat / d);
    }
}

// conv 3x3, pad 1, stride 1 over CHW input
void conv3x3(const double* in, const double* w, const double* b, double* out, int ci, int co,
             int n) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (int oc = 0; oc < co; ++oc) {
        double* op = out + oc * plane;
        for (std::size_t i = 0; i < plane; ++i) op[i] = b[oc];
        for (int ic = 0; ic < ci; ++ic) {
            const double* ip = in + ic * plane;
            const double* kw = w + (static_cast<std::size_t>(oc) * ci + ic) * 9;
            for (int y = 0; y < n; ++y) {
                const int y0 = std::max(0, y - 1), y1 = std::min(n - 1, y + 1);
                for (int x = 0; x < n; ++x) {
                    const int x0 = std::max(0, x - 1), x1 = std::min(n - 1, x + 1);
                    double s = 0.0;
                    for (int yy = y0; yy <= y1; ++yy)
                        for (int xx = x0; xx <= x1; ++xx)
                            s += kw[(yy - y + 1) * 3 + (xx - x + 1)] * ip[yy * n + xx];
                    op[y * n + x] += s;
                }
            }
        }
    }
}

// gradient of conv3x3: accumulate dw, db and (optionally) din
void conv3x3_backward(const double* in, const double* w, const double* dout, double* dw,
                      double* db, double* din, int ci, int co, int n) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (int oc = 0; oc < co; ++oc) {
        const double* dop = dout + oc * plane;
        for (std::size_t i = 0; i < plane; ++i) db[oc] += dop[i];
        for (int ic = 0; ic < ci; ++ic) {
            const double* ip = in + ic * plane;
            double* kdw = dw + (static_cast<std::size_t>(oc) * ci + ic) * 9;
            const double* kw = w + (static_cast<std::size_t>(oc) * ci + ic) * 9;
            double* dip = din ? din + ic * plane : nullptr;
            for (int y = 0; y < n; ++y) {
                const int y0 = std::max(0, y - 1), y1 = std::min(n - 1, y + 1);
                for (int x = 0; x < n; ++x) {
                    const double g = dop[y * n + x];
                    if (g == 0.0) continue;
                    const int x0 = std::max(0, x - 1), x1 = std::min(n - 1, x + 1);
                    for (int yy = y0; yy <= y1; ++yy)
                        for (int xx = x0; xx <= x1; ++xx) {
                            const int k = (yy - y + 1) * 3 + (xx - x + 1);
                            kdw[k] += g * ip[yy * n + xx];
                            if (dip) dip[yy * n + xx] += g * kw[k];
                        }
                }
            }
        }
    }
}

// ReLU(z) then 2x2 average pool (stride 2); z kept for backward
void relu_pool(const double* z, double* pooled, int c, int n) {
    const int half = n / 2;
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    const std::size_t hplane = static_cast<std::size_t>(half) * half;
    for (int ch = 0; ch < c; ++ch) {
        const double* zp = z + ch * plane;
        double* pp = pooled + ch * hplane;
        for (int y = 0; y < half; ++y)
            for (int x = 0; x < half; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        double v = zp[(2 * y + dy) * n + (2 * x + dx)];
                        if (v > 0.0) s += v;
                    }
                pp[y * half + x] = s * 0.25;
            }
    }
}

// backward of relu_pool: dz from dpooled
void relu_pool_backward(const double* z, const double* dpooled, double* dz, int c, int n) {
    const int half = n / 2;
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    const std::size_t hplane = static_cast<std::size_t>(half) * half;
    for (int ch = 0; ch < c; ++ch) {
        const double* zp = z + ch * plane;
        const double* dp = dpooled + ch * hplane;
        double* dzp = dz + ch * plane;
        for (int y = 0; y < half; ++y)
            for (int x = 0; x < half; ++x) {
                const double g = dp[y * half + x] * 0.25;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (2 * y + dy) * n + (2 * x + dx);
                        dzp[idx] = zp[idx] > 0.0 ? g : 0.0;
                    }
            }
    }
}

double positional(int t, int i, int d) {
    const double expo = static_cast<double>(i / 2 * 2) / d;
    const double angle = t / std::pow(10000.0, expo);
    return (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
}

}  // namespace

void conv_forward(const HismModel& m, const ParamLayout& L, const StackedInput& s, ConvCache& cc) {
    const HismConfig& cfg = m.cfg;
    const int n1 = cfg.image_size, n2 = n1 / 2, n3 = n2 / 2, n4 = n3 / 2;
    const double* P = m.params.data();
    cc.input = &s;
    cc.z1.assign(static_cast<std::size_t>(cfg.conv1) * n1 * n1, 0.0);
    cc.p1.assign(static_cast<std::size_t>(cfg.conv1) * n2 * n2, 0.0);
    cc.z2.assign(static_cast<std::size_t>(cfg.conv2) * n2 * n2, 0.0);
    cc.p2.assign(static_cast<std::size_t>(cfg.conv2) * n3 * n3, 0.0);
    cc.z3.assign(static_cast<std::size_t>(cfg.conv3) * n3 * n3, 0.0);
    cc.p3.assign(static_cast<std::size_t>(cfg.conv3) * n4 * n4, 0.0);
    cc.feat.assign(cfg.conv3, 0.0);

    conv3x3(s.data.data(), P + L.c1w, P + L.c1b, cc.z1.data(), cfg.image_channels, cfg.conv1, n1);
    relu_pool(cc.z1.data(), cc.p1.data(), cfg.conv1, n1);
    conv3x3(cc.p1.data(), P + L.c2w, P + L.c2b, cc.z2.data(), cfg.conv1, cfg.conv2, n2);
    relu_pool(cc.z2.data(), cc.p2.data(), cfg.conv2, n2);
    conv3x3(cc.p2.data(), P + L.c3w, P + L.c3b, cc.z3.data(), cfg.conv2, cfg.conv3, n3);
    relu_pool(cc.z3.data(), cc.p3.data(), cfg.conv3, n3);

    const std::size_t plane = static_cast<std::size_t>(n4) * n4;
    for (int ch = 0; ch < cfg.conv3; ++ch) {
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += cc.p3[ch * plane + i];
        cc.feat[ch] = sum / static_cast<double>(plane);
    }
}

void conv_backward(const HismModel& m, const ParamLayout& L, const ConvCache& cc,
                   const double* dfeat, double* grads) {
    const HismConfig& cfg = m.cfg;
    const int n1 = cfg.image_size, n2 = n1 / 2, n3 = n2 / 2, n4 = n3 / 2;
    const double* P = m.params.data();
    const std::size_t plane4 = static_cast<std::size_t>(n4) * n4;

    std::vector<double> dp3(cc.p3.size());
    for (int ch = 0; ch < cfg.conv3; ++ch) {
        const double g = dfeat[ch] / static_cast<double>(plane4);
        for (std::size_t i = 0; i < plane4; ++i) dp3[ch * plane4 + i] = g;
    }
    std::vector<double> dz3(cc.z3.size());
    relu_pool_backward(cc.z3.data(), dp3.data(), dz3.data(), cfg.conv3, n3);
    std::vector<double> dp2(cc.p2.size(), 0.0);
    conv3x3_backward(cc.p2.data(), P + L.c3w, dz3.data(), grads + L.c3w, grads + L.c3b,
                     dp2.data(), cfg.conv2, cfg.conv3, n3);
    std::vector<double> dz2(cc.z2.size());
    relu_pool_backward(cc.z2.data(), dp2.data(), dz2.data(), cfg.conv2, n2);
    std::vector<double> dp1(cc.p1.size(), 0.0);
    conv3x3_backward(cc.p1.data(), P + L.c2w, dz2.data(), grads + L.c2w, grads + L.c2b,
                     dp1.data(), cfg.conv1, cfg.conv2, n2);
    std::vector<double> dz1(cc.z1.size());
    relu_pool_backward(cc.z1.data(), dp1.data(), dz1.data(), cfg.conv1, n1);
    conv3x3_backward(cc.input->data.data(), P + L.c1w, dz1.data(), grads + L.c1w, grads + L.c1b,
                     nullptr, cfg.image_channels, cfg.conv1, n1);
}

namespace {

void lstm_forward(const HismModel& m, const ParamLayout& L, const TemporalInput& tin,
                  hism_detail::LstmCache& lc) {
    const HismConfig& cfg = m.cfg;
    const int H = cfg.lstm_hidden, IN = L.temporal_in, T = cfg.seq_len;
    const double* W = m.params.data() + L.lstm_w;
    const double* B = m.params.data() + L.lstm_b;
    lc.x.assign(static_cast<std::size_t>(T) * IN, 0.0);
    lc.i.assign(static_cast<std::size_t>(T) * H, 0.0);
    lc.f.assign(static_cast<std::size_t>(T) * H, 0.0);
    lc.g.assign(static_cast<std::size_t>(T) * H, 0.0);
    lc.o.assign(static_cast<std::size_t>(T) * H, 0.0);
    lc.c.assign(static_cast<std::size_t>(T) * H, 0.0);
    lc.h.assign(static_cast<std::size_t>(T) * H, 0.0);
    std::vector<double> xc(IN + H, 0.0);
    for (int t = 0; t < T; ++t) {
        lc.x[t * IN] = tin.v[t];
        if (IN > 1) lc.x[t * IN + 1] = tin.c[t];
        for (int j = 0; j < IN; ++j) xc[j] = lc.x[t * IN + j];
        for (int j = 0; j < H; ++j) xc[IN + j] = t > 0 ? lc.h[(t - 1) * H + j] : 0.0;
        for (int j = 0; j < H; ++j) {
            double zi = B[j], zf = B[H + j], zg = B[2 * H + j], zo = B[3 * H + j];
            const double* wi = W + static_cast<std::size_t>(j) * (IN + H);
            const double* wf = W + static_cast<std::size_t>(H + j) * (IN + H);
            const double* wg = W + static_cast<std::size_t>(2 * H + j) * (IN + H);
            const double* wo = W + static_cast<std::size_t>(3 * H + j) * (IN + H);
            for (int k = 0; k < IN + H; ++k) {
                zi += wi[k] * xc[k];
                zf += wf[k] * xc[k];
                zg += wg[k] * xc[k];
                zo += wo[k] * xc[k];
            }
            const double gi = sigmoid(zi), gf = sigmoid(zf), gg = std::tanh(zg),
                         go = sigmoid(zo);
            const double cp = t > 0 ? lc.c[(t - 1) * H + j] : 0.0;
            const double ct = gf * cp + gi * gg;
            lc.i[t * H + j] = gi;
            lc.f[t * H + j] = gf;
            lc.g[t * H + j] = gg;
            lc.o[t * H + j] = go;
            lc.c[t * H + j] = ct;
            lc.h[t * H + j] = go * std::tanh(ct);
        }
    }
}

void lstm_backward(const HismModel& m, const ParamLayout& L, const hism_detail::LstmCache& lc,
                   const double* dtvec, double* grads) {
    const HismConfig& cfg = m.cfg;
    const int H = cfg.lstm_hidden, IN = L.temporal_in, T = cfg.seq_len;
    const double* W = m.params.data() + L.lstm_w;
    double* dW = grads + L.lstm_w;
    double* dB = grads + L.lstm_b;
    std::vector<double> dh(H, 0.0), dc(H, 0.0), xc(IN + H), dgate(4 * H);
    for (int j = 0; j < H; ++j) dh[j] = dtvec[j];  // output is h at the last step
    for (int t = T - 1; t >= 0; --t) {
        for (int j = 0; j < IN; ++j) xc[j] = lc.x[t * IN + j];
        for (int j = 0; j < H; ++j) xc[IN + j] = t > 0 ? lc.h[(t - 1) * H + j] : 0.0;
        for (int j = 0; j < H; ++j) {
            const double gi = lc.i[t * H + j], gf = lc.f[t * H + j], gg = lc.g[t * H + j],
                         go = lc.o[t * H + j];
            const double ct = lc.c[t * H + j], tc = std::tanh(ct);
            const double cp = t > 0 ? lc.c[(t - 1) * H + j] : 0.0;
            double dct = dc[j] + dh[j] * go * (1.0 - tc * tc);
            const double dgo = dh[j] * tc;
            const double dgi = dct * gg;
            const double dgg = dct * gi;
            const double dgf = dct * cp;
            dc[j] = dct * gf;
            dgate[j] = dgi * gi * (1.0 - gi);
            dgate[H + j] = dgf * gf * (1.0 - gf);
            dgate[2 * H + j] = dgg * (1.0 - gg * gg);
            dgate[3 * H + j] = dgo * go * (1.0 - go);
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int r = 0; r < 4 * H; ++r) {
            const double g = dgate[r];
            if (g == 0.0) continue;
            double* dw = dW + static_cast<std::size_t>(r) * (IN + H);
            const double* w = W + static_cast<std::size_t>(r) * (IN + H);
            for (int k = 0; k < IN + H; ++k) dw[k] += g * xc[k];
            dB[r] += g;
            for (int k = 0; k < H; ++k) dh[k] += g * w[IN + k];
        }
    }
}

void transformer_forward(const HismModel& m, const ParamLayout& L, const TemporalInput& tin,
                         HeadCache& hc) {
    const HismConfig& cfg = m.cfg;
    const int T = cfg.seq_len, d = cfg.d_model, heads = cfg.n_heads, dh = d / heads,
              F = cfg.ffn_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = m.params.data();

    hc.tokens0.assign(static_cast<std::size_t>(T) * d, 0.0);
    for (int t = 0; t < T; ++t) {
        double x[2] = {tin.v[t], L.temporal_in > 1 ? tin.c[t] : 0.0};
        linear(P + L.emb_w, P + L.emb_b, x, &hc.tokens0[t * d], d, L.temporal_in);
        for (int i = 0; i < d; ++i) hc.tokens0[t * d + i] += positional(t, i, d);
    }

    hc.tlayers.assign(cfg.n_layers, TranLayerCache{});
    const std::vector<double>* x_prev = &hc.tokens0;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& O = L.layers[l];
        TranLayerCache& tc = hc.tlayers[l];
        tc.x_in = *x_prev;
        tc.q.assign(static_cast<std::size_t>(T) * d, 0.0);
        tc.k.assign(static_cast<std::size_t>(T) * d, 0.0);
        tc.v.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t) {
            linear(P + O.wq, P + O.bq, &tc.x_in[t * d], &tc.q[t * d], d, d);
            linear(P + O.wk, P + O.bk, &tc.x_in[t * d], &tc.k[t * d], d, d);
            linear(P + O.wv, P + O.bv, &tc.x_in[t * d], &tc.v[t * d], d, d);
        }
        tc.attn.assign(static_cast<std::size_t>(heads) * T * T, 0.0);
        tc.concat.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int hd = 0; hd < heads; ++hd) {
            const int off = hd * dh;
            for (int t = 0; t < T; ++t) {
                double* row = &tc.attn[(static_cast<std::size_t>(hd) * T + t) * T];
                double mx = -1e300;
                for (int u = 0; u < T; ++u) {
                    double s = 0.0;
                    for (int i = 0; i < dh; ++i) s += tc.q[t * d + off + i] * tc.k[u * d + off + i];
                    row[u] = s * scale;
                    mx = std::max(mx, row[u]);
                }
                double sum = 0.0;
                for (int u = 0; u < T; ++u) {
                    row[u] = std::exp(row[u] - mx);
                    sum += row[u];
                }
                for (int u = 0; u < T; ++u) row[u] /= sum;
                for (int i = 0; i < dh; ++i) {
                    double s = 0.0;
                    for (int u = 0; u < T; ++u) s += row[u] * tc.v[u * d + off + i];
                    tc.concat[t * d + off + i] = s;
                }
            }
        }
        tc.res1.assign(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> attn_out(d);
        for (int t = 0; t < T; ++t) {
            linear(P + O.wo, P + O.bo, &tc.concat[t * d], attn_out.data(), d, d);
            for (int i = 0; i < d; ++i) tc.res1[t * d + i] = tc.x_in[t * d + i] + attn_out[i];
        }
        tc.ln1_mean.assign(T, 0.0);
        tc.ln1_istd.assign(T, 0.0);
        tc.ln1_xhat.assign(static_cast<std::size_t>(T) * d, 0.0);
        tc.ln1_out.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            layer_norm(&tc.res1[t * d], P + O.ln1g, P + O.ln1b, d, &tc.ln1_mean[t],
                       &tc.ln1_istd[t], &tc.ln1_xhat[t * d], &tc.ln1_out[t * d]);

        tc.ffn_z.assign(static_cast<std::size_t>(T) * F, 0.0);
        tc.ffn_a.assign(static_cast<std::size_t>(T) * F, 0.0);
        tc.res2.assign(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> f_out(d);
        for (int t = 0; t < T; ++t) {
            linear(P + O.w1, P + O.b1, &tc.ln1_out[t * d], &tc.ffn_z[t * F], F, d);
            for (int i = 0; i < F; ++i) tc.ffn_a[t * F + i] = std::max(0.0, tc.ffn_z[t * F + i]);
            linear(P + O.w2, P + O.b2, &tc.ffn_a[t * F], f_out.data(), d, F);
            for (int i = 0; i < d; ++i) tc.res2[t * d + i] = tc.ln1_out[t * d + i] + f_out[i];
        }
        tc.ln2_mean.assign(T, 0.0);
        tc.ln2_istd.assign(T, 0.0);
        tc.ln2_xhat.assign(static_cast<std::size_t>(T) * d, 0.0);
        tc.ln2_out.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            layer_norm(&tc.res2[t * d], P + O.ln2g, P + O.ln2b, d, &tc.ln2_mean[t],
                       &tc.ln2_istd[t], &tc.ln2_xhat[t * d], &tc.ln2_out[t * d]);
        x_prev = &tc.ln2_out;
    }

    hc.tvec.assign(d, 0.0);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < d; ++i) hc.tvec[i] += (*x_prev)[t * d + i];
    for (int i = 0; i < d; ++i) hc.tvec[i] /= T;
}

void transformer_backward(const HismModel& m, const ParamLayout& L, const TemporalInput& tin,
                          const HeadCache& hc, const double* dtvec, double* grads) {
    const HismConfig& cfg = m.cfg;
    const int T = cfg.seq_len, d = cfg.d_model, heads = cfg.n_heads, dh = d / heads,
              F = cfg.ffn_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = m.params.data();

    std::vector<double> dx(static_cast<std::size_t>(T) * d, 0.0);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < d; ++i) dx[t * d + i] = dtvec[i] / T;

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& O = L.layers[l];
        const TranLayerCache& tc = hc.tlayers[l];

        // ln2
        std::vector<double> dres2(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            layer_norm_backward(&dx[t * d], P + O.ln2g, &tc.ln2_xhat[t * d], tc.ln2_istd[t], d,
                                grads + O.ln2g, grads + O.ln2b, &dres2[t * d]);
        // ffn
        std::vector<double> dln1(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> da(F), dz(F);
        for (int t = 0; t < T; ++t) {
            // residual: dres2 flows both into ln1_out and the ffn output
            for (int i = 0; i < d; ++i) dln1[t * d + i] += dres2[t * d + i];
            std::fill(da.begin(), da.end(), 0.0);
            linear_backward(P + O.w2, &tc.ffn_a[t * F], &dres2[t * d], grads + O.w2,
                            grads + O.b2, da.data(), d, F);
            for (int i = 0; i < F; ++i) dz[i] = tc.ffn_z[t * F + i] > 0.0 ? da[i] : 0.0;
            linear_backward(P + O.w1, &tc.ln1_out[t * d], dz.data(), grads + O.w1, grads + O.b1,
                            &dln1[t * d], F, d);
        }
        // ln1
        std::vector<double> dres1(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            layer_norm_backward(&dln1[t * d], P + O.ln1g, &tc.ln1_xhat[t * d], tc.ln1_istd[t], d,
                                grads + O.ln1g, grads + O.ln1b, &dres1[t * d]);
        // attention output projection; residual into x_in
        std::vector<double> dxin(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> dconcat(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t) {
            for (int i = 0; i < d; ++i) dxin[t * d + i] += dres1[t * d + i];
            linear_backward(P + O.wo, &tc.concat[t * d], &dres1[t * d], grads + O.wo,
                            grads + O.bo, &dconcat[t * d], d, d);
        }
        // attention core
        std::vector<double> dq(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> dk(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> dv(static_cast<std::size_t>(T) * d, 0.0);
        std::vector<double> drow(T), dscore(T);
        for (int hd = 0; hd < heads; ++hd) {
            const int off = hd * dh;
            for (int t = 0; t < T; ++t) {
                const double* row = &tc.attn[(static_cast<std::size_t>(hd) * T + t) * T];
                // d attn weights and dV
                std::fill(drow.begin(), drow.end(), 0.0);
                for (int i = 0; i < dh; ++i) {
                    const double g = dconcat[t * d + off + i];
                    if (g == 0.0) continue;
                    for (int u = 0; u < T; ++u) {
                        drow[u] += g * tc.v[u * d + off + i];
                        dv[u * d + off + i] += g * row[u];
                    }
                }
                // softmax backward
                double dot = 0.0;
                for (int u = 0; u < T; ++u) dot += drow[u] * row[u];
                for (int u = 0; u < T; ++u) dscore[u] = row[u] * (drow[u] - dot);
                // scores = scale * q.k
                for (int u = 0; u < T; ++u) {
                    const double g = dscore[u] * scale;
                    if (g == 0.0) continue;
                    for (int i = 0; i < dh; ++i) {
                        dq[t * d + off + i] += g * tc.k[u * d + off + i];
                        dk[u * d + off + i] += g * tc.q[t * d + off + i];
                    }
                }
            }
        }
        // projections
        for (int t = 0; t < T; ++t) {
            linear_backward(P + O.wq, &tc.x_in[t * d], &dq[t * d], grads + O.wq, grads + O.bq,
                            &dxin[t * d], d, d);
            linear_backward(P + O.wk, &tc.x_in[t * d], &dk[t * d], grads + O.wk, grads + O.bk,
                            &dxin[t * d], d, d);
            linear_backward(P + O.wv, &tc.x_in[t * d], &dv[t * d], grads + O.wv, grads + O.bv,
                            &dxin[t * d], d, d);
        }
        dx.swap(dxin);
    }

    // embedding
    for (int t = 0; t < T; ++t) {
        double x[2] = {tin.v[t], L.temporal_in > 1 ? tin.c[t] : 0.0};
        linear_backward(P + L.emb_w, x, &dx[t * d], grads + L.emb_w, grads + L.emb_b, nullptr, d,
                        L.temporal_in);
    }
}

}  // namespace

double head_forward(const HismModel& m, const ParamLayout& L, const double* feat,
                    const TemporalInput& tin, bool train_mode, std::uint64_t dropout_key,
                    HeadCache& hc) {
    const HismConfig& cfg = m.cfg;
    const double* P = m.params.data();
    const int tdim = cfg.variant == HismVariant::lstm ? cfg.lstm_hidden : cfg.d_model;

    if (cfg.variant == HismVariant::lstm) {
        lstm_forward(m, L, tin, hc.lstm);
        hc.tvec.assign(hc.lstm.h.end() - tdim, hc.lstm.h.end());
    } else {
        transformer_forward(m, L, tin, hc);
    }

    const int fin = cfg.conv3 + tdim;
    hc.u.assign(fin, 0.0);
    for (int i = 0; i < cfg.conv3; ++i) hc.u[i] = feat[i];
    for (int i = 0; i < tdim; ++i) hc.u[cfg.conv3 + i] = hc.tvec[i];

    hc.z1.assign(cfg.fc1, 0.0);
    linear(P + L.f1w, P + L.f1b, hc.u.data(), hc.z1.data(), cfg.fc1, fin);
    hc.mask1.assign(cfg.fc1, 1.0);
    hc.d1.assign(cfg.fc1, 0.0);
    for (int i = 0; i < cfg.fc1; ++i) {
        if (train_mode) hc.mask1[i] = hism_detail::drop_scale(dropout_key, 1, i, cfg.dropout);
        hc.d1[i] = std::max(0.0, hc.z1[i]) * hc.mask1[i];
    }
    hc.z2.assign(cfg.fc2, 0.0);
    linear(P + L.f2w, P + L.f2b, hc.d1.data(), hc.z2.data(), cfg.fc2, cfg.fc1);
    hc.mask2.assign(cfg.fc2, 1.0);
    hc.d2.assign(cfg.fc2, 0.0);
    for (int i = 0; i < cfg.fc2; ++i) {
        if (train_mode) hc.mask2[i] = hism_detail::drop_scale(dropout_key, 2, i, cfg.dropout);
        hc.d2[i] = std::max(0.0, hc.z2[i]) * hc.mask2[i];
    }
    double z3 = P[L.f3b];
    for (int i = 0; i < cfg.fc2; ++i) z3 += P[L.f3w + i] * hc.d2[i];
    hc.z3 = z3;
    hc.out = sigmoid(z3);
    return hc.out;
}

void head_backward(const HismModel& m, const ParamLayout& L, const TemporalInput& tin,
                   const HeadCache& hc, double dout, double* grads, double* dfeat) {
    const HismConfig& cfg = m.cfg;
    const double* P = m.params.data();
    const int tdim = cfg.variant == HismVariant::lstm ? cfg.lstm_hidden : cfg.d_model;
    const int fin = cfg.conv3 + tdim;

    const double dz3 = dout * hc.out * (1.0 - hc.out);
    grads[L.f3b] += dz3;
    std::vector<double> dd2(cfg.fc2, 0.0);
    for (int i = 0; i < cfg.fc2; ++i) {
        grads[L.f3w + i] += dz3 * hc.d2[i];
        dd2[i] = dz3 * P[L.f3w + i];
    }
    std::vector<double> dz2(cfg.fc2, 0.0);
    for (int i = 0; i < cfg.fc2; ++i)
        dz2[i] = hc.z2[i] > 0.0 ? dd2[i] * hc.mask2[i] : 0.0;
    std::vector<double> dd1(cfg.fc1, 0.0);
    linear_backward(P + L.f2w, hc.d1.data(), dz2.data(), grads + L.f2w, grads + L.f2b, dd1.data(),
                    cfg.fc2, cfg.fc1);
    std::vector<double> dz1(cfg.fc1, 0.0);
    for (int i = 0; i < cfg.fc1; ++i)
        dz1[i] = hc.z1[i] > 0.0 ? dd1[i] * hc.mask1[i] : 0.0;
    std::vector<double> du(fin, 0.0);
    linear_backward(P + L.f1w, hc.u.data(), dz1.data(), grads + L.f1w, grads + L.f1b, du.data(),
                    cfg.fc1, fin);

    for (int i = 0; i < cfg.conv3; ++i) dfeat[i] += du[i];
    if (cfg.variant == HismVariant::lstm)
        lstm_backward(m, L, hc.lstm, du.data() + cfg.conv3, grads);
    else
        transformer_backward(m, L, tin, hc, du.data() + cfg.conv3, grads);
}

double sample_loss_and_grad(const HismModel& m, const StackedInput& s, const TemporalInput& tin,
                            double target, std::vector<double>& grads) {
    const ParamLayout L = make_layout(m.cfg);
    grads.assign(L.total, 0.0);
    ConvCache cc;
    conv_forward(m, L, s, cc);
    HeadCache hc;
    const double out = head_forward(m, L, cc.feat.data(), tin, false, 0, hc);
    const double loss = (out - target) * (out - target);
    std::vector<double> dfeat(m.cfg.conv3, 0.0);
    head_backward(m, L, tin, hc, 2.0 * (out - target), grads.data(), dfeat.data());
    conv_backward(m, L, cc, dfeat.data(), grads.data());
    return loss;
}

}  // namespace hism_detail

// ------------------------------------------------------------- public API --

std::size_t hism_param_count(const HismConfig& cfg) {
    return hism_detail::make_layout(cfg).total;
}

HismModel hism_init(const HismConfig& cfg, std::uint64_t seed) {
    if (cfg.image_size % 8 != 0 || cfg.image_size <= 0)
        throw std::invalid_argument("image_size must be a positive multiple of 8");
    if (cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("d_model must be divisible by n_heads");
    const ParamLayout L = hism_detail::make_layout(cfg);
    HismModel m;
    m.cfg = cfg;
    m.init_seed = seed;
    m.params.assign(L.total, 0.0);
    Rng rng(hash_u64(seed ^ 0x4849534dULL));

    auto init_linear = [&](std::size_t w, std::size_t b, int n_out, int n_in) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(n_in));
        for (int i = 0; i < n_out * n_in; ++i) m.params[w + i] = rng.normal(0.0, sd);
        if (b != static_cast<std::size_t>(-1))
            for (int i = 0; i < n_out; ++i) m.params[b + i] = 0.0;
    };
    init_linear(L.c1w, L.c1b, cfg.conv1, cfg.image_channels * 9);
    init_linear(L.c2w, L.c2b, cfg.conv2, cfg.conv1 * 9);
    init_linear(L.c3w, L.c3b, cfg.conv3, cfg.conv2 * 9);
    if (cfg.variant == HismVariant::lstm) {
        init_linear(L.lstm_w, L.lstm_b, 4 * cfg.lstm_hidden, L.temporal_in + cfg.lstm_hidden);
        // forget-gate bias starts at 1 so early training does not wash memory
        for (int j = 0; j < cfg.lstm_hidden; ++j) m.params[L.lstm_b + cfg.lstm_hidden + j] = 1.0;
    } else {
        init_linear(L.emb_w, L.emb_b, cfg.d_model, L.temporal_in);
        for (const auto& o : L.layers) {
            init_linear(o.wq, o.bq, cfg.d_model, cfg.d_model);
            init_linear(o.wk, o.bk, cfg.d_model, cfg.d_model);
            init_linear(o.wv, o.bv, cfg.d_model, cfg.d_model);
            init_linear(o.wo, o.bo, cfg.d_model, cfg.d_model);
            for (int i = 0; i < cfg.d_model; ++i) {
                m.params[o.ln1g + i] = 1.0;
                m.params[o.ln2g + i] = 1.0;
            }
            init_linear(o.w1, o.b1, cfg.ffn_dim, cfg.d_model);
            init_linear(o.w2, o.b2, cfg.d_model, cfg.ffn_dim);
        }
    }
    const int tdim = cfg.variant == HismVariant::lstm ? cfg.lstm_hidden : cfg.d_model;
    init_linear(L.f1w, L.f1b, cfg.fc1, cfg.conv3 + tdim);
    init_linear(L.f2w, L.f2b, cfg.fc2, cfg.fc1);
    init_linear(L.f3w, L.f3b, 1, cfg.fc2);
    return m;
}

namespace {

void check_shapes(const HismModel& m, const StackedInput& s, const TemporalInput& t) {
    const HismConfig& cfg = m.cfg;
    if (s.size != cfg.image_size || s.channels != cfg.image_channels ||
        s.data.size() != static_cast<std::size_t>(cfg.image_channels) * s.size * s.size)
        throw std::invalid_argument("stacked input shape does not match the model");
    if (t.v.size() != static_cast<std::size_t>(cfg.seq_len) || t.c.size() != t.v.size())
        throw std::invalid_argument("temporal input length does not match the model");
}

}  // namespace

double hism_forward(const HismModel& m, const StackedInput& s, const TemporalInput& t,
                    bool train_mode, std::uint64_t dropout_key) {
    check_shapes(m, s, t);
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    ConvCache cc;
    hism_detail::conv_forward(m, L, s, cc);
    HeadCache hc;
    return hism_detail::head_forward(m, L, cc.feat.data(), t, train_mode, dropout_key, hc);
}

std::vector<double> hism_forward_batch(const HismModel& m,
                                       const std::vector<const StackedInput*>& images,
                                       const std::vector<TemporalInput>& tins) {
    if (images.size() != tins.size())
        throw std::invalid_argument("batch image/temporal counts differ");
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    std::vector<double> out(images.size(), 0.0);
    const StackedInput* cached = nullptr;
    ConvCache cc;
    for (std::size_t i = 0; i < images.size(); ++i) {
        check_shapes(m, *images[i], tins[i]);
        if (images[i] != cached) {
            hism_detail::conv_forward(m, L, *images[i], cc);
            cached = images[i];
        }
        HeadCache hc;
        out[i] = hism_detail::head_forward(m, L, cc.feat.data(), tins[i], false, 0, hc);
    }
    return out;
}

double hism_grad_check(const HismModel& m, const StackedInput& s, const TemporalInput& t,
                       double target, int coords, double eps, std::uint64_t seed) {
    check_shapes(m, s, t);
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    std::vector<double> analytic;
    hism_detail::sample_loss_and_grad(m, s, t, target, analytic);

    // random coordinates plus a fixed quota from every layer family, so no
    // layer type escapes the check
    Rng rng(seed);
    std::vector<std::size_t> idx;
    for (int i = 0; i < coords; ++i)
        idx.push_back(static_cast<std::size_t>(rng.uniform_int(static_cast<int>(L.total))));
    std::vector<std::pair<std::size_t, std::size_t>> families = {
        {L.c1w, L.c1b + static_cast<std::size_t>(m.cfg.conv1)},
        {L.c3w, L.c3b + static_cast<std::size_t>(m.cfg.conv3)},
        {L.f1w, L.f1b + static_cast<std::size_t>(m.cfg.fc1)},
        {L.f3w, L.f3b + 1}};
    if (m.cfg.variant == HismVariant::lstm) {
        families.push_back({L.lstm_w, L.lstm_b + static_cast<std::size_t>(4) * m.cfg.lstm_hidden});
    } else {
        families.push_back({L.emb_w, L.emb_b + static_cast<std::size_t>(m.cfg.d_model)});
        for (const auto& o : L.layers) {
            families.push_back({o.wq, o.bo + static_cast<std::size_t>(m.cfg.d_model)});
            families.push_back({o.ln1g, o.ln1b + static_cast<std::size_t>(m.cfg.d_model)});
            families.push_back({o.w1, o.b2 + static_cast<std::size_t>(m.cfg.d_model)});
        }
    }
    for (const auto& [lo, hi] : families)
        for (int i = 0; i < 8; ++i)
            idx.push_back(lo + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(hi - lo))));

    HismModel probe = m;
    auto fd_at = [&](std::size_t j, double e) {
        const double orig = probe.params[j];
        probe.params[j] = orig + e;
        const double op = hism_forward(probe, s, t) - target;
        probe.params[j] = orig - e;
        const double om = hism_forward(probe, s, t) - target;
        probe.params[j] = orig;
        return (op * op - om * om) / (2.0 * e);
    };
    auto rel_err = [&](double a, double fd) {
        return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    };
    double max_rel = 0.0;
    for (std::size_t j : idx) {
        const double a = analytic[j];
        double rel = rel_err(a, fd_at(j, eps));
        if (rel > 1e-5) {
            // A rectifier kink inside the probe interval invalidates the
            // difference quotient without the gradient being wrong; a genuine
            // gradient bug does not improve when the step shrinks.
            rel = std::min(rel, rel_err(a, fd_at(j, eps / 32.0)));
        }
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// --------------------------------------------------------------- storage ---

namespace {

std::uint32_t variant_tag(HismVariant v) { return static_cast<std::uint32_t>(v); }

void put_u32le(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const HismModel& m, const std::string& path) {
    const ParamLayout L = hism_detail::make_layout(m.cfg);
    nlohmann::json j;
    j["variant"] = hism_variant_name(m.cfg.variant);
    j["init_seed"] = m.init_seed;
    j["config"] = {{"image_size", m.cfg.image_size},
                   {"image_channels", m.cfg.image_channels},
                   {"seq_len", m.cfg.seq_len},
                   {"conv", {m.cfg.conv1, m.cfg.conv2, m.cfg.conv3}},
                   {"lstm_hidden", m.cfg.lstm_hidden},
                   {"d_model", m.cfg.d_model},
                   {"n_heads", m.cfg.n_heads},
                   {"n_layers", m.cfg.n_layers},
                   {"ffn_dim", m.cfg.ffn_dim},
                   {"fc", {m.cfg.fc1, m.cfg.fc2}},
                   {"dropout", m.cfg.dropout}};
    j["param_count"] = L.total;
    const std::string manifest = j.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.write("HISM", 4);
    put_u32le(f, 1u);
    put_u32le(f, variant_tag(m.cfg.variant));
    put_u32le(f, static_cast<std::uint32_t>(manifest.size()));
    f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put_u32le(f, static_cast<std::uint32_t>(m.params.size()));
    for (double p : m.params) {
        float v = static_cast<float>(p);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32le(f, bits);
    }
}

HismModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "HISM", 4) != 0)
        throw std::runtime_error("not a model checkpoint: " + path);
    const std::uint32_t version = get_u32le(f);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t tag = get_u32le(f);
    const std::uint32_t mlen = get_u32le(f);
    std::string manifest(mlen, '\0');
    f.read(manifest.data(), mlen);
    nlohmann::json j = nlohmann::json::parse(manifest);

    HismModel m;
    m.cfg.variant = hism_variant_from_name(j.at("variant").get<std::string>());
    if (variant_tag(m.cfg.variant) != tag)
        throw std::runtime_error("checkpoint variant tag disagrees with the manifest");
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    const auto& c = j.at("config");
    m.cfg.image_size = c.at("image_size").get<int>();
    m.cfg.image_channels = c.at("image_channels").get<int>();
    m.cfg.seq_len = c.at("seq_len").get<int>();
    m.cfg.conv1 = c.at("conv")[0].get<int>();
    m.cfg.conv2 = c.at("conv")[1].get<int>();
    m.cfg.conv3 = c.at("conv")[2].get<int>();
    m.cfg.lstm_hidden = c.at("lstm_hidden").get<int>();
    m.cfg.d_model = c.at("d_model").get<int>();
    m.cfg.n_heads = c.at("n_heads").get<int>();
    m.cfg.n_layers = c.at("n_layers").get<int>();
    m.cfg.ffn_dim = c.at("ffn_dim").get<int>();
    m.cfg.fc1 = c.at("fc")[0].get<int>();
    m.cfg.fc2 = c.at("fc")[1].get<int>();
    m.cfg.dropout = c.at("dropout").get<double>();

    const std::uint32_t count = get_u32le(f);
    if (count != hism_param_count(m.cfg))
        throw std::runtime_error("checkpoint parameter count disagrees with its config");
    m.params.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32le(f);
        float v;
        std::memcpy(&v, &bits, 4);
        m.params[i] = static_cast<double>(v);
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return m;
}

}  // namespace attn

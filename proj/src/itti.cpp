#include "attn/itti.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace attn {

namespace {

struct Grid {
    int w = 0, h = 0;
    std::vector<double> v;
    Grid() = default;
    Grid(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

int clampi(int x, int lo, int hi) { return std::min(hi, std::max(lo, x)); }

// 5-tap binomial blur [1 4 6 4 1]/16, clamped borders, separable.
Grid blur5(const Grid& g) {
    static const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    Grid tmp(g.w, g.h), out(g.w, g.h);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double s = 0.0;
            for (int i = -2; i <= 2; ++i) s += k[i + 2] * g.at(clampi(x + i, 0, g.w - 1), y);
            tmp.at(x, y) = s;
        }
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double s = 0.0;
            for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(x, clampi(y + i, 0, g.h - 1));
            out.at(x, y) = s;
        }
    return out;
}

Grid downsample2(const Grid& g) {
    Grid out(std::max(1, g.w / 2), std::max(1, g.h / 2));
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(x, y) = g.at(x * 2, y * 2);
    return out;
}

std::vector<Grid> pyramid(const Grid& base, int levels) {
    std::vector<Grid> pyr;
    pyr.push_back(base);
    for (int l = 1; l < levels; ++l) pyr.push_back(downsample2(blur5(pyr.back())));
    return pyr;
}

Grid resize_bilinear(const Grid& g, int w, int h) {
    if (g.w == w && g.h == h) return g;
    Grid out(w, h);
    double sx = static_cast<double>(g.w) / w, sy = static_cast<double>(g.h) / h;
    for (int y = 0; y < h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = clampi(static_cast<int>(std::floor(fy)), 0, g.h - 1);
        int y1 = clampi(y0 + 1, 0, g.h - 1);
        double ay = fy - std::floor(fy);
        if (fy < 0) ay = 0.0;
        for (int x = 0; x < w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = clampi(static_cast<int>(std::floor(fx)), 0, g.w - 1);
            int x1 = clampi(x0 + 1, 0, g.w - 1);
            double ax = fx - std::floor(fx);
            if (fx < 0) ax = 0.0;
            out.at(x, y) = (1 - ay) * ((1 - ax) * g.at(x0, y0) + ax * g.at(x1, y0)) +
                           ay * ((1 - ax) * g.at(x0, y1) + ax * g.at(x1, y1));
        }
    }
    return out;
}

// |center - surround| with the surround level upsampled to the center size.
Grid across_scale_abs_diff(const Grid& c, const Grid& s) {
    Grid up = resize_bilinear(s, c.w, c.h);
    Grid out(c.w, c.h);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::fabs(c.v[i] - up.v[i]);
    return out;
}

// Mean-free cosine Gabor kernel.
std::vector<std::vector<double>> gabor_kernel(double theta_rad, double sigma, double lambda) {
    int half = std::max(3, static_cast<int>(std::lround(2.2 * sigma)));
    int n = 2 * half + 1;
    std::vector<std::vector<double>> k(n, std::vector<double>(n, 0.0));
    double sum = 0.0;
    for (int y = -half; y <= half; ++y)
        for (int x = -half; x <= half; ++x) {
            double xr = x * std::cos(theta_rad) + y * std::sin(theta_rad);
            double yr = -x * std::sin(theta_rad) + y * std::cos(theta_rad);
            double g = std::exp(-(xr * xr + yr * yr) / (2.0 * sigma * sigma)) *
                       std::cos(2.0 * M_PI * xr / lambda);
            k[y + half][x + half] = g;
            sum += g;
        }
    double mean = sum / (static_cast<double>(n) * n);
    for (auto& row : k)
        for (double& v : row) v -= mean;  // zero response on flat regions
    return k;
}

Grid gabor_response(const Grid& g, const std::vector<std::vector<double>>& k) {
    int half = (static_cast<int>(k.size()) - 1) / 2;
    Grid out(g.w, g.h);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double s = 0.0;
            for (int j = -half; j <= half; ++j)
                for (int i = -half; i <= half; ++i)
                    s += k[j + half][i + half] *
                         g.at(clampi(x + i, 0, g.w - 1), clampi(y + j, 0, g.h - 1));
            out.at(x, y) = std::fabs(s);
        }
    return out;
}

SaliencyMap to_map(const Grid& g) {
    SaliencyMap m(g.w, g.h);
    m.values = g.v;
    return m;
}

Grid to_grid(const SaliencyMap& m) {
    Grid g(m.width, m.height);
    g.v = m.values;
    return g;
}

void add_into(Grid& acc, const Grid& g) {
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += g.v[i];
}

}  // namespace

SaliencyMap normalize_operator(const SaliencyMap& map) {
    SaliencyMap out(map.width, map.height);
    double mn = map.values.empty() ? 0.0 : map.values[0], mx = mn;
    for (double v : map.values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx - mn < 1e-12) return out;  // constant map -> zeros

    std::vector<double> r(map.values.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = (map.values[i] - mn) / (mx - mn);

    // Peak detection works on values quantized to 2^-20 so that floating-point
    // dust (e.g. from a global brightness offset upstream) cannot break or
    // create ties between plateau pixels and flip the set of local maxima.
    std::vector<double> q(r.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::round(r[i] * 1048576.0);

    // local maxima above 0.1, strict in the 8-neighborhood
    const int w = map.width, h = map.height;
    std::vector<double> peaks;
    double global = 1.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = q[static_cast<std::size_t>(y) * w + x];
            if (v <= 0.1 * 1048576.0) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1 && is_max; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (q[static_cast<std::size_t>(ny) * w + nx] >= v) is_max = false;
                }
            if (is_max) peaks.push_back(v / 1048576.0);
        }
    // mean of local maxima other than (one instance of) the global max
    double mbar = 0.0;
    if (!peaks.empty()) {
        std::size_t drop = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < peaks.size(); ++i)
            if (peaks[i] > best) {
                best = peaks[i];
                drop = i;
            }
        double s = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < peaks.size(); ++i)
            if (i != drop) {
                s += peaks[i];
                ++n;
            }
        mbar = n > 0 ? s / n : 0.0;
    }
    double scale = (global - mbar) * (global - mbar);
    for (std::size_t i = 0; i < r.size(); ++i) out.values[i] = r[i] * scale;
    return out;
}

SaliencyMap itti_saliency(const Image& frame, const IttiConfig& cfg) {
    if (frame.width < 256 || frame.height < 256)
        throw std::invalid_argument("itti_saliency: frame must be at least 256 px per side");

    const int W = frame.width, H = frame.height;
    Grid rC(W, H), gC(W, H), bC(W, H), inten(W, H);
    double imax = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::uint8_t* p = frame.px(x, y);
            double r = p[0] / 255.0, g = p[1] / 255.0, b = p[2] / 255.0;
            rC.at(x, y) = r;
            gC.at(x, y) = g;
            bC.at(x, y) = b;
            double i = (r + g + b) / 3.0;
            inten.at(x, y) = i;
            imax = std::max(imax, i);
        }

    // hue decoupling: opponent channels only where intensity is significant
    Grid R(W, H), G(W, H), B(W, H), Y(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double i = inten.at(x, y);
            if (i <= 0.1 * imax) continue;
            double r = rC.at(x, y) / i, g = gC.at(x, y) / i, b = bC.at(x, y) / i;
            R.at(x, y) = std::max(0.0, r - (g + b) / 2.0);
            G.at(x, y) = std::max(0.0, g - (r + b) / 2.0);
            B.at(x, y) = std::max(0.0, b - (r + g) / 2.0);
            Y.at(x, y) = std::max(0.0, (r + g) / 2.0 - std::fabs(r - g) / 2.0 - b);
        }

    auto ipyr = pyramid(inten, cfg.levels);
    auto rpyr = pyramid(R, cfg.levels);
    auto gpyr = pyramid(G, cfg.levels);
    auto bpyr = pyramid(B, cfg.levels);
    auto ypyr = pyramid(Y, cfg.levels);

    // orientation responses per pyramid level (only levels used below)
    const double thetas[4] = {0.0, M_PI / 4.0, M_PI / 2.0, 3.0 * M_PI / 4.0};
    std::vector<std::vector<Grid>> opyr(4, std::vector<Grid>(cfg.levels));
    for (int t = 0; t < 4; ++t) {
        auto k = gabor_kernel(thetas[t], cfg.gabor_sigma_px, cfg.gabor_wavelength_px);
        for (int l = 2; l < cfg.levels; ++l) opyr[t][l] = gabor_response(ipyr[l], k);
    }

    const int sigma_level = 4;
    const int SW = ipyr[sigma_level].w, SH = ipyr[sigma_level].h;

    Grid ci(SW, SH), cc_(SW, SH), co(SW, SH);
    std::vector<Grid> otheta(4, Grid(SW, SH));
    for (int c = 2; c <= 4; ++c)
        for (int d = 3; d <= 4; ++d) {
            int s = c + d;
            // intensity
            Grid fi = across_scale_abs_diff(ipyr[c], ipyr[s]);
            add_into(ci, resize_bilinear(to_grid(normalize_operator(to_map(fi))), SW, SH));
            // double-opponent color
            Grid rg_c(ipyr[c].w, ipyr[c].h), by_c(ipyr[c].w, ipyr[c].h);
            for (std::size_t i = 0; i < rg_c.v.size(); ++i) {
                rg_c.v[i] = rpyr[c].v[i] - gpyr[c].v[i];
                by_c.v[i] = bpyr[c].v[i] - ypyr[c].v[i];
            }
            Grid gr_s(ipyr[s].w, ipyr[s].h), yb_s(ipyr[s].w, ipyr[s].h);
            for (std::size_t i = 0; i < gr_s.v.size(); ++i) {
                gr_s.v[i] = gpyr[s].v[i] - rpyr[s].v[i];
                yb_s.v[i] = ypyr[s].v[i] - bpyr[s].v[i];
            }
            Grid rg_up = resize_bilinear(gr_s, rg_c.w, rg_c.h);
            Grid by_up = resize_bilinear(yb_s, by_c.w, by_c.h);
            Grid frg(rg_c.w, rg_c.h), fby(by_c.w, by_c.h);
            for (std::size_t i = 0; i < frg.v.size(); ++i) {
                frg.v[i] = std::fabs(rg_c.v[i] - rg_up.v[i]);
                fby.v[i] = std::fabs(by_c.v[i] - by_up.v[i]);
            }
            add_into(cc_, resize_bilinear(to_grid(normalize_operator(to_map(frg))), SW, SH));
            add_into(cc_, resize_bilinear(to_grid(normalize_operator(to_map(fby))), SW, SH));
            // orientations accumulate per theta first
            for (int t = 0; t < 4; ++t) {
                Grid fo = across_scale_abs_diff(opyr[t][c], opyr[t][s]);
                add_into(otheta[t],
                         resize_bilinear(to_grid(normalize_operator(to_map(fo))), SW, SH));
            }
        }
    for (int t = 0; t < 4; ++t)
        add_into(co, to_grid(normalize_operator(to_map(otheta[t]))));

    Grid final_g(SW, SH);
    Grid nci = to_grid(normalize_operator(to_map(ci)));
    Grid ncc = to_grid(normalize_operator(to_map(cc_)));
    Grid nco = to_grid(normalize_operator(to_map(co)));
    for (std::size_t i = 0; i < final_g.v.size(); ++i)
        final_g.v[i] = (nci.v[i] + ncc.v[i] + nco.v[i]) / 3.0;

    SaliencyMap out = to_map(resize_bilinear(final_g, W, H));
    out.normalize(NormMode::unit_max);
    return out;
}

}  // namespace attn

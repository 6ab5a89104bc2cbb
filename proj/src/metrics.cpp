#include "attn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace attn {

namespace {

void check_same_shape(const SaliencyMap& a, const SaliencyMap& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("saliency maps differ in shape");
}

std::vector<double> unit_sum(const SaliencyMap& m) {
    double s = 0.0;
    for (double v : m.values) s += v;
    if (s <= 0.0) throw std::invalid_argument("all-zero map cannot be sum-normalized");
    std::vector<double> out(m.values);
    for (double& v : out) v /= s;
    return out;
}

}  // namespace

double auc_judd(const SaliencyMap& pred, const std::vector<PixelPoint>& fixations) {
    if (fixations.empty()) throw std::invalid_argument("auc requires at least one fixation");
    std::vector<double> fix_vals;
    std::vector<char> is_fix(pred.values.size(), 0);
    for (const PixelPoint& p : fixations) {
        if (p.x < 0 || p.x >= pred.width || p.y < 0 || p.y >= pred.height)
            throw std::invalid_argument("fixation outside map");
        std::size_t idx = static_cast<std::size_t>(p.y) * pred.width + p.x;
        if (!is_fix[idx]) fix_vals.push_back(pred.values[idx]);
        is_fix[idx] = 1;
    }
    std::size_t n_neg = 0;
    std::vector<double> neg;
    neg.reserve(pred.values.size());
    for (std::size_t i = 0; i < pred.values.size(); ++i)
        if (!is_fix[i]) neg.push_back(pred.values[i]);
    n_neg = neg.size();
    std::sort(neg.begin(), neg.end());

    std::vector<double> thresholds(fix_vals);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double n_fix = static_cast<double>(fix_vals.size());
    // ROC points from high threshold to low; threshold rule is "value >= tau".
    std::vector<std::pair<double, double>> roc;  // (fpr, tpr)
    roc.emplace_back(0.0, 0.0);
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
        double tau = *it;
        double tp = 0.0;
        for (double v : fix_vals)
            if (v >= tau) tp += 1.0;
        std::size_t below = std::lower_bound(neg.begin(), neg.end(), tau) - neg.begin();
        double fp = static_cast<double>(n_neg - below);
        roc.emplace_back(n_neg > 0 ? fp / n_neg : 0.0, tp / n_fix);
    }
    roc.emplace_back(1.0, 1.0);
    std::sort(roc.begin(), roc.end());
    double auc = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        auc += (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second) / 2.0;
    return auc;
}

double nss(const SaliencyMap& pred, const std::vector<PixelPoint>& fixations) {
    if (fixations.empty()) throw std::invalid_argument("nss requires at least one fixation");
    const std::size_t n = pred.values.size();
    double mean = 0.0;
    for (double v : pred.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : pred.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) throw std::invalid_argument("nss undefined for a zero-variance map");
    const double sd = std::sqrt(var);
    double acc = 0.0;
    for (const PixelPoint& p : fixations) acc += (pred.at(p.x, p.y) - mean) / sd;
    return acc / static_cast<double>(fixations.size());
}

double sim(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same_shape(pred, gt);
    auto p = unit_sum(pred);
    auto q = unit_sum(gt);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::min(p[i], q[i]);
    return s;
}

double cc(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same_shape(pred, gt);
    const std::size_t n = pred.values.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += pred.values[i];
        mb += gt.values[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = pred.values[i] - ma, db = gt.values[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw std::invalid_argument("cc undefined for a zero-variance map");
    return sab / std::sqrt(saa * sbb);
}

double kl_div(const SaliencyMap& gt, const SaliencyMap& pred, double eps) {
    check_same_shape(gt, pred);
    auto p = unit_sum(gt);
    auto q = unit_sum(pred);
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] += eps;
        q[i] += eps;
        sp += p[i];
        sq += q[i];
    }
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = p[i] / sp, qi = q[i] / sq;
        d += pi * std::log(pi / qi);
    }
    return std::max(0.0, d);
}

double composite_loss(const SaliencyMap& pred, const SaliencyMap& gt, const LossWeights& w,
                      double eps) {
    return w.w_kl * kl_div(gt, pred, eps) + w.w_cc * cc(pred, gt) + w.w_sim * sim(pred, gt);
}

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& gts) {
    if (preds.empty() || preds.size() != gts.size())
        throw std::invalid_argument("regression_metrics needs equal-length nonempty series");
    RegressionMetrics m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double d = preds[i] - gts[i];
        m.mse += d * d;
        m.mae += std::fabs(d);
    }
    m.mse /= preds.size();
    m.mae /= preds.size();
    return m;
}

void write_report_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report csv: " + path);
    out << "split,auc,nss,sim,cc,kl,mse,mae\n";
    char line[256];
    for (const MetricReport& r : reports) {
        auto field = [](bool has, double v) {
            char buf[32];
            if (has)
                std::snprintf(buf, sizeof(buf), "%.6f", v);
            else
                std::snprintf(buf, sizeof(buf), "nan");
            return std::string(buf);
        };
        std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%s,%s,%s,%s\n", r.split.c_str(),
                      field(r.has_pixel, r.auc).c_str(), field(r.has_pixel, r.nss).c_str(),
                      field(r.has_pixel, r.sim).c_str(), field(r.has_pixel, r.cc).c_str(),
                      field(r.has_pixel, r.kl).c_str(), field(r.has_regression, r.mse).c_str(),
                      field(r.has_regression, r.mae).c_str());
        out << line;
    }
}

}  // namespace attn

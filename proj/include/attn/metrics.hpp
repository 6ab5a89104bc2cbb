#pragma once

#include <utility>
#include <vector>

#include "attn/saliency.hpp"

namespace attn {

struct PixelPoint {
    int x = 0, y = 0;
};

// AUC-Judd: thresholds taken at the fixated pixels' saliency values.
double auc_judd(const SaliencyMap& pred, const std::vector<PixelPoint>& fixations);

// Mean of the z-scored prediction at the fixation pixels.
double nss(const SaliencyMap& pred, const std::vector<PixelPoint>& fixations);

// Histogram intersection of the two unit-sum normalized maps.
double sim(const SaliencyMap& pred, const SaliencyMap& gt);

// Pearson correlation over the flattened rasters.
double cc(const SaliencyMap& pred, const SaliencyMap& gt);

// KL(gt || pred) after unit-sum normalization with an eps floor.
double kl_div(const SaliencyMap& gt, const SaliencyMap& pred, double eps = 1e-7);

struct LossWeights {
    double w_kl = 10.0;
    double w_cc = -3.0;
    double w_sim = -2.0;
};

double composite_loss(const SaliencyMap& pred, const SaliencyMap& gt,
                      const LossWeights& w, double eps = 1e-7);

struct RegressionMetrics {
    double mse = 0.0;
    double mae = 0.0;
};

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& gts);

struct MetricReport {
    std::string split;  // "highlight", "no_highlight", "all"
    double auc = 0.0, nss = 0.0, sim = 0.0, cc = 0.0, kl = 0.0;
    double mse = 0.0, mae = 0.0;
    bool has_pixel = false;
    bool has_regression = false;
};

void write_report_csv(const std::vector<MetricReport>& reports, const std::string& path);

}  // namespace attn

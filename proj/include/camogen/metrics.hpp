#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camogen/tensor.hpp"

namespace camogen::metrics {

// One prediction/ground-truth pair: pred is (H,W) in [0,1], gt is (H,W) with
// values exactly 0 or 1.
struct PredictionPair {
    Tensor pred;
    Tensor gt;
    std::string name;
};

// validates shapes, clamps pred to [0,1], binarizes gt at 0.5
PredictionPair make_pair(Tensor pred, Tensor gt, std::string name);

// mean absolute error
real mae(const PredictionPair& pair);

// Structure measure: alpha-blend of object similarity (foreground/background
// mean-and-dispersion terms) and region similarity (per-quadrant structural
// similarity, quadrants split at the ground-truth centroid and weighted by
// quadrant area). Degenerate rules: all-background gt scores 1 - mean(pred),
// all-foreground gt scores mean(pred). Because the rounded centroid column
// and row belong to the top-left quadrant, the score mirrors under flips only
// approximately.
real s_measure(const PredictionPair& pair, real alpha = 0.5);

// Enhanced-alignment measure computed directly on the real-valued prediction:
// xi = 2*phi_g*phi_p / (phi_g^2 + phi_p^2) with phi the mean-centered map,
// scored as the mean of (1+xi)^2/4. Degenerate rules: all-background gt
// scores mean(1 - pred), all-foreground gt scores mean(pred).
real e_measure(const PredictionPair& pair);

// Weighted F-measure with beta^2 = 1: the error field is smoothed on the
// foreground by a 7x7 Gaussian (sigma 5) after substituting each background
// error with the error at its nearest foreground pixel, and background errors
// are scaled by B = 2 - exp(ln(0.5)/5 * dist-to-foreground). When several
// foreground pixels tie at the nearest distance the smallest error among them
// is used, which keeps the measure symmetric under flips. An all-background
// gt is defined as 0 and sets *empty_gt_warning.
real weighted_f_measure(const PredictionPair& pair, bool* empty_gt_warning = nullptr);

struct MetricRow {
    std::string name;
    real S = 0, E = 0, Fw = 0, MAE = 0;
};

struct MetricReport {
    std::vector<MetricRow> per_image;  // sorted by name
    real mean_s = 0, mean_e = 0, mean_fw = 0, mean_mae = 0;
    int count = 0;
    int empty_gt_warnings = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
    void save(const std::filesystem::path& file) const;
};

// Pairs predictions and ground truths by basename, resizes each prediction
// (bilinear) to its gt size when they differ, and aggregates all four
// metrics. Throws on unpaired or unreadable files.
MetricReport evaluate_directory(const std::filesystem::path& pred_dir,
                                const std::filesystem::path& gt_dir);

}  // namespace camogen::metrics

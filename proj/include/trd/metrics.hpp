#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trd/tensor.hpp"

namespace trd {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 0 negative / 1 positive
};

// Mann-Whitney AUROC, ties counted half
double auroc(const ScoredSet& s);

// step-interpolated average precision over the descending-score sweep
double average_precision(const ScoredSet& s);

struct PixelEval {
    std::vector<Tensor> maps;   // H x W prediction maps
    std::vector<Tensor> masks;  // H x W {0,1} ground truth, paired with maps
};

// Per-region overlap integrated over FPR in [0, fpr_limit], normalized by the
// limit. Regions are 8-connected components; thresholds are the sorted
// unique prediction values (quantile bins on very large inputs).
double pro(const PixelEval& e, double fpr_limit);

struct MetricsValues {
    double i_auc = 0, i_ap = 0, p_auc = 0, p_ap = 0, pro = 0;
};

MetricsValues evaluate_all(const ScoredSet& image_scores, const PixelEval& pixels, double pro_fpr_limit);

struct MetricsReport {
    std::vector<std::pair<std::string, MetricsValues>> categories;
    std::string config_fingerprint;

    MetricsValues average() const;
    std::string table() const;  // human-readable
    std::string kv() const;     // machine-readable key=value lines
};

}  // namespace trd

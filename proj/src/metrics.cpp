#include "trd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace trd {

double auroc(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size()) throw MetricError("auroc: scores/labels length mismatch");
    std::int64_t npos = 0, nneg = 0;
    for (int l : s.labels) (l ? npos : nneg) += 1;
    if (npos == 0 || nneg == 0) throw MetricError("auroc: both classes must be present");

    std::vector<size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });

    // rank-sum with average ranks for ties
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (size_t k = i; k < j; ++k)
            if (s.labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(npos) * (static_cast<double>(npos) + 1.0);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double average_precision(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size()) throw MetricError("average_precision: scores/labels length mismatch");
    std::int64_t npos = 0;
    for (int l : s.labels) npos += l ? 1 : 0;
    if (npos == 0) throw MetricError("average_precision: no positives");

    std::vector<size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.scores[a] > s.scores[b]; });

    double ap = 0.0, prev_recall = 0.0;
    std::int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) (s.labels[order[k]] ? tp : fp) += 1;
        const double recall = static_cast<double>(tp) / static_cast<double>(npos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

namespace {

// 8-connected component labeling; returns component count, ids start at 0,
// -1 outside regions
int label_components(const Tensor& mask, std::vector<int>& comp_id) {
    const int H = mask.dim(0), W = mask.dim(1);
    comp_id.assign(static_cast<size_t>(H) * W, -1);
    int next_id = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (mask.at(y, x) <= 0 || comp_id[static_cast<size_t>(y) * W + x] != -1) continue;
            stack.push_back({y, x});
            comp_id[static_cast<size_t>(y) * W + x] = next_id;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        if (mask.at(ny, nx) <= 0 || comp_id[static_cast<size_t>(ny) * W + nx] != -1) continue;
                        comp_id[static_cast<size_t>(ny) * W + nx] = next_id;
                        stack.push_back({ny, nx});
                    }
            }
            ++next_id;
        }
    }
    return next_id;
}

constexpr std::int64_t kQuantileSwitch = 4'000'000;  // pixels; above this use 500 quantile bins
constexpr int kQuantileBins = 500;

}  // namespace

double pro(const PixelEval& e, double fpr_limit) {
    if (e.maps.size() != e.masks.size() || e.maps.empty()) throw MetricError("pro: maps/masks must be paired");
    if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw MetricError("pro: fpr limit must be in (0, 1]");

    struct Pixel {
        double score;
        int comp;  // -1 for normal pixels
    };
    std::vector<Pixel> pixels;
    std::vector<std::int64_t> comp_size;
    std::int64_t n_normal = 0;

    for (size_t img = 0; img < e.maps.size(); ++img) {
        const Tensor& map = e.maps[img];
        const Tensor& mask = e.masks[img];
        check_same_shape(map, mask, "pro");
        std::vector<int> comp_id;
        const int n_comp = label_components(mask, comp_id);
        const int base = static_cast<int>(comp_size.size());
        comp_size.resize(static_cast<size_t>(base + n_comp), 0);
        for (std::int64_t i = 0; i < map.size(); ++i) {
            const int local = comp_id[static_cast<size_t>(i)];
            const int comp = local >= 0 ? base + local : -1;
            if (comp >= 0)
                comp_size[static_cast<size_t>(comp)] += 1;
            else
                n_normal += 1;
            pixels.push_back({map[i], comp});
        }
    }
    if (comp_size.empty()) throw MetricError("pro: no anomalous pixels in the evaluation set");
    if (n_normal == 0) throw MetricError("pro: no normal pixels in the evaluation set");

    std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

    // optional quantile binning for very large inputs: snap scores to bin
    // representatives; ties never split across bins
    if (static_cast<std::int64_t>(pixels.size()) > kQuantileSwitch) {
        const std::int64_t n = static_cast<std::int64_t>(pixels.size());
        double prev_orig = pixels[0].score;
        double prev_assigned = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double orig = pixels[static_cast<size_t>(i)].score;
            if (i > 0 && orig == prev_orig) {
                pixels[static_cast<size_t>(i)].score = prev_assigned;
            } else {
                const int bin = static_cast<int>(i * kQuantileBins / n);
                prev_orig = orig;
                prev_assigned = -static_cast<double>(bin);
                pixels[static_cast<size_t>(i)].score = prev_assigned;
            }
        }
    }

    const double n_regions = static_cast<double>(comp_size.size());
    std::vector<std::int64_t> hits(comp_size.size(), 0);
    double hit_ratio_sum = 0.0;  // sum over comps of hits/size
    std::int64_t fp = 0;

    double area = 0.0;
    double prev_fpr = 0.0, prev_pro = 0.0;
    size_t i = 0;
    while (i < pixels.size()) {
        size_t j = i;
        while (j < pixels.size() && pixels[j].score == pixels[i].score) ++j;
        for (size_t k = i; k < j; ++k) {
            const int comp = pixels[k].comp;
            if (comp >= 0) {
                hit_ratio_sum += 1.0 / static_cast<double>(comp_size[static_cast<size_t>(comp)]);
                hits[static_cast<size_t>(comp)] += 1;
            } else {
                fp += 1;
            }
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_normal);
        const double mean_pro = hit_ratio_sum / n_regions;
        if (fpr >= fpr_limit) {
            // interpolate the curve at the limit and close the integral
            const double t = (fpr > prev_fpr) ? (fpr_limit - prev_fpr) / (fpr - prev_fpr) : 0.0;
            const double pro_at_limit = prev_pro + t * (mean_pro - prev_pro);
            area += 0.5 * (prev_pro + pro_at_limit) * (fpr_limit - prev_fpr);
            return area / fpr_limit;
        }
        area += 0.5 * (prev_pro + mean_pro) * (fpr - prev_fpr);
        prev_fpr = fpr;
        prev_pro = mean_pro;
        i = j;
    }
    // fpr reaches 1.0 at the lowest threshold, so the limit is always hit;
    // this is only reachable for fpr_limit == 1 with exact arithmetic
    return area / fpr_limit;
}

MetricsValues evaluate_all(const ScoredSet& image_scores, const PixelEval& pixels, double pro_fpr_limit) {
    MetricsValues v;
    try {
        v.i_auc = auroc(image_scores);
        v.i_ap = average_precision(image_scores);
    } catch (const MetricError& e) {
        throw MetricError(std::string("image-level metrics: ") + e.what());
    }
    try {
        ScoredSet pooled;
        for (size_t i = 0; i < pixels.maps.size(); ++i) {
            const Tensor& map = pixels.maps[i];
            const Tensor& mask = pixels.masks[i];
            check_same_shape(map, mask, "evaluate_all");
            for (std::int64_t p = 0; p < map.size(); ++p) {
                pooled.scores.push_back(map[p]);
                pooled.labels.push_back(mask[p] > 0 ? 1 : 0);
            }
        }
        v.p_auc = auroc(pooled);
        v.p_ap = average_precision(pooled);
        v.pro = pro(pixels, pro_fpr_limit);
    } catch (const MetricError& e) {
        throw MetricError(std::string("pixel-level metrics: ") + e.what());
    }
    return v;
}

MetricsValues MetricsReport::average() const {
    MetricsValues avg;
    if (categories.empty()) return avg;
    for (const auto& [name, v] : categories) {
        avg.i_auc += v.i_auc;
        avg.i_ap += v.i_ap;
        avg.p_auc += v.p_auc;
        avg.p_ap += v.p_ap;
        avg.pro += v.pro;
    }
    const double n = static_cast<double>(categories.size());
    avg.i_auc /= n;
    avg.i_ap /= n;
    avg.p_auc /= n;
    avg.p_ap /= n;
    avg.pro /= n;
    return avg;
}

namespace {
void append_row(std::ostringstream& os, const std::string& name, const MetricsValues& v) {
    os.setf(std::ios::fixed);
    os.precision(4);
    os << name;
    for (size_t i = name.size(); i < 16; ++i) os << ' ';
    os << "  " << v.i_auc << "  " << v.i_ap << "  " << v.p_auc << "  " << v.p_ap << "  " << v.pro << "\n";
}
}  // namespace

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << "category          i-auc   i-ap    p-auc   p-ap    pro\n";
    for (const auto& [name, v] : categories) append_row(os, name, v);
    if (categories.size() > 1) append_row(os, "average", average());
    if (!config_fingerprint.empty()) os << "config " << config_fingerprint << "\n";
    return os.str();
}

std::string MetricsReport::kv() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(9);
    auto emit = [&os](const std::string& prefix, const MetricsValues& v) {
        os << prefix << ".i_auc = " << v.i_auc << "\n";
        os << prefix << ".i_ap = " << v.i_ap << "\n";
        os << prefix << ".p_auc = " << v.p_auc << "\n";
        os << prefix << ".p_ap = " << v.p_ap << "\n";
        os << prefix << ".pro = " << v.pro << "\n";
    };
    for (const auto& [name, v] : categories) emit(name, v);
    emit("average", average());
    if (!config_fingerprint.empty()) os << "config_fingerprint = " << config_fingerprint << "\n";
    return os.str();
}

}  // namespace trd

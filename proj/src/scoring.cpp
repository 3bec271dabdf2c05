#include "trd/scoring.hpp"

#include <cmath>

namespace trd {

FusionStrategy fusion_from_string(const std::string& s) {
    if (s == "norm_sum") return FusionStrategy::kNormSum;
    if (s == "sum_raw") return FusionStrategy::kSumRaw;
    if (s == "product") return FusionStrategy::kProduct;
    throw ConfigError("unknown fusion strategy '" + s + "' (expected norm_sum, sum_raw or product)");
}

std::string to_string(FusionStrategy f) {
    switch (f) {
        case FusionStrategy::kNormSum: return "norm_sum";
        case FusionStrategy::kSumRaw: return "sum_raw";
        case FusionStrategy::kProduct: return "product";
    }
    return "norm_sum";
}

AnomalyMap branch_map(const std::vector<Tensor>& f_e, const std::vector<Tensor>& f_ca, int out_h, int out_w,
                      BranchTag tag) {
    if (f_e.size() != f_ca.size() || f_e.empty()) throw DimensionError("branch_map: pyramid level count mismatch");
    Tensor acc({out_h, out_w});
    for (size_t i = 0; i < f_e.size(); ++i) {
        check_same_shape(f_e[i], f_ca[i], "branch_map");
        if (f_e[i].ndim() != 4 || f_e[i].dim(0) != 1)
            throw DimensionError("branch_map: expected batch-1 feature maps, got " + shape_str(f_e[i].shape()));
        Tensor cos = ops::cosine_map_values(f_e[i], f_ca[i]);  // 1 x 1 x h x w
        Tensor dist({cos.dim(2), cos.dim(3)});
        for (std::int64_t p = 0; p < dist.size(); ++p) dist[p] = 1.0 - cos[p];
        Tensor up = ops::bilinear_resize_hw(dist, out_h, out_w);
        for (std::int64_t p = 0; p < acc.size(); ++p) acc[p] += up[p];
    }
    return {std::move(acc), tag};
}

AnomalyMap smooth(const AnomalyMap& m, double sigma) {
    return {ops::gaussian_blur_hw(m.data, sigma), m.tag};
}

AnomalyMap fuse(const AnomalyMap& m2d, const AnomalyMap& m3d, const CalibrationStats& stats,
                FusionStrategy strategy) {
    check_same_shape(m2d.data, m3d.data, "fuse");
    const double s2 = std::max(stats.sigma_2d, kSigmaFloor);
    const double s3 = std::max(stats.sigma_3d, kSigmaFloor);
    Tensor out(m2d.data.shape());
    switch (strategy) {
        case FusionStrategy::kNormSum:
            for (std::int64_t i = 0; i < out.size(); ++i)
                out[i] = (m2d.data[i] - stats.mu_2d) / s2 + (m3d.data[i] - stats.mu_3d) / s3;
            break;
        case FusionStrategy::kSumRaw:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = m2d.data[i] + m3d.data[i];
            break;
        case FusionStrategy::kProduct:
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] = m2d.data[i] * m3d.data[i];
            break;
    }
    return {std::move(out), BranchTag::kFused};
}

double image_score(const AnomalyMap& m) {
    if (!m.data.all_finite()) throw EvaluationError("image_score: anomaly map contains non-finite values");
    return m.data.max_value();
}

double effective_sigma(double sigma_at_256, int resolution) {
    return sigma_at_256 * static_cast<double>(resolution) / 256.0;
}

namespace {

Var to_batch1(const Tensor& chw) {
    Tensor out({1, chw.dim(0), chw.dim(1), chw.dim(2)});
    std::copy(chw.data(), chw.data() + chw.size(), out.data());
    return make_var(std::move(out), false);
}

std::vector<Tensor> values_of(const std::vector<Var>& pyr) {
    std::vector<Tensor> out;
    out.reserve(pyr.size());
    for (const Var& v : pyr) out.push_back(v->value);
    return out;
}

}  // namespace

BranchMaps sample_branch_maps(const TRDModel& model, const MultimodalSample& sample, double sigma_at_256) {
    if (sample.image_2d.empty() || sample.image_3d.empty())
        throw InputError("sample_branch_maps: both modalities are required");
    NoGradGuard ng;
    const int res = model.config().profile.resolution;
    TRDOutputs out = model.forward(to_batch1(sample.image_2d), to_batch1(sample.image_3d));
    const double sig = effective_sigma(sigma_at_256, res);
    BranchMaps maps;
    maps.m2d = smooth(branch_map(values_of(out.branch_2d.f_e_own), values_of(out.branch_2d.f_ca), res, res,
                                 BranchTag::k2D),
                      sig);
    maps.m3d = smooth(branch_map(values_of(out.branch_3d.f_e_own), values_of(out.branch_3d.f_ca), res, res,
                                 BranchTag::k3D),
                      sig);
    return maps;
}

CalibrationStats calibrate_from_maps(const std::vector<BranchMaps>& maps) {
    if (maps.empty()) throw CalibrationError("calibrate: no maps given");
    double sum2 = 0.0, sq2 = 0.0, sum3 = 0.0, sq3 = 0.0;
    std::int64_t count = 0;
    for (const BranchMaps& m : maps) {
        check_same_shape(m.m2d.data, m.m3d.data, "calibrate");
        for (std::int64_t i = 0; i < m.m2d.data.size(); ++i) {
            sum2 += m.m2d.data[i];
            sq2 += m.m2d.data[i] * m.m2d.data[i];
            sum3 += m.m3d.data[i];
            sq3 += m.m3d.data[i] * m.m3d.data[i];
        }
        count += m.m2d.data.size();
    }
    CalibrationStats stats;
    stats.mu_2d = sum2 / static_cast<double>(count);
    stats.mu_3d = sum3 / static_cast<double>(count);
    stats.sigma_2d = std::max(std::sqrt(std::max(0.0, sq2 / static_cast<double>(count) - stats.mu_2d * stats.mu_2d)),
                              kSigmaFloor);
    stats.sigma_3d = std::max(std::sqrt(std::max(0.0, sq3 / static_cast<double>(count) - stats.mu_3d * stats.mu_3d)),
                              kSigmaFloor);
    return stats;
}

CalibrationStats calibrate(const TRDModel& model, const std::vector<MultimodalSample>& validation_normals,
                           double sigma_at_256) {
    if (validation_normals.empty()) throw CalibrationError("calibrate: validation set is empty");
    for (const MultimodalSample& s : validation_normals)
        if (s.label != Label::kNormal)
            throw CalibrationError("calibrate: validation sample " + std::to_string(s.index) + " is not normal");

    std::vector<BranchMaps> maps;
    maps.reserve(validation_normals.size());
    for (const MultimodalSample& s : validation_normals) maps.push_back(sample_branch_maps(model, s, sigma_at_256));
    return calibrate_from_maps(maps);
}

}  // namespace trd

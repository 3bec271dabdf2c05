#pragma once

#include <string>
#include <vector>

#include "trd/calibration.hpp"
#include "trd/datasets.hpp"
#include "trd/trd_model.hpp"

namespace trd {

enum class BranchTag { k2D, k3D, kFused };

struct AnomalyMap {
    Tensor data;  // H x W
    BranchTag tag = BranchTag::kFused;
};

enum class FusionStrategy { kNormSum, kSumRaw, kProduct };
FusionStrategy fusion_from_string(const std::string& s);
std::string to_string(FusionStrategy f);

// Per-branch raw anomaly map: per level 1 - cosine, bilinearly upsampled to
// (out_h, out_w) and summed over the three levels. Inputs are value
// pyramids with batch size 1.
AnomalyMap branch_map(const std::vector<Tensor>& f_e, const std::vector<Tensor>& f_ca, int out_h, int out_w,
                      BranchTag tag);

// Gaussian smoothing; sigma is the effective sigma in pixels of this map.
AnomalyMap smooth(const AnomalyMap& m, double sigma);

// z-normalize per branch and sum (default); sum_raw and product are the
// ablation alternatives.
AnomalyMap fuse(const AnomalyMap& m2d, const AnomalyMap& m3d, const CalibrationStats& stats,
                FusionStrategy strategy = FusionStrategy::kNormSum);

double image_score(const AnomalyMap& m);

// ---- model-level pipeline helpers -------------------------------------------

// effective sigma: configured sigma is specified at 256-pixel resolution and
// scales proportionally with the map size
double effective_sigma(double sigma_at_256, int resolution);

struct BranchMaps {
    AnomalyMap m2d, m3d;  // smoothed per-branch maps at input resolution
};
BranchMaps sample_branch_maps(const TRDModel& model, const MultimodalSample& sample, double sigma_at_256);

// mu/sigma over all pixels of all smoothed per-branch maps of the validation
// normals (population std, floored)
CalibrationStats calibrate(const TRDModel& model, const std::vector<MultimodalSample>& validation_normals,
                           double sigma_at_256);
// same statistics computed from already-smoothed per-branch maps
CalibrationStats calibrate_from_maps(const std::vector<BranchMaps>& maps);

}  // namespace trd

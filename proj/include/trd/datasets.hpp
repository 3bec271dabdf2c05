#pragma once

#include <array>
#include <string>
#include <vector>

#include "trd/tensor.hpp"

namespace trd {

enum class Label { kNormal, kAnomalous };
enum class AnomalyModality { kNone, k2DOnly, k3DOnly, kBoth, kUnknown };

// Per-channel affine normalization applied to [0,1] images before they reach
// the encoder.
struct Normalization {
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> stddev{0.5, 0.5, 0.5};
};
inline Normalization toy_normalization() { return {}; }
inline Normalization imagenet_normalization() {
    return {{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
}

struct MultimodalSample {
    Tensor image_2d;  // 3 x H x W, normalized
    Tensor image_3d;  // 3 x H x W, normalized (depth replicated to 3 channels)
    Label label = Label::kNormal;
    Tensor mask;      // H x W in {0,1}; empty for train/validation samples
    std::string category, split, defect;
    int index = 0;
    AnomalyModality anomaly_modality = AnomalyModality::kNone;
};

struct ToyConfig {
    int resolution = 64;
    int n_train = 200, n_val = 50, n_test = 100;
    // probabilities for {2D-only, 3D-only, both}
    std::array<double, 3> anomaly_modality_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    double anomaly_fraction = 0.5;  // share of test samples carrying a blob
    double blob_radius_min = 4.0, blob_radius_max = 8.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ToyDataset {
    std::vector<MultimodalSample> train, val, test;
};

// Deterministic procedural dataset: a fixed disk-plus-dome object with small
// smooth per-sample variation; anomalous test samples carry a planted blob
// with an exact mask.
ToyDataset generate_toy(const ToyConfig& cfg);
// force_normal builds the anomaly-free twin of a test sample
MultimodalSample make_toy_sample(const ToyConfig& cfg, const std::string& split, int index, bool force_normal = false);
// persists in the directory layout load_samples understands
void save_toy(const ToyDataset& ds, const std::string& out_dir);

// Directory loader for root/<category>/<split>/<defect>/rgb/*.png with a
// depth (or xyz position) companion per image and gt masks for anomalous
// test folders. Covers generic paired-image sets: a 3-channel companion is
// used as-is, single-channel companions run through preprocess_depth.
std::vector<MultimodalSample> load_samples(const std::string& root, const std::string& category,
                                           const std::string& split, int resolution,
                                           const Normalization& norm = {});

// invalid (<= 0 or non-finite) readings filled with the valid median,
// per-image min-max to [0,1] (constant grids map to 0), bilinear resize,
// replicated to 3 channels
Tensor preprocess_depth(const Tensor& raw_hw, int resolution);

Tensor normalize_image(const Tensor& chw01, const Normalization& norm);
Tensor resize_chw(const Tensor& chw, int resolution);

// single pair for one-shot inference
MultimodalSample load_sample_pair(const std::string& rgb_path, const std::string& companion_path, int resolution,
                                  const Normalization& norm = {});

}  // namespace trd

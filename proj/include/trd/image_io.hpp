#pragma once

#include <string>

#include "trd/tensor.hpp"

namespace trd {

// 8-bit color image -> [0,1] CHW (3 x H x W)
Tensor load_image_rgb(const std::string& path);
void save_image_rgb(const std::string& path, const Tensor& chw01);

// Depth companion file -> HxW grid. 8/16-bit images are scaled to [0,1];
// float TIFFs are taken as-is; a 3-channel float grid is treated as an
// x/y/z position image and the z channel is returned.
Tensor load_depth_grid(const std::string& path);
// [0,1] -> 16-bit PNG on [1, 65535] so that genuine zeros never collide with
// the missing-reading marker
void save_depth16(const std::string& path, const Tensor& hw01);

// Second-modality companion probe: 3-channel 8-bit files (surface normal
// maps and the like) come back as [0,1] CHW images, everything else as an
// HxW depth grid.
enum class CompanionKind { kImage3Ch, kGrid };
std::pair<CompanionKind, Tensor> load_companion(const std::string& path);

// mask image -> HxW {0,1} (any nonzero pixel -> 1)
Tensor load_mask(const std::string& path);
void save_mask(const std::string& path, const Tensor& hw);

// anomaly-map exports
void save_float_grid(const std::string& path, const Tensor& hw);  // u32 H, u32 W, float32 data, little-endian
Tensor load_float_grid(const std::string& path);
// per-image min-max scaled perceptual colormap; when gt is given, its
// boundary is overlaid in white
void save_heatmap_png(const std::string& path, const Tensor& hw, const Tensor* gt = nullptr);

}  // namespace trd

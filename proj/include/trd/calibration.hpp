#pragma once

namespace trd {

// Per-branch anomaly-map statistics computed on validation normals, used to
// z-normalize branch maps before fusion. sigma is floored at 1e-12.
struct CalibrationStats {
    double mu_2d = 0.0;
    double sigma_2d = 1.0;
    double mu_3d = 0.0;
    double sigma_3d = 1.0;
};

inline constexpr double kSigmaFloor = 1e-12;

}  // namespace trd

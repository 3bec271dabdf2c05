#pragma once

#include <string>
#include <vector>

#include "trd/ops.hpp"

namespace trd {

// Per-location cosine of channel vectors, N x 1 x H x W in [-1, 1].
inline Var cosine_sim_map(const Var& f1, const Var& f2) { return ops::cosine_map(f1, f2); }

// sum over levels of the spatial mean of (1 - cosine); range [0, 2 * levels]
Var pyramid_loss(const std::vector<Var>& a, const std::vector<Var>& b);

// distillation loss between teacher features and student decoder output
inline Var loss_distill(const std::vector<Var>& f_e, const std::vector<Var>& f_d) { return pyramid_loss(f_e, f_d); }

// filter alignment loss: own-modality teacher features vs the other
// modality's bottleneck-projected features
inline Var loss_filter(const std::vector<Var>& f_e_own, const std::vector<Var>& f_bp_other) {
    return pyramid_loss(f_e_own, f_bp_other);
}

struct AmplifierLosses {
    Var mapping;  // teacher vs inverted-bottleneck projection
    Var output;   // teacher vs amplified output
    Var total;    // mapping + output
};
AmplifierLosses loss_amplifier(const std::vector<Var>& f_e_own, const std::vector<Var>& f_ibp_other,
                               const std::vector<Var>& f_ca_own);

// Logged loss values for one step/epoch. total = sum over both branches of
// (distill + filter + amplifier).
struct LossBreakdown {
    double d_2d = 0, cf_2d = 0, ibp_2d = 0, output_2d = 0, ca_2d = 0;
    double d_3d = 0, cf_3d = 0, ibp_3d = 0, output_3d = 0, ca_3d = 0;
    double total = 0;

    bool all_finite() const;
    std::string to_string() const;
};

// arithmetic combination used by the trainer and by the log totals
double total_loss(const LossBreakdown& b);

}  // namespace trd

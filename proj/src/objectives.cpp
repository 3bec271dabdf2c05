#include "trd/objectives.hpp"

#include <cmath>
#include <sstream>

namespace trd {

Var pyramid_loss(const std::vector<Var>& a, const std::vector<Var>& b) {
    if (a.size() != b.size()) throw DimensionError("pyramid_loss: level count mismatch");
    if (a.empty()) throw DimensionError("pyramid_loss: empty pyramids");
    std::vector<Var> terms;
    for (size_t i = 0; i < a.size(); ++i) {
        check_same_shape(a[i]->value, b[i]->value, "pyramid_loss");
        // 1 - mean(cos) == mean(1 - cos)
        terms.push_back(ops::affine(ops::mean_all(ops::cosine_map(a[i], b[i])), -1.0, 1.0));
    }
    return ops::add_scalars(terms);
}

AmplifierLosses loss_amplifier(const std::vector<Var>& f_e_own, const std::vector<Var>& f_ibp_other,
                               const std::vector<Var>& f_ca_own) {
    AmplifierLosses out;
    out.mapping = pyramid_loss(f_e_own, f_ibp_other);
    out.output = pyramid_loss(f_e_own, f_ca_own);
    out.total = ops::add_scalars({out.mapping, out.output});
    return out;
}

double total_loss(const LossBreakdown& b) {
    return (b.d_2d + b.cf_2d + b.ca_2d) + (b.d_3d + b.cf_3d + b.ca_3d);
}

bool LossBreakdown::all_finite() const {
    for (double v : {d_2d, cf_2d, ibp_2d, output_2d, ca_2d, d_3d, cf_3d, ibp_3d, output_3d, ca_3d, total})
        if (!std::isfinite(v)) return false;
    return true;
}

std::string LossBreakdown::to_string() const {
    std::ostringstream os;
    os << "total=" << total << " d2d=" << d_2d << " cf2d=" << cf_2d << " ca2d=" << ca_2d << " d3d=" << d_3d
       << " cf3d=" << cf_3d << " ca3d=" << ca_3d;
    return os.str();
}

}  // namespace trd

#include "trd/tensor.hpp"

#include <algorithm>
#include <limits>

namespace trd {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(where) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

double Tensor::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v_) m = std::max(m, x);
    return m;
}

double Tensor::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (double x : v_) m = std::min(m, x);
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double x : v_) s += x;
    return s;
}

}  // namespace trd

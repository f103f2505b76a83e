#include "cct/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cct {

bool all_finite(const Tensor& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

}  // namespace cct

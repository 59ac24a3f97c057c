#include "camogen/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace camogen {

bool Tensor::all_finite() const {
    if (!defined()) return true;
    for (real v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

bool Tensor::equals(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    if (!defined() && !o.defined()) return true;
    if (!defined() || !o.defined()) return false;
    // bitwise comparison so the check is exact even around signed zeros
    return std::memcmp(data_->data(), o.data_->data(), data_->size() * sizeof(real)) == 0;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

}  // namespace camogen

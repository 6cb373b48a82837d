#include "fusion_stereo/tensor.hpp"

#include <cmath>
#include <sstream>

namespace fstereo {

namespace {
int64_t checked_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] <= 0) {
            throw ShapeError("tensor extent " + std::to_string(i) + " must be positive, got " +
                             std::to_string(shape[i]));
        }
        n *= shape[i];
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : values(static_cast<size_t>(checked_numel(shape)), fill), shape_(std::move(shape)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> vals) : shape_(std::move(shape)) {
    const int64_t n = checked_numel(shape_);
    if (n != static_cast<int64_t>(vals.size())) {
        throw ShapeError("value count " + std::to_string(vals.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
    values = std::move(vals);
}

int64_t Tensor::index(std::initializer_list<int> idx) const {
    if (idx.size() != shape_.size()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                         shape_str());
    }
    int64_t flat = 0;
    size_t axis = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape_[axis]) {
            throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                             std::to_string(axis) + " of " + shape_str());
        }
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) {
        grad.assign(values.size(), 0.0);
    }
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (a.shape() == b.shape()) return;
    if (a.ndim() != b.ndim()) {
        throw ShapeError(std::string(context) + ": rank mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    for (int i = 0; i < a.ndim(); ++i) {
        if (a.dim(i) != b.dim(i)) {
            throw ShapeError(std::string(context) + ": dimension " + std::to_string(i) +
                             " mismatch, " + std::to_string(a.dim(i)) + " vs " +
                             std::to_string(b.dim(i)));
        }
    }
}

namespace {
Precision g_precision = Precision::f64;
}

Precision precision_mode() { return g_precision; }
void set_precision_mode(Precision p) { g_precision = p; }

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void apply_precision(Tensor& t) {
    if (g_precision == Precision::f64) return;
    for (double& v : t.values) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

}  // namespace fstereo

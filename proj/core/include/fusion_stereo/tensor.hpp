#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

/// Dense row-major n-d array of doubles with an optional same-shape gradient
/// buffer. Values are stored channel-major for network tensors ([C,H,W] /
/// [C,H,W,D]); the last axis is contiguous.
///
/// Storage is always 64-bit. When the global precision mode is f32, forward
/// ops round their outputs through float so training behaves like a 32-bit
/// pipeline; gradient checking requires f64 mode.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(values.size()); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Flat row-major offset of a multi-index.
    int64_t index(std::initializer_list<int> idx) const;

    double& at(std::initializer_list<int> idx) { return values[static_cast<size_t>(index(idx))]; }
    double at(std::initializer_list<int> idx) const { return values[static_cast<size_t>(index(idx))]; }

    /// Allocates (or re-zeroes) the gradient buffer.
    void ensure_grad();
    void zero_grad();
    bool has_grad() const { return grad.size() == values.size(); }

    bool all_finite() const;

    std::string shape_str() const;

    std::vector<double> values;
    std::vector<double> grad;  // empty, or values.size()

  private:
    std::vector<int> shape_;
};

/// Throws ShapeError naming the first mismatching dimension.
void check_same_shape(const Tensor& a, const Tensor& b, const char* context);

std::string shape_to_string(const std::vector<int>& shape);

/// Global compute precision. f32 makes forward ops round their results
/// through float; f64 (default) keeps everything in double.
enum class Precision { f64, f32 };

Precision precision_mode();
void set_precision_mode(Precision p);
const char* precision_name(Precision p);

/// Rounds every value through float when the global mode is f32.
void apply_precision(Tensor& t);

}  // namespace fstereo

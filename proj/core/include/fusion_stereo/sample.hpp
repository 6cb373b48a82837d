#pragma once

#include "fusion_stereo/geometry.hpp"
#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// One rectified stereo pair with sparse measurements and dense ground truth.
// Images are [3,H,W] with values in [0,1]; disparity maps are full
// resolution, in left-image pixels, with gt defined on the left view.
struct StereoSample {
    Tensor left;
    Tensor right;
    SparseDisparityMap lidar_left;
    SparseDisparityMap lidar_right;
    SparseDisparityMap gt;
    CameraCalibration calib;
};

}  // namespace fstereo

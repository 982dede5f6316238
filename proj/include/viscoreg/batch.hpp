#pragma once

#include "viscoreg/common.hpp"

namespace viscoreg {

/// One optimization step's worth of samples: points on the surface and
/// points drawn uniformly from the bounding box.
struct TrainBatch {
    Points surface_points;
    Points domain_points;

    Eigen::Index dim() const { return surface_points.rows(); }
};

}  // namespace viscoreg

#pragma once

#include <string>
#include <vector>

#include "s4mtl/image.hpp"

namespace s4mtl {

// Per-sample segmentation scores. DS/JI/Prec/Rec are computed on the mask
// binarized at the threshold, SSIM on the soft foreground probability maps,
// HD is the average Hausdorff distance in pixel units.
//
// Empty-mask conventions: both masks empty -> DS=JI=1, HD=0, Prec=Rec=1;
// truth empty but prediction nonempty -> DS=JI=0 (and Prec=Rec=0); exactly
// one side empty -> HD equals the image diagonal.
struct SegMetrics {
    double dice = 0.0;
    double jaccard = 0.0;
    double ssim = 0.0;
    double hausdorff = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

SegMetrics segmentation_metrics(const Mask& truth, const Mask& pred, double threshold = 0.5);

struct ClsMetrics {
    double accuracy = 0.0;
    std::vector<double> f1;  // per class; absent classes score 0
};

ClsMetrics classification_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                                  int class_count);

// Exact squared Euclidean distance transform (per-pixel distance to the
// nearest set pixel). Exposed for the Hausdorff computation and its tests.
std::vector<double> squared_distance_transform(const std::vector<uint8_t>& set, int rows, int cols);

// Structural similarity on two real-valued maps in [0,1] with a uniform
// window (11x11, shrunk to the image when smaller), valid positions only,
// clamped into [0,1].
double ssim_map(const Image& a, const Image& b, int window = 11);

}  // namespace s4mtl

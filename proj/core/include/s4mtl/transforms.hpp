#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s4mtl/image.hpp"

namespace s4mtl {

// Geometric transform catalog that manufactures proxy classification labels
// for unlabeled images. Fixed and ordered; index 0 is the identity.
enum class TransformId : int {
    Rot0 = 0,
    Rot90 = 1,
    Rot180 = 2,
    Rot270 = 3,
    HFlip = 4,
    VFlip = 5,
};

inline constexpr int kTransformCount = 6;

const char* transform_name(TransformId t);
TransformId transform_from_index(int idx);  // throws on out-of-range

// Exact pixel permutation on a square image; no interpolation.
// Rotations are counterclockwise. Throws ValidationError on non-square input.
Image apply_transform(const Image& img, TransformId tid);

// Assigns each image a uniformly drawn TransformId and applies it.
// Deterministic given seed; throws on an empty batch.
std::vector<std::pair<Image, TransformId>> sample_proxy_batch(
    const std::vector<Image>& images, uint64_t seed);

}  // namespace s4mtl

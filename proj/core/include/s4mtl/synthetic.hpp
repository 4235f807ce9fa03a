#pragma once

#include <cstdint>
#include <vector>

#include "s4mtl/data.hpp"

namespace s4mtl {

// Desk-scale surrogate dataset: class 0 draws a filled ellipse, class 1 a
// filled rectangle (class 2, when requested, a filled diamond), each with
// random center, size and intensity over a noisy background. The background
// carries a fixed anisotropic intensity gradient, so every catalog transform
// changes the image distribution and the proxy-label task is identifiable.
// Masks are the exact shape support. Classes balance to within one sample;
// fully deterministic given seed.
std::vector<Sample> make_synthetic(int count, int side, int class_count, uint64_t seed);

}  // namespace s4mtl

#pragma once

#include <cstddef>
#include <vector>

namespace s4mtl {

// Grayscale intensity grid, row-major, values in [0,1] once preprocessed.
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows*cols

    Image() = default;
    Image(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    bool square() const { return rows == cols && rows > 0; }
    size_t pixels() const { return data.size(); }
};

// Per-pixel probability vector over K segmentation logits.
// Channel-planar storage: plane k is a row-major rows*cols block.
// Channel 0 is background, channel 1 foreground.
struct Mask {
    int rows = 0;
    int cols = 0;
    int channels = 2;
    std::vector<double> data;  // channels * rows * cols

    Mask() = default;
    Mask(int r, int c, int k = 2)
        : rows(r), cols(c), channels(k), data(static_cast<size_t>(k) * r * c, 0.0) {}

    size_t plane() const { return static_cast<size_t>(rows) * cols; }
    double& at(int r, int c, int k) { return data[k * plane() + static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c, int k) const { return data[k * plane() + static_cast<size_t>(r) * cols + c]; }
    double fg(int r, int c) const { return at(r, c, 1); }

    // one-hot mask from a binary foreground predicate
    static Mask from_foreground(const std::vector<uint8_t>& fg, int rows, int cols) {
        Mask m(rows, cols, 2);
        for (size_t i = 0; i < fg.size(); ++i) {
            m.data[i] = fg[i] ? 0.0 : 1.0;              // background plane
            m.data[m.plane() + i] = fg[i] ? 1.0 : 0.0;  // foreground plane
        }
        return m;
    }
};

// Throws ValidationError when pixel probability vectors do not sum to one
// (tolerance 1e-6) or contain non-finite / negative entries.
void check_mask_normalized(const Mask& m);

bool mask_is_one_hot(const Mask& m);

}  // namespace s4mtl

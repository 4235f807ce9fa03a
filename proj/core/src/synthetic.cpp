#include "s4mtl/synthetic.hpp"

#include <cmath>

#include "s4mtl/common.hpp"
#include "s4mtl/rng.hpp"

namespace s4mtl {

namespace {

// background gradient direction; distinct under all six catalog transforms
constexpr double kGradX = 0.10;
constexpr double kGradY = 0.18;
constexpr double kNoise = 0.03;

struct Shape {
    int kind = 0;  // 0 ellipse, 1 rectangle, 2 diamond
    double cx = 0, cy = 0, ax = 0, ay = 0;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        switch (kind) {
            case 0: {
                const double u = dx / ax, v = dy / ay;
                return u * u + v * v <= 1.0;
            }
            case 1:
                return std::fabs(dx) <= ax && std::fabs(dy) <= ay;
            default:
                return std::fabs(dx) / ax + std::fabs(dy) / ay <= 1.0;
        }
    }
};

}  // namespace

std::vector<Sample> make_synthetic(int count, int side, int class_count, uint64_t seed) {
    if (count <= 0) throw ValidationError("make_synthetic: count must be positive");
    if (side < 16) throw ValidationError(strfmt("make_synthetic: side %d below minimum 16", side));
    if (class_count < 2 || class_count > 3) {
        throw ValidationError("make_synthetic: class_count must be 2 or 3");
    }
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto rng = make_rng(seed, "synthetic", static_cast<uint64_t>(i));
        const int cls = i % class_count;

        Shape shape;
        shape.kind = cls;
        shape.cx = uniform(rng, 0.32, 0.68) * side;
        shape.cy = uniform(rng, 0.32, 0.68) * side;
        if (cls == 0) {
            shape.ax = uniform(rng, 0.16, 0.30) * side;
            shape.ay = uniform(rng, 0.16, 0.30) * side;
        } else if (cls == 1) {
            shape.ax = uniform(rng, 0.15, 0.28) * side;
            shape.ay = uniform(rng, 0.15, 0.28) * side;
        } else {
            shape.ax = uniform(rng, 0.22, 0.34) * side;
            shape.ay = uniform(rng, 0.22, 0.34) * side;
        }

        const double bg_base = uniform(rng, 0.05, 0.15);
        const double fg_base = uniform(rng, 0.55, 0.85);

        Sample s;
        s.id = strfmt("synth-%06d", i);
        s.image = Image(side, side);
        std::vector<uint8_t> fg(static_cast<size_t>(side) * side, 0);
        for (int r = 0; r < side; ++r) {
            for (int c = 0; c < side; ++c) {
                const double x = c + 0.5, y = r + 0.5;
                const bool inside = shape.contains(x, y);
                fg[static_cast<size_t>(r) * side + c] = inside ? 1 : 0;
                const double noise = uniform(rng, -kNoise, kNoise);
                double v;
                if (inside) {
                    v = fg_base + noise;
                } else {
                    v = bg_base + kGradX * (x / side) + kGradY * (y / side) + noise;
                }
                s.image.at(r, c) = std::clamp(v, 0.0, 1.0);
            }
        }
        s.mask = Mask::from_foreground(fg, side, side);
        s.label = ClassLabel{cls};
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace s4mtl

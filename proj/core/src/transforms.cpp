#include "s4mtl/transforms.hpp"

#include "s4mtl/common.hpp"
#include "s4mtl/rng.hpp"

namespace s4mtl {

const char* transform_name(TransformId t) {
    switch (t) {
        case TransformId::Rot0: return "rot0";
        case TransformId::Rot90: return "rot90";
        case TransformId::Rot180: return "rot180";
        case TransformId::Rot270: return "rot270";
        case TransformId::HFlip: return "hflip";
        case TransformId::VFlip: return "vflip";
    }
    return "?";
}

TransformId transform_from_index(int idx) {
    if (idx < 0 || idx >= kTransformCount) {
        throw ValidationError(strfmt("transform index %d outside catalog [0,%d)", idx, kTransformCount));
    }
    return static_cast<TransformId>(idx);
}

Image apply_transform(const Image& img, TransformId tid) {
    if (!img.square()) {
        throw ValidationError(strfmt("apply_transform requires a square image, got %dx%d", img.rows, img.cols));
    }
    const int n = img.rows;
    Image out(n, n);
    switch (tid) {
        case TransformId::Rot0:
            out = img;
            break;
        case TransformId::Rot90:  // counterclockwise
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.at(n - 1 - c, r) = img.at(r, c);
            break;
        case TransformId::Rot180:
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.at(n - 1 - r, n - 1 - c) = img.at(r, c);
            break;
        case TransformId::Rot270:
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.at(c, n - 1 - r) = img.at(r, c);
            break;
        case TransformId::HFlip:  // mirror columns
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.at(r, n - 1 - c) = img.at(r, c);
            break;
        case TransformId::VFlip:  // mirror rows
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.at(n - 1 - r, c) = img.at(r, c);
            break;
    }
    return out;
}

std::vector<std::pair<Image, TransformId>> sample_proxy_batch(
    const std::vector<Image>& images, uint64_t seed) {
    if (images.empty()) throw ValidationError("sample_proxy_batch: empty image list");
    auto rng = make_rng(seed, "proxy-transforms");
    std::vector<std::pair<Image, TransformId>> out;
    out.reserve(images.size());
    for (const Image& img : images) {
        auto tid = static_cast<TransformId>(uniform_index(rng, kTransformCount));
        out.emplace_back(apply_transform(img, tid), tid);
    }
    return out;
}

}  // namespace s4mtl

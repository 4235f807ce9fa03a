#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s4mtl/image.hpp"

namespace s4mtl {

// Class label over n real classes; n is dataset-level metadata. The fake
// class used by the adversarial discriminator is index n and never appears
// on samples.
struct ClassLabel {
    int index = 0;
};

// One image with optional segmentation mask and optional class label.
// Labeled samples carry both; unlabeled samples carry neither.
struct Sample {
    std::string id;
    Image image;
    std::optional<Mask> mask;
    std::optional<ClassLabel> label;

    bool labeled() const { return mask.has_value() && label.has_value(); }
};

struct DatasetSplit {
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;
    std::vector<Sample> validation;
    std::vector<Sample> test;
    double labeled_fraction = 0.0;
    uint64_t seed = 0;
    int class_count = 2;
};

// Reads images/ (png|pgm grayscale), masks/ (same stems, binary), and
// labels.csv (header id,class). Samples missing a mask or a label row come
// back unlabeled with neither attached. Output is ordered by id.
std::vector<Sample> load_dataset(const std::string& root_path, int class_count);

// Resize (bilinear) to target_side x target_side, then min-max normalize to
// [0,1]; constant images map to all zeros. Idempotent at a fixed side.
Image preprocess(const Image& raw, int target_side);

// Nearest-neighbor mask resize; preserves one-hot masks.
Mask preprocess_mask(const Mask& raw, int target_side);

// Holds out validation/test first (stratified, so sweeps over
// labeled_fraction share evaluation sets), then draws the labeled set
// per-class round-robin and strips annotations from the rest.
// labeled_fraction must lie in (0, 0.5].
DatasetSplit stratified_split(const std::vector<Sample>& samples, double labeled_fraction,
                              double val_fraction, double test_fraction, uint64_t seed);

// The 100%-labeled arrangement used by fully supervised baselines: identical
// validation/test carve to stratified_split at the same seed, every training
// sample labeled, unlabeled empty.
DatasetSplit fully_labeled_split(const std::vector<Sample>& samples, double val_fraction,
                                 double test_fraction, uint64_t seed);

// id,partition,labeled rows; written and re-read bit-exactly.
std::string split_manifest(const DatasetSplit& split);
void write_split_manifest(const DatasetSplit& split, const std::string& path);

struct ManifestRow {
    std::string id;
    std::string partition;  // train | validation | test
    bool labeled = false;
};
std::vector<ManifestRow> read_split_manifest(const std::string& path);

}  // namespace s4mtl

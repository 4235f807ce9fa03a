#include "s4mtl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <set>
#include <sstream>

#include "s4mtl/common.hpp"
#include "s4mtl/csvio.hpp"
#include "s4mtl/rng.hpp"

namespace fs = std::filesystem;

namespace s4mtl {

void check_mask_normalized(const Mask& m) {
    const size_t n = m.plane();
    for (size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int k = 0; k < m.channels; ++k) {
            double v = m.data[k * n + i];
            if (!std::isfinite(v) || v < 0.0) {
                throw ValidationError(strfmt("mask pixel %zu logit %d invalid: %g", i, k, v));
            }
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-6) {
            throw ValidationError(strfmt("mask pixel %zu probabilities sum to %g", i, sum));
        }
    }
}

bool mask_is_one_hot(const Mask& m) {
    for (double v : m.data) {
        if (v != 0.0 && v != 1.0) return false;
    }
    return true;
}

namespace {

bool raster_extension(const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ".png" || e == ".pgm";
}

Image load_gray_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read image: " + path);
    Image img(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            img.at(r, c) = static_cast<double>(m.at<uint8_t>(r, c)) / 255.0;
        }
    }
    return img;
}

Mask load_binary_mask(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read mask: " + path);
    std::vector<uint8_t> fg(static_cast<size_t>(m.rows) * m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            fg[static_cast<size_t>(r) * m.cols + c] = m.at<uint8_t>(r, c) > 127 ? 1 : 0;
        }
    }
    return Mask::from_foreground(fg, m.rows, m.cols);
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& root_path, int class_count) {
    if (class_count < 2) throw ValidationError("load_dataset: class_count must be >= 2");
    const fs::path root(root_path);
    const fs::path images_dir = root / "images";
    const fs::path masks_dir = root / "masks";
    const fs::path labels_csv = root / "labels.csv";
    if (!fs::is_directory(images_dir)) {
        throw IoError("missing images directory: " + images_dir.string());
    }

    std::map<std::string, fs::path> image_files;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (entry.is_regular_file() && raster_extension(entry.path())) {
            image_files.emplace(entry.path().stem().string(), entry.path());
        }
    }
    if (image_files.empty()) throw IoError("no images found in " + images_dir.string());

    std::map<std::string, fs::path> mask_files;
    if (fs::is_directory(masks_dir)) {
        for (const auto& entry : fs::directory_iterator(masks_dir)) {
            if (entry.is_regular_file() && raster_extension(entry.path())) {
                mask_files.emplace(entry.path().stem().string(), entry.path());
            }
        }
    }

    std::map<std::string, int> labels;
    if (fs::is_regular_file(labels_csv)) {
        CsvTable t = read_csv(labels_csv.string());
        const int id_col = t.col("id");
        const int class_col = t.col("class");
        if (id_col < 0 || class_col < 0) {
            throw ValidationError("labels.csv must have header id,class");
        }
        for (const auto& row : t.rows) {
            labels[row[id_col]] = std::stoi(row[class_col]);
        }
    }

    std::vector<Sample> out;
    std::vector<std::string> problems;
    for (const auto& [id, path] : image_files) {  // std::map iterates in id order
        Sample s;
        s.id = id;
        s.image = load_gray_image(path.string());
        auto mit = mask_files.find(id);
        auto lit = labels.find(id);
        if (mit != mask_files.end() && lit != labels.end()) {
            Mask mask = load_binary_mask(mit->second.string());
            if (mask.rows != s.image.rows || mask.cols != s.image.cols) {
                problems.push_back(strfmt("%s: mask %dx%d mismatches image %dx%d", id.c_str(), mask.rows,
                                          mask.cols, s.image.rows, s.image.cols));
                continue;
            }
            if (lit->second < 0 || lit->second >= class_count) {
                problems.push_back(strfmt("%s: class %d outside [0,%d)", id.c_str(), lit->second, class_count));
                continue;
            }
            s.mask = std::move(mask);
            s.label = ClassLabel{lit->second};
        }
        out.push_back(std::move(s));
    }
    if (!problems.empty()) {
        std::string msg = "dataset validation failed:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return out;
}

namespace {

double bilinear_sample(const Image& img, double r, double c) {
    const int r0 = std::clamp(static_cast<int>(std::floor(r)), 0, img.rows - 1);
    const int c0 = std::clamp(static_cast<int>(std::floor(c)), 0, img.cols - 1);
    const int r1 = std::min(r0 + 1, img.rows - 1);
    const int c1 = std::min(c0 + 1, img.cols - 1);
    const double fr = std::clamp(r - r0, 0.0, 1.0);
    const double fc = std::clamp(c - c0, 0.0, 1.0);
    const double top = img.at(r0, c0) * (1.0 - fc) + img.at(r0, c1) * fc;
    const double bot = img.at(r1, c0) * (1.0 - fc) + img.at(r1, c1) * fc;
    return top * (1.0 - fr) + bot * fr;
}

}  // namespace

Image preprocess(const Image& raw, int target_side) {
    if (raw.rows <= 0 || raw.cols <= 0) throw ValidationError("preprocess: zero-area input");
    if (target_side <= 0) throw ValidationError("preprocess: target_side must be positive");
    Image resized(target_side, target_side);
    const double sr = static_cast<double>(raw.rows) / target_side;
    const double sc = static_cast<double>(raw.cols) / target_side;
    for (int r = 0; r < target_side; ++r) {
        for (int c = 0; c < target_side; ++c) {
            // pixel-center mapping: identity when sizes match
            resized.at(r, c) = bilinear_sample(raw, (r + 0.5) * sr - 0.5, (c + 0.5) * sc - 0.5);
        }
    }
    double lo = resized.data[0], hi = resized.data[0];
    for (double v : resized.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        std::fill(resized.data.begin(), resized.data.end(), 0.0);
        return resized;
    }
    const double range = hi - lo;
    for (double& v : resized.data) v = (v - lo) / range;
    return resized;
}

Mask preprocess_mask(const Mask& raw, int target_side) {
    if (raw.rows <= 0 || raw.cols <= 0) throw ValidationError("preprocess_mask: zero-area input");
    Mask out(target_side, target_side, raw.channels);
    const double sr = static_cast<double>(raw.rows) / target_side;
    const double sc = static_cast<double>(raw.cols) / target_side;
    for (int r = 0; r < target_side; ++r) {
        const int ir = std::clamp(static_cast<int>(std::floor((r + 0.5) * sr)), 0, raw.rows - 1);
        for (int c = 0; c < target_side; ++c) {
            const int ic = std::clamp(static_cast<int>(std::floor((c + 0.5) * sc)), 0, raw.cols - 1);
            for (int k = 0; k < raw.channels; ++k) out.at(r, c, k) = raw.at(ir, ic, k);
        }
    }
    return out;
}

namespace {

// Proportional, per-class carve used for validation/test. Deterministic:
// classes in index order, ids shuffled per class.
std::vector<size_t> carve_stratified(std::vector<std::vector<size_t>>& per_class, size_t want,
                                     size_t total_left) {
    std::vector<size_t> taken;
    if (want == 0) return taken;
    // largest-remainder apportionment over classes
    const size_t k = per_class.size();
    std::vector<size_t> quota(k, 0);
    std::vector<std::pair<double, size_t>> rem;
    size_t assigned = 0;
    for (size_t ci = 0; ci < k; ++ci) {
        const double exact = static_cast<double>(want) * per_class[ci].size() / total_left;
        quota[ci] = static_cast<size_t>(exact);
        quota[ci] = std::min(quota[ci], per_class[ci].size());
        assigned += quota[ci];
        rem.emplace_back(exact - static_cast<double>(quota[ci]), ci);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [r, ci] : rem) {
        if (assigned >= want) break;
        if (quota[ci] < per_class[ci].size()) {
            ++quota[ci];
            ++assigned;
        }
    }
    for (size_t ci = 0; ci < k; ++ci) {
        for (size_t j = 0; j < quota[ci]; ++j) {
            taken.push_back(per_class[ci].back());
            per_class[ci].pop_back();
        }
    }
    return taken;
}

struct SplitScaffold {
    std::vector<std::vector<size_t>> train_per_class;  // shuffled, pop from back
    std::vector<size_t> pre_unlabeled;                 // arrived without annotations
    std::vector<size_t> val_idx, test_idx;
    int class_count = 0;
    size_t train_total = 0;  // annotated leftovers + pre-unlabeled
};

// Validation/test are carved before the labeled/unlabeled partition, from
// annotated samples only, so sweeps over labeled_fraction share identical
// evaluation sets.
SplitScaffold carve_eval_sets(const std::vector<Sample>& samples, double val_fraction,
                              double test_fraction, uint64_t seed) {
    if (samples.empty()) throw ValidationError("split: empty sample list");
    if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
        throw ValidationError("split: val/test fractions must be nonnegative and sum below 1");
    }
    int class_count = 0;
    for (const auto& s : samples) {
        if (s.labeled()) class_count = std::max(class_count, s.label->index + 1);
    }
    if (class_count == 0) throw ValidationError("split: no annotated samples");
    SplitScaffold sc;
    sc.class_count = class_count;
    sc.train_per_class.resize(class_count);
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].labeled()) {
            sc.train_per_class[samples[i].label->index].push_back(i);
        } else {
            sc.pre_unlabeled.push_back(i);
        }
    }
    size_t annotated = 0;
    for (int ci = 0; ci < class_count; ++ci) {
        if (sc.train_per_class[ci].empty()) {
            throw ValidationError(strfmt("split: class %d has zero samples", ci));
        }
        annotated += sc.train_per_class[ci].size();
        auto rng = make_rng(seed, "split-shuffle", static_cast<uint64_t>(ci));
        shuffle(sc.train_per_class[ci], rng);
    }
    const size_t n = samples.size();
    const auto n_val = static_cast<size_t>(std::floor(val_fraction * n + 1e-9));
    const auto n_test = static_cast<size_t>(std::floor(test_fraction * n + 1e-9));
    if (n_val + n_test >= annotated) {
        throw ValidationError("split: not enough annotated samples for validation/test hold-out");
    }
    sc.val_idx = carve_stratified(sc.train_per_class, n_val, annotated);
    sc.test_idx = carve_stratified(sc.train_per_class, n_test, annotated - n_val);
    std::sort(sc.val_idx.begin(), sc.val_idx.end());
    std::sort(sc.test_idx.begin(), sc.test_idx.end());
    sc.train_total = annotated - n_val - n_test + sc.pre_unlabeled.size();
    return sc;
}

Sample strip_annotations(const Sample& s) {
    Sample out;
    out.id = s.id;
    out.image = s.image;
    return out;
}

}  // namespace

DatasetSplit stratified_split(const std::vector<Sample>& samples, double labeled_fraction,
                              double val_fraction, double test_fraction, uint64_t seed) {
    if (!(labeled_fraction > 0.0)) throw ValidationError("split: labeled_fraction must be positive");
    if (labeled_fraction > 0.5) {
        throw ValidationError(strfmt("split: labeled_fraction %g exceeds 50%% cap", labeled_fraction));
    }
    SplitScaffold sc = carve_eval_sets(samples, val_fraction, test_fraction, seed);

    const auto n_labeled = static_cast<size_t>(std::floor(labeled_fraction * sc.train_total + 1e-9));
    if (n_labeled < static_cast<size_t>(sc.class_count)) {
        throw ValidationError(strfmt("split: labeled budget %zu cannot cover %d classes", n_labeled,
                                     sc.class_count));
    }

    // round-robin over classes in index order equalizes per-class counts
    std::vector<size_t> labeled_idx;
    size_t drawn = 0;
    while (drawn < n_labeled) {
        bool progressed = false;
        for (int ci = 0; ci < sc.class_count && drawn < n_labeled; ++ci) {
            auto& pool = sc.train_per_class[ci];
            if (pool.empty()) {
                throw ValidationError(strfmt(
                    "split: class %d exhausted while equalizing labeled counts (budget %zu)", ci, n_labeled));
            }
            labeled_idx.push_back(pool.back());
            pool.pop_back();
            ++drawn;
            progressed = true;
        }
        if (!progressed) break;
    }
    std::sort(labeled_idx.begin(), labeled_idx.end());

    DatasetSplit split;
    split.labeled_fraction = labeled_fraction;
    split.seed = seed;
    split.class_count = sc.class_count;
    for (size_t i : labeled_idx) split.labeled.push_back(samples[i]);
    std::vector<size_t> rest = sc.pre_unlabeled;
    for (const auto& pool : sc.train_per_class) rest.insert(rest.end(), pool.begin(), pool.end());
    std::sort(rest.begin(), rest.end());
    for (size_t i : rest) split.unlabeled.push_back(strip_annotations(samples[i]));
    for (size_t i : sc.val_idx) split.validation.push_back(samples[i]);
    for (size_t i : sc.test_idx) split.test.push_back(samples[i]);
    return split;
}

DatasetSplit fully_labeled_split(const std::vector<Sample>& samples, double val_fraction,
                                 double test_fraction, uint64_t seed) {
    SplitScaffold sc = carve_eval_sets(samples, val_fraction, test_fraction, seed);
    DatasetSplit split;
    split.labeled_fraction = 1.0;
    split.seed = seed;
    split.class_count = sc.class_count;
    std::vector<size_t> train;
    for (const auto& pool : sc.train_per_class) train.insert(train.end(), pool.begin(), pool.end());
    std::sort(train.begin(), train.end());
    for (size_t i : train) split.labeled.push_back(samples[i]);
    for (size_t i : sc.pre_unlabeled) split.unlabeled.push_back(strip_annotations(samples[i]));
    for (size_t i : sc.val_idx) split.validation.push_back(samples[i]);
    for (size_t i : sc.test_idx) split.test.push_back(samples[i]);
    return split;
}

std::string split_manifest(const DatasetSplit& split) {
    struct Row {
        std::string id, partition;
        bool labeled;
    };
    std::vector<Row> rows;
    for (const auto& s : split.labeled) rows.push_back({s.id, "train", true});
    for (const auto& s : split.unlabeled) rows.push_back({s.id, "train", false});
    for (const auto& s : split.validation) rows.push_back({s.id, "validation", false});
    for (const auto& s : split.test) rows.push_back({s.id, "test", false});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.id < b.id; });
    std::string out = "id,partition,labeled\n";
    for (const auto& r : rows) {
        out += r.id + "," + r.partition + "," + (r.labeled ? "1" : "0") + "\n";
    }
    return out;
}

void write_split_manifest(const DatasetSplit& split, const std::string& path) {
    write_text_file(path, split_manifest(split));
}

std::vector<ManifestRow> read_split_manifest(const std::string& path) {
    CsvTable t = read_csv(path);
    const int id_col = t.col("id");
    const int part_col = t.col("partition");
    const int lab_col = t.col("labeled");
    if (id_col < 0 || part_col < 0 || lab_col < 0) {
        throw ValidationError("split manifest must have header id,partition,labeled");
    }
    std::vector<ManifestRow> rows;
    for (const auto& r : t.rows) {
        rows.push_back({r[id_col], r[part_col], r[lab_col] == "1"});
    }
    return rows;
}

}  // namespace s4mtl

#include "s4mtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "s4mtl/common.hpp"

namespace s4mtl {

namespace {

constexpr double kInf = 1e30;

// Felzenszwalb-Huttenlocher lower envelope of parabolas; exact for integer
// grid inputs.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<uint8_t>& set, int rows, int cols) {
    std::vector<double> dist(static_cast<size_t>(rows) * cols);
    for (size_t i = 0; i < dist.size(); ++i) dist[i] = set[i] ? 0.0 : kInf;

    const int n = std::max(rows, cols);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int c = 0; c < cols; ++c) {  // along columns
        for (int r = 0; r < rows; ++r) f[r] = dist[static_cast<size_t>(r) * cols + c];
        edt_1d({f.begin(), f.begin() + rows}, d, v, z);
        for (int r = 0; r < rows; ++r) dist[static_cast<size_t>(r) * cols + c] = d[r];
    }
    for (int r = 0; r < rows; ++r) {  // along rows
        for (int c = 0; c < cols; ++c) f[c] = dist[static_cast<size_t>(r) * cols + c];
        edt_1d({f.begin(), f.begin() + cols}, d, v, z);
        for (int c = 0; c < cols; ++c) dist[static_cast<size_t>(r) * cols + c] = d[c];
    }
    return dist;
}

namespace {

// directed average nearest-neighbor distance from pixels of `from` to `to`
double directed_avg_distance(const std::vector<uint8_t>& from, const std::vector<uint8_t>& to,
                             int rows, int cols) {
    const std::vector<double> dist = squared_distance_transform(to, rows, cols);
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < from.size(); ++i) {
        if (from[i]) {
            sum += std::sqrt(dist[i]);
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

}  // namespace

double ssim_map(const Image& a, const Image& b, int window) {
    if (a.rows != b.rows || a.cols != b.cols) throw ValidationError("ssim: shape mismatch");
    const int win = std::max(1, std::min({window, a.rows, a.cols}));
    const double c1 = 0.01 * 0.01;  // unit dynamic range
    const double c2 = 0.03 * 0.03;
    const double inv_n = 1.0 / (win * win);
    double total = 0.0;
    int count = 0;
    for (int r = 0; r + win <= a.rows; ++r) {
        for (int c = 0; c + win <= a.cols; ++c) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    const double x = a.at(r + i, c + j);
                    const double y = b.at(r + i, c + j);
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
            const double mx = sx * inv_n, my = sy * inv_n;
            const double vx = sxx * inv_n - mx * mx;
            const double vy = syy * inv_n - my * my;
            const double cov = sxy * inv_n - mx * my;
            const double s = ((2 * mx * my + c1) * (2 * cov + c2)) /
                             ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += s;
            ++count;
        }
    }
    return std::clamp(total / count, 0.0, 1.0);
}

SegMetrics segmentation_metrics(const Mask& truth, const Mask& pred, double threshold) {
    if (truth.rows != pred.rows || truth.cols != pred.cols) {
        throw ValidationError("segmentation_metrics: shape mismatch");
    }
    const int rows = truth.rows, cols = truth.cols;
    const size_t n = truth.plane();
    std::vector<uint8_t> a(n), b(n);
    size_t na = 0, nb = 0, inter = 0;
    for (size_t i = 0; i < n; ++i) {
        a[i] = truth.data[n + i] > 0.5 ? 1 : 0;
        b[i] = pred.data[n + i] > threshold ? 1 : 0;
        na += a[i];
        nb += b[i];
        inter += a[i] & b[i];
    }

    SegMetrics m;
    if (na == 0 && nb == 0) {
        m.dice = m.jaccard = m.precision = m.recall = 1.0;
        m.hausdorff = 0.0;
    } else {
        m.dice = na + nb > 0 ? 2.0 * inter / static_cast<double>(na + nb) : 0.0;
        const size_t uni = na + nb - inter;
        m.jaccard = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
        m.precision = nb > 0 ? static_cast<double>(inter) / nb : 0.0;
        m.recall = na > 0 ? static_cast<double>(inter) / na : 0.0;
        if (na == 0 || nb == 0) {
            m.hausdorff = std::hypot(rows - 1, cols - 1);  // one side empty
        } else {
            m.hausdorff = 0.5 * (directed_avg_distance(a, b, rows, cols) +
                                 directed_avg_distance(b, a, rows, cols));
        }
    }

    Image fa(rows, cols), fb(rows, cols);
    std::copy(truth.data.begin() + n, truth.data.end(), fa.data.begin());
    std::copy(pred.data.begin() + n, pred.data.end(), fb.data.begin());
    m.ssim = ssim_map(fa, fb);
    return m;
}

ClsMetrics classification_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                                  int class_count) {
    if (predictions.size() != labels.size()) {
        throw ValidationError(strfmt("classification_metrics: %zu predictions vs %zu labels",
                                     predictions.size(), labels.size()));
    }
    if (predictions.empty()) throw ValidationError("classification_metrics: empty input");
    std::vector<size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
    size_t correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i], p = predictions[i];
        if (y < 0 || y >= class_count || p < 0 || p >= class_count) {
            throw ValidationError(strfmt("classification_metrics: class outside [0,%d)", class_count));
        }
        if (y == p) {
            ++correct;
            ++tp[y];
        } else {
            ++fp[p];
            ++fn[y];
        }
    }
    ClsMetrics m;
    m.accuracy = static_cast<double>(correct) / labels.size();
    m.f1.resize(class_count, 0.0);
    for (int c = 0; c < class_count; ++c) {
        const double denom = 2.0 * tp[c] + fp[c] + fn[c];
        m.f1[c] = denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    }
    return m;
}

}  // namespace s4mtl

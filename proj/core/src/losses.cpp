#include "s4mtl/losses.hpp"

#include <cmath>

#include "s4mtl/common.hpp"

namespace s4mtl {

namespace {

constexpr double kDiceEps = 1e-7;
constexpr double kClampEps = 1e-6;

void check_same_shape(const Mask& a, const Mask& b, const char* where) {
    if (a.rows != b.rows || a.cols != b.cols || a.channels != b.channels) {
        throw ValidationError(strfmt("%s: mask shape mismatch (%dx%dx%d vs %dx%dx%d)", where,
                                     a.rows, a.cols, a.channels, b.rows, b.cols, b.channels));
    }
    if (a.channels != 2) {
        throw ValidationError(strfmt("%s: expected K=2 segmentation logits, got %d", where, a.channels));
    }
}

void check_probability_range(const std::vector<double>& p, const char* where) {
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ValidationError(strfmt("%s: probability %g outside [0,1]", where, v));
        }
    }
}

double clamp01(double v) { return std::min(1.0 - kClampEps, std::max(kClampEps, v)); }

// log-sum-exp with max subtraction
double logsumexp(const Eigen::VectorXd& z) {
    double m = z.maxCoeff();
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += std::exp(z[i] - m);
    return m + std::log(s);
}

Eigen::VectorXd softmax_row(const Eigen::VectorXd& z) {
    double m = z.maxCoeff();
    Eigen::VectorXd p = (z.array() - m).exp();
    p /= p.sum();
    return p;
}

}  // namespace

void LossWeights::validate() const {
    if (alpha < 0.0 || lambda_adv < 0.0 || lambda_self < 0.0) {
        throw ValidationError(strfmt("loss weights must be nonnegative (alpha=%g, lambda_adv=%g, lambda_self=%g)",
                                     alpha, lambda_adv, lambda_self));
    }
}

bool LossReport::all_finite() const {
    for (double v : {dice_supervised, kl_unsupervised, g_adv_labeled, g_adv_unlabeled, d_supervised,
                     d_selfsup, d_adv_real, d_adv_pred_labeled, d_adv_pred_unlabeled, total_g, total_d}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::vector<std::string> LossReport::csv_fields() {
    return {"dice_supervised",  "kl_unsupervised", "g_adv_labeled",       "g_adv_unlabeled",
            "d_supervised",     "d_selfsup",       "d_adv_real",          "d_adv_pred_labeled",
            "d_adv_pred_unlabeled", "total_G",     "total_D"};
}

std::vector<std::string> LossReport::csv_values() const {
    auto f = [](double v) {
        return strfmt("%.10g", v);
    };
    return {f(dice_supervised), f(kl_unsupervised), f(g_adv_labeled), f(g_adv_unlabeled),
            f(d_supervised),    f(d_selfsup),       f(d_adv_real),    f(d_adv_pred_labeled),
            f(d_adv_pred_unlabeled), f(total_g),    f(total_d)};
}

Eigen::VectorXd class_probabilities(const Eigen::VectorXd& logits) {
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw ValidationError(strfmt("class_probabilities: non-finite logit at index %ld",
                                         static_cast<long>(i)));
        }
    }
    return softmax_row(logits);
}

double dice_loss(const Mask& y, const Mask& yhat) {
    check_same_shape(y, yhat, "dice_loss");
    const size_t n = y.plane();
    const double* y_bg = y.data.data();
    const double* y_fg = y.data.data() + n;
    const double* h_bg = yhat.data.data();
    const double* h_fg = yhat.data.data() + n;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s1 += y_fg[i] * h_fg[i];
        s2 += y_bg[i] * h_fg[i];
        s3 += y_fg[i] * h_bg[i];
    }
    return 1.0 - s1 / (s1 + 0.5 * s2 + 0.5 * s3 + kDiceEps);
}

double abs_kl_loss(const Mask& y_labeled, const Mask& yhat_unlabeled) {
    check_same_shape(y_labeled, yhat_unlabeled, "abs_kl_loss");
    const size_t n = y_labeled.plane();
    const double* a = y_labeled.data.data() + n;      // foreground logit
    const double* b = yhat_unlabeled.data.data() + n;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double ai = clamp01(a[i]);
        double bi = clamp01(b[i]);
        sum += std::fabs((ai - bi) * std::log(ai / bi));
    }
    return sum;
}

double g_adv_loss(const std::vector<double>& p_fake) {
    check_probability_range(p_fake, "g_adv_loss");
    if (p_fake.empty()) return 0.0;
    double sum = 0.0;
    for (double p : p_fake) sum += -std::log(std::max(1.0 - p, kClampEps));
    return sum / static_cast<double>(p_fake.size());
}

namespace {

double weighted_nll(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                    const std::vector<double>& weights, bool n_plus_one, const char* where) {
    const auto batch = static_cast<size_t>(logits.rows());
    const int classes = static_cast<int>(logits.cols());
    if (labels.size() != batch) {
        throw ValidationError(strfmt("%s: %zu labels for batch of %zu", where, labels.size(), batch));
    }
    if (!weights.empty() && weights.size() != batch) {
        throw ValidationError(strfmt("%s: %zu weights for batch of %zu", where, weights.size(), batch));
    }
    const int max_label = n_plus_one ? classes - 1 : classes;  // fake class excluded as a target
    double loss_sum = 0.0, weight_sum = 0.0;
    for (size_t i = 0; i < batch; ++i) {
        int label = labels[i];
        if (label < 0 || label >= max_label) {
            throw ValidationError(strfmt("%s: label %d outside [0,%d)", where, label, max_label));
        }
        double w = weights.empty() ? 1.0 : weights[i];
        Eigen::VectorXd z = logits.row(static_cast<Eigen::Index>(i)).transpose();
        loss_sum += w * (logsumexp(z) - z[label]);
        weight_sum += w;
    }
    return loss_sum / std::max(weight_sum, 1.0);
}

}  // namespace

double d_supervised_loss(const Eigen::MatrixXd& main_logits, const std::vector<int>& labels,
                         const std::vector<double>& weights) {
    return weighted_nll(main_logits, labels, weights, /*n_plus_one=*/true, "d_supervised_loss");
}

double d_selfsup_loss(const Eigen::MatrixXd& aux_logits, const std::vector<int>& proxy_labels,
                      const std::vector<double>& weights) {
    return weighted_nll(aux_logits, proxy_labels, weights, /*n_plus_one=*/false, "d_selfsup_loss");
}

std::tuple<double, double, double> d_adv_losses(const std::vector<double>& p_fake_real,
                                                const std::vector<double>& p_fake_pred_labeled,
                                                const std::vector<double>& p_fake_pred_unlabeled) {
    check_probability_range(p_fake_real, "d_adv_losses(real)");
    check_probability_range(p_fake_pred_labeled, "d_adv_losses(pred labeled)");
    check_probability_range(p_fake_pred_unlabeled, "d_adv_losses(pred unlabeled)");
    auto mean_log_not = [](const std::vector<double>& ps) {
        if (ps.empty()) return 0.0;
        double s = 0.0;
        for (double p : ps) s += -std::log(std::max(1.0 - p, kClampEps));
        return s / static_cast<double>(ps.size());
    };
    auto mean_log_is = [](const std::vector<double>& ps) {
        if (ps.empty()) return 0.0;
        double s = 0.0;
        for (double p : ps) s += -std::log(std::max(p, kClampEps));
        return s / static_cast<double>(ps.size());
    };
    return {mean_log_not(p_fake_real), mean_log_is(p_fake_pred_labeled),
            mean_log_is(p_fake_pred_unlabeled)};
}

double total_G(double dice_supervised, double kl_unsupervised, double g_adv_labeled,
               double g_adv_unlabeled, const LossWeights& w) {
    w.validate();
    return dice_supervised + w.lambda_adv * g_adv_labeled +
           w.alpha * (kl_unsupervised + w.lambda_adv * g_adv_unlabeled);
}

double total_D(double d_supervised, double d_selfsup, double d_adv_real, double d_adv_pred_labeled,
               double d_adv_pred_unlabeled, const LossWeights& w) {
    w.validate();
    return d_supervised + d_adv_real + d_adv_pred_labeled +
           w.alpha * (w.lambda_self * d_selfsup + d_adv_pred_unlabeled);
}

double dice_loss_batch_grad(const std::vector<Mask>& y, const std::vector<Mask>& yhat,
                            std::vector<Mask>* d_yhat, double scale) {
    if (y.size() != yhat.size() || y.empty()) {
        throw ValidationError("dice_loss_batch_grad: batch size mismatch or empty batch");
    }
    const double inv_b = 1.0 / static_cast<double>(y.size());
    double total = 0.0;
    for (size_t s = 0; s < y.size(); ++s) {
        check_same_shape(y[s], yhat[s], "dice_loss_batch_grad");
        const size_t n = y[s].plane();
        const double* y_bg = y[s].data.data();
        const double* y_fg = y[s].data.data() + n;
        const double* h_bg = yhat[s].data.data();
        const double* h_fg = yhat[s].data.data() + n;
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            s1 += y_fg[i] * h_fg[i];
            s2 += y_bg[i] * h_fg[i];
            s3 += y_fg[i] * h_bg[i];
        }
        const double den = s1 + 0.5 * s2 + 0.5 * s3 + kDiceEps;
        total += 1.0 - s1 / den;
        if (d_yhat) {
            Mask& g = (*d_yhat)[s];
            double* g_bg = g.data.data();
            double* g_fg = g.data.data() + n;
            const double c = scale * inv_b / (den * den);
            for (size_t i = 0; i < n; ++i) {
                // d/dh_fg of -s1/den, with ds1 = y_fg and dden = y_fg + 0.5*y_bg
                g_fg[i] += c * (s1 * (y_fg[i] + 0.5 * y_bg[i]) - y_fg[i] * den);
                // d/dh_bg: only the denominator moves, through s3
                g_bg[i] += c * (s1 * 0.5 * y_fg[i]);
            }
        }
    }
    return total * inv_b;
}

double abs_kl_batch_grad(const std::vector<Mask>& y_labeled, const std::vector<Mask>& yhat_unlabeled,
                         std::vector<Mask>* d_yhat, double scale) {
    if (y_labeled.size() != yhat_unlabeled.size() || y_labeled.empty()) {
        throw ValidationError("abs_kl_batch_grad: index pairing needs equal nonempty batches");
    }
    const double inv_b = 1.0 / static_cast<double>(y_labeled.size());
    double total = 0.0;
    for (size_t s = 0; s < y_labeled.size(); ++s) {
        check_same_shape(y_labeled[s], yhat_unlabeled[s], "abs_kl_batch_grad");
        const size_t n = y_labeled[s].plane();
        const double* a_raw = y_labeled[s].data.data() + n;
        const double* b_raw = yhat_unlabeled[s].data.data() + n;
        double* g_fg = d_yhat ? (*d_yhat)[s].data.data() + n : nullptr;
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double a = clamp01(a_raw[i]);
            double b = clamp01(b_raw[i]);
            double diff = a - b;
            double lg = std::log(a / b);
            sum += std::fabs(diff * lg);
            if (g_fg && b_raw[i] > kClampEps && b_raw[i] < 1.0 - kClampEps) {
                // product is nonnegative, so |.| never flips the derivative
                g_fg[i] += scale * inv_b * (-lg - diff / b);
            }
        }
        total += sum;
    }
    return total * inv_b;
}

double weighted_ce_grad(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                        const std::vector<double>& weights, bool n_plus_one,
                        Eigen::MatrixXd* d_logits, double scale) {
    const auto batch = static_cast<size_t>(logits.rows());
    const int classes = static_cast<int>(logits.cols());
    if (labels.size() != batch) throw ValidationError("weighted_ce_grad: label count mismatch");
    if (!weights.empty() && weights.size() != batch) {
        throw ValidationError("weighted_ce_grad: weight count mismatch");
    }
    const int max_label = n_plus_one ? classes - 1 : classes;
    double weight_sum = 0.0;
    for (size_t i = 0; i < batch; ++i) {
        weight_sum += weights.empty() ? 1.0 : weights[i];
    }
    const double norm = std::max(weight_sum, 1.0);
    double loss_sum = 0.0;
    for (size_t i = 0; i < batch; ++i) {
        int label = labels[i];
        if (label < 0 || label >= max_label) {
            throw ValidationError(strfmt("weighted_ce_grad: label %d outside [0,%d)", label, max_label));
        }
        double w = weights.empty() ? 1.0 : weights[i];
        Eigen::VectorXd z = logits.row(static_cast<Eigen::Index>(i)).transpose();
        loss_sum += w * (logsumexp(z) - z[label]);
        if (d_logits && w != 0.0) {
            Eigen::VectorXd p = softmax_row(z);
            p[label] -= 1.0;
            d_logits->row(static_cast<Eigen::Index>(i)) += (scale * w / norm) * p.transpose();
        }
    }
    return loss_sum / norm;
}

double adv_not_fake_grad(const Eigen::MatrixXd& logits, int fake_class,
                         Eigen::MatrixXd* d_logits, double scale) {
    const auto batch = logits.rows();
    if (batch == 0) return 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        Eigen::VectorXd p = softmax_row(logits.row(i).transpose());
        double pf = p[fake_class];
        sum += -std::log(std::max(1.0 - pf, kClampEps));
        if (d_logits && 1.0 - pf >= kClampEps) {
            // d/dz of -log(1 - p_fake) = p_fake/(1-p_fake) * (e_fake - p)
            Eigen::VectorXd g = -p;
            g[fake_class] += 1.0;
            d_logits->row(i) += (scale * inv_b * pf / (1.0 - pf)) * g.transpose();
        }
    }
    return sum * inv_b;
}

double adv_fake_grad(const Eigen::MatrixXd& logits, int fake_class,
                     Eigen::MatrixXd* d_logits, double scale) {
    const auto batch = logits.rows();
    if (batch == 0) return 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        Eigen::VectorXd p = softmax_row(logits.row(i).transpose());
        double pf = p[fake_class];
        sum += -std::log(std::max(pf, kClampEps));
        if (d_logits && pf >= kClampEps) {
            Eigen::VectorXd g = p;
            g[fake_class] -= 1.0;
            d_logits->row(i) += (scale * inv_b) * g.transpose();
        }
    }
    return sum * inv_b;
}

}  // namespace s4mtl

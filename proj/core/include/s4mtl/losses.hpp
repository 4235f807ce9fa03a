#pragma once

#include <Eigen/Dense>
#include <string>
#include <tuple>
#include <vector>

#include "s4mtl/image.hpp"

namespace s4mtl {

// Composite objective weights. alpha scales the whole unsupervised branch,
// lambda_adv the generator-side adversarial terms, lambda_self the
// discriminator's self-supervised classification term.
struct LossWeights {
    double alpha = 1.0;
    double lambda_adv = 0.01;
    double lambda_self = 1.0;

    void validate() const;  // throws ValidationError on negative weights
};

// Per-step decomposition of every loss term with weights applied.
struct LossReport {
    double dice_supervised = 0.0;
    double kl_unsupervised = 0.0;
    double g_adv_labeled = 0.0;
    double g_adv_unlabeled = 0.0;
    double d_supervised = 0.0;
    double d_selfsup = 0.0;
    double d_adv_real = 0.0;
    double d_adv_pred_labeled = 0.0;
    double d_adv_pred_unlabeled = 0.0;
    double total_g = 0.0;
    double total_d = 0.0;

    bool all_finite() const;
    static std::vector<std::string> csv_fields();
    std::vector<std::string> csv_values() const;
};

// Numerically stable softmax (max-subtracted). Throws on non-finite logits.
Eigen::VectorXd class_probabilities(const Eigen::VectorXd& logits);

// Soft Dice loss on the foreground logit:
//   1 - S1 / (S1 + 0.5*S2 + 0.5*S3 + eps)
// with S1 = sum y_fg*yhat_fg, S2 = sum y_bg*yhat_fg, S3 = sum y_fg*yhat_bg
// over all pixels, eps = 1e-7. y must be one-hot, yhat a probability map.
double dice_loss(const Mask& y, const Mask& yhat);

// Logit-wise absolute KL divergence on the foreground logit, both maps
// clamped to [1e-6, 1-1e-6] first:
//   sum_i |(a_i - b_i) * log(a_i / b_i)|
double abs_kl_loss(const Mask& y_labeled, const Mask& yhat_unlabeled);

// Mean over the batch of -log(1 - p_fake), p_fake clamped to <= 1-1e-6.
// Entries must lie in [0,1].
double g_adv_loss(const std::vector<double>& p_fake);

// Weighted mean negative log-probability of the true class over an
// (n+1)-logit batch; labels must name real classes (< n). Weights default to
// all ones; the sum is normalized by max(sum(w), 1).
double d_supervised_loss(const Eigen::MatrixXd& main_logits, const std::vector<int>& labels,
                         const std::vector<double>& weights = {});

// Same cross-entropy machinery on the auxiliary transform-prediction head.
double d_selfsup_loss(const Eigen::MatrixXd& aux_logits, const std::vector<int>& proxy_labels,
                      const std::vector<double>& weights = {});

// Discriminator adversarial terms: (real-pair, predicted-labeled,
// predicted-unlabeled). Real pairs contribute mean -log(1 - p_fake),
// prediction pairs mean -log(p_fake); same clamping as g_adv_loss.
std::tuple<double, double, double> d_adv_losses(const std::vector<double>& p_fake_real,
                                                const std::vector<double>& p_fake_pred_labeled,
                                                const std::vector<double>& p_fake_pred_unlabeled);

// total_G = dice + lambda_adv*g_adv_labeled + alpha*(kl + lambda_adv*g_adv_unlabeled)
double total_G(double dice_supervised, double kl_unsupervised, double g_adv_labeled,
               double g_adv_unlabeled, const LossWeights& w);

// total_D = d_sup + d_adv_real + d_adv_pred_labeled
//           + alpha*(lambda_self*d_selfsup + d_adv_pred_unlabeled)
double total_D(double d_supervised, double d_selfsup, double d_adv_real,
               double d_adv_pred_labeled, double d_adv_pred_unlabeled, const LossWeights& w);

// ---------------------------------------------------------------------------
// Gradient-bearing forms used by the optimization loop. Each returns the loss
// value and accumulates scale * dLoss/dinput into the gradient argument.
// Values agree with the plain forms above.
// ---------------------------------------------------------------------------

// Batch mean of dice_loss; d_yhat must be shaped like yhat (one per sample).
double dice_loss_batch_grad(const std::vector<Mask>& y, const std::vector<Mask>& yhat,
                            std::vector<Mask>* d_yhat, double scale);

// Batch mean of abs_kl_loss with index pairing (i-th labeled ground truth
// against i-th unlabeled prediction). Gradient w.r.t. the predictions.
double abs_kl_batch_grad(const std::vector<Mask>& y_labeled, const std::vector<Mask>& yhat_unlabeled,
                         std::vector<Mask>* d_yhat, double scale);

// Weighted cross-entropy on raw logits (batch x classes). Gradient added to
// d_logits. fake-class labels are rejected when n_plus_one is true.
double weighted_ce_grad(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                        const std::vector<double>& weights, bool n_plus_one,
                        Eigen::MatrixXd* d_logits, double scale);

// Mean -log(1 - softmax(logits)[fake]) over the batch. Matches g_adv_loss /
// the real-pair discriminator term.
double adv_not_fake_grad(const Eigen::MatrixXd& logits, int fake_class,
                         Eigen::MatrixXd* d_logits, double scale);

// Mean -log(softmax(logits)[fake]) over the batch; the discriminator's
// prediction-pair terms.
double adv_fake_grad(const Eigen::MatrixXd& logits, int fake_class,
                     Eigen::MatrixXd* d_logits, double scale);

}  // namespace s4mtl

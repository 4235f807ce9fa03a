#pragma once

#include <cstdint>
#include <vector>

namespace s4mtl {

// Training signal annealing: a threshold schedule that removes supervised
// classification signal from examples the discriminator already predicts
// confidently, ramping the usable signal up over training.
struct TsaConfig {
    int total_epochs = 1;    // E
    int dataset_size = 1;    // N, the labeled+unlabeled training set size
    int class_count = 2;     // n (real classes, fake class excluded)
    bool enabled = true;
    // The schedule as printed in its source reads
    //   1 - exp(-(s*e+1)/(E*N)) * (1 - 1/n) + 1/n
    // which exceeds 1 in the limit. The default evaluates the bounded reading
    //   (1 - exp(-(s*e+1)/(E*N))) * (1 - 1/n) + 1/n
    // which stays in [1/n, 1). Set this flag to evaluate the literal form
    // for comparison.
    bool literal_parenthesization = false;
};

void validate(const TsaConfig& cfg);  // throws ValidationError

// Threshold eta(e, s) for 0-based epoch e and step s. Monotone nondecreasing
// in the product s*e and bounded in (1/n, 1) under the default reading.
double tsa_threshold(int epoch, int step, const TsaConfig& cfg);

// Per-sample 0/1 weights: weight 0 where the true-class probability already
// exceeds eta, else 1. Feeds the supervised classification loss.
std::vector<double> tsa_weights(const std::vector<double>& true_class_probs, double eta);

}  // namespace s4mtl

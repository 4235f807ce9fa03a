#include "s4mtl/annealing.hpp"

#include <cmath>

#include "s4mtl/common.hpp"

namespace s4mtl {

void validate(const TsaConfig& cfg) {
    if (cfg.total_epochs < 1) throw ValidationError("tsa: total_epochs must be >= 1");
    if (cfg.dataset_size < 1) throw ValidationError("tsa: dataset_size must be >= 1");
    if (cfg.class_count < 2) throw ValidationError("tsa: class_count must be >= 2");
}

double tsa_threshold(int epoch, int step, const TsaConfig& cfg) {
    validate(cfg);
    if (epoch < 0 || step < 0) throw ValidationError("tsa: epoch and step must be >= 0");
    const double en = static_cast<double>(cfg.total_epochs) * cfg.dataset_size;
    const double x = (static_cast<double>(step) * epoch + 1.0) / en;
    const double inv_n = 1.0 / cfg.class_count;
    const double decay = std::exp(-x);
    if (cfg.literal_parenthesization) {
        return 1.0 - decay * (1.0 - inv_n) + inv_n;
    }
    return (1.0 - decay) * (1.0 - inv_n) + inv_n;
}

std::vector<double> tsa_weights(const std::vector<double>& true_class_probs, double eta) {
    std::vector<double> w(true_class_probs.size(), 1.0);
    for (size_t i = 0; i < w.size(); ++i) {
        if (true_class_probs[i] > eta) w[i] = 0.0;
    }
    return w;
}

}  // namespace s4mtl

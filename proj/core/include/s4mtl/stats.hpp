#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace s4mtl {

struct StatReport {
    std::string test;
    double statistic = 0.0;
    std::optional<double> p_value;   // two-sided where applicable
    bool degenerate = false;         // zero-variance / all-tied edge cases
    std::optional<double> mean_diff; // Bland-Altman
    std::optional<double> loa_low;
    std::optional<double> loa_high;
    std::optional<double> r;         // Pearson
};

// Paired-sample tests on equal-length series (length >= 5). The Wilcoxon
// signed-rank test drops zero differences, uses midranks for ties, computes
// the exact conditional distribution below 20 nonzero differences and a
// tie-corrected normal approximation with continuity correction otherwise.
std::pair<StatReport, StatReport> paired_tests(const std::vector<double>& a,
                                               const std::vector<double>& b);

// Pooled-variance independent two-sample t-test; for two groups the one-way
// ANOVA F equals its square.
StatReport independent_t_test(const std::vector<double>& a, const std::vector<double>& b);

StatReport one_way_anova(const std::vector<std::vector<double>>& groups);

struct BlandAltman {
    StatReport report;                             // statistic = mean difference
    std::vector<std::pair<double, double>> points; // (pair mean, pred - truth)
};

BlandAltman bland_altman(const std::vector<double>& truth_counts,
                         const std::vector<double>& pred_counts);

StatReport pearson(const std::vector<double>& a, const std::vector<double>& b);

// One CSV row per report; optional fields serialize as empty cells.
std::string stats_csv(const std::vector<StatReport>& reports);

}  // namespace s4mtl

#include "s4mtl/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "s4mtl/common.hpp"
#include "s4mtl/csvio.hpp"

namespace s4mtl {

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

double t_two_sided_p(double t, double df) {
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

// midranks of |values|, ascending
std::vector<double> midranks(const std::vector<double>& abs_values) {
    const size_t n = abs_values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return abs_values[i] < abs_values[j]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && abs_values[order[j + 1]] == abs_values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

StatReport wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    StatReport rep;
    rep.test = "wilcoxon_signed_rank";
    std::vector<double> diffs;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);  // zeros carry no sign information
    }
    const size_t m = diffs.size();
    if (m == 0) {
        rep.statistic = 0.0;
        rep.p_value = 1.0;
        rep.degenerate = true;
        return rep;
    }
    std::vector<double> abs_d(m);
    for (size_t i = 0; i < m; ++i) abs_d[i] = std::fabs(diffs[i]);
    const std::vector<double> ranks = midranks(abs_d);
    double w_plus = 0.0;
    for (size_t i = 0; i < m; ++i) {
        if (diffs[i] > 0.0) w_plus += ranks[i];
    }
    rep.statistic = w_plus;

    if (m < 20) {
        // exact conditional distribution of W+ over the 2^m sign assignments,
        // via the rank-sum generating function; doubled ranks stay integral
        // under midranks
        std::vector<int> r2(m);
        int total2 = 0;
        for (size_t i = 0; i < m; ++i) {
            r2[i] = static_cast<int>(std::llround(2.0 * ranks[i]));
            total2 += r2[i];
        }
        std::vector<double> count(static_cast<size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        int reach = 0;
        for (size_t i = 0; i < m; ++i) {
            reach += r2[i];
            for (int s = reach; s >= r2[i]; --s) count[s] += count[s - r2[i]];
        }
        const double denom = std::pow(2.0, static_cast<double>(m));
        const int w2 = static_cast<int>(std::llround(2.0 * w_plus));
        double p_le = 0.0, p_ge = 0.0;
        for (int s = 0; s <= total2; ++s) {
            if (s <= w2) p_le += count[s];
            if (s >= w2) p_ge += count[s];
        }
        rep.p_value = std::min(1.0, 2.0 * std::min(p_le, p_ge) / denom);
        return rep;
    }

    // normal approximation with tie correction and continuity correction
    const double n = static_cast<double>(m);
    double tie_term = 0.0;
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < sorted.size()) {
            size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double mu = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
        rep.p_value = 1.0;
        rep.degenerate = true;
        return rep;
    }
    const double dev = w_plus - mu;
    const double cc = dev > 0 ? -0.5 : (dev < 0 ? 0.5 : 0.0);
    const double z = (dev + cc) / std::sqrt(var);
    boost::math::normal norm;
    rep.p_value = 2.0 * boost::math::cdf(boost::math::complement(norm, std::fabs(z)));
    return rep;
}

}  // namespace

std::pair<StatReport, StatReport> paired_tests(const std::vector<double>& a,
                                               const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("paired_tests: unequal series lengths");
    if (a.size() < 5) throw ValidationError("paired_tests: series must have length >= 5");

    StatReport t_rep;
    t_rep.test = "paired_t";
    std::vector<double> d(a.size());
    for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double dm = mean_of(d);
    const double sd = std::sqrt(sample_var(d, dm));
    const auto n = static_cast<double>(d.size());
    if (sd == 0.0) {
        t_rep.degenerate = true;
        if (dm == 0.0) {
            t_rep.statistic = 0.0;
            t_rep.p_value = 1.0;
        } else {
            t_rep.statistic = dm > 0 ? std::numeric_limits<double>::infinity()
                                     : -std::numeric_limits<double>::infinity();
            t_rep.p_value = 0.0;
        }
    } else {
        t_rep.statistic = dm / (sd / std::sqrt(n));
        t_rep.p_value = t_two_sided_p(t_rep.statistic, n - 1.0);
    }

    return {t_rep, wilcoxon_signed_rank(a, b)};
}

StatReport independent_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw ValidationError("independent_t_test: both groups need >= 2 values");
    }
    StatReport rep;
    rep.test = "independent_t";
    const double ma = mean_of(a), mb = mean_of(b);
    const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double sp2 = ((na - 1.0) * sample_var(a, ma) + (nb - 1.0) * sample_var(b, mb)) /
                       (na + nb - 2.0);
    if (sp2 == 0.0) {
        rep.degenerate = true;
        if (ma == mb) {
            rep.statistic = 0.0;
            rep.p_value = 1.0;
        } else {
            rep.statistic = ma > mb ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
            rep.p_value = 0.0;
        }
        return rep;
    }
    rep.statistic = (ma - mb) / std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    rep.p_value = t_two_sided_p(rep.statistic, na + nb - 2.0);
    return rep;
}

StatReport one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ValidationError("one_way_anova: need >= 2 groups");
    size_t total_n = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ValidationError("one_way_anova: every group needs >= 2 values");
        total_n += g.size();
        grand_sum += std::accumulate(g.begin(), g.end(), 0.0);
    }
    const double grand_mean = grand_sum / static_cast<double>(total_n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        const double gm = mean_of(g);
        ssb += static_cast<double>(g.size()) * (gm - grand_mean) * (gm - grand_mean);
        for (double x : g) ssw += (x - gm) * (x - gm);
    }
    const double df1 = static_cast<double>(groups.size()) - 1.0;
    const double df2 = static_cast<double>(total_n - groups.size());

    StatReport rep;
    rep.test = "one_way_anova";
    if (ssb == 0.0) {
        rep.statistic = 0.0;
        rep.p_value = 1.0;
        rep.degenerate = (ssw == 0.0);
        return rep;
    }
    if (ssw == 0.0) {
        rep.statistic = std::numeric_limits<double>::infinity();
        rep.p_value = 0.0;
        rep.degenerate = true;
        return rep;
    }
    rep.statistic = (ssb / df1) / (ssw / df2);
    boost::math::fisher_f dist(df1, df2);
    rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.statistic));
    return rep;
}

BlandAltman bland_altman(const std::vector<double>& truth_counts,
                         const std::vector<double>& pred_counts) {
    if (truth_counts.size() != pred_counts.size() || truth_counts.size() < 2) {
        throw ValidationError("bland_altman: need >= 2 equal-length pairs");
    }
    BlandAltman out;
    out.report.test = "bland_altman";
    std::vector<double> diffs(truth_counts.size());
    for (size_t i = 0; i < truth_counts.size(); ++i) {
        diffs[i] = pred_counts[i] - truth_counts[i];  // sign convention: pred - truth
        out.points.emplace_back(0.5 * (pred_counts[i] + truth_counts[i]), diffs[i]);
    }
    const double dm = mean_of(diffs);
    const double sd = std::sqrt(sample_var(diffs, dm));
    out.report.statistic = dm;
    out.report.mean_diff = dm;
    out.report.loa_low = dm - 1.96 * sd;
    out.report.loa_high = dm + 1.96 * sd;
    return out;
}

StatReport pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3) {
        throw ValidationError("pearson: need >= 3 equal-length pairs");
    }
    StatReport rep;
    rep.test = "pearson";
    const double ma = mean_of(a), mb = mean_of(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) {
        rep.degenerate = true;
        rep.statistic = 0.0;
        rep.r = 0.0;
        return rep;
    }
    double r = std::clamp(cov / (std::sqrt(va) * std::sqrt(vb)), -1.0, 1.0);
    rep.statistic = r;
    rep.r = r;
    const auto n = static_cast<double>(a.size());
    if (std::fabs(r) >= 1.0) {
        rep.p_value = 0.0;
    } else {
        const double t = r * std::sqrt((n - 2.0) / (1.0 - r * r));
        rep.p_value = t_two_sided_p(t, n - 2.0);
    }
    return rep;
}

std::string stats_csv(const std::vector<StatReport>& reports) {
    std::string out = "test,statistic,p_value,degenerate,mean_diff,loa_low,loa_high,r\n";
    auto opt = [](const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); };
    for (const auto& rep : reports) {
        out += join_csv({rep.test, fmt_num(rep.statistic), opt(rep.p_value),
                         rep.degenerate ? "1" : "0", opt(rep.mean_diff), opt(rep.loa_low),
                         opt(rep.loa_high), opt(rep.r)});
    }
    return out;
}

}  // namespace s4mtl

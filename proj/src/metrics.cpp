#include "luq/metrics.hpp"

#include "luq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace luq {

namespace {

struct Counts {
    std::size_t pos = 0;
    std::size_t neg = 0;
};

Counts validate(const ScoredBinarySet& s) {
    if (s.scores.size() != s.labels.size()) fail(Errc::DimMismatch, "scores and labels differ in length");
    Counts c;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        if (s.labels[i] == 1) {
            ++c.pos;
        } else if (s.labels[i] == 0) {
            ++c.neg;
        } else {
            fail(Errc::InvalidArgument, "labels must be 0 or 1");
        }
        if (std::isnan(s.scores[i])) fail(Errc::InvalidArgument, "score is NaN");
    }
    if (c.pos == 0 || c.neg == 0) fail(Errc::OneClassOnly, "ranking metrics need both classes present");
    return c;
}

// Indices sorted by descending score (stable).
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

ScoredBinarySet ScoredBinarySet::from_groups(std::span<const double> positives, std::span<const double> negatives) {
    ScoredBinarySet s;
    s.scores.assign(positives.begin(), positives.end());
    s.scores.insert(s.scores.end(), negatives.begin(), negatives.end());
    s.labels.assign(positives.size(), 1);
    s.labels.insert(s.labels.end(), negatives.size(), 0);
    return s;
}

double auroc(const ScoredBinarySet& s) {
    const Counts c = validate(s);
    std::vector<std::size_t> idx(s.scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    // mid-ranks (1-based) summed over positives
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (s.labels[idx[k]] == 1) rank_sum += mid;
        i = j;
    }
    const double np = static_cast<double>(c.pos);
    const double nn = static_cast<double>(c.neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double average_precision(const ScoredBinarySet& s) {
    const Counts c = validate(s);
    const auto idx = descending_order(s.scores);
    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::size_t group_tp = 0;
        while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
            group_tp += s.labels[idx[j]] == 1 ? 1 : 0;
            ++j;
        }
        tp += group_tp;
        seen += j - i;
        if (group_tp > 0) {
            const double recall_step = static_cast<double>(group_tp) / static_cast<double>(c.pos);
            ap += recall_step * static_cast<double>(tp) / static_cast<double>(seen);
        }
        i = j;
    }
    return ap;
}

double fpr_at_tpr(const ScoredBinarySet& s, double tpr_target) {
    const Counts c = validate(s);
    if (!(tpr_target > 0.0 && tpr_target <= 1.0)) fail(Errc::InvalidArgument, "tpr_target must lie in (0, 1]");
    const auto idx = descending_order(s.scores);
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
            (s.labels[idx[j]] == 1 ? tp : fp) += 1;
            ++j;
        }
        // FPR only grows as the threshold drops, so the first threshold
        // reaching the target is the minimum.
        if (static_cast<double>(tp) / static_cast<double>(c.pos) >= tpr_target) {
            return static_cast<double>(fp) / static_cast<double>(c.neg);
        }
        i = j;
    }
    return 1.0;
}

double percentile(std::span<const double> values, double q) {
    if (values.empty()) fail(Errc::EmptyInput, "percentile of empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

CalibrationCurve calibration_curve(std::span<const double> uncertainties, std::span<const int> correct,
                                   double percentile_step) {
    if (uncertainties.empty()) fail(Errc::EmptyInput, "calibration_curve: no samples");
    if (uncertainties.size() != correct.size()) fail(Errc::DimMismatch, "calibration_curve: length mismatch");
    if (!(percentile_step > 0.0 && percentile_step <= 100.0)) {
        fail(Errc::InvalidArgument, "calibration_curve: percentile step must lie in (0, 100]");
    }
    CalibrationCurve curve;
    const auto steps = static_cast<std::size_t>(std::ceil(100.0 / percentile_step - 1e-9));
    for (std::size_t s = 1; s <= steps; ++s) {
        const double q = s == steps ? 100.0 : percentile_step * static_cast<double>(s);
        const double threshold = percentile(uncertainties, q);
        std::size_t n = 0;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < uncertainties.size(); ++i) {
            if (uncertainties[i] <= threshold) {
                ++n;
                hits += correct[i] != 0 ? 1 : 0;
            }
        }
        curve.percentiles.push_back(q);
        curve.thresholds.push_back(threshold);
        curve.accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n));
    }
    return curve;
}

std::vector<double> rmse_below_uncertainty(std::span<const double> errors, std::span<const double> uncertainties,
                                           std::span<const double> thresholds) {
    if (errors.size() != uncertainties.size()) fail(Errc::DimMismatch, "rmse_below_uncertainty: length mismatch");
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        double ss = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < errors.size(); ++i) {
            if (uncertainties[i] <= t) {
                ss += errors[i] * errors[i];
                ++n;
            }
        }
        out.push_back(n == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(ss / static_cast<double>(n)));
    }
    return out;
}

double discrete_entropy(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) fail(Errc::NotNormalized, "discrete_entropy: negative or non-finite entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        fail(Errc::NotNormalized, "discrete_entropy: probabilities sum to " + std::to_string(total));
    }
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

}  // namespace luq

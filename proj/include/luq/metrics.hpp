#pragma once

#include <span>
#include <vector>

namespace luq {

// Higher score = more likely positive (e.g. OOD). Labels are 0/1.
struct ScoredBinarySet {
    std::vector<double> scores;
    std::vector<int> labels;

    static ScoredBinarySet from_groups(std::span<const double> positives, std::span<const double> negatives);
};

// Mann–Whitney AUROC with ties credited ½. Throws OneClassOnly.
double auroc(const ScoredBinarySet& s);

// Step-interpolated AP: Σ_t (R_t - R_{t-1})·P_t over distinct score
// thresholds t, so tied scores enter the ranking as one block.
double average_precision(const ScoredBinarySet& s);

// Smallest false-positive rate over thresholds reaching TPR ≥ target.
double fpr_at_tpr(const ScoredBinarySet& s, double tpr_target = 0.95);

struct CalibrationCurve {
    std::vector<double> percentiles;  // ascending, in (0, 100]
    std::vector<double> thresholds;   // uncertainty value at each percentile
    std::vector<double> accuracy;     // accuracy among samples with uncertainty ≤ threshold
};

// Percentile values use linear interpolation between order statistics.
double percentile(std::span<const double> values, double q);

CalibrationCurve calibration_curve(std::span<const double> uncertainties, std::span<const int> correct,
                                   double percentile_step = 5.0);

// RMSE of the errors whose uncertainty is ≤ each threshold. Empty buckets
// yield NaN.
std::vector<double> rmse_below_uncertainty(std::span<const double> errors, std::span<const double> uncertainties,
                                           std::span<const double> thresholds);

// -Σ p log p with 0·log 0 = 0. Throws NotNormalized unless the entries are
// non-negative and sum to 1 within 1e-9.
double discrete_entropy(std::span<const double> probs);

}  // namespace luq

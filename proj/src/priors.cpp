#include "luq/priors.hpp"

#include "luq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace luq {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

CategoricalPrior fit_categorical(std::span<const int> predicted_labels, std::span<const int> declared_classes,
                                 double smoothing) {
    if (predicted_labels.empty()) fail(Errc::EmptyInput, "fit_categorical: no labels");
    std::map<int, std::size_t> counts;
    for (int c : declared_classes) counts.emplace(c, 0);
    for (int c : predicted_labels) ++counts[c];

    const bool any_missing =
        std::any_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 0; });
    const double add = any_missing ? smoothing : 0.0;
    if (any_missing && !(smoothing > 0.0)) {
        fail(Errc::InvalidArgument, "fit_categorical: declared class without labels needs smoothing > 0");
    }
    const double total = static_cast<double>(predicted_labels.size()) + add * static_cast<double>(counts.size());

    CategoricalPrior p;
    for (const auto& [cls, count] : counts) {
        p.classes.push_back(cls);
        p.log_probs.push_back(std::log((static_cast<double>(count) + add) / total));
    }
    return p;
}

UniformPrior make_uniform(double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        fail(Errc::InvalidArgument, "uniform prior needs finite lo < hi");
    }
    return {lo, hi};
}

BetaPrimePrior make_betaprime(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        fail(Errc::InvalidArgument, "beta-prime prior needs alpha > 0 and beta > 0");
    }
    return {alpha, beta};
}

HistogramPrior fit_histogram(std::span<const double> samples, std::size_t bins) {
    if (samples.empty()) fail(Errc::EmptyInput, "fit_histogram: no samples");
    if (bins == 0) fail(Errc::InvalidArgument, "fit_histogram: bins must be positive");
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double lo = *lo_it;
    double hi = *hi_it;
    if (!std::isfinite(lo) || !std::isfinite(hi)) fail(Errc::InvalidArgument, "fit_histogram: non-finite sample");
    if (hi - lo <= 0.0) {
        const double pad = std::max(std::abs(lo) * 1e-6, 1e-6);
        lo -= pad;
        hi += pad;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<double> counts(bins, 0.0);
    for (double s : samples) {
        auto b = static_cast<std::size_t>((s - lo) / width);
        counts[std::min(b, bins - 1)] += 1.0;
    }
    HistogramPrior h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
    h.edges.back() = hi;
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < bins; ++i) {
        const double w = h.edges[i + 1] - h.edges[i];
        h.log_density.push_back(counts[i] > 0.0 ? std::log(counts[i] / (n * w)) : kNegInf);
    }
    return h;
}

double prior_log_pmf(const CategoricalPrior& p, int cls) {
    const auto it = std::lower_bound(p.classes.begin(), p.classes.end(), cls);
    if (it == p.classes.end() || *it != cls) return kNegInf;
    return p.log_probs[static_cast<std::size_t>(it - p.classes.begin())];
}

double prior_log_pdf(const OutputPrior& prior, double y) {
    return std::visit(
        overloaded{
            [&](const CategoricalPrior& p) {
                const double r = std::round(y);
                if (r != y) return kNegInf;
                return prior_log_pmf(p, static_cast<int>(r));
            },
            [&](const UniformPrior& p) {
                if (y < p.lo || y > p.hi) return kNegInf;
                return -std::log(p.hi - p.lo);
            },
            [&](const BetaPrimePrior& p) {
                if (!(y > 0.0) || !std::isfinite(y)) return kNegInf;
                const double log_beta_fn = std::lgamma(p.alpha) + std::lgamma(p.beta) - std::lgamma(p.alpha + p.beta);
                return (p.alpha - 1.0) * std::log(y) - (p.alpha + p.beta) * std::log1p(y) - log_beta_fn;
            },
            [&](const HistogramPrior& p) {
                if (p.edges.size() < 2 || y < p.edges.front() || y > p.edges.back()) return kNegInf;
                auto it = std::upper_bound(p.edges.begin(), p.edges.end(), y);
                std::size_t bin = static_cast<std::size_t>(it - p.edges.begin());
                bin = bin == 0 ? 0 : bin - 1;
                bin = std::min(bin, p.log_density.size() - 1);
                return p.log_density[bin];
            },
        },
        prior);
}

std::optional<std::pair<double, double>> prior_support(const OutputPrior& prior) {
    return std::visit(
        overloaded{
            [](const CategoricalPrior&) -> std::optional<std::pair<double, double>> { return std::nullopt; },
            [](const UniformPrior& p) -> std::optional<std::pair<double, double>> {
                return std::pair{p.lo, p.hi};
            },
            [](const BetaPrimePrior&) -> std::optional<std::pair<double, double>> {
                return std::pair{0.0, std::numeric_limits<double>::infinity()};
            },
            [](const HistogramPrior& p) -> std::optional<std::pair<double, double>> {
                return std::pair{p.edges.front(), p.edges.back()};
            },
        },
        prior);
}

BetaPrimeMoments betaprime_moments(double alpha, double beta) {
    if (!(beta > 2.0)) fail(Errc::InvalidArgument, "beta-prime variance is finite only for beta > 2");
    const double bm1 = beta - 1.0;
    return {alpha / bm1, alpha * (alpha + beta - 1.0) / ((beta - 2.0) * bm1 * bm1)};
}

SampleMoments sample_moments(std::span<const double> samples) {
    if (samples.size() < 2) fail(Errc::TooFewSamples, "sample_moments needs at least 2 samples");
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    return {mean, ss / static_cast<double>(samples.size() - 1)};
}

BetaPrimePrior betaprime_fit_mom(std::span<const double> samples) {
    if (samples.size() < 10) fail(Errc::TooFewSamples, "betaprime_fit_mom needs at least 10 samples");
    for (double s : samples) {
        if (!(s > 0.0) || !std::isfinite(s)) fail(Errc::InvalidArgument, "betaprime_fit_mom: samples must be positive");
    }
    const SampleMoments m = sample_moments(samples);
    const double spread = m.variance / (m.mean * m.mean);
    if (!(m.variance > 0.0) || !std::isfinite(m.variance) || spread < 1e-14) {
        fail(Errc::MomentInversionFailed, "betaprime_fit_mom: sample variance " + std::to_string(m.variance) +
                                              " admits no beta-prime fit");
    }
    const double beta = 2.0 + m.mean * (m.mean + 1.0) / m.variance;
    const double alpha = m.mean * (beta - 1.0);
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !(alpha > 0.0) || !(beta > 2.0)) {
        fail(Errc::MomentInversionFailed, "betaprime_fit_mom: moment inversion left the parameter domain");
    }
    return {alpha, beta};
}

}  // namespace luq

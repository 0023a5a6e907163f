#include "luq/cli.hpp"

#include "luq/config.hpp"
#include "luq/error.hpp"
#include "luq/io.hpp"
#include "luq/pipeline.hpp"
#include "luq/svg.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>

namespace fs = std::filesystem;

namespace luq {

namespace {

// Flag values that parse but make no sense; reported as usage errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t p = s.find(sep, start);
        out.push_back(s.substr(start, p == std::string::npos ? std::string::npos : p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

double flag_number(const std::string& text, const std::string& flag) {
    try {
        return parse_double(text, flag);
    } catch (const Error&) {
        throw UsageError(flag + ": '" + text + "' is not a number");
    }
}

std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
    const auto parts = split(text, ':');
    if (parts.size() != 2) throw UsageError(flag + ": expected lo:hi, got '" + text + "'");
    const double lo = flag_number(parts[0], flag);
    const double hi = flag_number(parts[1], flag);
    if (!(lo < hi)) throw UsageError(flag + ": lo must be below hi");
    return {lo, hi};
}

// categorical | uniform:lo:hi | betaprime:alpha:beta | betaprime-fit | histogram:bins
struct PriorChoice {
    std::string kind;
    double a = 0.0;
    double b = 0.0;
};

PriorChoice parse_prior(const std::string& text) {
    const auto parts = split(text, ':');
    PriorChoice p{parts[0]};
    if (p.kind == "categorical" || p.kind == "betaprime-fit") {
        if (parts.size() != 1) throw UsageError("--prior " + p.kind + " takes no parameters");
    } else if (p.kind == "uniform" || p.kind == "betaprime") {
        if (parts.size() != 3) throw UsageError("--prior " + p.kind + " needs two parameters, e.g. " + p.kind + ":1:2");
        p.a = flag_number(parts[1], "--prior");
        p.b = flag_number(parts[2], "--prior");
        if (p.kind == "uniform" && !(p.a < p.b)) throw UsageError("--prior uniform: lo must be below hi");
        if (p.kind == "betaprime" && !(p.a > 0.0 && p.b > 0.0)) {
            throw UsageError("--prior betaprime: alpha and beta must be positive");
        }
    } else if (p.kind == "histogram") {
        if (parts.size() != 2) throw UsageError("--prior histogram needs a bin count, e.g. histogram:50");
        p.a = flag_number(parts[1], "--prior");
        if (!(p.a >= 1.0) || p.a != std::floor(p.a)) throw UsageError("--prior histogram: bins must be a positive integer");
    } else {
        throw UsageError("--prior: unknown kind '" + p.kind + "'");
    }
    return p;
}

std::string fmt(double v) { return format_double(v); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail(Errc::Io, "cannot create output directory " + dir.string());
    // probe writability up front so a read-only directory fails before any training
    const fs::path probe = dir / ".luq-write-test";
    write_file(probe, "");
    fs::remove(probe, ec);
}

void write_svg(const fs::path& path, const PlotSpec& spec) { write_file(path, render_svg(spec)); }

std::vector<std::pair<double, double>> flagged_spans(const Vector& x, const Vector& flag) {
    std::vector<std::pair<double, double>> spans;
    for (std::size_t i = 0; i < x.size();) {
        if (flag[i] == 0.0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < x.size() && flag[j + 1] != 0.0) ++j;
        spans.emplace_back(x[i], x[j]);
        i = j + 1;
    }
    return spans;
}

Vector iota_vec(std::size_t n, double start = 0.0) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<double>(i);
    return v;
}

Vector to_vec(const std::vector<int>& v) { return Vector(v.begin(), v.end()); }

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string features, predictions, out;
    std::string model = "gmm";
    std::string prior;
    std::size_t components = 1;
    std::string covariance = "full";
    double cov_reg = 1e-6;
    std::size_t max_iter = 200;
    double tol = 1e-6;
    std::size_t pca = 0;
    bool whiten = false;
    std::uint64_t seed = 0;
    std::size_t grid = 1000;
    std::string grid_range;
    std::size_t epochs = 500;
    std::size_t patience = 20;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch = 128;
    double val_fraction = 0.2;
    std::size_t flow_layers = 3;
    std::size_t flow_hidden = 64;
};

void add_fit(CLI::App& app, FitArgs& a) {
    auto* c = app.add_subcommand("fit", "Fit output-conditional latent densities and an output prior");
    c->add_option("--features", a.features, "Training latents (matrix file or CSV)")->required();
    c->add_option("--predictions", a.predictions, "Model predictions per row: class ids (gmm) or values (flow)")
        ->required();
    c->add_option("--model", a.model, "Density kind")->check(CLI::IsMember({"gmm", "flow"}));
    c->add_option("--prior", a.prior,
                  "categorical | uniform:lo:hi | betaprime:a:b | betaprime-fit | histogram:bins "
                  "(default categorical for gmm, uniform:-10:10 for flow)");
    c->add_option("--components", a.components, "Mixture components per class")->check(CLI::PositiveNumber);
    c->add_option("--covariance", a.covariance, "full | tied")->check(CLI::IsMember({"full", "tied"}));
    c->add_option("--cov-reg", a.cov_reg, "Added to covariance diagonals")->check(CLI::NonNegativeNumber);
    c->add_option("--max-iter", a.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    c->add_option("--tol", a.tol, "EM relative tolerance")->check(CLI::PositiveNumber);
    c->add_option("--pca", a.pca, "Reduce latents to this many dimensions first (0 = off)");
    c->add_flag("--whiten", a.whiten, "Scale PCA coordinates to unit variance");
    c->add_option("--seed", a.seed, "Random seed");
    c->add_option("--grid", a.grid, "Support grid points (flow)")->check(CLI::Range(2, 10000000));
    c->add_option("--grid-range", a.grid_range, "Support grid lo:hi (flow; default prior support)");
    c->add_option("--epochs", a.epochs, "Flow epoch cap")->check(CLI::PositiveNumber);
    c->add_option("--patience", a.patience, "Flow early-stopping patience")->check(CLI::PositiveNumber);
    c->add_option("--lr", a.lr, "Flow learning rate")->check(CLI::PositiveNumber);
    c->add_option("--weight-decay", a.weight_decay, "Flow decoupled weight decay")->check(CLI::NonNegativeNumber);
    c->add_option("--batch", a.batch, "Flow batch size (0 = full batch)");
    c->add_option("--val-fraction", a.val_fraction, "Flow validation share")->check(CLI::Range(1e-9, 1.0 - 1e-9));
    c->add_option("--flow-layers", a.flow_layers, "Coupling layers")->check(CLI::PositiveNumber);
    c->add_option("--flow-hidden", a.flow_hidden, "Subnet hidden width")->check(CLI::PositiveNumber);
    c->add_option("--out", a.out, "Model file to write")->required();
}

OutputPrior build_continuous_prior(const PriorChoice& p, std::span<const double> outputs) {
    if (p.kind == "uniform") return make_uniform(p.a, p.b);
    if (p.kind == "betaprime") return make_betaprime(p.a, p.b);
    if (p.kind == "betaprime-fit") return betaprime_fit_mom(outputs);
    if (p.kind == "histogram") return fit_histogram(outputs, static_cast<std::size_t>(p.a));
    throw UsageError("--prior " + p.kind + " does not apply to flow models");
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
    const bool is_flow = a.model == "flow";
    const PriorChoice prior_choice = parse_prior(a.prior.empty() ? (is_flow ? "uniform:-10:10" : "categorical") : a.prior);
    if (!is_flow && prior_choice.kind != "categorical") throw UsageError("gmm models take a categorical prior");
    if (is_flow && prior_choice.kind == "categorical") throw UsageError("flow models need a continuous prior");
    std::optional<std::pair<double, double>> grid_range;
    if (!a.grid_range.empty()) grid_range = parse_range(a.grid_range, "--grid-range");

    Matrix features = read_features(a.features);
    const Matrix predictions = read_features(a.predictions);
    if (predictions.rows() != features.rows()) {
        fail(Errc::DimMismatch, a.predictions + " has " + std::to_string(predictions.rows()) + " rows but " +
                                    a.features + " has " + std::to_string(features.rows()));
    }
    if (predictions.cols() != 1) {
        fail(Errc::DimMismatch, a.predictions + " must have exactly one column, found " +
                                    std::to_string(predictions.cols()));
    }

    ModelBundle bundle;
    out << "rows=" << features.rows() << "\n";
    out << "input_dim=" << features.cols() << "\n";
    if (a.pca > 0) {
        bundle.pca = pca_fit(features, a.pca, {a.whiten});
        features = pca_transform(*bundle.pca, features);
    }
    out << "dim=" << features.cols() << "\n";
    out << "model=" << a.model << "\n";

    if (!is_flow) {
        std::vector<int> labels(predictions.rows());
        for (std::size_t r = 0; r < predictions.rows(); ++r) {
            const double v = predictions(r, 0);
            if (v != std::round(v)) {
                fail(Errc::Format, a.predictions + ": row " + std::to_string(r) + " is not an integer class id");
            }
            labels[r] = static_cast<int>(v);
        }
        EmOptions em;
        em.n_components = a.components;
        em.max_iter = a.max_iter;
        em.tol = a.tol;
        em.cov_reg = a.cov_reg;
        em.covariance_mode = a.covariance == "tied" ? CovarianceMode::TiedAcrossComponents
                                                    : CovarianceMode::FullPerComponent;
        em.seed = a.seed;
        std::vector<ClassFitReport> reports;
        bundle.gmm = fit_class_conditional(features, labels, em, {}, &reports);
        bundle.prior = fit_categorical(labels, bundle.gmm->classes);
        double nll = 0.0;
        for (const auto& rep : reports) {
            out << "class." << rep.cls << ".count=" << rep.count << "\n";
            out << "class." << rep.cls << ".components=" << rep.components << "\n";
            out << "class." << rep.cls << ".final_nll=" << fmt(-rep.final_objective) << "\n";
            nll -= rep.final_objective * static_cast<double>(rep.count);
        }
        out << "final_nll=" << fmt(nll / static_cast<double>(features.rows())) << "\n";
    } else {
        const Vector outputs(predictions.data().begin(), predictions.data().end());
        bundle.prior = build_continuous_prior(prior_choice, outputs);
        FlowArchitecture arch;
        arch.n_layers = a.flow_layers;
        arch.hidden_width = a.flow_hidden;
        FlowTrainConfig cfg;
        cfg.learning_rate = a.lr;
        cfg.weight_decay = a.weight_decay;
        cfg.batch_size = a.batch;
        cfg.max_epochs = a.epochs;
        cfg.patience = a.patience;
        cfg.seed = a.seed;
        cfg.val_fraction = a.val_fraction;
        const FlowTrainResult tr = flow_train(features, predictions, arch, cfg);
        bundle.flow = tr.flow;
        if (!grid_range) {
            const auto support = prior_support(bundle.prior);
            if (support && std::isfinite(support->first) && std::isfinite(support->second)) {
                grid_range = *support;
            } else {
                const auto [lo, hi] = std::minmax_element(outputs.begin(), outputs.end());
                const double pad = 0.5 * (*hi - *lo) + 1e-6;
                grid_range = {std::max(*lo - pad, support ? support->first : -INFINITY), *hi + pad};
                if (support && grid_range->first <= support->first) grid_range->first = support->first + 1e-9 * pad;
            }
        }
        bundle.grid = make_grid(grid_range->first, grid_range->second, a.grid);
        out << "epochs_run=" << tr.log.back().epoch << "\n";
        out << "max_epochs=" << a.epochs << "\n";
        out << "best_epoch=" << tr.best_epoch << "\n";
        out << "best_val_nll=" << fmt(tr.best_val_nll) << "\n";
        out << "final_nll=" << fmt(tr.log[tr.best_epoch].train_nll) << "\n";
        out << "early_stopped=" << (tr.early_stopped ? 1 : 0) << "\n";
        out << "grid_points=" << bundle.grid->size() << "\n";
    }
    write_model_file(a.out, bundle);
    out << "model_file=" << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
    std::string model, features, out;
};

void add_score(CLI::App& app, ScoreArgs& a) {
    auto* c = app.add_subcommand("score", "Score latents with epistemic and aleatoric uncertainty");
    c->add_option("--model", a.model, "Model file from `fit`")->required();
    c->add_option("--features", a.features, "Latents to score (matrix file or CSV)")->required();
    c->add_option("--out", a.out, "Scores CSV to write")->required();
}

UncertaintyScores score_with_bundle(const ModelBundle& m, Matrix features, const std::string& source) {
    const std::size_t density_dim = m.gmm ? m.gmm->dim : m.flow->dim;
    if (m.pca && features.cols() == m.pca->input_dim) {
        features = pca_transform(*m.pca, features);
    } else if (features.cols() != density_dim) {
        std::string msg = source + " has " + std::to_string(features.cols()) + " columns; model expects " +
                          std::to_string(density_dim);
        if (m.pca) msg += " (or " + std::to_string(m.pca->input_dim) + " before its stored PCA)";
        fail(Errc::DimMismatch, msg);
    }
    if (m.gmm) {
        const auto* prior = std::get_if<CategoricalPrior>(&m.prior);
        if (!prior) fail(Errc::Format, "gmm model without a categorical prior");
        return score_classification(*m.gmm, *prior, features);
    }
    if (!m.grid) fail(Errc::Format, "flow model without a support grid");
    return score_regression(*m.flow, m.prior, *m.grid, features);
}

void write_scores(const fs::path& path, const UncertaintyScores& s) {
    write_csv(path, {{"index", iota_vec(s.epistemic.size())},
                     {"epistemic_nats", s.epistemic},
                     {"aleatoric_nats", s.aleatoric}});
}

int cmd_score(const ScoreArgs& a, std::ostream& out) {
    const ModelBundle m = read_model_file(a.model);
    const UncertaintyScores s = score_with_bundle(m, read_features(a.features), a.features);
    write_scores(a.out, s);
    out << "rows=" << s.epistemic.size() << "\n";
    out << "scores_file=" << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string mode;
    std::string in, id_scores, ood_scores, out, plot;
    std::string column;
    std::string label_column = "label";
    std::string correct_column = "correct";
    std::string error_column = "error";
    double step = 5.0;
    double tpr = 0.95;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* c = app.add_subcommand("eval", "Compute OOD, calibration or error-vs-uncertainty metrics from CSVs");
    c->add_option("--mode", a.mode, "ood | calibration | rmse")
        ->required()
        ->check(CLI::IsMember({"ood", "calibration", "rmse"}));
    c->add_option("--in", a.in, "CSV holding scores and label/correct/error columns");
    c->add_option("--id-scores", a.id_scores, "ood: scores CSV of in-distribution samples");
    c->add_option("--ood-scores", a.ood_scores, "ood: scores CSV of out-of-distribution samples");
    c->add_option("--column", a.column,
                  "Score column (default epistemic_nats for ood, aleatoric_nats otherwise)");
    c->add_option("--label-column", a.label_column, "ood: 0/1 label column of --in");
    c->add_option("--correct-column", a.correct_column, "calibration: 0/1 correctness column");
    c->add_option("--error-column", a.error_column, "rmse: error column");
    c->add_option("--step", a.step, "Percentile step for curves")->check(CLI::Range(1e-6, 100.0));
    c->add_option("--tpr", a.tpr, "ood: target true-positive rate")->check(CLI::Range(1e-9, 1.0));
    c->add_option("--out", a.out, "Metrics CSV to write")->required();
    c->add_option("--plot", a.plot, "Optional SVG rendering of the emitted CSV");
}

std::vector<int> binary_column(const CsvTable& t, const std::string& name, const std::string& source) {
    const Vector v = t.column(name);
    std::vector<int> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0 && v[i] != 1.0) {
            fail(Errc::Format, source + ": column " + name + " row " + std::to_string(i) + " is not 0 or 1");
        }
        out[i] = static_cast<int>(v[i]);
    }
    return out;
}

Vector named_column(const CsvTable& t, const std::string& name, const std::string& source) {
    if (!t.has_column(name)) fail(Errc::Format, source + ": missing column '" + name + "'");
    return t.column(name);
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const std::string column = a.column.empty() ? (a.mode == "ood" ? "epistemic_nats" : "aleatoric_nats") : a.column;
    if (a.mode == "ood") {
        ScoredBinarySet set;
        if (!a.id_scores.empty() || !a.ood_scores.empty()) {
            if (a.id_scores.empty() || a.ood_scores.empty() || !a.in.empty()) {
                throw UsageError("ood mode takes either --in, or both --id-scores and --ood-scores");
            }
            const Vector id = named_column(read_csv(a.id_scores), column, a.id_scores);
            const Vector od = named_column(read_csv(a.ood_scores), column, a.ood_scores);
            set = ScoredBinarySet::from_groups(od, id);
        } else {
            if (a.in.empty()) throw UsageError("ood mode needs --in or --id-scores/--ood-scores");
            const CsvTable t = read_csv(a.in);
            const Vector s = named_column(t, column, a.in);
            named_column(t, a.label_column, a.in);
            set.scores = s;
            set.labels = binary_column(t, a.label_column, a.in);
        }
        const double roc = auroc(set);
        const double ap = average_precision(set);
        const double fpr = fpr_at_tpr(set, a.tpr);
        write_csv(a.out, {{"auroc", {roc}}, {"ap", {ap}}, {"fpr95", {fpr}}});
        out << "auroc=" << fmt(roc) << "\nap=" << fmt(ap) << "\nfpr95=" << fmt(fpr) << "\n";
        if (!a.plot.empty()) {
            const CsvTable back = read_csv(a.out);
            PlotSpec spec{"OOD metrics", "metric (0 = AUROC, 1 = AP, 2 = FPR95)", "value", {}, {}, {}};
            spec.series.push_back({"metrics", {0, 1, 2},
                                   {back.column("auroc")[0], back.column("ap")[0], back.column("fpr95")[0]},
                                   "#d62728", true});
            write_svg(a.plot, spec);
        }
        return kExitOk;
    }
    if (a.in.empty()) throw UsageError(a.mode + " mode needs --in");
    const CsvTable t = read_csv(a.in);
    const Vector unc = named_column(t, column, a.in);
    if (a.mode == "calibration") {
        named_column(t, a.correct_column, a.in);
        const std::vector<int> correct = binary_column(t, a.correct_column, a.in);
        const CalibrationCurve curve = calibration_curve(unc, correct, a.step);
        write_csv(a.out, {{"percentile", curve.percentiles},
                          {"threshold", curve.thresholds},
                          {"accuracy", curve.accuracy}});
        out << "points=" << curve.percentiles.size() << "\n";
        out << "final_accuracy=" << fmt(curve.accuracy.back()) << "\n";
        if (!a.plot.empty()) {
            const CsvTable back = read_csv(a.out);
            PlotSpec spec{"Calibration", "uncertainty percentile", "accuracy at or below", {}, {}, {}};
            spec.series.push_back({"accuracy", back.column("percentile"), back.column("accuracy"), "#1f77b4", true});
            write_svg(a.plot, spec);
        }
        return kExitOk;
    }
    // rmse
    const Vector err = named_column(t, a.error_column, a.in);
    Vector percentiles, thresholds;
    const auto steps = static_cast<std::size_t>(std::ceil(100.0 / a.step - 1e-9));
    for (std::size_t s = 1; s <= steps; ++s) {
        const double q = s == steps ? 100.0 : a.step * static_cast<double>(s);
        percentiles.push_back(q);
        thresholds.push_back(percentile(unc, q));
    }
    const Vector rmse = rmse_below_uncertainty(err, unc, thresholds);
    write_csv(a.out, {{"percentile", percentiles}, {"threshold", thresholds}, {"rmse", rmse}});
    out << "points=" << rmse.size() << "\n";
    out << "overall_rmse=" << fmt(rmse.back()) << "\n";
    if (!a.plot.empty()) {
        const CsvTable back = read_csv(a.out);
        PlotSpec spec{"Error below uncertainty", "uncertainty percentile", "RMSE", {}, {}, {}};
        spec.series.push_back({"rmse", back.column("percentile"), back.column("rmse"), "#2ca02c", true});
        write_svg(a.plot, spec);
    }
    return kExitOk;
}

// ---------------------------------------------------------------- toy

struct ToyArgs {
    std::string kind;
    std::string out;
    std::uint64_t seed = 0;
    double mass = 0.2;
    std::size_t grid = 1000;
    std::string prior = "uniform:-10:10";
    std::size_t n_train = 750;
    std::string gap = "-0.25:0.25";
    double noise = 0.0;
    std::size_t members = 10;
    std::size_t epochs = 0;       // 0 keeps the experiment default
    std::size_t flow_epochs = 0;
    std::size_t eval_points = 201;
    double sigma = 0.4;
    std::size_t n_per_class = 500;
    double shift = 8.0;
    std::size_t components = 1;
    std::string covariance = "full";
    double cov_reg = 1e-6;
};

void add_toy(CLI::App& app, ToyArgs& a) {
    auto* c = app.add_subcommand("toy", "Run a self-contained toy experiment and write all artifacts");
    c->add_option("kind", a.kind, "regression | classification")
        ->required()
        ->check(CLI::IsMember({"regression", "classification"}));
    c->add_option("--out", a.out, "Output directory")->required();
    c->add_option("--seed", a.seed, "Run seed");
    c->add_option("--mass", a.mass, "regression: confidence band mass")->check(CLI::Range(1e-9, 1.0 - 1e-9));
    c->add_option("--grid", a.grid, "regression: support grid points")->check(CLI::Range(2, 10000000));
    c->add_option("--prior", a.prior, "regression: uniform:lo:hi output prior");
    c->add_option("--n-train", a.n_train, "regression: training samples")->check(CLI::PositiveNumber);
    c->add_option("--gap", a.gap, "regression: excluded x interval lo:hi");
    c->add_option("--noise", a.noise, "regression: target noise sigma")->check(CLI::NonNegativeNumber);
    c->add_option("--members", a.members, "Ensemble size (0 or 1 disables the baseline)");
    c->add_option("--epochs", a.epochs, "MLP epoch cap (0 = default)");
    c->add_option("--flow-epochs", a.flow_epochs, "regression: flow epoch cap (0 = default)");
    c->add_option("--eval-points", a.eval_points, "regression: evaluation x points")->check(CLI::Range(2, 1000000));
    c->add_option("--sigma", a.sigma, "classification: blob standard deviation")->check(CLI::PositiveNumber);
    c->add_option("--n-per-class", a.n_per_class, "classification: training samples per class")
        ->check(CLI::PositiveNumber);
    c->add_option("--shift", a.shift, "classification: OOD shift along both axes");
    c->add_option("--components", a.components, "classification: mixture components per class")
        ->check(CLI::PositiveNumber);
    c->add_option("--covariance", a.covariance, "classification: full | tied")
        ->check(CLI::IsMember({"full", "tied"}));
    c->add_option("--cov-reg", a.cov_reg, "classification: covariance regularization")
        ->check(CLI::NonNegativeNumber);
}

int toy_regression(const ToyArgs& a, std::ostream& out) {
    ToyRegressionConfig cfg;
    cfg.seed = a.seed;
    cfg.mass = a.mass;
    cfg.grid_points = a.grid;
    const PriorChoice prior = parse_prior(a.prior);
    if (prior.kind != "uniform") throw UsageError("toy regression takes a uniform:lo:hi prior");
    cfg.prior = make_uniform(prior.a, prior.b);
    cfg.data.n_train = a.n_train;
    std::tie(cfg.data.gap_lo, cfg.data.gap_hi) = parse_range(a.gap, "--gap");
    cfg.data.noise_sigma = a.noise;
    cfg.ensemble_members = a.members;
    if (a.epochs > 0) cfg.mlp.max_epochs = cfg.ensemble_mlp.max_epochs = a.epochs;
    if (a.flow_epochs > 0) cfg.flow.max_epochs = a.flow_epochs;
    cfg.eval_points = a.eval_points;

    const fs::path dir = a.out;
    ensure_dir(dir);
    const ToyRegressionResult r = run_toy_regression(cfg);

    write_csv(dir / "train_data.csv", {{"x", r.train.x}, {"y", r.train.y}});
    write_csv(dir / "mlp_loss.csv", {{"epoch", iota_vec(r.mlp.loss_log.size(), 1.0)}, {"loss", r.mlp.loss_log}});
    Vector fe, ft, fv;
    for (const auto& e : r.flow.log) {
        fe.push_back(static_cast<double>(e.epoch));
        ft.push_back(e.train_nll);
        fv.push_back(e.val_nll);
    }
    write_csv(dir / "flow_log.csv", {{"epoch", fe}, {"train_nll", ft}, {"val_nll", fv}});

    const Matrix x = Matrix::column(r.train.x);
    const Matrix preds = mlp_predict(r.mlp.model, x);
    write_matrix_file(dir / "latents.luq",
                      latent_extract(r.mlp.model, r.mlp.model.hidden_layers() - 1, x).values);
    write_matrix_file(dir / "predictions.luq", preds);
    ModelBundle bundle;
    bundle.flow = r.flow.flow;
    bundle.grid = make_grid(cfg.prior.lo, cfg.prior.hi, cfg.grid_points);
    bundle.prior = cfg.prior;
    write_model_file(dir / "model.luqm", bundle);

    write_csv(dir / "scores.csv",
              {{"index", iota_vec(r.eval_x.size())}, {"epistemic_nats", r.epistemic}, {"aleatoric_nats", r.aleatoric}});
    std::vector<CsvColumn> curve{{"x", r.eval_x},
                                 {"truth", r.truth},
                                 {"prediction", r.prediction},
                                 {"lower", r.lower},
                                 {"upper", r.upper},
                                 {"epistemic_nats", r.epistemic},
                                 {"aleatoric_nats", r.aleatoric},
                                 {"in_gap", to_vec(r.in_gap)}};
    if (!r.ensemble_mean.empty()) {
        curve.push_back({"ensemble_mean", r.ensemble_mean});
        curve.push_back({"ensemble_epistemic", r.ensemble_epistemic});
    }
    write_csv(dir / "curve.csv", curve);

    const double nan = std::nan("");
    const bool ens = !r.ensemble_mean.empty();
    const std::vector<std::pair<std::string, double>> metrics{
        {"train_rmse", r.train_rmse},
        {"mean_epistemic_gap", r.mean_epistemic_gap},
        {"mean_epistemic_train", r.mean_epistemic_train},
        {"ensemble_epistemic_gap", ens ? r.ensemble_epistemic_gap : nan},
        {"ensemble_epistemic_train", ens ? r.ensemble_epistemic_train : nan},
        {"band_mass", cfg.mass},
        {"band_coverage", r.band_coverage},
        {"flow_best_epoch", static_cast<double>(r.flow.best_epoch)},
        {"flow_best_val_nll", r.flow.best_val_nll},
        {"mlp_epochs", static_cast<double>(r.mlp.loss_log.size())}};
    std::vector<CsvColumn> mcols;
    for (const auto& [k, v] : metrics) {
        mcols.push_back({k, {v}});
        out << k << "=" << fmt(v) << "\n";
    }
    write_csv(dir / "metrics.csv", mcols);

    // plots are drawn from the CSV just written
    const CsvTable c = read_csv(dir / "curve.csv");
    const Vector cx = c.column("x");
    const auto gap_spans = flagged_spans(cx, c.column("in_gap"));
    PlotSpec pred{"Toy regression: prediction and confidence band", "x", "y", {}, {}, gap_spans};
    pred.bands.push_back({"band (mass " + fmt(cfg.mass) + ")", cx, c.column("lower"), c.column("upper"), "#1f77b4"});
    pred.series.push_back({"f(x)", cx, c.column("truth"), "#333333", false});
    pred.series.push_back({"prediction", cx, c.column("prediction"), "#1f77b4", false});
    if (ens) pred.series.push_back({"ensemble mean", cx, c.column("ensemble_mean"), "#ff7f0e", false});
    write_svg(dir / "prediction.svg", pred);
    PlotSpec epi{"Toy regression: latent-density epistemic uncertainty", "x", "-log p(z) [nats]", {}, {}, gap_spans};
    epi.series.push_back({"epistemic", cx, c.column("epistemic_nats"), "#d62728", false});
    write_svg(dir / "epistemic.svg", epi);
    if (ens) {
        PlotSpec es{"Toy regression: ensemble variance", "x", "variance of member means", {}, {}, gap_spans};
        es.series.push_back({"ensemble", cx, c.column("ensemble_epistemic"), "#ff7f0e", false});
        write_svg(dir / "ensemble_epistemic.svg", es);
    }
    out << "out_dir=" << dir.string() << "\n";
    return kExitOk;
}

int toy_classification(const ToyArgs& a, std::ostream& out) {
    ToyClassificationConfig cfg;
    cfg.seed = a.seed;
    cfg.data.sigma = a.sigma;
    cfg.data.n_per_class = a.n_per_class;
    cfg.ood_shift = a.shift;
    cfg.ensemble_members = a.members;
    if (a.epochs > 0) cfg.mlp.max_epochs = cfg.ensemble_mlp.max_epochs = a.epochs;
    cfg.em.n_components = a.components;
    cfg.em.covariance_mode =
        a.covariance == "tied" ? CovarianceMode::TiedAcrossComponents : CovarianceMode::FullPerComponent;
    cfg.em.cov_reg = a.cov_reg;

    const fs::path dir = a.out;
    ensure_dir(dir);
    const ToyClassificationResult r = run_toy_classification(cfg);

    auto column_of = [](const Matrix& m, std::size_t c) {
        Vector v(m.rows());
        for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
        return v;
    };
    write_csv(dir / "train_data.csv",
              {{"x0", column_of(r.train.x, 0)}, {"x1", column_of(r.train.x, 1)}, {"label", to_vec(r.train.labels)}});
    write_csv(dir / "mlp_loss.csv", {{"epoch", iota_vec(r.mlp.loss_log.size(), 1.0)}, {"loss", r.mlp.loss_log}});

    const std::size_t latent_layer = r.mlp.model.hidden_layers() - 1;
    write_matrix_file(dir / "latents.luq", latent_extract(r.mlp.model, latent_layer, r.train.x).values);
    ModelBundle bundle;
    bundle.gmm = r.density;
    bundle.prior = r.prior;
    write_model_file(dir / "model.luqm", bundle);

    const std::size_t n_test = r.test_scores.epistemic.size();
    const std::size_t n_ood = r.ood_scores.epistemic.size();
    Vector correct(n_test), is_ood(n_test + n_ood, 0.0), epi, ale, ens;
    for (std::size_t i = 0; i < n_test; ++i) correct[i] = r.test_predictions[i] == r.test.labels[i] ? 1.0 : 0.0;
    for (std::size_t i = n_test; i < n_test + n_ood; ++i) is_ood[i] = 1.0;
    epi = r.test_scores.epistemic;
    epi.insert(epi.end(), r.ood_scores.epistemic.begin(), r.ood_scores.epistemic.end());
    ale = r.test_scores.aleatoric;
    ale.insert(ale.end(), r.ood_scores.aleatoric.begin(), r.ood_scores.aleatoric.end());
    std::vector<CsvColumn> scores{{"index", iota_vec(n_test + n_ood)},
                                  {"epistemic_nats", epi},
                                  {"aleatoric_nats", ale},
                                  {"label", is_ood}};
    if (!r.ensemble_test_epistemic.empty()) {
        ens = r.ensemble_test_epistemic;
        ens.insert(ens.end(), r.ensemble_ood_epistemic.begin(), r.ensemble_ood_epistemic.end());
        scores.push_back({"ensemble_epistemic", ens});
    }
    write_csv(dir / "scores.csv", scores);
    write_csv(dir / "test_scores.csv", {{"index", iota_vec(n_test)},
                                        {"epistemic_nats", r.test_scores.epistemic},
                                        {"aleatoric_nats", r.test_scores.aleatoric},
                                        {"correct", correct}});

    Vector sig, sweep_auroc, sweep_median, sweep_ens;
    for (const auto& p : r.noise_sweep) {
        sig.push_back(p.sigma);
        sweep_auroc.push_back(p.auroc);
        sweep_median.push_back(p.median_epistemic);
        sweep_ens.push_back(p.ensemble_auroc);
    }
    write_csv(dir / "noise_sweep.csv",
              {{"sigma", sig}, {"auroc", sweep_auroc}, {"median_epistemic", sweep_median}, {"ensemble_auroc", sweep_ens}});
    write_csv(dir / "calibration.csv", {{"percentile", r.calibration.percentiles},
                                        {"threshold", r.calibration.thresholds},
                                        {"accuracy", r.calibration.accuracy}});

    const double nan = std::nan("");
    const bool has_ens = !r.ensemble_test_epistemic.empty();
    const std::vector<std::pair<std::string, double>> metrics{
        {"accuracy", r.accuracy},
        {"ood_auroc", r.ood_auroc},
        {"ood_ap", r.ood_ap},
        {"ood_fpr95", r.ood_fpr95},
        {"ensemble_ood_auroc", has_ens ? r.ensemble_ood_auroc : nan},
        {"median_epistemic_clean", r.median_epistemic_clean},
        {"lowest_decile_accuracy", r.lowest_decile_accuracy},
        {"mlp_epochs", static_cast<double>(r.mlp.loss_log.size())}};
    std::vector<CsvColumn> mcols;
    for (const auto& [k, v] : metrics) {
        mcols.push_back({k, {v}});
        out << k << "=" << fmt(v) << "\n";
    }
    write_csv(dir / "metrics.csv", mcols);

    const CsvTable sw = read_csv(dir / "noise_sweep.csv");
    PlotSpec sweep{"Toy classification: OOD detection under input noise", "noise sigma", "AUROC", {}, {}, {}};
    sweep.series.push_back({"latent density", sw.column("sigma"), sw.column("auroc"), "#d62728", true});
    if (has_ens) sweep.series.push_back({"ensemble", sw.column("sigma"), sw.column("ensemble_auroc"), "#ff7f0e", true});
    write_svg(dir / "noise_sweep.svg", sweep);
    const CsvTable cal = read_csv(dir / "calibration.csv");
    PlotSpec calib{"Toy classification: accuracy below aleatoric percentile", "aleatoric percentile", "accuracy",
                   {}, {}, {}};
    calib.series.push_back({"accuracy", cal.column("percentile"), cal.column("accuracy"), "#1f77b4", true});
    write_svg(dir / "calibration.svg", calib);
    out << "out_dir=" << dir.string() << "\n";
    return kExitOk;
}

int cmd_toy(const ToyArgs& a, std::ostream& out) {
    return a.kind == "regression" ? toy_regression(a, out) : toy_classification(a, out);
}

// ---------------------------------------------------------------- pca

struct PcaArgs {
    std::string features, out, eigen_csv;
    std::size_t dim = 0;
    bool whiten = false;
};

void add_pca(CLI::App& app, PcaArgs& a) {
    auto* c = app.add_subcommand("pca", "Reduce latent dimensionality with PCA");
    c->add_option("--features", a.features, "Latents (matrix file or CSV)")->required();
    c->add_option("--dim", a.dim, "Output dimension")->required()->check(CLI::PositiveNumber);
    c->add_flag("--whiten", a.whiten, "Scale coordinates to unit variance");
    c->add_option("--out", a.out, "Reduced matrix file to write")->required();
    c->add_option("--eigen-csv", a.eigen_csv, "Optional CSV of the kept eigenvalues");
}

int cmd_pca(const PcaArgs& a, std::ostream& out) {
    const Matrix x = read_features(a.features);
    if (a.dim > std::min(x.rows(), x.cols())) {
        fail(Errc::DimMismatch, a.features + ": cannot keep " + std::to_string(a.dim) + " dimensions of a " +
                                    std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + " matrix");
    }
    const PcaModel p = pca_fit(x, a.dim, {a.whiten});
    write_matrix_file(a.out, pca_transform(p, x));
    double total = 0.0;
    for (double v : p.eigenvalues) total += v;
    out << "input_dim=" << p.input_dim << "\nout_dim=" << p.out_dim << "\nkept_variance=" << fmt(total) << "\n";
    if (!a.eigen_csv.empty()) {
        write_csv(a.eigen_csv, {{"component", iota_vec(p.out_dim)}, {"eigenvalue", p.eigenvalues}});
    }
    return kExitOk;
}

// Long option names of a subcommand, usable as config keys.
std::set<std::string> config_keys(CLI::App* sub) {
    std::set<std::string> keys;
    for (const CLI::Option* opt : sub->get_options()) {
        for (const auto& name : opt->get_lnames())
            if (name != "help" && name != "config") keys.insert(name);
    }
    return keys;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent-density uncertainty toolkit", "luq"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    FitArgs fit;
    ScoreArgs score;
    EvalArgs eval;
    ToyArgs toy;
    PcaArgs pca;
    add_fit(app, fit);
    add_score(app, score);
    add_eval(app, eval);
    add_toy(app, toy);
    add_pca(app, pca);
    std::string config_path;
    for (CLI::App* sub : app.get_subcommands({})) {
        sub->add_option("--config", config_path, "key = value file; command-line flags override it");
    }

    try {
        // Config values enter as leading --key=value arguments so that any
        // flag given on the command line (parsed later) wins.
        std::vector<std::string> argv = args;
        for (std::size_t i = 0; i < argv.size(); ++i) {
            std::string path;
            if (argv[i] == "--config" && i + 1 < argv.size()) {
                path = argv[i + 1];
            } else if (argv[i].starts_with("--config=")) {
                path = argv[i].substr(9);
            }
            if (path.empty() || argv.empty()) continue;
            CLI::App* sub = nullptr;
            try {
                sub = app.get_subcommand(argv[0]);
            } catch (const CLI::OptionNotFound&) {
                break;
            }
            const auto entries = read_config(path, config_keys(sub));
            std::vector<std::string> injected;
            for (const auto& e : entries) injected.push_back("--" + e.key + "=" + e.value);
            argv.insert(argv.begin() + 1, injected.begin(), injected.end());
            break;
        }
        std::vector<std::string> reversed(argv.rbegin(), argv.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == Errc::Config ? kExitUsage : kExitData;
    }

    try {
        if (app.got_subcommand("fit")) return cmd_fit(fit, out);
        if (app.got_subcommand("score")) return cmd_score(score, out);
        if (app.got_subcommand("eval")) return cmd_eval(eval, out);
        if (app.got_subcommand("toy")) return cmd_toy(toy, out);
        if (app.got_subcommand("pca")) return cmd_pca(pca, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace luq

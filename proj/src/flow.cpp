#include "luq/flow.hpp"

#include "luq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace luq {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Matrix subnet_input(const CouplingLayer& layer, const Matrix& u, const Matrix& embed) {
    const std::size_t p1 = layer.part1.size();
    Matrix in(u.rows(), p1 + embed.cols());
    for (std::size_t r = 0; r < u.rows(); ++r) {
        auto dst = in.row(r);
        const auto src = u.row(r);
        for (std::size_t j = 0; j < p1; ++j) dst[j] = src[layer.part1[j]];
        const auto e = embed.row(r);
        std::copy(e.begin(), e.end(), dst.begin() + static_cast<std::ptrdiff_t>(p1));
    }
    return in;
}

void check_batch(const ConditionalFlow& f, const Matrix& z, const Matrix& c) {
    if (z.cols() != f.dim) {
        fail(Errc::DimMismatch, "flow: input has " + std::to_string(z.cols()) + " columns, flow dim is " +
                                    std::to_string(f.dim));
    }
    if (c.cols() != f.cond_dim) {
        fail(Errc::DimMismatch, "flow: condition has " + std::to_string(c.cols()) +
                                    " columns, flow expects " + std::to_string(f.cond_dim));
    }
    if (z.rows() != c.rows()) fail(Errc::DimMismatch, "flow: input/condition row counts differ");
}

// Applies one coupling layer to a batch in place and adds Σ s̃ to log_det.
void layer_forward(const CouplingLayer& layer, Matrix& u, const Matrix& c, Vector& log_det,
                   CouplingTape* tape) {
    const std::size_t batch = u.rows();
    const std::size_t p2 = layer.part2.size();
    const double alpha = layer.scale_clamp;

    MlpTape cond_tape, scale_tape, translate_tape;
    const Matrix embed = mlp_forward(layer.cond_net, c, tape ? &cond_tape : nullptr);
    const Matrix in = subnet_input(layer, u, embed);
    const Matrix s_raw = mlp_forward(layer.scale_net, in, tape ? &scale_tape : nullptr);
    const Matrix t = mlp_forward(layer.translate_net, in, tape ? &translate_tape : nullptr);

    Matrix s_tilde(batch, p2);
    Matrix shifted(batch, p2);
    if (tape) tape->u_in = u;
    for (std::size_t r = 0; r < batch; ++r) {
        auto row = u.row(r);
        double ld = 0.0;
        for (std::size_t j = 0; j < p2; ++j) {
            const double st = alpha * std::tanh(s_raw(r, j) / alpha);
            const double sh = row[layer.part2[j]] + t(r, j);
            s_tilde(r, j) = st;
            shifted(r, j) = sh;
            row[layer.part2[j]] = sh * std::exp(st);
            ld += st;
        }
        log_det[r] += ld;
    }
    if (tape) {
        tape->s_raw = s_raw;
        tape->s_tilde = std::move(s_tilde);
        tape->shifted = std::move(shifted);
        tape->cond_tape = std::move(cond_tape);
        tape->scale_tape = std::move(scale_tape);
        tape->translate_tape = std::move(translate_tape);
    }
}

void layer_inverse(const CouplingLayer& layer, Matrix& x, const Matrix& c, Vector& log_det) {
    const std::size_t p2 = layer.part2.size();
    const double alpha = layer.scale_clamp;
    const Matrix embed = mlp_forward(layer.cond_net, c);
    // part1 is untouched by the forward map, so the subnets see the same input
    const Matrix in = subnet_input(layer, x, embed);
    const Matrix s_raw = mlp_forward(layer.scale_net, in);
    const Matrix t = mlp_forward(layer.translate_net, in);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        double ld = 0.0;
        for (std::size_t j = 0; j < p2; ++j) {
            const double st = alpha * std::tanh(s_raw(r, j) / alpha);
            row[layer.part2[j]] = row[layer.part2[j]] * std::exp(-st) - t(r, j);
            ld -= st;
        }
        log_det[r] += ld;
    }
}

double standardization_log_det(const ConditionalFlow& f) {
    double s = 0.0;
    for (double sc : f.input_scale) s -= std::log(sc);
    return s;
}

Matrix as_row(std::span<const double> v) { return Matrix(1, v.size(), Vector(v.begin(), v.end())); }

Vector row_vector(const Matrix& m) { return Vector(m.data().begin(), m.data().end()); }

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> coupling_partition(std::size_t dim,
                                                                                  std::size_t layer_index) {
    std::vector<std::size_t> part1, part2;
    if (dim == 1) {
        part2.push_back(0);
        return {part1, part2};
    }
    for (std::size_t i = 0; i < dim; ++i) {
        if (i % 2 == layer_index % 2) {
            part2.push_back(i);
        } else {
            part1.push_back(i);
        }
    }
    return {part1, part2};
}

ConditionalFlow make_flow(const FlowArchitecture& arch, std::uint64_t seed) {
    if (arch.dim == 0) fail(Errc::InvalidArgument, "make_flow: dim must be positive");
    if (arch.n_layers == 0) fail(Errc::InvalidArgument, "make_flow: at least one coupling layer required");
    if (!(arch.scale_clamp > 0.0)) fail(Errc::InvalidArgument, "make_flow: scale_clamp must be positive");
    std::mt19937_64 rng(seed);
    ConditionalFlow f;
    f.dim = arch.dim;
    f.cond_dim = arch.cond_dim;
    f.input_shift.assign(arch.dim, 0.0);
    f.input_scale.assign(arch.dim, 1.0);
    for (std::size_t l = 0; l < arch.n_layers; ++l) {
        CouplingLayer layer;
        layer.dim = arch.dim;
        std::tie(layer.part1, layer.part2) = coupling_partition(arch.dim, l);
        layer.scale_clamp = arch.scale_clamp;

        std::vector<std::size_t> sub_dims{layer.part1.size() + arch.cond_embed};
        for (std::size_t h = 0; h < arch.hidden_layers; ++h) sub_dims.push_back(arch.hidden_width);
        sub_dims.push_back(layer.part2.size());
        layer.scale_net = Mlp(sub_dims);
        layer.translate_net = Mlp(sub_dims);
        layer.cond_net = Mlp({arch.cond_dim, arch.cond_hidden, arch.cond_embed});

        init_glorot_uniform(layer.cond_net, rng);
        init_glorot_uniform(layer.scale_net, rng, /*zero_last=*/true);
        init_glorot_uniform(layer.translate_net, rng, /*zero_last=*/true);
        f.layers.push_back(std::move(layer));
    }
    return f;
}

std::vector<std::span<double>> parameter_blocks(ConditionalFlow& f) {
    std::vector<std::span<double>> out;
    for (auto& layer : f.layers) {
        append_blocks(out, layer.scale_net);
        append_blocks(out, layer.translate_net);
        append_blocks(out, layer.cond_net);
    }
    return out;
}

std::vector<std::span<const double>> parameter_blocks(const ConditionalFlow& f) {
    std::vector<std::span<const double>> out;
    for (const auto& layer : f.layers) {
        append_blocks(out, layer.scale_net);
        append_blocks(out, layer.translate_net);
        append_blocks(out, layer.cond_net);
    }
    return out;
}

void set_zero(ConditionalFlow& f) {
    for (auto block : parameter_blocks(f)) std::fill(block.begin(), block.end(), 0.0);
}

CouplingResult coupling_forward(const CouplingLayer& layer, std::span<const double> u_in,
                                std::span<const double> c) {
    if (u_in.size() != layer.dim) fail(Errc::DimMismatch, "coupling_forward: input length mismatch");
    Matrix u = as_row(u_in);
    Vector ld(1, 0.0);
    layer_forward(layer, u, as_row(c), ld, nullptr);
    return {row_vector(u), ld[0]};
}

CouplingResult coupling_inverse(const CouplingLayer& layer, std::span<const double> u_out,
                                std::span<const double> c) {
    if (u_out.size() != layer.dim) fail(Errc::DimMismatch, "coupling_inverse: input length mismatch");
    Matrix x = as_row(u_out);
    Vector ld(1, 0.0);
    layer_inverse(layer, x, as_row(c), ld);
    return {row_vector(x), ld[0]};
}

FlowTape flow_forward_batch(const ConditionalFlow& f, const Matrix& z, const Matrix& c) {
    check_batch(f, z, c);
    FlowTape tape;
    tape.base = z;
    tape.log_det.assign(z.rows(), standardization_log_det(f));
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = tape.base.row(r);
        for (std::size_t j = 0; j < f.dim; ++j) row[j] = (row[j] - f.input_shift[j]) / f.input_scale[j];
    }
    tape.layers.resize(f.layers.size());
    for (std::size_t l = 0; l < f.layers.size(); ++l) {
        layer_forward(f.layers[l], tape.base, c, tape.log_det, &tape.layers[l]);
    }
    return tape;
}

CouplingResult flow_forward(const ConditionalFlow& f, std::span<const double> z, std::span<const double> c) {
    Matrix x = as_row(z);
    const Matrix cm = as_row(c);
    check_batch(f, x, cm);
    Vector ld(1, standardization_log_det(f));
    for (std::size_t j = 0; j < f.dim; ++j) x(0, j) = (x(0, j) - f.input_shift[j]) / f.input_scale[j];
    for (const auto& layer : f.layers) layer_forward(layer, x, cm, ld, nullptr);
    return {row_vector(x), ld[0]};
}

CouplingResult flow_inverse(const ConditionalFlow& f, std::span<const double> x, std::span<const double> c) {
    Matrix u = as_row(x);
    const Matrix cm = as_row(c);
    check_batch(f, u, cm);
    Vector ld(1, 0.0);
    for (std::size_t l = f.layers.size(); l-- > 0;) layer_inverse(f.layers[l], u, cm, ld);
    for (std::size_t j = 0; j < f.dim; ++j) u(0, j) = u(0, j) * f.input_scale[j] + f.input_shift[j];
    ld[0] -= standardization_log_det(f);
    return {row_vector(u), ld[0]};
}

Vector flow_log_prob(const ConditionalFlow& f, const Matrix& z, const Matrix& c) {
    check_batch(f, z, c);
    Matrix x = z;
    Vector ld(z.rows(), standardization_log_det(f));
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t j = 0; j < f.dim; ++j) row[j] = (row[j] - f.input_shift[j]) / f.input_scale[j];
    }
    for (const auto& layer : f.layers) layer_forward(layer, x, c, ld, nullptr);
    Vector out(z.rows());
    const double norm = -0.5 * static_cast<double>(f.dim) * kLog2Pi;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double sq = 0.0;
        for (double v : x.row(r)) sq += v * v;
        out[r] = norm - 0.5 * sq + ld[r];
    }
    return out;
}

double flow_log_prob(const ConditionalFlow& f, std::span<const double> z, std::span<const double> c) {
    return flow_log_prob(f, as_row(z), as_row(c))[0];
}

double mean_nll(const ConditionalFlow& f, const Matrix& z, const Matrix& c) {
    const Vector lp = flow_log_prob(f, z, c);
    double s = 0.0;
    for (double v : lp) s -= v;
    return s / static_cast<double>(lp.size());
}

FlowGradients flow_gradients(const ConditionalFlow& f, const Matrix& z, const Matrix& c) {
    if (z.rows() == 0) fail(Errc::EmptyInput, "flow_gradients: empty batch");
    const FlowTape tape = flow_forward_batch(f, z, c);
    const std::size_t batch = z.rows();
    const double inv_b = 1.0 / static_cast<double>(batch);

    FlowGradients out;
    out.grads = f;
    set_zero(out.grads);

    double nll = 0.0;
    const double norm = 0.5 * static_cast<double>(f.dim) * kLog2Pi;
    Matrix g = tape.base;  // ∂(½‖x‖²)/∂x, scaled by 1/B below
    for (std::size_t r = 0; r < batch; ++r) {
        double sq = 0.0;
        for (double& v : g.row(r)) {
            sq += v * v;
            v *= inv_b;
        }
        nll += norm + 0.5 * sq - tape.log_det[r];
    }
    out.mean_nll = nll * inv_b;
    const double g_logdet = -inv_b;

    for (std::size_t l = f.layers.size(); l-- > 0;) {
        const CouplingLayer& layer = f.layers[l];
        const CouplingTape& lt = tape.layers[l];
        CouplingLayer& gl = out.grads.layers[l];
        const std::size_t p1 = layer.part1.size();
        const std::size_t p2 = layer.part2.size();
        const double alpha = layer.scale_clamp;

        Matrix g_sraw(batch, p2);
        Matrix g_t(batch, p2);
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t j = 0; j < p2; ++j) {
                const double es = std::exp(lt.s_tilde(r, j));
                const double go = g(r, layer.part2[j]);
                g_t(r, j) = go * es;
                const double g_st = go * lt.shifted(r, j) * es + g_logdet;
                const double th = std::tanh(lt.s_raw(r, j) / alpha);
                g_sraw(r, j) = g_st * (1.0 - th * th);
            }
        }
        const Matrix g_in_s = mlp_backward(layer.scale_net, lt.scale_tape, g_sraw, gl.scale_net);
        const Matrix g_in_t = mlp_backward(layer.translate_net, lt.translate_tape, g_t, gl.translate_net);

        const std::size_t embed = layer.cond_net.output_dim();
        Matrix g_embed(batch, embed);
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t j = 0; j < p1; ++j) g(r, layer.part1[j]) += g_in_s(r, j) + g_in_t(r, j);
            for (std::size_t j = 0; j < p2; ++j) g(r, layer.part2[j]) = g_t(r, j);
            for (std::size_t e = 0; e < embed; ++e) g_embed(r, e) = g_in_s(r, p1 + e) + g_in_t(r, p1 + e);
        }
        mlp_backward(layer.cond_net, lt.cond_tape, g_embed, gl.cond_net);
    }
    return out;
}

FlowTrainResult flow_train(const Matrix& z, const Matrix& c, const FlowArchitecture& arch,
                           const FlowTrainConfig& cfg) {
    if (z.rows() < 10) fail(Errc::TooFewSamples, "flow_train needs at least 10 rows");
    if (z.rows() != c.rows()) fail(Errc::DimMismatch, "flow_train: input/condition row counts differ");
    if (!(cfg.learning_rate > 0.0)) fail(Errc::InvalidArgument, "flow_train: learning_rate must be positive");
    if (cfg.patience == 0) fail(Errc::InvalidArgument, "flow_train: patience must be at least 1");
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
        fail(Errc::InvalidArgument, "flow_train: val_fraction must lie in (0, 1)");
    }
    FlowArchitecture a = arch;
    a.dim = z.cols();
    a.cond_dim = c.cols();

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(z.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::round(cfg.val_fraction * static_cast<double>(z.rows()))), 1, z.rows() - 1);
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    const Matrix z_train = z.select_rows(train_idx), c_train = c.select_rows(train_idx);
    const Matrix z_val = z.select_rows(val_idx), c_val = c.select_rows(val_idx);

    ConditionalFlow flow = make_flow(a, rng());
    if (cfg.standardize) {
        const Vector mean = column_mean(z_train);
        for (std::size_t j = 0; j < a.dim; ++j) {
            double var = 0.0;
            for (std::size_t r = 0; r < z_train.rows(); ++r) {
                const double d = z_train(r, j) - mean[j];
                var += d * d;
            }
            var /= static_cast<double>(std::max<std::size_t>(z_train.rows() - 1, 1));
            const double sd = std::sqrt(var);
            flow.input_shift[j] = mean[j];
            flow.input_scale[j] = sd > 1e-8 ? sd : 1.0;
        }
    }

    FlowTrainResult result;
    auto record = [&](std::size_t epoch, double train_nll) {
        FlowEpochLog entry{epoch, train_nll, mean_nll(flow, z_val, c_val)};
        if (!std::isfinite(entry.train_nll) || !std::isfinite(entry.val_nll)) {
            fail(Errc::Diverged, "flow_train: NLL became non-finite at epoch " + std::to_string(epoch) +
                                     "; lower the learning rate");
        }
        result.log.push_back(entry);
        return entry.val_nll;
    };
    result.best_val_nll = record(0, mean_nll(flow, z_train, c_train));
    result.flow = flow;

    auto params = parameter_blocks(flow);
    Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay}, params);
    const std::size_t n_train = z_train.rows();
    const std::size_t batch = cfg.batch_size == 0 ? n_train : std::min(cfg.batch_size, n_train);
    std::vector<std::size_t> perm(n_train);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    std::size_t bad_epochs = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (batch < n_train) std::shuffle(perm.begin(), perm.end(), rng);
        double train_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += batch) {
            const std::size_t stop = std::min(start + batch, n_train);
            const std::span<const std::size_t> idx(perm.data() + start, stop - start);
            const FlowGradients fg = batch == n_train ? flow_gradients(flow, z_train, c_train)
                                                      : flow_gradients(flow, z_train.select_rows(idx),
                                                                       c_train.select_rows(idx));
            if (!std::isfinite(fg.mean_nll)) {
                fail(Errc::Diverged, "flow_train: NLL became non-finite at epoch " + std::to_string(epoch) +
                                         "; lower the learning rate");
            }
            train_sum += fg.mean_nll * static_cast<double>(stop - start);
            adam.step(params, parameter_blocks(fg.grads));
        }
        const double val = record(epoch, train_sum / static_cast<double>(n_train));
        if (val < result.best_val_nll) {
            result.best_val_nll = val;
            result.best_epoch = epoch;
            result.flow = flow;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

}  // namespace luq

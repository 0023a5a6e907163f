#include "luq/nn.hpp"

#include "luq/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace luq {

Mlp::Mlp(std::vector<std::size_t> dims) : layer_dims(std::move(dims)) {
    if (layer_dims.size() < 2) fail(Errc::InvalidArgument, "Mlp needs at least input and output dims");
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        weights.emplace_back(layer_dims[l], layer_dims[l + 1]);
        biases.emplace_back(layer_dims[l + 1], 0.0);
    }
}

std::size_t Mlp::parameter_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].data().size() + biases[l].size();
    return n;
}

std::vector<std::span<double>> Mlp::parameter_blocks() {
    std::vector<std::span<double>> out;
    append_blocks(out, *this);
    return out;
}

std::vector<std::span<const double>> Mlp::parameter_blocks() const {
    std::vector<std::span<const double>> out;
    append_blocks(out, *this);
    return out;
}

void append_blocks(std::vector<std::span<double>>& out, Mlp& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        out.emplace_back(net.weights[l].data());
        out.emplace_back(net.biases[l]);
    }
}

void append_blocks(std::vector<std::span<const double>>& out, const Mlp& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        out.emplace_back(net.weights[l].data());
        out.emplace_back(net.biases[l]);
    }
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;
using ConstRow = Eigen::Map<const Eigen::RowVectorXd>;
using MutRow = Eigen::Map<Eigen::RowVectorXd>;

ConstMap view(const Matrix& m) { return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }
MutMap view(Matrix& m) { return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }

}  // namespace

Matrix mlp_forward(const Mlp& net, const Matrix& input, MlpTape* tape) {
    if (input.cols() != net.input_dim()) {
        fail(Errc::DimMismatch, "mlp_forward: input has " + std::to_string(input.cols()) +
                                    " columns, network expects " + std::to_string(net.input_dim()));
    }
    if (tape) {
        tape->activations.clear();
        tape->activations.reserve(net.depth() + 1);
        tape->activations.push_back(input);
    }
    Matrix current = input;
    const std::size_t batch = input.rows();
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const Matrix& w = net.weights[l];
        const Vector& b = net.biases[l];
        Matrix next(batch, w.cols());
        auto y = view(next);
        if (w.rows() > 0) y.noalias() = view(current) * view(w);
        y.rowwise() += ConstRow(b.data(), static_cast<Eigen::Index>(b.size()));
        if (l + 1 < net.depth()) y = y.cwiseMax(0.0);
        if (tape) tape->activations.push_back(next);
        current = std::move(next);
    }
    return current;
}

Vector mlp_forward(const Mlp& net, std::span<const double> input) {
    const Matrix out = mlp_forward(net, Matrix(1, input.size(), Vector(input.begin(), input.end())));
    return Vector(out.data().begin(), out.data().end());
}

Matrix mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_output, Mlp& grads) {
    const std::size_t depth = net.depth();
    if (tape.activations.size() != depth + 1) fail(Errc::InvalidArgument, "mlp_backward: tape/net mismatch");
    const std::size_t batch = grad_output.rows();
    Matrix delta = grad_output;  // gradient w.r.t. pre-activation of layer l
    for (std::size_t li = depth; li-- > 0;) {
        const Matrix& w = net.weights[li];
        const Matrix& in = tape.activations[li];
        Vector& gb = grads.biases[li];
        const auto d = view(delta);
        // A plain row loop: Eigen's column reduction sums vectorized and
        // peeled columns in different orders, depending on where gb sits.
        for (std::size_t r = 0; r < batch; ++r) {
            const auto row = delta.row(r);
            for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += row[j];
        }
        Matrix prev(batch, w.rows());
        if (w.rows() > 0) {
            view(grads.weights[li]).noalias() += view(in).transpose() * d;
            auto p = view(prev);
            p.noalias() = d * view(w).transpose();
            if (li > 0) p = p.cwiseProduct((view(in).array() > 0.0).cast<double>().matrix());
        }
        delta = std::move(prev);
    }
    return delta;
}

void init_glorot_uniform(Mlp& net, std::mt19937_64& rng, bool zero_last) {
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix& w = net.weights[l];
        std::fill(net.biases[l].begin(), net.biases[l].end(), 0.0);
        if (zero_last && l + 1 == net.depth()) {
            std::fill(w.data().begin(), w.data().end(), 0.0);
            continue;
        }
        const double fan = static_cast<double>(w.rows() + w.cols());
        const double limit = fan > 0 ? std::sqrt(6.0 / fan) : 0.0;
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& v : w.data()) v = dist(rng);
    }
}

void set_zero(Mlp& net) {
    for (auto block : net.parameter_blocks()) std::fill(block.begin(), block.end(), 0.0);
}

Adam::Adam(AdamConfig cfg, std::span<const std::span<double>> params) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) fail(Errc::InvalidArgument, "Adam: learning rate must be positive");
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
}

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) fail(Errc::DimMismatch, "Adam: params/grads block count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step_size = cfg_.learning_rate / bc1;
    const double decay = cfg_.learning_rate * cfg_.weight_decay;
    std::size_t offset = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        const auto p = params[b];
        const auto g = grads[b];
        if (p.size() != g.size()) fail(Errc::DimMismatch, "Adam: block size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            double& m = m_[offset + i];
            double& v = v_[offset + i];
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g[i];
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double denom = std::sqrt(v / bc2) + cfg_.epsilon;
            p[i] -= step_size * m / denom + decay * p[i];
        }
        offset += p.size();
    }
}

}  // namespace luq

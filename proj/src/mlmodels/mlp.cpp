#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedmerge/common.hpp"
#include "fedmerge/mlmodels.hpp"

namespace fedmerge {

namespace {

std::vector<std::size_t> layer_offsets(const std::vector<std::size_t>& layers)
{
    if (layers.size() < 2 || layers.back() != 1) {
        throw ValidationError("MLP layers must be {input, hidden..., 1}");
    }
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        if (layers[l] == 0) {
            throw ValidationError("MLP layer width must be positive");
        }
        offsets.push_back(off);
        off += layers[l + 1] * layers[l] + layers[l + 1];
    }
    offsets.push_back(off);
    return offsets;
}

using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

MlpNetwork::MlpNetwork(std::vector<std::size_t> layers, std::uint64_t seed)
    : layers_(std::move(layers)), offsets_(layer_offsets(layers_)), params_(offsets_.back(), 0.0)
{
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        const auto fan_in = static_cast<double>(layers_[l]);
        std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
        const std::size_t count = layers_[l] * layers_[l + 1];
        for (std::size_t i = 0; i < count; ++i) {
            params_[offsets_[l] + i] = init(rng);
        }
    }
}

MlpNetwork MlpNetwork::from_parameters(std::vector<std::size_t> layers, std::vector<double> params)
{
    MlpNetwork net;
    net.offsets_ = layer_offsets(layers);
    if (params.size() != net.offsets_.back()) {
        throw ValidationError("MLP parameter count does not match its layers");
    }
    net.layers_ = std::move(layers);
    net.params_ = std::move(params);
    return net;
}

std::pair<std::size_t, std::size_t> MlpNetwork::weight_shape(std::size_t layer) const
{
    return {layers_.at(layer + 1), layers_.at(layer)};
}

Eigen::VectorXd MlpNetwork::forward(const Eigen::MatrixXd& x) const
{
    if (static_cast<std::size_t>(x.rows()) != layers_.front()) {
        throw ValidationError("MLP input has the wrong dimension");
    }
    Eigen::MatrixXd a = x;
    const std::size_t n_layers = layers_.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto out = static_cast<Eigen::Index>(layers_[l + 1]);
        const auto in = static_cast<Eigen::Index>(layers_[l]);
        ConstMat w(params_.data() + offsets_[l], out, in);
        ConstVec b(params_.data() + offsets_[l] + out * in, out);
        Eigen::MatrixXd z = w * a;
        z.colwise() += b;
        if (l + 1 < n_layers) {
            a = z.cwiseMax(0.0);
        } else {
            a = std::move(z);
        }
    }
    return a.row(0).transpose();
}

double MlpNetwork::loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const
{
    return (forward(x) - y).squaredNorm() / static_cast<double>(y.size());
}

double MlpNetwork::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<double> grad) const
{
    if (grad.size() != params_.size()) {
        throw ValidationError("gradient buffer has the wrong size");
    }
    const std::size_t n_layers = layers_.size() - 1;
    const auto batch = static_cast<double>(x.cols());

    // acts[l] is the input to layer l; pre[l] its pre-activation output.
    std::vector<Eigen::MatrixXd> acts(n_layers);
    std::vector<Eigen::MatrixXd> pre(n_layers);
    acts[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto out = static_cast<Eigen::Index>(layers_[l + 1]);
        const auto in = static_cast<Eigen::Index>(layers_[l]);
        ConstMat w(params_.data() + offsets_[l], out, in);
        ConstVec b(params_.data() + offsets_[l] + out * in, out);
        pre[l] = w * acts[l];
        pre[l].colwise() += b;
        if (l + 1 < n_layers) {
            acts[l + 1] = pre[l].cwiseMax(0.0);
        }
    }
    const Eigen::RowVectorXd residual = pre.back().row(0) - y.transpose();
    const double loss = residual.squaredNorm() / batch;

    Eigen::MatrixXd delta = (2.0 / batch) * residual;
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto out = static_cast<Eigen::Index>(layers_[l + 1]);
        const auto in = static_cast<Eigen::Index>(layers_[l]);
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], out, in);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + out * in, out);
        gw.noalias() = delta * acts[l].transpose();
        gb = delta.rowwise().sum();
        if (l > 0) {
            ConstMat w(params_.data() + offsets_[l], out, in);
            Eigen::MatrixXd back = w.transpose() * delta;
            delta = back.array() * (pre[l - 1].array() > 0.0).cast<double>();
        }
    }
    return loss;
}

Adam::Adam(std::size_t n, AdamParams params) : p_(params), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads)
{
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ValidationError("Adam state size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = p_.beta1 * m_[i] + (1.0 - p_.beta1) * grads[i];
        v_[i] = p_.beta2 * v_[i] + (1.0 - p_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= p_.lr * m_hat / (std::sqrt(v_hat) + p_.eps);
    }
}

FitResult fit_mlp(const TrainingSet& ts, const MlpParams& params, std::uint64_t seed)
{
    if (ts.empty()) {
        throw ValidationError("MLP fit needs at least 1 point");
    }
    if (params.hidden.empty() || params.batch == 0 || params.epochs == 0) {
        throw ValidationError("invalid MLP parameters");
    }
    const auto n = static_cast<Eigen::Index>(ts.size());
    const auto d = static_cast<Eigen::Index>(ts.dim());

    MlpModel m;
    m.x_mean.assign(d, 0.0);
    m.x_scale.assign(d, 1.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            s += ts.feature(i, j);
        }
        m.x_mean[j] = s / n;
        double v = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            v += (ts.feature(i, j) - m.x_mean[j]) * (ts.feature(i, j) - m.x_mean[j]);
        }
        const double sd = std::sqrt(v / n);
        m.x_scale[j] = sd > 0.0 ? sd : 1.0;
    }
    const auto& t = ts.targets();
    m.y_mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
    double vy = 0.0;
    for (double v : t) {
        vy += (v - m.y_mean) * (v - m.y_mean);
    }
    m.y_scale = std::sqrt(vy / n) > 0.0 ? std::sqrt(vy / n) : 1.0;

    Eigen::MatrixXd x(d, n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            x(j, i) = (ts.feature(i, j) - m.x_mean[j]) / m.x_scale[j];
        }
        y(i) = (t[i] - m.y_mean) / m.y_scale;
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw ValidationError("non-finite training data");
    }

    std::vector<std::size_t> layers;
    layers.push_back(static_cast<std::size_t>(d));
    layers.insert(layers.end(), params.hidden.begin(), params.hidden.end());
    layers.push_back(1);
    std::mt19937_64 rng(seed);
    m.network = MlpNetwork(layers, rng());
    Adam adam(m.network.parameter_count(), AdamParams{params.lr});
    std::vector<double> grad(m.network.parameter_count());

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto batch = std::min<Eigen::Index>(static_cast<Eigen::Index>(params.batch), n);

    FitReport report{0.0, 0, false};
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index len = std::min(batch, n - start);
            Eigen::MatrixXd xb(d, len);
            Eigen::VectorXd yb(len);
            for (Eigen::Index k = 0; k < len; ++k) {
                xb.col(k) = x.col(order[start + k]);
                yb(k) = y(order[start + k]);
            }
            const double l = m.network.loss_and_gradient(xb, yb, grad);
            if (!std::isfinite(l)) {
                throw Error("MLP training diverged (non-finite batch loss at epoch " + std::to_string(epoch) + ")");
            }
            adam.step(m.network.parameters(), grad);
        }
        const double l = m.network.loss(x, y);
        if (!std::isfinite(l)) {
            throw Error("MLP training diverged (non-finite loss at epoch " + std::to_string(epoch) + ")");
        }
        report.iterations = epoch;
        report.mse = l;
        if (best - l < params.min_improvement) {
            if (++stale >= params.patience) {
                report.converged = true;
                break;
            }
        } else {
            stale = 0;
        }
        best = std::min(best, l);
    }
    report.mse *= m.y_scale * m.y_scale;
    return {MergeModel(ModelKind::mlp, static_cast<std::size_t>(d), std::move(m)), report};
}

}  // namespace fedmerge

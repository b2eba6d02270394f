#include <cmath>

#include "fedmerge/common.hpp"
#include "fedmerge/mlmodels.hpp"

namespace fedmerge {

double svr_objective(std::span<const double> w, double b, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double epsilon, double c_reg)
{
    Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
    const Eigen::VectorXd r = y - (x * wv).array().matrix() - Eigen::VectorXd::Constant(y.size(), b);
    const double hinge = (r.array().abs() - epsilon).max(0.0).sum();
    return 0.5 * wv.squaredNorm() + c_reg * hinge;
}

FitResult fit_svr(const TrainingSet& ts, const SvrParams& params, std::uint64_t /*seed*/)
{
    if (ts.size() < 2) {
        throw ValidationError("SVR fit needs at least 2 points");
    }
    if (params.c_reg <= 0.0 || params.epsilon < 0.0 || params.epochs == 0) {
        throw ValidationError("invalid SVR parameters");
    }
    const auto n = static_cast<Eigen::Index>(ts.size());
    const auto d = static_cast<Eigen::Index>(ts.dim());
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = ts.feature(i, j);
        }
        y(i) = ts.targets()[i];
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw ValidationError("non-finite training data");
    }

    // Standardise so one step size suits every score scale.
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    Eigen::RowVectorXd x_scale = ((x.rowwise() - x_mean).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(x_scale(j) > 0.0)) {
            x_scale(j) = 1.0;
        }
    }
    const double y_mean = y.mean();
    double y_scale = std::sqrt((y.array() - y_mean).square().mean());
    if (!(y_scale > 0.0)) {
        y_scale = 1.0;
    }
    const Eigen::MatrixXd xs = (x.rowwise() - x_mean).array().rowwise() / x_scale.array();
    const Eigen::VectorXd ys = (y.array() - y_mean) / y_scale;
    const double eps = params.epsilon / y_scale;
    const double c = params.c_reg;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    Eigen::VectorXd w_avg = Eigen::VectorXd::Zero(d);
    double b_avg = 0.0;
    Eigen::VectorXd w_best = w;
    double b_best = b;
    double obj_best = INFINITY;
    const double eta0 = 1.0 / (c * static_cast<double>(n));
    for (std::size_t t = 1; t <= params.epochs; ++t) {
        const Eigen::VectorXd r = ys - xs * w - Eigen::VectorXd::Constant(n, b);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (r(i) > eps) {
                s(i) = 1.0;
            } else if (r(i) < -eps) {
                s(i) = -1.0;
            }
        }
        const Eigen::VectorXd grad_w = w - c * (xs.transpose() * s);
        const double grad_b = -c * s.sum();
        const double eta = eta0 / std::sqrt(static_cast<double>(t));
        w -= eta * grad_w;
        b -= eta * grad_b;
        // Running mean of the iterates.
        const double k = static_cast<double>(t);
        w_avg += (w - w_avg) / k;
        b_avg += (b - b_avg) / k;
        // Subgradient steps do not descend monotonically; remember the best.
        const double obj = svr_objective(std::span<const double>(w.data(), static_cast<std::size_t>(d)), b, xs, ys,
                                         eps, c);
        if (obj < obj_best) {
            obj_best = obj;
            w_best = w;
            b_best = b;
        }
    }

    // Keep whichever of the average and the best iterate scores lower.
    const std::span<const double> wa(w_avg.data(), static_cast<std::size_t>(d));
    if (obj_best < svr_objective(wa, b_avg, xs, ys, eps, c)) {
        w_avg = w_best;
        b_avg = b_best;
    }

    SvrModel m;
    m.weights.resize(static_cast<std::size_t>(d));
    double b_raw = y_mean + y_scale * b_avg;
    for (Eigen::Index j = 0; j < d; ++j) {
        m.weights[j] = y_scale * w_avg(j) / x_scale(j);
        b_raw -= m.weights[j] * x_mean(j);
    }
    m.intercept = b_raw;
    m.epsilon = params.epsilon;

    Eigen::Map<const Eigen::VectorXd> wr(m.weights.data(), d);
    const double mse = ((x * wr).array() + m.intercept - y.array()).square().mean();
    return {MergeModel(ModelKind::svr, ts.dim(), std::move(m)), FitReport{mse, params.epochs, true}};
}

}  // namespace fedmerge

#include <cmath>

#include "fedmerge/common.hpp"
#include "fedmerge/mlmodels.hpp"

namespace fedmerge {

namespace {

Eigen::MatrixXd to_matrix(const TrainingSet& ts)
{
    Eigen::MatrixXd x(ts.size(), ts.dim());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = 0; j < ts.dim(); ++j) {
            x(i, j) = ts.feature(i, j);
        }
    }
    return x;
}

LinearModel solve_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge)
{
    const auto n = x.rows();
    const auto d = x.cols();
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();

    // Ridge as an augmented least-squares problem, so the QR works on X
    // rather than on the worse-conditioned X^T X.
    Eigen::MatrixXd a(n + d, d);
    a.topRows(n) = x.rowwise() - x_mean;
    a.bottomRows(d) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + d);
    rhs.head(n) = y.array() - y_mean;

    Eigen::VectorXd w = a.colPivHouseholderQr().solve(rhs);
    LinearModel m;
    m.weights.assign(w.data(), w.data() + d);
    m.intercept = y_mean - x_mean.dot(w);
    return m;
}

}  // namespace

FitResult fit_linear(const TrainingSet& ts, double ridge)
{
    if (ts.size() < 2) {
        throw ValidationError("linear fit needs at least 2 points");
    }
    if (ridge < 0.0) {
        throw ValidationError("ridge must be non-negative");
    }
    Eigen::MatrixXd x = to_matrix(ts);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ts.targets().data(), ts.size());
    if (!x.allFinite() || !y.allFinite()) {
        throw ValidationError("non-finite training data");
    }
    LinearModel m = solve_ridge(x, y, ridge);
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(m.weights.data(), m.weights.size());
    const double mse = ((x * w).array() + m.intercept - y.array()).square().mean();
    return {MergeModel(ModelKind::linear, ts.dim(), std::move(m)), FitReport{mse, 1, true}};
}

FitResult fit_poly(const TrainingSet& ts, int degree, double ridge)
{
    if (degree != 2 && degree != 3) {
        throw ValidationError("polynomial degree must be 2 or 3");
    }
    TrainingSet expanded(ts.dim() * static_cast<std::size_t>(degree));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        expanded.add(expand_poly(ts.row(i), degree), ts.targets()[i]);
    }
    auto fit = fit_linear(expanded, ridge);
    auto m = std::get<LinearModel>(fit.model.params());
    m.degree = degree;
    auto kind = degree == 2 ? ModelKind::poly2 : ModelKind::poly3;
    return {MergeModel(kind, ts.dim(), std::move(m)), fit.report};
}

}  // namespace fedmerge

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace fedmerge {

enum class ModelKind { linear, poly2, poly3, tree, forest, svr, mlp };

std::string_view to_string(ModelKind kind) noexcept;
/// Throws ConfigError for unknown names.
ModelKind parse_model_kind(std::string_view name);

/// Feature rows and regression targets. Rows are stored contiguously.
class TrainingSet {
  public:
    explicit TrainingSet(std::size_t dim = 1) : dim_(dim) {}

    void add(std::span<const double> features, double target);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return targets_.size(); }
    bool empty() const noexcept { return targets_.empty(); }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    double feature(std::size_t i, std::size_t j) const { return values_[i * dim_ + j]; }
    const std::vector<double>& targets() const noexcept { return targets_; }

    /// Optional names of the feature positions (GM source order).
    std::vector<std::string> layout;

  private:
    std::size_t dim_;
    std::vector<double> values_;
    std::vector<double> targets_;
};

/// Elementwise powers without cross terms: degree 2 gives [x, x^2], degree 3
/// gives [x, x^2, x^3], each block the length of x. Throws ValidationError
/// for other degrees.
std::vector<double> expand_poly(std::span<const double> x, int degree);

struct ModelParams {
    double ridge = 1e-6;

    std::size_t max_depth = 8;
    std::size_t min_leaf = 2;

    std::size_t n_trees = 100;
    bool bootstrap = true;
    /// Fraction of features tried per split. Unset: all features for 1-D
    /// input, floor(sqrt(d)) features otherwise.
    std::optional<double> feature_frac;

    double svr_epsilon = 0.01;
    double svr_c = 1.0;
    std::size_t svr_epochs = 500;

    std::vector<std::size_t> mlp_hidden = {632, 300, 150, 50};
    double mlp_lr = 0.01;
    std::size_t mlp_epochs = 200;
    std::size_t mlp_batch = 32;
    std::size_t mlp_patience = 20;
    double mlp_min_improvement = 1e-7;
};

struct FitReport {
    double mse = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

/// y = w.x + b, applied after polynomial expansion when degree > 1.
struct LinearModel {
    std::vector<double> weights;
    double intercept = 0.0;
    int degree = 1;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // mean target of the node's training rows
    std::uint32_t count = 0;
};

struct TreeModel {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestModel {
    std::vector<TreeModel> trees;
};

/// Linear e-insensitive regressor, stored in original feature/target units.
struct SvrModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double epsilon = 0.0;
};

/// Fully connected ReLU network with a linear scalar output. Parameters are
/// kept in one flat vector: for each layer, its weight matrix (out x in,
/// column-major) followed by its bias vector.
class MlpNetwork {
  public:
    MlpNetwork() = default;
    /// `layers` = {input, hidden..., 1}. He-normal weights, zero biases.
    MlpNetwork(std::vector<std::size_t> layers, std::uint64_t seed);
    /// Rebuilds a network from stored parameters; throws ValidationError if
    /// the count does not match `layers`.
    static MlpNetwork from_parameters(std::vector<std::size_t> layers, std::vector<double> params);

    const std::vector<std::size_t>& layers() const noexcept { return layers_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }

    /// (rows, cols) of the weight matrix of `layer`.
    std::pair<std::size_t, std::size_t> weight_shape(std::size_t layer) const;

    /// Forward pass; `x` holds one sample per column.
    Eigen::VectorXd forward(const Eigen::MatrixXd& x) const;
    /// Mean squared error over the columns of `x`.
    double loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;
    /// Loss and its gradient with respect to parameters().
    double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<double> grad) const;

  private:
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

    std::vector<std::size_t> layers_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

struct AdamParams {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias-corrected moment estimates.
class Adam {
  public:
    Adam(std::size_t n, AdamParams params = {});
    void step(std::span<double> params, std::span<const double> grads);
    std::size_t steps() const noexcept { return t_; }

  private:
    AdamParams p_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

/// Network plus the input/target standardisation learned at fit time.
struct MlpModel {
    MlpNetwork network;
    std::vector<double> x_mean;
    std::vector<double> x_scale;
    double y_mean = 0.0;
    double y_scale = 1.0;
};

/// A fitted score-mapping regressor.
class MergeModel {
  public:
    using Params = std::variant<LinearModel, TreeModel, ForestModel, SvrModel, MlpModel>;

    MergeModel(ModelKind kind, std::size_t input_dim, Params params);

    ModelKind kind() const noexcept { return kind_; }
    std::size_t input_dim() const noexcept { return input_dim_; }
    const Params& params() const noexcept { return params_; }

    /// Throws ValidationError when x.size() != input_dim().
    double predict(std::span<const double> x) const;

  private:
    ModelKind kind_;
    std::size_t input_dim_;
    Params params_;
};

double predict(const MergeModel& model, std::span<const double> x);
double predict_tree(const TreeModel& tree, std::span<const double> x);

struct FitResult {
    MergeModel model;
    FitReport report;
};

/// Ridge least squares with an unpenalised intercept. Needs >= 2 rows.
FitResult fit_linear(const TrainingSet& ts, double ridge = 1e-6);
/// Linear fit on expand_poly features.
FitResult fit_poly(const TrainingSet& ts, int degree, double ridge = 1e-6);

struct TreeParams {
    std::size_t max_depth = 8;
    std::size_t min_leaf = 2;
    /// Features examined per split; 0 means all.
    std::size_t max_features = 0;
};

/// CART regression tree: greedy variance-reducing binary splits at midpoints
/// between distinct feature values. Ties go to the lowest feature index,
/// then the lowest threshold. The seed only matters when max_features
/// restricts the candidate features.
FitResult fit_tree(const TrainingSet& ts, const TreeParams& params = {}, std::uint64_t seed = 0);

struct ForestParams {
    std::size_t n_trees = 100;
    bool bootstrap = true;
    std::optional<double> feature_frac;
    TreeParams tree;
};

/// Random forest of fit_tree models on bootstrap resamples. Trees are fitted
/// in parallel when `parallel` is set; the result does not depend on it.
FitResult fit_forest(const TrainingSet& ts, const ForestParams& params = {}, std::uint64_t seed = 0,
                     bool parallel = true);

struct SvrParams {
    double epsilon = 0.01;
    double c_reg = 1.0;
    std::size_t epochs = 500;
};

/// Primal objective minimised by fit_svr, evaluated on standardised data:
/// 0.5 |w|^2 + C * sum max(0, |y - w.x - b| - eps).
double svr_objective(std::span<const double> w, double b, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double epsilon, double c_reg);

/// Linear e-SVR trained by full-batch subgradient descent with step
/// 1/(C n sqrt(t)) on standardised data. Returns the iterate average, or the
/// best single iterate when its objective is lower.
FitResult fit_svr(const TrainingSet& ts, const SvrParams& params = {}, std::uint64_t seed = 0);

struct MlpParams {
    std::vector<std::size_t> hidden = {632, 300, 150, 50};
    double lr = 0.01;
    std::size_t epochs = 200;
    std::size_t batch = 32;
    std::size_t patience = 20;
    double min_improvement = 1e-7;
};

/// MLP regressor trained with Adam on mean squared error. Throws Error if
/// the loss becomes non-finite.
FitResult fit_mlp(const TrainingSet& ts, const MlpParams& params = {}, std::uint64_t seed = 0);

/// Minimum training rows each kind accepts.
std::size_t min_training_rows(ModelKind kind) noexcept;

/// Dispatches on kind using the matching fields of `params`.
FitResult fit_model(ModelKind kind, const TrainingSet& ts, const ModelParams& params, std::uint64_t seed,
                    bool parallel = true);

/// Versioned JSON record. Loading reproduces predictions bit for bit.
void write_model(const MergeModel& model, std::ostream& out);
MergeModel read_model(std::istream& in);
void save_model(const MergeModel& model, const std::string& path);
MergeModel load_model(const std::string& path);

}  // namespace fedmerge

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fedmerge/common.hpp"
#include "fedmerge/mlmodels.hpp"

namespace fedmerge {

std::string_view to_string(ModelKind kind) noexcept
{
    switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::poly2: return "poly2";
    case ModelKind::poly3: return "poly3";
    case ModelKind::tree: return "tree";
    case ModelKind::forest: return "forest";
    case ModelKind::svr: return "svr";
    case ModelKind::mlp: return "mlp";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view name)
{
    for (auto k : {ModelKind::linear, ModelKind::poly2, ModelKind::poly3, ModelKind::tree, ModelKind::forest,
                   ModelKind::svr, ModelKind::mlp}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void TrainingSet::add(std::span<const double> features, double target)
{
    if (features.size() != dim_) {
        throw ValidationError("training row has dimension " + std::to_string(features.size()) + ", expected " +
                              std::to_string(dim_));
    }
    values_.insert(values_.end(), features.begin(), features.end());
    targets_.push_back(target);
}

std::vector<double> expand_poly(std::span<const double> x, int degree)
{
    if (degree != 2 && degree != 3) {
        throw ValidationError("polynomial degree must be 2 or 3");
    }
    std::vector<double> out(x.begin(), x.end());
    out.reserve(x.size() * static_cast<std::size_t>(degree));
    for (double v : x) {
        out.push_back(v * v);
    }
    if (degree == 3) {
        for (double v : x) {
            out.push_back(v * v * v);
        }
    }
    return out;
}

MergeModel::MergeModel(ModelKind kind, std::size_t input_dim, Params params)
    : kind_(kind), input_dim_(input_dim), params_(std::move(params))
{}

namespace {

double dot(std::span<const double> w, std::span<const double> x)
{
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += w[i] * x[i];
    }
    return s;
}

}  // namespace

double MergeModel::predict(std::span<const double> x) const
{
    if (x.size() != input_dim_) {
        throw ValidationError("model expects " + std::to_string(input_dim_) + " features, got " +
                              std::to_string(x.size()));
    }
    struct Visitor {
        std::span<const double> x;
        double operator()(const LinearModel& m) const
        {
            if (m.degree > 1) {
                auto e = expand_poly(x, m.degree);
                return m.intercept + dot(m.weights, e);
            }
            return m.intercept + dot(m.weights, x);
        }
        double operator()(const TreeModel& m) const { return predict_tree(m, x); }
        double operator()(const ForestModel& m) const
        {
            double s = 0.0;
            for (const auto& t : m.trees) {
                s += predict_tree(t, x);
            }
            return s / static_cast<double>(m.trees.size());
        }
        double operator()(const SvrModel& m) const { return m.intercept + dot(m.weights, x); }
        double operator()(const MlpModel& m) const
        {
            Eigen::MatrixXd col(x.size(), 1);
            for (std::size_t j = 0; j < x.size(); ++j) {
                col(static_cast<Eigen::Index>(j), 0) = (x[j] - m.x_mean[j]) / m.x_scale[j];
            }
            return m.y_mean + m.y_scale * m.network.forward(col)(0);
        }
    };
    return std::visit(Visitor{x}, params_);
}

double predict(const MergeModel& model, std::span<const double> x)
{
    return model.predict(x);
}

std::size_t min_training_rows(ModelKind kind) noexcept
{
    switch (kind) {
    case ModelKind::linear:
    case ModelKind::poly2:
    case ModelKind::poly3:
    case ModelKind::svr: return 2;
    case ModelKind::tree:
    case ModelKind::forest:
    case ModelKind::mlp: return 1;
    }
    return 1;
}

FitResult fit_model(ModelKind kind, const TrainingSet& ts, const ModelParams& p, std::uint64_t seed, bool parallel)
{
    const TreeParams tree{p.max_depth, p.min_leaf, 0};
    switch (kind) {
    case ModelKind::linear: return fit_linear(ts, p.ridge);
    case ModelKind::poly2: return fit_poly(ts, 2, p.ridge);
    case ModelKind::poly3: return fit_poly(ts, 3, p.ridge);
    case ModelKind::tree: return fit_tree(ts, tree, seed);
    case ModelKind::forest: return fit_forest(ts, ForestParams{p.n_trees, p.bootstrap, p.feature_frac, tree}, seed, parallel);
    case ModelKind::svr: return fit_svr(ts, SvrParams{p.svr_epsilon, p.svr_c, p.svr_epochs}, seed);
    case ModelKind::mlp:
        return fit_mlp(ts,
                       MlpParams{p.mlp_hidden, p.mlp_lr, p.mlp_epochs, p.mlp_batch, p.mlp_patience,
                                 p.mlp_min_improvement},
                       seed);
    }
    throw ConfigError("unknown model kind");
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

using json = nlohmann::json;

constexpr std::string_view kModelFormat = "fedmerge-model";
constexpr int kModelVersion = 1;

json tree_to_json(const TreeModel& t)
{
    json nodes = json::array();
    for (const auto& n : t.nodes) {
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.count});
    }
    return nodes;
}

TreeModel tree_from_json(const json& j)
{
    TreeModel t;
    for (const auto& n : j) {
        if (!n.is_array() || n.size() != 6) {
            throw IoError("malformed tree node");
        }
        t.nodes.push_back(TreeNode{n[0].get<std::int32_t>(), n[1].get<double>(), n[2].get<std::int32_t>(),
                                   n[3].get<std::int32_t>(), n[4].get<double>(), n[5].get<std::uint32_t>()});
    }
    const auto size = static_cast<std::int32_t>(t.nodes.size());
    if (size == 0) {
        throw IoError("empty tree");
    }
    for (const auto& n : t.nodes) {
        if (n.feature >= 0 && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size)) {
            throw IoError("tree node references a missing child");
        }
    }
    return t;
}

}  // namespace

void write_model(const MergeModel& model, std::ostream& out)
{
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["kind"] = to_string(model.kind());
    j["input_dim"] = model.input_dim();
    struct Visitor {
        json operator()(const LinearModel& m) const
        {
            return {{"weights", m.weights}, {"intercept", m.intercept}, {"degree", m.degree}};
        }
        json operator()(const TreeModel& m) const { return {{"nodes", tree_to_json(m)}}; }
        json operator()(const ForestModel& m) const
        {
            json trees = json::array();
            for (const auto& t : m.trees) {
                trees.push_back(tree_to_json(t));
            }
            return {{"trees", trees}};
        }
        json operator()(const SvrModel& m) const
        {
            return {{"weights", m.weights}, {"intercept", m.intercept}, {"epsilon", m.epsilon}};
        }
        json operator()(const MlpModel& m) const
        {
            auto p = m.network.parameters();
            return {{"layers", m.network.layers()},
                    {"parameters", std::vector<double>(p.begin(), p.end())},
                    {"x_mean", m.x_mean},
                    {"x_scale", m.x_scale},
                    {"y_mean", m.y_mean},
                    {"y_scale", m.y_scale}};
        }
    };
    j["model"] = std::visit(Visitor{}, model.params());
    out << j.dump() << '\n';
    if (!out) {
        throw IoError("failed to write model");
    }
}

MergeModel read_model(std::istream& in)
{
    json j;
    try {
        in >> j;
        if (j.at("format").get<std::string>() != kModelFormat) {
            throw IoError("not a model record");
        }
        if (j.at("version").get<int>() != kModelVersion) {
            throw IoError("unsupported model version");
        }
        const auto kind = parse_model_kind(j.at("kind").get<std::string>());
        const auto dim = j.at("input_dim").get<std::size_t>();
        const json& m = j.at("model");
        switch (kind) {
        case ModelKind::linear:
        case ModelKind::poly2:
        case ModelKind::poly3: {
            LinearModel lm{m.at("weights").get<std::vector<double>>(), m.at("intercept").get<double>(),
                           m.at("degree").get<int>()};
            if (lm.weights.size() != dim * static_cast<std::size_t>(lm.degree)) {
                throw IoError("linear model weight count mismatch");
            }
            return {kind, dim, std::move(lm)};
        }
        case ModelKind::tree: return {kind, dim, tree_from_json(m.at("nodes"))};
        case ModelKind::forest: {
            ForestModel f;
            for (const auto& t : m.at("trees")) {
                f.trees.push_back(tree_from_json(t));
            }
            if (f.trees.empty()) {
                throw IoError("forest without trees");
            }
            return {kind, dim, std::move(f)};
        }
        case ModelKind::svr: {
            SvrModel s{m.at("weights").get<std::vector<double>>(), m.at("intercept").get<double>(),
                       m.at("epsilon").get<double>()};
            if (s.weights.size() != dim) {
                throw IoError("SVR weight count mismatch");
            }
            return {kind, dim, std::move(s)};
        }
        case ModelKind::mlp: {
            MlpModel mm;
            mm.network = MlpNetwork::from_parameters(m.at("layers").get<std::vector<std::size_t>>(),
                                                     m.at("parameters").get<std::vector<double>>());
            mm.x_mean = m.at("x_mean").get<std::vector<double>>();
            mm.x_scale = m.at("x_scale").get<std::vector<double>>();
            mm.y_mean = m.at("y_mean").get<double>();
            mm.y_scale = m.at("y_scale").get<double>();
            if (mm.network.layers().front() != dim || mm.x_mean.size() != dim || mm.x_scale.size() != dim) {
                throw IoError("MLP dimension mismatch");
            }
            return {kind, dim, std::move(mm)};
        }
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed model record: ") + e.what());
    } catch (const ValidationError& e) {
        throw IoError(std::string("malformed model record: ") + e.what());
    }
    throw IoError("malformed model record");
}

void save_model(const MergeModel& model, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_model(model, out);
}

MergeModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_model(in);
}

}  // namespace fedmerge

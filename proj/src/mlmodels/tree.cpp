#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedmerge/common.hpp"
#include "fedmerge/mlmodels.hpp"

namespace fedmerge {

namespace {

class TreeBuilder {
  public:
    TreeBuilder(const TrainingSet& ts, const TreeParams& params, std::uint64_t seed)
        : ts_(ts), params_(params), rng_(seed)
    {
        features_.resize(ts.dim());
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    TreeModel build(std::vector<std::size_t> rows)
    {
        rows_ = std::move(rows);
        nodes_.clear();
        grow(0, rows_.size(), 0);
        return TreeModel{std::move(nodes_)};
    }

  private:
    std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth)
    {
        const std::size_t n = end - begin;
        const auto self = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();

        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            sum += y(i);
        }
        const double mean = sum / static_cast<double>(n);
        nodes_[self].value = mean;
        nodes_[self].count = static_cast<std::uint32_t>(n);

        if (depth >= params_.max_depth || n < 2 * std::max<std::size_t>(params_.min_leaf, 1)) {
            return self;
        }
        double sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            sse += (y(i) - mean) * (y(i) - mean);
        }
        if (!(sse > 0.0)) {
            return self;
        }

        auto split = best_split(begin, end, mean, sse);
        if (!split) {
            return self;
        }
        const auto [feature, threshold] = *split;
        auto mid = std::stable_partition(rows_.begin() + begin, rows_.begin() + end,
                                         [&](std::size_t r) { return ts_.feature(r, feature) <= threshold; });
        const auto cut = static_cast<std::size_t>(mid - rows_.begin());

        nodes_[self].feature = static_cast<std::int32_t>(feature);
        nodes_[self].threshold = threshold;
        const auto left = grow(begin, cut, depth + 1);
        const auto right = grow(cut, end, depth + 1);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    std::optional<std::pair<std::size_t, double>> best_split(std::size_t begin, std::size_t end, double mean,
                                                              double sse)
    {
        const std::size_t n = end - begin;
        const std::size_t min_leaf = std::max<std::size_t>(params_.min_leaf, 1);

        std::vector<std::size_t> candidates = features_;
        if (params_.max_features != 0 && params_.max_features < candidates.size()) {
            // Partial Fisher-Yates, then restore ascending order for the tie rule.
            for (std::size_t i = 0; i < params_.max_features; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
                std::swap(candidates[i], candidates[pick(rng_)]);
            }
            candidates.resize(params_.max_features);
            std::sort(candidates.begin(), candidates.end());
        }

        std::vector<std::pair<double, double>> column(n);  // (x, centred y)
        double best_gain = 0.0;
        std::optional<std::pair<std::size_t, double>> best;
        for (std::size_t f : candidates) {
            for (std::size_t i = 0; i < n; ++i) {
                column[i] = {ts_.feature(rows_[begin + i], f), y(begin + i) - mean};
            }
            std::sort(column.begin(), column.end());
            double total = 0.0;
            for (const auto& c : column) {
                total += c.second;
            }
            double left = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left += column[i].second;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (column[i].first == column[i + 1].first || nl < min_leaf || nr < min_leaf) {
                    continue;
                }
                const double right = total - left;
                const double gain = left * left / nl + right * right / nr - total * total / n;
                if (gain > best_gain) {
                    double threshold = 0.5 * (column[i].first + column[i + 1].first);
                    if (!(threshold < column[i + 1].first)) {
                        threshold = column[i].first;
                    }
                    best_gain = gain;
                    best = std::pair{f, threshold};
                }
            }
        }
        if (!best || best_gain <= sse * 1e-12) {
            return std::nullopt;
        }
        return best;
    }

    double y(std::size_t pos) const { return ts_.targets()[rows_[pos]]; }

    const TrainingSet& ts_;
    TreeParams params_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> features_;
    std::vector<std::size_t> rows_;
    std::vector<TreeNode> nodes_;
};

void check_finite(const TrainingSet& ts)
{
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (!std::isfinite(ts.targets()[i])) {
            throw ValidationError("non-finite training target");
        }
        for (double v : ts.row(i)) {
            if (!std::isfinite(v)) {
                throw ValidationError("non-finite training feature");
            }
        }
    }
}

double training_mse(const TrainingSet& ts, const MergeModel& model)
{
    double s = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double r = model.predict(ts.row(i)) - ts.targets()[i];
        s += r * r;
    }
    return s / static_cast<double>(ts.size());
}

}  // namespace

double predict_tree(const TreeModel& tree, std::span<const double> x)
{
    std::int32_t node = 0;
    while (tree.nodes[node].feature >= 0) {
        const auto& nd = tree.nodes[node];
        node = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return tree.nodes[node].value;
}

FitResult fit_tree(const TrainingSet& ts, const TreeParams& params, std::uint64_t seed)
{
    if (ts.empty()) {
        throw ValidationError("tree fit needs at least 1 point");
    }
    check_finite(ts);
    std::vector<std::size_t> rows(ts.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    TreeBuilder builder(ts, params, seed);
    MergeModel model(ModelKind::tree, ts.dim(), builder.build(std::move(rows)));
    const double mse = training_mse(ts, model);
    return {std::move(model), FitReport{mse, 1, true}};
}

FitResult fit_forest(const TrainingSet& ts, const ForestParams& params, std::uint64_t seed, bool parallel)
{
    if (ts.empty()) {
        throw ValidationError("forest fit needs at least 1 point");
    }
    if (params.n_trees == 0) {
        throw ValidationError("forest needs at least one tree");
    }
    check_finite(ts);

    const std::size_t d = ts.dim();
    TreeParams tree_params = params.tree;
    if (params.feature_frac) {
        const double frac = std::clamp(*params.feature_frac, 0.0, 1.0);
        tree_params.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * d)));
    } else {
        tree_params.max_features =
            d == 1 ? 1 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(d)))));
    }
    if (tree_params.max_features >= d) {
        tree_params.max_features = 0;
    }

    ForestModel forest;
    forest.trees.resize(params.n_trees);
    const auto n_trees = static_cast<std::ptrdiff_t>(params.n_trees);
    const std::size_t n = ts.size();
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t t = 0; t < n_trees; ++t) {
        const std::uint64_t tree_seed = splitmix64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(t + 1));
        std::vector<std::size_t> rows(n);
        if (params.bootstrap) {
            std::mt19937_64 rng(tree_seed);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& r : rows) {
                r = pick(rng);
            }
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        TreeBuilder builder(ts, tree_params, splitmix64(tree_seed));
        forest.trees[t] = builder.build(std::move(rows));
    }
    MergeModel model(ModelKind::forest, d, std::move(forest));
    const double mse = training_mse(ts, model);
    return {std::move(model), FitReport{mse, params.n_trees, true}};
}

}  // namespace fedmerge

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "llana/errors.hpp"
#include "llana/gp.hpp"  // PredictiveDistribution
#include "llana/rng.hpp"

namespace llana {

struct TreeNode {
    // leaf when split_dim < 0
    int split_dim = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_mean = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(const std::vector<double>& x) const {
        int cur = 0;
        while (nodes[static_cast<std::size_t>(cur)].split_dim >= 0) {
            const TreeNode& n = nodes[static_cast<std::size_t>(cur)];
            cur = x[static_cast<std::size_t>(n.split_dim)] < n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(cur)].leaf_mean;
    }
};

struct ForestModel {
    std::vector<RegressionTree> trees;
    std::size_t n_trees = 0;
    std::size_t min_samples_leaf = 0;
    std::uint64_t seed = 0;
    double train_y_min = 0.0;
    double train_y_max = 0.0;
};

namespace detail {

struct TreeBuilder {
    const std::vector<std::vector<double>>& X;
    const std::vector<double>& y;
    std::size_t min_leaf;
    std::size_t d;
    Rng& rng;
    RegressionTree tree;

    static double sum_sq_dev(const std::vector<std::size_t>& idx, const std::vector<double>& y) {
        double mean = 0.0;
        for (std::size_t i : idx) mean += y[i];
        mean /= static_cast<double>(idx.size());
        double s = 0.0;
        for (std::size_t i : idx) s += (y[i] - mean) * (y[i] - mean);
        return s;
    }

    int build(std::vector<std::size_t> idx) {
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double mean = 0.0;
        for (std::size_t i : idx) mean += y[i];
        mean /= static_cast<double>(idx.size());
        tree.nodes.back().leaf_mean = mean;

        if (idx.size() < 2 * min_leaf) return node_id;
        bool constant = true;
        for (std::size_t i : idx)
            if (y[i] != y[idx[0]]) { constant = false; break; }
        if (constant) return node_id;

        // Random subset of ceil(d/2) candidate dimensions.
        std::vector<std::size_t> dims(d);
        std::iota(dims.begin(), dims.end(), 0);
        for (std::size_t i = d; i > 1; --i)
            std::swap(dims[i - 1], dims[rng.uniform_index(i)]);
        dims.resize((d + 1) / 2);

        double best_cost = std::numeric_limits<double>::infinity();
        int best_dim = -1;
        double best_thr = 0.0;

        std::vector<std::size_t> order = idx;
        for (std::size_t dim : dims) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return X[a][dim] < X[b][dim];
            });
            // Prefix sums over the sorted targets.
            const std::size_t n = order.size();
            double total = 0.0, total_sq = 0.0;
            for (std::size_t i : order) { total += y[i]; total_sq += y[i] * y[i]; }
            double lsum = 0.0, lsq = 0.0;
            for (std::size_t k = 1; k < n; ++k) {
                double v = y[order[k - 1]];
                lsum += v;
                lsq += v * v;
                if (X[order[k - 1]][dim] == X[order[k]][dim]) continue;  // no gap to split in
                if (k < min_leaf || n - k < min_leaf) continue;
                double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
                double cost = (lsq - lsum * lsum / nl) +
                              ((total_sq - lsq) - (total - lsum) * (total - lsum) / nr);
                if (cost < best_cost) {
                    best_cost = cost;
                    best_dim = static_cast<int>(dim);
                    best_thr = 0.5 * (X[order[k - 1]][dim] + X[order[k]][dim]);
                }
            }
        }
        if (best_dim < 0) return node_id;

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx) {
            if (X[i][static_cast<std::size_t>(best_dim)] < best_thr)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        if (left_idx.size() < min_leaf || right_idx.size() < min_leaf) return node_id;

        int left = build(std::move(left_idx));
        int right = build(std::move(right_idx));
        tree.nodes[static_cast<std::size_t>(node_id)].split_dim = best_dim;
        tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_thr;
        tree.nodes[static_cast<std::size_t>(node_id)].left = left;
        tree.nodes[static_cast<std::size_t>(node_id)].right = right;
        return node_id;
    }
};

}  // namespace detail

inline ForestModel forest_fit(const std::vector<std::pair<std::vector<double>, double>>& train,
                              std::size_t n_trees = 64, std::size_t min_samples_leaf = 3,
                              std::uint64_t seed = 0) {
    if (train.empty()) throw SizeError("empty training set");
    if (n_trees < 1) throw SizeError("n_trees must be >= 1");
    const std::size_t n = train.size();
    const std::size_t d = train[0].first.size();
    std::vector<std::vector<double>> X(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        X[i] = train[i].first;
        y[i] = train[i].second;
    }
    ForestModel model;
    model.n_trees = n_trees;
    model.min_samples_leaf = min_samples_leaf;
    model.seed = seed;
    model.train_y_min = *std::min_element(y.begin(), y.end());
    model.train_y_max = *std::max_element(y.begin(), y.end());
    model.trees.reserve(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
        Rng rng(seed + t);  // per-tree seed = seed + tree_index
        std::vector<std::size_t> boot(n);
        for (std::size_t i = 0; i < n; ++i) boot[i] = rng.uniform_index(n);
        detail::TreeBuilder builder{X, y, std::max<std::size_t>(min_samples_leaf, 1), d, rng, {}};
        builder.build(std::move(boot));
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

inline PredictiveDistribution forest_predict(const ForestModel& model,
                                             const std::vector<double>& query) {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& tree : model.trees) {
        double v = tree.predict(query);
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(model.trees.size());
    double mean = sum / n;
    double var = std::max(sum_sq / n - mean * mean, 0.0);
    var = std::max(var, 1e-12);  // variance floor
    return PredictiveDistribution{mean, std::sqrt(var)};
}

}  // namespace llana

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/evaluation/metrics.hpp"
#include "cussp/io/checkpoint.hpp"

namespace cussp::cls {

enum class MaxFeatures { Sqrt, Log2 };

struct RfParams {
    int n_estimators = 20;
    int max_depth = 8;
    MaxFeatures max_features = MaxFeatures::Log2;
    int min_samples_leaf = 2;
};

// Search grid: n_estimators (10-100), max_depth (2-16), max_features
// (sqrt, log2), min_samples_leaf (2-8), evaluated with stratified k-fold CV
// under a random search.
struct RfSearchSpace {
    int n_estimators_lo = 10, n_estimators_hi = 100;
    int max_depth_lo = 2, max_depth_hi = 16;
    int min_samples_leaf_lo = 2, min_samples_leaf_hi = 8;
    int cv_folds = 10;
    int n_draws = 32;
    uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;      // -1 for leaves
    double threshold = 0;  // go left when x[feature] <= threshold
    int left = -1, right = -1;
    uint8_t vote = 0;      // leaf majority class
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    uint8_t predict(const std::vector<double>& x) const {
        int i = 0;
        while (nodes[static_cast<size_t>(i)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<size_t>(i)];
            i = x[static_cast<size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<size_t>(i)].vote;
    }
};

struct RfModel {
    std::vector<DecisionTree> trees;
    RfParams params;
    size_t n_features = 0;
};

namespace rf_detail {

struct SplitResult {
    int feature = -1;
    double threshold = 0;
    double gini = std::numeric_limits<double>::infinity();
};

inline double gini(size_t pos, size_t n) {
    if (n == 0) return 0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 2.0 * p * (1.0 - p);
}

inline int feature_subset_size(MaxFeatures mf, size_t n_features) {
    const double n = static_cast<double>(n_features);
    const int k = mf == MaxFeatures::Sqrt ? static_cast<int>(std::floor(std::sqrt(n)))
                                          : static_cast<int>(std::floor(std::log2(n)));
    return std::max(1, k);
}

inline void build_node(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       std::vector<size_t>& idx, size_t begin, size_t end, int depth, const RfParams& p,
                       std::mt19937_64& rng, std::vector<TreeNode>& nodes, int node_id) {
    const size_t n = end - begin;
    size_t pos = 0;
    for (size_t i = begin; i < end; ++i) pos += static_cast<size_t>(y[idx[i]]);
    TreeNode& node = nodes[static_cast<size_t>(node_id)];
    node.vote = pos * 2 > n ? 1 : 0;  // ties vote non-MR
    const bool pure = pos == 0 || pos == n;
    if (pure || depth >= p.max_depth || n < 2 * static_cast<size_t>(p.min_samples_leaf)) return;

    std::vector<int> feats(x[0].size());
    std::iota(feats.begin(), feats.end(), 0);
    std::shuffle(feats.begin(), feats.end(), rng);
    feats.resize(static_cast<size_t>(feature_subset_size(p.max_features, x[0].size())));
    std::sort(feats.begin(), feats.end());  // deterministic scan order within the subset

    SplitResult best;
    std::vector<std::pair<double, int>> vals(n);
    for (int f : feats) {
        for (size_t i = 0; i < n; ++i) {
            const size_t s = idx[begin + i];
            vals[i] = {x[s][static_cast<size_t>(f)], y[s]};
        }
        std::sort(vals.begin(), vals.end());
        size_t left_pos = 0;
        for (size_t i = 0; i + 1 < n; ++i) {
            left_pos += static_cast<size_t>(vals[i].second);
            if (vals[i].first == vals[i + 1].first) continue;
            const size_t nl = i + 1, nr = n - nl;
            if (nl < static_cast<size_t>(p.min_samples_leaf) || nr < static_cast<size_t>(p.min_samples_leaf))
                continue;
            const double g = (static_cast<double>(nl) * gini(left_pos, nl) +
                              static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                             static_cast<double>(n);
            if (g < best.gini - 1e-15) {
                best.gini = g;
                best.feature = f;
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
            }
        }
    }
    if (best.feature < 0) return;

    const auto mid = std::partition(idx.begin() + static_cast<ptrdiff_t>(begin),
                                    idx.begin() + static_cast<ptrdiff_t>(end), [&](size_t s) {
                                        return x[s][static_cast<size_t>(best.feature)] <= best.threshold;
                                    });
    const size_t split_at = static_cast<size_t>(mid - idx.begin());
    if (split_at == begin || split_at == end) return;  // numeric edge: no progress

    const int left_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const int right_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[static_cast<size_t>(node_id)].feature = best.feature;
    nodes[static_cast<size_t>(node_id)].threshold = best.threshold;
    nodes[static_cast<size_t>(node_id)].left = left_id;
    nodes[static_cast<size_t>(node_id)].right = right_id;
    build_node(x, y, idx, begin, split_at, depth + 1, p, rng, nodes, left_id);
    build_node(x, y, idx, split_at, end, depth + 1, p, rng, nodes, right_id);
}

inline DecisionTree build_tree(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                               const RfParams& p, uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_int_distribution<size_t> pick(0, x.size() - 1);
    std::vector<size_t> idx(x.size());
    for (auto& i : idx) i = pick(rng);  // bootstrap sample
    DecisionTree t;
    t.nodes.emplace_back();
    build_node(x, y, idx, 0, idx.size(), 0, p, rng, t.nodes, 0);
    return t;
}

}  // namespace rf_detail

inline RfModel fit_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                          const RfParams& params, uint64_t seed) {
    if (x.empty() || x.size() != y.size()) throw ValidationError("fit_forest: bad training set");
    RfModel m;
    m.params = params;
    m.n_features = x[0].size();
    m.trees.reserve(static_cast<size_t>(params.n_estimators));
    for (int i = 0; i < params.n_estimators; ++i)
        m.trees.push_back(rf_detail::build_tree(x, y, params, substream_seed(seed, "tree", static_cast<uint64_t>(i))));
    return m;
}

// Fraction of trees voting MR.
inline double rf_predict(const RfModel& m, const std::vector<double>& features) {
    if (features.size() != m.n_features)
        throw ValidationError("rf_predict: expected " + std::to_string(m.n_features) + " features, got " +
                              std::to_string(features.size()));
    for (double v : features)
        if (!std::isfinite(v)) throw ValidationError("rf_predict: non-finite feature");
    size_t votes = 0;
    for (const auto& t : m.trees) votes += t.predict(features);
    return static_cast<double>(votes) / static_cast<double>(m.trees.size());
}

// Stratified fold assignment: per-class shuffle, then round-robin deal.
inline std::vector<int> stratified_folds(const std::vector<int>& y, int folds, uint64_t seed) {
    std::vector<int> assign(y.size(), 0);
    std::mt19937_64 rng(splitmix64(seed));
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<size_t> ids;
        for (size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) ids.push_back(i);
        std::shuffle(ids.begin(), ids.end(), rng);
        for (size_t k = 0; k < ids.size(); ++k) assign[ids[k]] = static_cast<int>(k % static_cast<size_t>(folds));
    }
    return assign;
}

struct RfSearchResult {
    RfModel model;      // refit on the full set with the best parameters
    RfParams best_params;
    double best_cv_f1 = 0;
    std::vector<std::pair<RfParams, double>> trail;  // every draw with its CV score
};

// Random search over the parameter space with stratified k-fold CV, selecting
// the best mean F1 (threshold 0.5 on the tree-vote fraction).
inline RfSearchResult train_rf(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                               const RfSearchSpace& space) {
    if (x.size() != y.size() || x.empty()) throw ValidationError("train_rf: bad inputs");
    size_t n_pos = 0;
    for (int l : y) n_pos += static_cast<size_t>(l);
    const size_t n_neg = y.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("train_rf: need both classes");
    int folds = space.cv_folds;
    const size_t min_class = std::min(n_pos, n_neg);
    if (min_class < static_cast<size_t>(folds)) folds = static_cast<int>(min_class);  // refold to keep strata valid
    if (folds < 2) throw ValidationError("train_rf: not enough samples per class for CV");

    std::mt19937_64 rng(substream_seed(space.seed, "rf-search"));
    auto draw_params = [&]() {
        RfParams p;
        p.n_estimators = std::uniform_int_distribution<int>(space.n_estimators_lo, space.n_estimators_hi)(rng);
        p.max_depth = std::uniform_int_distribution<int>(space.max_depth_lo, space.max_depth_hi)(rng);
        p.max_features = std::uniform_int_distribution<int>(0, 1)(rng) ? MaxFeatures::Log2 : MaxFeatures::Sqrt;
        p.min_samples_leaf =
            std::uniform_int_distribution<int>(space.min_samples_leaf_lo, space.min_samples_leaf_hi)(rng);
        return p;
    };

    const std::vector<int> fold_of = stratified_folds(y, folds, substream_seed(space.seed, "rf-folds"));
    RfSearchResult result;
    double best = -1;
    for (int draw = 0; draw < space.n_draws; ++draw) {
        const RfParams p = draw_params();
        double f1_sum = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::vector<double>> xt;
            std::vector<int> yt;
            std::vector<double> scores;
            std::vector<int> yv;
            for (size_t i = 0; i < y.size(); ++i) {
                if (fold_of[i] == f) continue;
                xt.push_back(x[i]);
                yt.push_back(y[i]);
            }
            const RfModel m =
                fit_forest(xt, yt, p, substream_seed(space.seed, "rf-cv", static_cast<uint64_t>(draw * folds + f)));
            for (size_t i = 0; i < y.size(); ++i) {
                if (fold_of[i] != f) continue;
                scores.push_back(rf_predict(m, x[i]));
                yv.push_back(y[i]);
            }
            const auto rep = evaluation::metrics(scores, yv, 0.5);
            f1_sum += rep.f1;
        }
        const double mean_f1 = f1_sum / folds;
        result.trail.emplace_back(p, mean_f1);
        if (mean_f1 > best) {
            best = mean_f1;
            result.best_params = p;
        }
    }
    result.best_cv_f1 = best;
    result.model = fit_forest(x, y, result.best_params, substream_seed(space.seed, "rf-final"));
    return result;
}

// Checkpoint round-trip: the forest serializes into a single byte blob.
inline io::Checkpoint rf_to_checkpoint(const RfModel& m, uint64_t seed) {
    std::string bytes;
    io::detail::put<uint32_t>(bytes, static_cast<uint32_t>(m.trees.size()));
    io::detail::put<uint32_t>(bytes, static_cast<uint32_t>(m.n_features));
    io::detail::put<int32_t>(bytes, m.params.n_estimators);
    io::detail::put<int32_t>(bytes, m.params.max_depth);
    io::detail::put<uint8_t>(bytes, m.params.max_features == MaxFeatures::Log2 ? 1 : 0);
    io::detail::put<int32_t>(bytes, m.params.min_samples_leaf);
    for (const auto& t : m.trees) {
        io::detail::put<uint32_t>(bytes, static_cast<uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            io::detail::put<int32_t>(bytes, n.feature);
            io::detail::put<double>(bytes, n.threshold);
            io::detail::put<int32_t>(bytes, n.left);
            io::detail::put<int32_t>(bytes, n.right);
            io::detail::put<uint8_t>(bytes, n.vote);
        }
    }
    io::Checkpoint ckpt;
    ckpt.component = io::Component::Rf;
    ckpt.rng_seed = seed;
    io::TensorBlob blob;
    blob.dtype = io::BlobDtype::u8;
    blob.shape = {static_cast<int64_t>(bytes.size())};
    blob.bytes.assign(bytes.begin(), bytes.end());
    ckpt.blobs["forest"] = std::move(blob);
    return ckpt;
}

inline RfModel rf_from_checkpoint(const io::Checkpoint& ckpt) {
    if (ckpt.component != io::Component::Rf) throw ValidationError("rf_from_checkpoint: not an rf checkpoint");
    const auto& blob = ckpt.blob("forest");
    const std::string bytes(blob.bytes.begin(), blob.bytes.end());
    size_t off = 0;
    RfModel m;
    const auto n_trees = io::detail::take<uint32_t>(bytes, off);
    m.n_features = io::detail::take<uint32_t>(bytes, off);
    m.params.n_estimators = io::detail::take<int32_t>(bytes, off);
    m.params.max_depth = io::detail::take<int32_t>(bytes, off);
    m.params.max_features = io::detail::take<uint8_t>(bytes, off) ? MaxFeatures::Log2 : MaxFeatures::Sqrt;
    m.params.min_samples_leaf = io::detail::take<int32_t>(bytes, off);
    m.trees.resize(n_trees);
    for (auto& t : m.trees) {
        const auto n_nodes = io::detail::take<uint32_t>(bytes, off);
        t.nodes.resize(n_nodes);
        for (auto& n : t.nodes) {
            n.feature = io::detail::take<int32_t>(bytes, off);
            n.threshold = io::detail::take<double>(bytes, off);
            n.left = io::detail::take<int32_t>(bytes, off);
            n.right = io::detail::take<int32_t>(bytes, off);
            n.vote = io::detail::take<uint8_t>(bytes, off);
        }
    }
    return m;
}

inline std::string max_features_name(MaxFeatures mf) { return mf == MaxFeatures::Log2 ? "log2" : "sqrt"; }

}  // namespace cussp::cls

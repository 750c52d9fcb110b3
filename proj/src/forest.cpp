#include "krfws/forest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace krfws {

namespace {

double sq_dist(const Eigen::MatrixXd& Y, int col, const Eigen::VectorXd& c) {
    return (Y.col(col).cast<double>() - c).squaredNorm();
}

struct LloydRun {
    Eigen::MatrixXd centroids;
    std::vector<int> assignment;
    double sse = std::numeric_limits<double>::infinity();
};

// One k-means++ seeding + Lloyd run. Returns false when fewer than K distinct
// targets exist among idx.
bool lloyd_once(const Eigen::MatrixXd& Y, std::span<const int> idx, int K, Rng& rng,
                LloydRun& run) {
    const int n = static_cast<int>(idx.size());
    const int dim = static_cast<int>(Y.rows());

    // k-means++ seeding
    Eigen::MatrixXd centroids(dim, K);
    std::vector<double> d2(static_cast<std::size_t>(n));
    centroids.col(0) = Y.col(idx[rng.uniform_index(static_cast<std::uint64_t>(n))]);
    for (int k = 1; k < K; ++k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j)
                best = std::min(best, sq_dist(Y, idx[static_cast<std::size_t>(i)], centroids.col(j)));
            d2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        if (total <= 0.0) return false;  // < K distinct targets
        double pick = rng.uniform01() * total;
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            pick -= d2[static_cast<std::size_t>(i)];
            if (pick <= 0.0) {
                chosen = i;
                break;
            }
        }
        centroids.col(k) = Y.col(idx[static_cast<std::size_t>(chosen)]);
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (int pass = 0; pass < 100; ++pass) {
        bool changed = false;
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            int best_k = 0;
            double best = sq_dist(Y, idx[static_cast<std::size_t>(i)], centroids.col(0));
            for (int k = 1; k < K; ++k) {
                const double d = sq_dist(Y, idx[static_cast<std::size_t>(i)], centroids.col(k));
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            if (assignment[static_cast<std::size_t>(i)] != best_k) {
                assignment[static_cast<std::size_t>(i)] = best_k;
                changed = true;
            }
            ++counts[static_cast<std::size_t>(best_k)];
        }

        // Re-seed any emptied cluster with the point farthest from its centroid.
        for (int k = 0; k < K; ++k) {
            if (counts[static_cast<std::size_t>(k)] > 0) continue;
            int far_i = 0;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                const double d = sq_dist(Y, idx[static_cast<std::size_t>(i)],
                                         centroids.col(assignment[static_cast<std::size_t>(i)]));
                if (d > far_d && counts[static_cast<std::size_t>(
                                     assignment[static_cast<std::size_t>(i)])] > 1) {
                    far_d = d;
                    far_i = i;
                }
            }
            --counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(far_i)])];
            assignment[static_cast<std::size_t>(far_i)] = k;
            ++counts[static_cast<std::size_t>(k)];
            changed = true;
        }

        centroids.setZero();
        for (int i = 0; i < n; ++i)
            centroids.col(assignment[static_cast<std::size_t>(i)]) +=
                Y.col(idx[static_cast<std::size_t>(i)]);
        for (int k = 0; k < K; ++k)
            centroids.col(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);

        if (!changed) break;
    }

    double sse = 0.0;
    for (int i = 0; i < n; ++i)
        sse += sq_dist(Y, idx[static_cast<std::size_t>(i)],
                       centroids.col(assignment[static_cast<std::size_t>(i)]));

    run.centroids = std::move(centroids);
    run.assignment = std::move(assignment);
    run.sse = sse;
    return true;
}

// K=2 polish: the optimal 2-means partition is an interval split of the
// points ordered along some direction. Project onto the current
// inter-centroid axis, evaluate every interval split by prefix sums, and
// repeat while the SSE improves. Escapes Lloyd's local optima cheaply.
void refine_two_cluster(const Eigen::MatrixXd& Y, std::span<const int> idx, LloydRun& run) {
    const int n = static_cast<int>(idx.size());
    const int dim = static_cast<int>(Y.rows());

    for (int round = 0; round < 8; ++round) {
        const Eigen::VectorXd axis = run.centroids.col(1) - run.centroids.col(0);
        if (axis.squaredNorm() <= 0.0) return;

        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> proj(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            proj[static_cast<std::size_t>(i)] = axis.dot(Y.col(idx[static_cast<std::size_t>(i)]));
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return proj[static_cast<std::size_t>(a)] <
                                             proj[static_cast<std::size_t>(b)]; });

        // prefix sums of y and |y|^2 in projection order
        Eigen::MatrixXd sum_pre(dim, n + 1);
        Eigen::VectorXd sq_pre(n + 1);
        sum_pre.col(0).setZero();
        sq_pre[0] = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto y = Y.col(idx[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
            sum_pre.col(i + 1) = sum_pre.col(i) + y;
            sq_pre[i + 1] = sq_pre[i] + y.squaredNorm();
        }
        const double total_sq = sq_pre[n];
        const Eigen::VectorXd total_sum = sum_pre.col(n);

        int best_cut = -1;
        double best_sse = run.sse;
        for (int cut = 1; cut < n; ++cut) {
            const double sse = (sq_pre[cut] - sum_pre.col(cut).squaredNorm() / cut) +
                               ((total_sq - sq_pre[cut]) -
                                (total_sum - sum_pre.col(cut)).squaredNorm() / (n - cut));
            if (sse < best_sse - 1e-12) {
                best_sse = sse;
                best_cut = cut;
            }
        }
        if (best_cut < 0) return;

        run.sse = best_sse;
        run.centroids.col(0) = sum_pre.col(best_cut) / best_cut;
        run.centroids.col(1) = (total_sum - sum_pre.col(best_cut)) / (n - best_cut);
        for (int i = 0; i < n; ++i)
            run.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
                i < best_cut ? 0 : 1;
    }
}

}  // namespace

KMeansResult kmeans_targets(const Eigen::MatrixXd& Y, std::span<const int> idx, int K,
                            Rng& rng, int restarts) {
    if (K < 2) throw UsageError("kmeans_targets: K must be >= 2");
    if (static_cast<int>(idx.size()) < K)
        throw DataError("kmeans_targets: fewer samples than clusters");
    if (restarts < 1) restarts = 1;

    LloydRun best;
    bool any = false;
    for (int r = 0; r < restarts; ++r) {
        LloydRun run;
        if (!lloyd_once(Y, idx, K, rng, run)) continue;
        if (K == 2) refine_two_cluster(Y, idx, run);
        any = true;
        if (run.sse < best.sse) best = std::move(run);
    }
    if (!any) throw DataError("kmeans_targets: fewer than K distinct targets");

    KMeansResult result;
    result.centroids = std::move(best.centroids);
    result.assignment = std::move(best.assignment);
    result.sse = best.sse;
    return result;
}

SplitWeights split_weights(const Eigen::MatrixXd& Y, std::span<const int> idx,
                           const Eigen::VectorXd& c1, const Eigen::VectorXd& c2) {
    if (idx.empty()) throw DataError("split_weights: empty node");
    const Eigen::VectorXd diff = c2 - c1;
    const double norm = diff.norm();
    if (norm == 0.0) throw NumericError("split_weights: coincident centroids");

    const Eigen::VectorXd unit = diff / norm;
    const Eigen::VectorXd mid = 0.5 * (c1 + c2);

    SplitWeights sw;
    const int n = static_cast<int>(idx.size());
    sw.v.resize(n);
    for (int i = 0; i < n; ++i)
        sw.v[i] = (Y.col(idx[static_cast<std::size_t>(i)]) - mid).dot(unit);

    const double max_abs = sw.v.cwiseAbs().maxCoeff();
    sw.w.resize(n);
    if (max_abs == 0.0) {
        sw.w.setOnes();  // every target on the bisector; degenerate but valid
    } else {
        sw.w = sw.v.cwiseAbs() / max_abs;
    }
    return sw;
}

// ----------------------------------------------------------------------------

namespace {

bool all_targets_identical(const Eigen::MatrixXd& Y, std::span<const int> idx) {
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (Y.col(idx[i]) != Y.col(idx[0])) return false;
    return true;
}

Eigen::VectorXd mean_target(const Eigen::MatrixXd& Y, std::span<const int> idx) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(Y.rows());
    for (int i : idx) m += Y.col(i);
    return m / static_cast<double>(idx.size());
}

struct TreeBuilder {
    const Eigen::MatrixXf& X;
    const Eigen::MatrixXd& Y;
    const TreeParams& params;
    Rng& rng;
    KTree tree;

    std::int32_t make_leaf(std::span<const int> idx) {
        TreeNode node;
        node.leaf_mean = mean_target(Y, idx);
        node.leaf_index = tree.n_leaves++;
        tree.nodes.push_back(std::move(node));
        return static_cast<std::int32_t>(tree.nodes.size()) - 1;
    }

    std::int32_t build(std::vector<int>& idx, int depth) {
        if (static_cast<int>(idx.size()) < params.min_samples || depth >= params.max_depth ||
            all_targets_identical(Y, idx))
            return make_leaf(idx);

        KMeansResult km;
        try {
            km = kmeans_targets(Y, idx, params.K, rng);
        } catch (const DataError&) {
            return make_leaf(idx);  // fewer than K distinct targets
        }

        const int n = static_cast<int>(idx.size());
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            labels[static_cast<std::size_t>(i)] = km.assignment[static_cast<std::size_t>(i)] + 1;

        // Eq. 1-2 weights drive the split classifier for K=2; the generalized
        // weighting is out of scope, so K>2 trains with uniform weights.
        std::vector<double> weights(static_cast<std::size_t>(n), 1.0);
        if (params.weighted && params.K == 2) {
            const SplitWeights sw = split_weights(Y, idx, km.centroids.col(0), km.centroids.col(1));
            for (int i = 0; i < n; ++i) weights[static_cast<std::size_t>(i)] = sw.w[i];
            std::array<double, 2> class_weight{0.0, 0.0};
            for (int i = 0; i < n; ++i)
                class_weight[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)] - 1)] +=
                    weights[static_cast<std::size_t>(i)];
            // A cluster whose members all sit on the bisector would starve the
            // classifier; retreat to uniform weights for this split.
            if (class_weight[0] <= 0.0 || class_weight[1] <= 0.0)
                std::fill(weights.begin(), weights.end(), 1.0);
        }

        std::vector<LinearModel> models =
            train_weighted_svm(X, idx, labels, weights, params.K, params.svm, rng);

        std::vector<std::vector<int>> routed(static_cast<std::size_t>(params.K));
        for (int i : idx) {
            const int c = predict_class(models, X.col(i));
            routed[static_cast<std::size_t>(c - 1)].push_back(i);
        }
        for (const auto& child : routed)
            if (child.empty()) return make_leaf(idx);  // degenerate split

        const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[static_cast<std::size_t>(node_id)].models = std::move(models);
        tree.nodes[static_cast<std::size_t>(node_id)].children.assign(
            static_cast<std::size_t>(params.K), -1);

        idx.clear();
        idx.shrink_to_fit();
        for (int k = 0; k < params.K; ++k) {
            const std::int32_t child = build(routed[static_cast<std::size_t>(k)], depth + 1);
            tree.nodes[static_cast<std::size_t>(node_id)].children[static_cast<std::size_t>(k)] =
                child;
        }
        return node_id;
    }
};

}  // namespace

KTree train_tree(const Eigen::MatrixXf& X, const Eigen::MatrixXd& Y,
                 std::span<const int> idx, const TreeParams& params, Rng rng) {
    if (idx.empty()) throw DataError("train_tree: empty training set");
    if (X.cols() != Y.cols()) throw UsageError("train_tree: X/Y sample count mismatch");
    if (params.K < 2) throw UsageError("train_tree: K must be >= 2");

    TreeBuilder builder{X, Y, params, rng, {}};
    builder.tree.params = params;
    builder.tree.feature_dim = static_cast<int>(X.rows());
    builder.tree.target_dim = static_cast<int>(Y.rows());
    std::vector<int> root_idx(idx.begin(), idx.end());
    builder.build(root_idx, 0);
    return std::move(builder.tree);
}

namespace {

const TreeNode& route_to_leaf(const KTree& tree, const Eigen::Ref<const Eigen::VectorXf>& x) {
    if (x.size() != tree.feature_dim)
        throw UsageError("predict: feature dimension mismatch");
    const TreeNode* node = &tree.nodes[0];
    while (!node->is_leaf()) {
        const int c = predict_class(node->models, x);
        node = &tree.nodes[static_cast<std::size_t>(node->children[static_cast<std::size_t>(c - 1)])];
    }
    return *node;
}

}  // namespace

Eigen::VectorXd predict(const KTree& tree, const Eigen::Ref<const Eigen::VectorXf>& x) {
    return route_to_leaf(tree, x).leaf_mean;
}

std::int32_t leaf_of(const KTree& tree, const Eigen::Ref<const Eigen::VectorXf>& x) {
    return route_to_leaf(tree, x).leaf_index;
}

// ----------------------------------------------------------------------------

std::int32_t KForest::total_leaves() const {
    std::int32_t total = 0;
    for (const KTree& t : trees) total += t.n_leaves;
    return total;
}

KForest train_forest(const Eigen::MatrixXf& X, const Eigen::MatrixXd& Y,
                     const ForestParams& params, std::uint64_t seed) {
    if (X.cols() == 0) throw DataError("train_forest: empty training set");
    if (X.cols() != Y.cols()) throw UsageError("train_forest: X/Y sample count mismatch");
    if (params.n_trees < 1) throw UsageError("train_forest: need at least one tree");
    if (!(params.bagging_fraction > 0.0 && params.bagging_fraction <= 1.0))
        throw UsageError("train_forest: bagging_fraction must be in (0, 1]");

    const int n = static_cast<int>(X.cols());
    const int bag = std::min(
        n, static_cast<int>(std::ceil(params.bagging_fraction * static_cast<double>(n))));

    KForest forest;
    forest.params = params;
    forest.seed = seed;
    forest.feature_dim = static_cast<int>(X.rows());
    forest.target_dim = static_cast<int>(Y.rows());
    forest.trees.resize(static_cast<std::size_t>(params.n_trees));

    const Rng base(seed);
    parallel_for(params.n_trees, [&](int t) {
        Rng rng = base.child(static_cast<std::uint64_t>(t));
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        rng.shuffle(all);
        all.resize(static_cast<std::size_t>(bag));
        forest.trees[static_cast<std::size_t>(t)] = train_tree(X, Y, all, params.tree, rng);
    });
    return forest;
}

Eigen::VectorXd predict(const KForest& forest, const Eigen::Ref<const Eigen::VectorXf>& x) {
    if (forest.trees.empty()) throw UsageError("predict: empty forest");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(forest.target_dim);
    for (const KTree& t : forest.trees) sum += predict(t, x);
    return sum / static_cast<double>(forest.trees.size());
}

LeafCode leaf_code(const KForest& forest, const Eigen::Ref<const Eigen::VectorXf>& x) {
    LeafCode code;
    code.active.reserve(forest.trees.size());
    std::int32_t offset = 0;
    for (const KTree& t : forest.trees) {
        code.active.push_back(offset + leaf_of(t, x));
        offset += t.n_leaves;
    }
    code.length = offset;
    return code;
}

}  // namespace krfws

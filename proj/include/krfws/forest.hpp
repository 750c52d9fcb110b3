#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "krfws/linclf.hpp"

namespace krfws {

// ============================================================================
// K-cluster regression forests with weighted splitting
// ============================================================================
//
// Splitting works on the target space: samples in a node are k-means
// clustered on their targets, each sample is weighted by its normalized
// distance to the inter-centroid bisector, and a weighted linear SVM is
// trained on the input features to reproduce the cluster partition. Leaves
// predict the mean target of their training samples.

struct KMeansResult {
    Eigen::MatrixXd centroids;    // target_dim x K
    std::vector<int> assignment;  // aligned with the input index span, 0..K-1
    double sse = 0.0;             // within-cluster sum of squared errors
};

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs by SSE.
/// Targets are the columns of Y selected by idx. Throws DataError when there
/// are fewer than K distinct targets.
KMeansResult kmeans_targets(const Eigen::MatrixXd& Y, std::span<const int> idx, int K,
                            Rng& rng, int restarts = 5);

struct SplitWeights {
    Eigen::VectorXd v;  // signed distance of each target to the bisector hyperplane
    Eigen::VectorXd w;  // |v| / max |v|, in [0, 1], at least one entry exactly 1
};

/// Signed distance of each selected target to the hyperplane bisecting the
/// segment c1-c2, normalized by the node maximum. Throws on c1 == c2.
SplitWeights split_weights(const Eigen::MatrixXd& Y, std::span<const int> idx,
                           const Eigen::VectorXd& c1, const Eigen::VectorXd& c2);

// ----------------------------------------------------------------------------

struct TreeNode {
    std::vector<std::int32_t> children;  // K entries when internal, empty at leaves
    std::vector<LinearModel> models;     // 1 model for K=2, K one-vs-rest otherwise
    Eigen::VectorXd leaf_mean;
    std::int32_t leaf_index = -1;  // dense 0..L-1 over the tree's leaves

    bool is_leaf() const { return children.empty(); }
};

struct TreeParams {
    int K = 2;
    int max_depth = 7;
    int min_samples = 5;
    bool weighted = true;  // false reproduces the unweighted baseline splits
    SvmParams svm;
};

struct KTree {
    TreeParams params;
    int feature_dim = 0;
    int target_dim = 0;
    std::int32_t n_leaves = 0;
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

/// Recursive split training over the columns of X (features) and Y (targets)
/// selected by idx. A node becomes a leaf when it has fewer than min_samples
/// samples, sits at max_depth, has fewer than K distinct targets, or its
/// split classifier routes every sample to one child.
KTree train_tree(const Eigen::MatrixXf& X, const Eigen::MatrixXd& Y,
                 std::span<const int> idx, const TreeParams& params, Rng rng);

Eigen::VectorXd predict(const KTree& tree, const Eigen::Ref<const Eigen::VectorXf>& x);

/// Index of the leaf x routes to, in 0..n_leaves-1.
std::int32_t leaf_of(const KTree& tree, const Eigen::Ref<const Eigen::VectorXf>& x);

// ----------------------------------------------------------------------------

struct ForestParams {
    TreeParams tree;
    int n_trees = 5;
    double bagging_fraction = 0.63;  // per-tree subsample, without replacement
};

struct KForest {
    ForestParams params;
    std::uint64_t seed = 0;
    int feature_dim = 0;
    int target_dim = 0;
    std::vector<KTree> trees;

    std::int32_t total_leaves() const;
};

/// Bagged ensemble; tree t trains on ceil(bagging_fraction * N) samples drawn
/// without replacement from a stream seeded by (seed, t), so results do not
/// depend on training order or thread count. Trees train concurrently.
KForest train_forest(const Eigen::MatrixXf& X, const Eigen::MatrixXd& Y,
                     const ForestParams& params, std::uint64_t seed);

/// Unweighted average of the tree predictions.
Eigen::VectorXd predict(const KForest& forest, const Eigen::Ref<const Eigen::VectorXf>& x);

/// Sparse one-hot-per-tree leaf encoding over the forest's concatenated leaf
/// space: exactly one active position per tree.
struct LeafCode {
    std::vector<std::int32_t> active;
    std::int32_t length = 0;
};

LeafCode leaf_code(const KForest& forest, const Eigen::Ref<const Eigen::VectorXf>& x);

// ----------------------------------------------------------------------------
// Versioned binary container (documented in docs/formats.md); round-trips are
// bit-exact.

void write_forest(std::ostream& out, const KForest& forest);
KForest read_forest(std::istream& in);
void save_forest(const std::string& path, const KForest& forest);
KForest load_forest(const std::string& path);

}  // namespace krfws

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "krfws/forest.hpp"

using namespace krfws;

namespace {

std::vector<int> iota_idx(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

// Exhaustive minimum within-cluster SSE over every 2-partition. Oracle for
// the k-means splits; independent of the production clustering path.
double brute_force_best_2partition(const Eigen::MatrixXd& Y) {
    const int n = static_cast<int>(Y.cols());
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        Eigen::VectorXd c1 = Eigen::VectorXd::Zero(Y.rows());
        Eigen::VectorXd c2 = Eigen::VectorXd::Zero(Y.rows());
        int n1 = 0, n2 = 0;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                c1 += Y.col(i);
                ++n1;
            } else {
                c2 += Y.col(i);
                ++n2;
            }
        }
        c1 /= n1;
        c2 /= n2;
        double sse = 0.0;
        for (int i = 0; i < n; ++i)
            sse += (Y.col(i) - ((mask & (1u << i)) ? c1 : c2)).squaredNorm();
        best = std::min(best, sse);
    }
    return best;
}

Eigen::VectorXf vecf(std::initializer_list<float> vals) {
    Eigen::VectorXf v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (float x : vals) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("kmeans separates 1-D targets {0,1,10,11} optimally") {
    Eigen::MatrixXd Y(1, 4);
    Y << 0, 1, 10, 11;
    Rng rng(42);
    const KMeansResult km = kmeans_targets(Y, iota_idx(4), 2, rng);

    CHECK(km.assignment[0] == km.assignment[1]);
    CHECK(km.assignment[2] == km.assignment[3]);
    CHECK(km.assignment[0] != km.assignment[2]);

    std::vector<double> centroids{km.centroids(0, 0), km.centroids(0, 1)};
    std::sort(centroids.begin(), centroids.end());
    CHECK(centroids[0] == doctest::Approx(0.5));
    CHECK(centroids[1] == doctest::Approx(10.5));
    CHECK(km.sse == doctest::Approx(brute_force_best_2partition(Y)));
}

TEST_CASE("kmeans splits two identical point groups with zero SSE") {
    Eigen::MatrixXd Y(2, 6);
    Y << 0, 0, 0, 5, 5, 5, 0, 0, 0, 5, 5, 5;
    Rng rng(7);
    const KMeansResult km = kmeans_targets(Y, iota_idx(6), 2, rng);
    CHECK(km.sse == doctest::Approx(0.0));
    CHECK(km.assignment[0] == km.assignment[1]);
    CHECK(km.assignment[3] == km.assignment[4]);
    CHECK(km.assignment[0] != km.assignment[3]);
}

TEST_CASE("kmeans on two samples returns singleton clusters") {
    Eigen::MatrixXd Y(2, 2);
    Y << 1, 4, 2, 6;
    Rng rng(3);
    const KMeansResult km = kmeans_targets(Y, iota_idx(2), 2, rng);
    CHECK(km.sse == doctest::Approx(0.0));
    CHECK(km.assignment[0] != km.assignment[1]);
}

TEST_CASE("kmeans rejects fewer than K distinct targets") {
    Eigen::MatrixXd Y(1, 4);
    Y << 3, 3, 3, 3;
    Rng rng(5);
    CHECK_THROWS_AS(kmeans_targets(Y, iota_idx(4), 2, rng), DataError);
}

TEST_CASE("kmeans beats 1000 random 2-partitions") {
    Rng data_rng(99);
    Eigen::MatrixXd Y(3, 40);
    for (int i = 0; i < 40; ++i)
        for (int r = 0; r < 3; ++r) Y(r, i) = data_rng.normal(i % 2 ? 2.0 : -2.0, 1.0);
    Rng rng(100);
    const KMeansResult km = kmeans_targets(Y, iota_idx(40), 2, rng);

    Rng part_rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::VectorXd c1 = Eigen::VectorXd::Zero(3), c2 = Eigen::VectorXd::Zero(3);
        std::vector<int> side(40);
        int n1 = 0, n2 = 0;
        for (int i = 0; i < 40; ++i) {
            side[static_cast<std::size_t>(i)] = part_rng.uniform01() < 0.5 ? 0 : 1;
            (side[static_cast<std::size_t>(i)] ? c2 : c1) += Y.col(i);
            ++(side[static_cast<std::size_t>(i)] ? n2 : n1);
        }
        if (n1 == 0 || n2 == 0) continue;
        c1 /= n1;
        c2 /= n2;
        double sse = 0.0;
        for (int i = 0; i < 40; ++i)
            sse += (Y.col(i) - (side[static_cast<std::size_t>(i)] ? c2 : c1)).squaredNorm();
        CHECK(km.sse <= sse + 1e-9);
    }
}

TEST_CASE("split_weights matches the hand-evaluated bisector distances") {
    // c1=(0,0), c2=(2,0): bisector is x=1; y=(1.5,3) sits 0.5 past it
    Eigen::MatrixXd Y(2, 2);
    Y << 1.5, 1.2, 3.0, 0.0;
    Eigen::VectorXd c1(2), c2(2);
    c1 << 0, 0;
    c2 << 2, 0;
    const SplitWeights sw = split_weights(Y, iota_idx(2), c1, c2);
    CHECK(sw.v[0] == doctest::Approx(0.5));
    CHECK(sw.v[1] == doctest::Approx(0.2));
    CHECK(sw.w[0] == 1.0);
    CHECK(sw.w[1] == doctest::Approx(0.4));
}

TEST_CASE("a target on the bisector midpoint gets weight zero") {
    Eigen::MatrixXd Y(2, 3);
    Y << 1.0, 0.0, 2.0, 0.0, 0.5, -0.5;
    Eigen::VectorXd c1(2), c2(2);
    c1 << 0, 0;
    c2 << 2, 0;
    const SplitWeights sw = split_weights(Y, iota_idx(3), c1, c2);
    CHECK(sw.v[0] == doctest::Approx(0.0));
    CHECK(sw.w[0] == doctest::Approx(0.0));
    CHECK(sw.w.maxCoeff() == 1.0);
}

TEST_CASE("mirror-symmetric targets get equal weights") {
    Eigen::VectorXd c1(2), c2(2);
    c1 << -1, 0;
    c2 << 1, 0;
    Eigen::MatrixXd Y(2, 2);
    Y << 0.7, -0.7, 2.0, 2.0;  // mirrored across x=0
    const SplitWeights sw = split_weights(Y, iota_idx(2), c1, c2);
    CHECK(sw.w[0] == doctest::Approx(sw.w[1]));
    CHECK(sw.v[0] == doctest::Approx(-sw.v[1]));
}

TEST_CASE("split_weights rejects coincident centroids") {
    Eigen::MatrixXd Y(1, 2);
    Y << 0, 1;
    Eigen::VectorXd c(1);
    c << 0.5;
    CHECK_THROWS_AS(split_weights(Y, iota_idx(2), c, c), NumericError);
}

TEST_CASE("identical targets train to a single-leaf tree") {
    Eigen::MatrixXf X(2, 6);
    X.setRandom();
    Eigen::MatrixXd Y(2, 6);
    for (int i = 0; i < 6; ++i) Y.col(i) << 3.0, -1.0;
    const KTree tree = train_tree(X, Y, iota_idx(6), {}, Rng(1));
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.n_leaves == 1);
    CHECK(predict(tree, vecf({9.0f, 9.0f}))[0] == doctest::Approx(3.0));
    CHECK(predict(tree, vecf({9.0f, 9.0f}))[1] == doctest::Approx(-1.0));
}

TEST_CASE("fewer samples than min_samples stops splitting") {
    Eigen::MatrixXf X(1, 4);
    X << -1, -1, 1, 1;
    Eigen::MatrixXd Y(1, 4);
    Y << 0, 0, 10, 10;
    TreeParams p;
    p.min_samples = 5;
    const KTree tree = train_tree(X, Y, iota_idx(4), p, Rng(1));
    CHECK(tree.n_leaves == 1);
    CHECK(predict(tree, vecf({1.0f}))[0] == doctest::Approx(5.0));
}

TEST_CASE("perfectly predictive features give a depth-1 tree hitting cluster means") {
    const int n = 20;
    Eigen::MatrixXf X(1, n);
    Eigen::MatrixXd Y(1, n);
    Rng data_rng(55);
    for (int i = 0; i < n; ++i) {
        const bool hi = i % 2 == 0;
        X(0, i) = hi ? 1.0f : -1.0f;
        Y(0, i) = (hi ? 10.0 : 0.0) + data_rng.uniform(-0.5, 0.5);
    }
    TreeParams p;
    p.max_depth = 1;
    p.min_samples = 2;
    const KTree tree = train_tree(X, Y, iota_idx(n), p, Rng(4));
    CHECK(tree.n_leaves == 2);

    // oracle: k-means on the two clear clusters = the two class means
    double mean_lo = 0, mean_hi = 0;
    for (int i = 0; i < n; ++i) (i % 2 == 0 ? mean_hi : mean_lo) += Y(0, i);
    mean_lo /= n / 2;
    mean_hi /= n / 2;
    CHECK(predict(tree, vecf({1.0f}))[0] == doctest::Approx(mean_hi));
    CHECK(predict(tree, vecf({-1.0f}))[0] == doctest::Approx(mean_lo));

    // training SSE equals the within-cluster SSE of the k-means partition
    double sse_tree = 0, sse_oracle = 0;
    for (int i = 0; i < n; ++i) {
        const double pred = predict(tree, X.col(i))[0];
        sse_tree += (Y(0, i) - pred) * (Y(0, i) - pred);
        const double c = i % 2 == 0 ? mean_hi : mean_lo;
        sse_oracle += (Y(0, i) - c) * (Y(0, i) - c);
    }
    CHECK(sse_tree == doctest::Approx(sse_oracle));
}

TEST_CASE("forest prediction averages its trees") {
    KTree t1, t2;
    t1.feature_dim = t2.feature_dim = 1;
    t1.target_dim = t2.target_dim = 2;
    t1.n_leaves = t2.n_leaves = 1;
    TreeNode leaf1, leaf2;
    leaf1.leaf_mean = Eigen::Vector2d(0.0, 0.0);
    leaf1.leaf_index = 0;
    leaf2.leaf_mean = Eigen::Vector2d(2.0, 2.0);
    leaf2.leaf_index = 0;
    t1.nodes.push_back(leaf1);
    t2.nodes.push_back(leaf2);

    KForest forest;
    forest.feature_dim = 1;
    forest.target_dim = 2;
    forest.params.n_trees = 2;
    forest.trees = {t1, t2};

    const Eigen::VectorXd out = predict(forest, vecf({0.5f}));
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(1.0));

    // permutation invariance in tree order
    std::swap(forest.trees[0], forest.trees[1]);
    const Eigen::VectorXd out2 = predict(forest, vecf({0.5f}));
    CHECK(std::fabs(out2[0] - out[0]) < 1e-12);
    CHECK(std::fabs(out2[1] - out[1]) < 1e-12);
}

TEST_CASE("leaf codes have one active bit per tree and are deterministic") {
    const int n = 60;
    Eigen::MatrixXf X(2, n);
    Eigen::MatrixXd Y(2, n);
    Rng data_rng(8);
    for (int i = 0; i < n; ++i) {
        X(0, i) = static_cast<float>(data_rng.normal());
        X(1, i) = static_cast<float>(data_rng.normal());
        Y(0, i) = X(0, i) > 0 ? 1.0 : -1.0;
        Y(1, i) = X(1, i);
    }
    ForestParams p;
    p.n_trees = 5;
    p.tree.max_depth = 3;
    p.tree.min_samples = 4;
    const KForest forest = train_forest(X, Y, p, 123);

    const Eigen::VectorXf x = vecf({0.3f, -0.7f});
    const LeafCode code = leaf_code(forest, x);
    CHECK(code.active.size() == 5);
    CHECK(code.length == forest.total_leaves());
    std::int32_t offset = 0;
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        CHECK(code.active[t] >= offset);
        CHECK(code.active[t] < offset + forest.trees[t].n_leaves);
        offset += forest.trees[t].n_leaves;
    }
    const LeafCode again = leaf_code(forest, x);
    CHECK(code.active == again.active);
}

TEST_CASE("forest training is reproducible from its seed") {
    const int n = 50;
    Eigen::MatrixXf X(3, n);
    Eigen::MatrixXd Y(1, n);
    Rng data_rng(12);
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < 3; ++r) X(r, i) = static_cast<float>(data_rng.normal());
        Y(0, i) = X(0, i) * 2.0 + data_rng.normal() * 0.1;
    }
    ForestParams p;
    p.n_trees = 4;
    p.tree.max_depth = 4;
    p.tree.min_samples = 3;
    const KForest f1 = train_forest(X, Y, p, 77);
    const KForest f2 = train_forest(X, Y, p, 77);

    std::ostringstream s1, s2;
    write_forest(s1, f1);
    write_forest(s2, f2);
    CHECK(s1.str() == s2.str());
}

TEST_CASE("forest serialization round-trips bit-exactly") {
    const int n = 40;
    Eigen::MatrixXf X(2, n);
    Eigen::MatrixXd Y(2, n);
    Rng data_rng(31);
    for (int i = 0; i < n; ++i) {
        X(0, i) = static_cast<float>(data_rng.normal());
        X(1, i) = static_cast<float>(data_rng.normal());
        Y(0, i) = X(0, i) + 0.3 * data_rng.normal();
        Y(1, i) = X(1, i) - X(0, i);
    }
    ForestParams p;
    p.n_trees = 3;
    p.tree.max_depth = 3;
    const KForest forest = train_forest(X, Y, p, 2024);

    std::stringstream buf;
    write_forest(buf, forest);
    const std::string first = buf.str();
    const KForest loaded = read_forest(buf);

    std::ostringstream buf2;
    write_forest(buf2, loaded);
    CHECK(first == buf2.str());

    // predictions identical through the round trip
    Rng probe(5);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXf x(2);
        x << static_cast<float>(probe.normal()), static_cast<float>(probe.normal());
        CHECK(predict(forest, x) == predict(loaded, x));
        CHECK(leaf_code(forest, x).active == leaf_code(loaded, x).active);
    }
}

TEST_CASE("kmeans split equals brute-force optimum on small nodes") {
    int hits = 0;
    const int cases = 100;
    for (int c = 0; c < cases; ++c) {
        Rng rng(500 + static_cast<std::uint64_t>(c));
        const int n = 6 + static_cast<int>(rng.uniform_index(7));  // 6..12
        const int dim = 1 + static_cast<int>(rng.uniform_index(3));
        Eigen::MatrixXd Y(dim, n);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < dim; ++r) Y(r, i) = rng.normal(i % 2 ? 1.5 : -1.5, 1.0);
        Rng km_rng = rng.child(1);
        const KMeansResult km = kmeans_targets(Y, iota_idx(n), 2, km_rng);
        const double best = brute_force_best_2partition(Y);
        CHECK(km.sse <= 1.10 * best + 1e-12);
        if (km.sse <= best + 1e-9) ++hits;
    }
    CHECK(hits >= 95);
}

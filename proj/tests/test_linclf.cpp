#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "krfws/forest.hpp"
#include "krfws/linclf.hpp"

using namespace krfws;

namespace {

// Independent reference: cyclic (unshuffled, unshrunk) projected coordinate
// descent on the same dual, run to a tight tolerance. Kept deliberately
// separate from the production solver.
LinearModel reference_solve(const std::vector<Eigen::VectorXf>& xs,
                            const std::vector<int>& labels, double cost, int epochs) {
    const int n = static_cast<int>(xs.size());
    const int dim = static_cast<int>(xs[0].size());
    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    double bias = 0.0;
    for (int e = 0; e < epochs; ++e) {
        for (int i = 0; i < n; ++i) {
            const double yi = labels[static_cast<std::size_t>(i)] == 2 ? 1.0 : -1.0;
            const Eigen::VectorXd x = xs[static_cast<std::size_t>(i)].cast<double>();
            const double qd = x.squaredNorm() + 1.0;
            const double g = yi * (w.dot(x) + bias) - 1.0;
            const double a_old = alpha[static_cast<std::size_t>(i)];
            const double a_new = std::min(std::max(a_old - g / qd, 0.0), cost);
            alpha[static_cast<std::size_t>(i)] = a_new;
            w += (a_new - a_old) * yi * x;
            bias += (a_new - a_old) * yi;
        }
    }
    return {w, bias};
}

std::vector<WeightedSample> make_samples(const std::vector<Eigen::VectorXf>& xs,
                                         const std::vector<int>& labels,
                                         const std::vector<double>& weights) {
    std::vector<WeightedSample> s;
    for (std::size_t i = 0; i < xs.size(); ++i) s.push_back({xs[i], labels[i], weights[i]});
    return s;
}

Eigen::VectorXf vec1(float x) {
    Eigen::VectorXf v(1);
    v << x;
    return v;
}

// SSE of the partition induced by routing samples through the classifier.
double routed_sse(const std::vector<LinearModel>& models,
                  const std::vector<Eigen::VectorXf>& xs, const std::vector<double>& ys) {
    double sum[2] = {0, 0};
    int count[2] = {0, 0};
    std::vector<int> side(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        side[i] = predict_class(models, xs[i]) - 1;
        sum[side[i]] += ys[i];
        ++count[side[i]];
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (count[side[i]] == 0) continue;
        const double mean = sum[side[i]] / count[side[i]];
        sse += (ys[i] - mean) * (ys[i] - mean);
    }
    return sse;
}

}  // namespace

TEST_CASE("symmetric separable pair splits at the origin") {
    Rng rng(1);
    const auto models = train_weighted_svm(
        make_samples({vec1(-1.0f), vec1(1.0f)}, {1, 2}, {1.0, 1.0}), {100.0, 1e-6, 5000}, rng);
    REQUIRE(models.size() == 1);
    CHECK(predict_class(models, vec1(-1.0f)) == 1);
    CHECK(predict_class(models, vec1(1.0f)) == 2);
    CHECK(predict_class(models, vec1(-0.2f)) == 1);
    CHECK(predict_class(models, vec1(0.2f)) == 2);
    // boundary near zero by symmetry
    CHECK(std::fabs(models[0].bias / models[0].weights[0]) < 1e-3);
}

TEST_CASE("separable 2-D data reaches training accuracy 1 for large C") {
    Rng rng(2);
    std::vector<Eigen::VectorXf> xs;
    std::vector<int> labels;
    Rng data_rng(77);
    for (int i = 0; i < 40; ++i) {
        Eigen::VectorXf x(2);
        const int cls = i % 2 ? 2 : 1;
        const double off = cls == 2 ? 2.0 : -2.0;
        x << static_cast<float>(off + data_rng.normal() * 0.4),
            static_cast<float>(data_rng.normal() * 0.4);
        xs.push_back(x);
        labels.push_back(cls);
    }
    const auto models = train_weighted_svm(
        make_samples(xs, labels, std::vector<double>(xs.size(), 1.0)), {100.0, 1e-4, 5000}, rng);
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(predict_class(models, xs[i]) == labels[i]);
}

TEST_CASE("predict_class sign and tie rules") {
    LinearModel m{vec1(1.0f).cast<double>(), 0.0};
    std::vector<LinearModel> binary{m};
    CHECK(predict_class(binary, vec1(2.0f)) == 2);   // positive side
    CHECK(predict_class(binary, vec1(0.0f)) == 1);   // on the hyperplane
    CHECK(predict_class(binary, vec1(-2.0f)) == 1);

    // one-vs-rest tie: equal scores resolve to the lowest class id
    std::vector<LinearModel> ovr{{Eigen::VectorXd::Zero(1), 0.3}, {Eigen::VectorXd::Zero(1), 0.3}};
    CHECK(predict_class(ovr, vec1(5.0f)) == 1);
}

TEST_CASE("zero-weight samples leave the model bit-identical") {
    std::vector<Eigen::VectorXf> xs;
    std::vector<int> labels;
    Rng data_rng(5);
    for (int i = 0; i < 30; ++i) {
        Eigen::VectorXf x(3);
        x << static_cast<float>(data_rng.normal()), static_cast<float>(data_rng.normal()),
            static_cast<float>(data_rng.normal());
        xs.push_back(x);
        labels.push_back(x[0] > 0 ? 2 : 1);
    }
    std::vector<double> weights(xs.size(), 1.0);

    Rng rng_a(9);
    const auto base = train_weighted_svm(make_samples(xs, labels, weights), {1.0, 0.1, 1000}, rng_a);

    auto xs2 = xs;
    auto labels2 = labels;
    auto weights2 = weights;
    Eigen::VectorXf ghost(3);
    ghost << 100.0f, -50.0f, 25.0f;
    xs2.insert(xs2.begin() + 7, ghost);
    labels2.insert(labels2.begin() + 7, 1);
    weights2.insert(weights2.begin() + 7, 0.0);

    Rng rng_b(9);
    const auto with_ghost =
        train_weighted_svm(make_samples(xs2, labels2, weights2), {1.0, 0.1, 1000}, rng_b);

    REQUIRE(base.size() == with_ghost.size());
    CHECK(base[0].bias == with_ghost[0].bias);
    CHECK(base[0].weights == with_ghost[0].weights);
}

TEST_CASE("scaling weights by alpha and C by 1/alpha preserves the optimum") {
    std::vector<Eigen::VectorXf> xs;
    std::vector<int> labels;
    std::vector<double> weights;
    Rng data_rng(6);
    for (int i = 0; i < 24; ++i) {
        Eigen::VectorXf x(2);
        x << static_cast<float>(data_rng.normal() + (i % 2 ? 1.0 : -1.0)),
            static_cast<float>(data_rng.normal());
        xs.push_back(x);
        labels.push_back(i % 2 ? 2 : 1);
        weights.push_back(0.25 + 0.75 * data_rng.uniform01());
    }
    const double alpha = 0.5;
    auto scaled = weights;
    for (double& w : scaled) w *= alpha;

    Rng rng_a(13), rng_b(13);
    const auto m1 = train_weighted_svm(make_samples(xs, labels, weights), {2.0, 0.01, 2000}, rng_a);
    const auto m2 =
        train_weighted_svm(make_samples(xs, labels, scaled), {2.0 / alpha, 0.01, 2000}, rng_b);
    CHECK(m1[0].bias == doctest::Approx(m2[0].bias).epsilon(1e-9));
    for (int i = 0; i < 2; ++i)
        CHECK(m1[0].weights[i] == doctest::Approx(m2[0].weights[i]).epsilon(1e-9));
}

TEST_CASE("solver agrees with an independent reference on uniform weights") {
    std::vector<Eigen::VectorXf> xs;
    std::vector<int> labels;
    Rng data_rng(17);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXf x(2);
        const int cls = i % 2 ? 2 : 1;
        x << static_cast<float>((cls == 2 ? 1.5 : -1.5) + data_rng.normal() * 0.5),
            static_cast<float>(data_rng.normal());
        xs.push_back(x);
        labels.push_back(cls);
    }
    Rng rng(21);
    const auto models = train_weighted_svm(
        make_samples(xs, labels, std::vector<double>(xs.size(), 1.0)), {1.0, 1e-5, 20000}, rng);
    const LinearModel ref = reference_solve(xs, labels, 1.0, 20000);

    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double a = decision_value(models[0], xs[i]);
        const double b = decision_value(ref, xs[i]);
        CHECK(a == doctest::Approx(b).epsilon(0.02));
    }
}

TEST_CASE("input validation") {
    Rng rng(3);
    // single class
    CHECK_THROWS_AS(train_weighted_svm(make_samples({vec1(0.0f), vec1(1.0f)}, {1, 1}, {1.0, 1.0}),
                                       {1.0, 0.1, 100}, rng),
                    DataError);
    // class with zero total weight
    CHECK_THROWS_AS(train_weighted_svm(make_samples({vec1(0.0f), vec1(1.0f)}, {1, 2}, {1.0, 0.0}),
                                       {1.0, 0.1, 100}, rng),
                    DataError);
    // bad cost
    CHECK_THROWS_AS(train_weighted_svm(make_samples({vec1(0.0f), vec1(1.0f)}, {1, 2}, {1.0, 1.0}),
                                       {0.0, 0.1, 100}, rng),
                    UsageError);
    // dimension mismatch at prediction
    LinearModel m{Eigen::VectorXd::Zero(2), 0.0};
    CHECK_THROWS_AS(predict_class(std::vector<LinearModel>{m}, vec1(1.0f)), UsageError);
}

TEST_CASE("bisector weights reduce routed SSE against uniform weights") {
    // 20 samples with 1-D targets in two clusters plus 0-3 ambiguous samples
    // near the inter-cluster boundary whose features are uninformative (big
    // off-axis components). Eq. 1-2 weights discount exactly those samples,
    // so the weighted classifier routes the high-cost points correctly while
    // the uniform one gets dragged by the contamination. Compare the two
    // induced partitions' child-node SSEs by direct evaluation.
    int wins = 0;
    const int draws = 100;
    for (int d = 0; d < draws; ++d) {
        Rng rng(1000 + static_cast<std::uint64_t>(d));
        std::vector<double> ys;
        std::vector<Eigen::VectorXf> xs;
        const int n_ambiguous = static_cast<int>(rng.uniform_index(4));
        for (int i = 0; i < 20; ++i) {
            double y;
            Eigen::VectorXf x(2);
            if (i < n_ambiguous) {
                y = rng.normal(1.5, 0.3);
                const double side = rng.uniform01() < 0.5 ? -1.0 : 1.0;
                x << static_cast<float>(rng.normal(1.5, 0.5)),
                    static_cast<float>(side * (2.0 + std::fabs(rng.normal(0.0, 1.0))));
            } else {
                y = i % 2 ? rng.normal(3.0, 0.5) : rng.normal(0.0, 0.5);
                x << static_cast<float>(y + rng.normal(0.0, 0.25)),
                    static_cast<float>(rng.normal(0.0, 0.5));
            }
            ys.push_back(y);
            xs.push_back(x);
        }
        Eigen::MatrixXd Y(1, 20);
        Eigen::MatrixXf X(2, 20);
        std::vector<int> idx(20);
        for (int i = 0; i < 20; ++i) {
            Y(0, i) = ys[static_cast<std::size_t>(i)];
            X.col(i) = xs[static_cast<std::size_t>(i)];
            idx[static_cast<std::size_t>(i)] = i;
        }
        Rng km_rng = rng.child(1);
        const KMeansResult km = kmeans_targets(Y, idx, 2, km_rng);
        const SplitWeights sw = split_weights(Y, idx, km.centroids.col(0), km.centroids.col(1));

        std::vector<int> labels(20);
        std::vector<double> uniform(20, 1.0), weighted(20);
        for (int i = 0; i < 20; ++i) {
            labels[static_cast<std::size_t>(i)] = km.assignment[static_cast<std::size_t>(i)] + 1;
            weighted[static_cast<std::size_t>(i)] = sw.w[i];
        }
        double sse_w, sse_u;
        try {
            Rng svm_w = rng.child(2);
            Rng svm_u = rng.child(3);
            const SvmParams params{10000.0, 0.01, 20000};
            const auto mw = train_weighted_svm(X, idx, labels, weighted, 2, params, svm_w);
            const auto mu = train_weighted_svm(X, idx, labels, uniform, 2, params, svm_u);
            sse_w = routed_sse(mw, xs, ys);
            sse_u = routed_sse(mu, xs, ys);
        } catch (const DataError&) {
            ++wins;  // degenerate draw; neither variant splits
            continue;
        }
        if (sse_w <= sse_u + 1e-12) ++wins;
    }
    CHECK(wins >= 90);
}

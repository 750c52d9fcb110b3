#include "krfws/linclf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace krfws {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dual coordinate descent for
//   min_a 0.5 a^T Q a - e^T a,  0 <= a_i <= U_i,  Q_ij = y_i y_j x_i^T x_j,
// maintaining w = sum a_i y_i x_i. Shrinking and stopping follow the
// projected-gradient scheme of the LIBLINEAR L1-loss solver; U_i = C * w_i
// carries the per-sample weights.
LinearModel solve_binary(const Eigen::MatrixXf& X, std::span<const int> idx,
                         const std::vector<signed char>& y,
                         std::span<const double> weights, const SvmParams& params,
                         Rng& rng) {
    const int dim = static_cast<int>(X.rows());
    const int n = static_cast<int>(idx.size());

    std::vector<int> order;          // positions into idx, active prefix first
    order.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        if (weights[static_cast<std::size_t>(i)] > 0.0) order.push_back(i);

    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    std::vector<double> qd(static_cast<std::size_t>(n), 0.0);
    std::vector<double> ub(static_cast<std::size_t>(n), 0.0);
    for (int i : order) {
        const auto col = X.col(idx[static_cast<std::size_t>(i)]);
        qd[static_cast<std::size_t>(i)] = col.cast<double>().squaredNorm() + 1.0;  // + bias feature
        ub[static_cast<std::size_t>(i)] = params.cost * weights[static_cast<std::size_t>(i)];
    }

    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    double bias = 0.0;

    int active = static_cast<int>(order.size());
    double pg_max_old = kInf, pg_min_old = -kInf;
    for (int iter = 0; iter < params.max_iter; ++iter) {
        double pg_max = -kInf, pg_min = kInf;

        for (int s = 0; s < active; ++s) {
            const int j = s + static_cast<int>(rng.uniform_index(
                                  static_cast<std::uint64_t>(active - s)));
            std::swap(order[static_cast<std::size_t>(s)], order[static_cast<std::size_t>(j)]);
        }

        for (int s = 0; s < active; ++s) {
            const int i = order[static_cast<std::size_t>(s)];
            const auto col = X.col(idx[static_cast<std::size_t>(i)]);
            const double yi = y[static_cast<std::size_t>(i)];
            const double up = ub[static_cast<std::size_t>(i)];
            double g = yi * (w.dot(col.cast<double>()) + bias) - 1.0;

            double pg = 0.0;
            double& a = alpha[static_cast<std::size_t>(i)];
            if (a == 0.0) {
                if (g > pg_max_old) {
                    --active;
                    std::swap(order[static_cast<std::size_t>(s)],
                              order[static_cast<std::size_t>(active)]);
                    --s;
                    continue;
                }
                if (g < 0.0) pg = g;
            } else if (a == up) {
                if (g < pg_min_old) {
                    --active;
                    std::swap(order[static_cast<std::size_t>(s)],
                              order[static_cast<std::size_t>(active)]);
                    --s;
                    continue;
                }
                if (g > 0.0) pg = g;
            } else {
                pg = g;
            }
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);

            if (std::fabs(pg) > 1e-12) {
                const double a_old = a;
                a = std::clamp(a - g / qd[static_cast<std::size_t>(i)], 0.0, up);
                const double d = (a - a_old) * yi;
                w += d * col.cast<double>();
                bias += d;
            }
        }

        if (pg_max - pg_min <= params.tol) {
            if (active == static_cast<int>(order.size())) break;
            // converged on the shrunk set; re-check everything once
            active = static_cast<int>(order.size());
            pg_max_old = kInf;
            pg_min_old = -kInf;
            continue;
        }
        pg_max_old = pg_max <= 0.0 ? kInf : pg_max;
        pg_min_old = pg_min >= 0.0 ? -kInf : pg_min;
    }

    LinearModel model;
    model.weights = std::move(w);
    model.bias = bias;
    return model;
}

}  // namespace

std::vector<LinearModel> train_weighted_svm(const Eigen::MatrixXf& X,
                                            std::span<const int> idx,
                                            std::span<const int> labels,
                                            std::span<const double> weights,
                                            int num_classes, const SvmParams& params,
                                            Rng& rng) {
    if (!(params.cost > 0.0)) throw UsageError("train_weighted_svm: cost must be > 0");
    if (num_classes < 2) throw UsageError("train_weighted_svm: need at least 2 classes");
    if (idx.size() != labels.size() || idx.size() != weights.size())
        throw UsageError("train_weighted_svm: idx/labels/weights size mismatch");

    std::vector<double> class_weight(static_cast<std::size_t>(num_classes), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const int c = labels[i];
        if (c < 1 || c > num_classes)
            throw DataError("train_weighted_svm: label " + std::to_string(c) +
                            " outside 1.." + std::to_string(num_classes));
        const double wi = weights[i];
        if (!(wi >= 0.0 && wi <= 1.0))
            throw DataError("train_weighted_svm: sample weight outside [0,1]");
        class_weight[static_cast<std::size_t>(c - 1)] += wi;
    }
    for (int c = 0; c < num_classes; ++c)
        if (class_weight[static_cast<std::size_t>(c)] <= 0.0)
            throw DataError("train_weighted_svm: class " + std::to_string(c + 1) +
                            " has zero total weight");

    const int n = static_cast<int>(idx.size());
    std::vector<LinearModel> models;
    if (num_classes == 2) {
        std::vector<signed char> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == 2 ? 1 : -1;
        models.push_back(solve_binary(X, idx, y, weights, params, rng));
    } else {
        models.reserve(static_cast<std::size_t>(num_classes));
        for (int c = 1; c <= num_classes; ++c) {
            std::vector<signed char> y(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == c ? 1 : -1;
            models.push_back(solve_binary(X, idx, y, weights, params, rng));
        }
    }
    return models;
}

std::vector<LinearModel> train_weighted_svm(std::span<const WeightedSample> samples,
                                            const SvmParams& params, Rng& rng) {
    if (samples.empty()) throw DataError("train_weighted_svm: no samples");
    const int dim = static_cast<int>(samples[0].x.size());
    Eigen::MatrixXf X(dim, static_cast<Eigen::Index>(samples.size()));
    std::vector<int> idx(samples.size());
    std::vector<int> labels(samples.size());
    std::vector<double> weights(samples.size());
    int num_classes = 2;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].x.size() != dim)
            throw UsageError("train_weighted_svm: inconsistent feature dimension");
        X.col(static_cast<Eigen::Index>(i)) = samples[i].x;
        idx[i] = static_cast<int>(i);
        labels[i] = samples[i].label;
        weights[i] = samples[i].weight;
        num_classes = std::max(num_classes, samples[i].label);
    }
    return train_weighted_svm(X, idx, labels, weights, num_classes, params, rng);
}

double decision_value(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXf>& x) {
    if (x.size() != model.weights.size())
        throw UsageError("decision_value: feature dimension mismatch");
    return model.weights.dot(x.cast<double>()) + model.bias;
}

int predict_class(std::span<const LinearModel> models,
                  const Eigen::Ref<const Eigen::VectorXf>& x) {
    if (models.empty()) throw UsageError("predict_class: no models");
    if (models.size() == 1) return decision_value(models[0], x) > 0.0 ? 2 : 1;
    int best = 1;
    double best_score = decision_value(models[0], x);
    for (std::size_t k = 1; k < models.size(); ++k) {
        const double score = decision_value(models[k], x);
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(k) + 1;
        }
    }
    return best;
}

}  // namespace krfws

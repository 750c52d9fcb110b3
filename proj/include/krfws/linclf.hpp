#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "krfws/common.hpp"

namespace krfws {

// ============================================================================
// Weighted linear SVM split classifier
// ============================================================================

struct LinearModel {
    Eigen::VectorXd weights;  // feature-space normal, excludes bias
    double bias = 0.0;
};

struct WeightedSample {
    Eigen::VectorXf x;
    int label = 1;        // class id in 1..K
    double weight = 1.0;  // in [0, 1]; 0 means no influence
};

struct SvmParams {
    double cost = 1.0;   // C; per-sample box constraint is C * weight_i
    double tol = 0.1;    // projected-gradient gap stopping threshold
    int max_iter = 1000; // epochs over the active set
};

/// L2-regularized L1-loss SVM trained by dual coordinate descent, with the
/// box constraint of sample i scaled to C * w_i. Zero-weight samples are
/// excluded up front and cannot influence the solution. A constant bias
/// feature of value 1 is appended internally.
///
/// Binary problems (num_classes == 2) return one model whose positive side
/// is class 2. num_classes > 2 trains one-vs-rest and returns num_classes
/// models, model k scoring class k+1 against the rest.
///
/// Samples are the columns of X selected by `idx`; `labels` and `weights`
/// align with `idx`. Throws DataError if any class has zero total weight.
std::vector<LinearModel> train_weighted_svm(const Eigen::MatrixXf& X,
                                            std::span<const int> idx,
                                            std::span<const int> labels,
                                            std::span<const double> weights,
                                            int num_classes, const SvmParams& params,
                                            Rng& rng);

/// Convenience overload over materialized samples.
std::vector<LinearModel> train_weighted_svm(std::span<const WeightedSample> samples,
                                            const SvmParams& params, Rng& rng);

double decision_value(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXf>& x);

/// Binary rule: w.x + b > 0 maps to class 2, otherwise class 1 (points on
/// the hyperplane route to class 1). One-vs-rest: argmax score, ties broken
/// by the lowest class id.
int predict_class(std::span<const LinearModel> models,
                  const Eigen::Ref<const Eigen::VectorXf>& x);

}  // namespace krfws

#include "krfws/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace krfws {

const char* norm_mode_name(NormMode mode) {
    return mode == NormMode::InterPupil ? "inter-pupil" : "inter-ocular";
}

NormMode parse_norm_mode(const std::string& name) {
    if (name == "inter-pupil") return NormMode::InterPupil;
    if (name == "inter-ocular") return NormMode::InterOcular;
    throw UsageError("unknown normalization mode '" + name + "'");
}

namespace {

double mean_landmark_error(const Shape2D& pred, const Shape2D& gt) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < gt.cols(); ++i) sum += (pred.col(i) - gt.col(i)).norm();
    return sum / static_cast<double>(gt.cols());
}

}  // namespace

double normalized_error(const Shape2D& pred, const Shape2D& gt, NormMode mode) {
    if (pred.cols() != gt.cols()) throw UsageError("normalized_error: landmark count mismatch");
    if (gt.cols() != 68)
        throw UsageError("normalized_error: 68-point scheme required, got " +
                         std::to_string(gt.cols()) + " landmarks");

    double dist;
    if (mode == NormMode::InterPupil) {
        Eigen::Vector2d right = Eigen::Vector2d::Zero();
        Eigen::Vector2d left = Eigen::Vector2d::Zero();
        for (int i = 36; i <= 41; ++i) right += gt.col(i);
        for (int i = 42; i <= 47; ++i) left += gt.col(i);
        dist = (right / 6.0 - left / 6.0).norm();
    } else {
        dist = (gt.col(36) - gt.col(45)).norm();
    }
    if (dist <= 1e-12) throw NumericError("normalized_error: coincident eye landmarks");
    return 100.0 * mean_landmark_error(pred, gt) / dist;
}

double eye_distance_error(const Shape2D& pred, const Shape2D& gt, int right_eye, int left_eye) {
    if (pred.cols() != gt.cols()) throw UsageError("eye_distance_error: landmark count mismatch");
    if (right_eye < 0 || left_eye < 0 || right_eye >= gt.cols() || left_eye >= gt.cols())
        throw UsageError("eye_distance_error: eye index out of range");
    const double dist = (gt.col(right_eye) - gt.col(left_eye)).norm();
    if (dist <= 1e-12) throw NumericError("eye_distance_error: coincident eye landmarks");
    return 100.0 * mean_landmark_error(pred, gt) / dist;
}

PoseMae pose_mae(const std::vector<std::pair<double, double>>& pred,
                 const std::vector<std::pair<double, double>>& labels) {
    if (pred.size() != labels.size()) throw UsageError("pose_mae: length mismatch");
    if (pred.empty()) throw DataError("pose_mae: empty input");
    PoseMae out;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out.yaw += std::fabs(pred[i].first - labels[i].first);
        out.pitch += std::fabs(pred[i].second - labels[i].second);
    }
    out.yaw /= static_cast<double>(pred.size());
    out.pitch /= static_cast<double>(pred.size());
    out.average = 0.5 * (out.yaw + out.pitch);
    return out;
}

double EvalReport::mean() const {
    if (errors.empty()) return 0.0;
    return std::accumulate(errors.begin(), errors.end(), 0.0) /
           static_cast<double>(errors.size());
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("write_csv: cannot open " + path);
    out << "name,error_" << norm_mode << "\n";
    char buf[64];
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f", errors[i]);
        out << names[i] << ',' << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.6f", mean());
    out << "mean," << buf << "\n";
}

}  // namespace krfws

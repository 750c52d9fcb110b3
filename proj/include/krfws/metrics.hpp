#pragma once

#include <string>
#include <vector>

#include "krfws/geom.hpp"

namespace krfws {

// ============================================================================
// Evaluation metrics and reports
// ============================================================================

enum class NormMode { InterPupil, InterOcular };

const char* norm_mode_name(NormMode mode);
NormMode parse_norm_mode(const std::string& name);

/// Mean per-landmark Euclidean error as a percentage of the normalization
/// distance. Requires the 68-point scheme: pupils are the centroids of
/// landmarks 36-41 / 42-47, outer eye corners are landmarks 36 and 45
/// (0-indexed).
double normalized_error(const Shape2D& pred, const Shape2D& gt, NormMode mode);

/// Same metric for arbitrary schemes; the normalization distance is between
/// the two given landmarks of the ground truth (the synthetic scheme keeps
/// its eyes at indices 0 and 1).
double eye_distance_error(const Shape2D& pred, const Shape2D& gt, int right_eye = 0,
                          int left_eye = 1);

struct PoseMae {
    double yaw = 0.0;
    double pitch = 0.0;
    double average = 0.0;
};

/// Per-angle mean absolute error in degrees; average is the mean of the two.
PoseMae pose_mae(const std::vector<std::pair<double, double>>& pred_yaw_pitch,
                 const std::vector<std::pair<double, double>>& label_yaw_pitch);

// ----------------------------------------------------------------------------

struct EvalReport {
    std::vector<std::string> names;
    std::vector<double> errors;  // percent, aligned with names
    std::string norm_mode;

    double mean() const;
    /// Header "name,error"; one row per image, then a "mean" row. Fixed
    /// 6-decimal formatting so identical runs are byte-identical.
    void write_csv(const std::string& path) const;
};

}  // namespace krfws

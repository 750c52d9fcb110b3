#pragma once

#include <Eigen/Core>
#include <string>

#include "krfws/common.hpp"

namespace krfws {

// ============================================================================
// Shapes and rigid transforms
// ============================================================================

/// 2 x n landmark matrix, pixel coordinates.
using Shape2D = Eigen::Matrix2Xd;

/// 3 x n canonical shape, centered at the origin.
using MeanShape3D = Eigen::Matrix3Xd;

struct FaceBox {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double diagonal() const;
};

/// Tight bounding box of a shape.
FaceBox shape_bounds(const Shape2D& s);

// ----------------------------------------------------------------------------
// 2-D affine transform  S' = [a b; c d] S + [tx; ty]

struct AffineParams {
    double a = 1.0, b = 0.0;
    double c = 0.0, d = 1.0;
    double tx = 0.0, ty = 0.0;
};

Shape2D apply_affine(const Shape2D& s, const AffineParams& p);
Eigen::Vector2d apply_affine(const Eigen::Vector2d& pt, const AffineParams& p);

/// Composition: apply `first`, then `second`.
AffineParams compose_affine(const AffineParams& second, const AffineParams& first);

/// Throws NumericError when |ad - bc| <= 1e-8.
AffineParams invert_affine(const AffineParams& p);

/// Least-squares similarity (scale + rotation + translation, no reflection)
/// mapping src onto dst; closed-form Procrustes. Requires n >= 2 and a
/// non-degenerate src.
AffineParams similarity_align(const Shape2D& src, const Shape2D& dst);

// ----------------------------------------------------------------------------
// Scaled orthographic pose  s = k * P * S3d + [tx; ty],
// P = first two rows of R = Rz(roll) * Ry(yaw) * Rx(pitch).

struct OrthoPose {
    double scale = 1.0;  // k > 0
    double yaw = 0.0, pitch = 0.0, roll = 0.0;  // radians, in (-pi, pi]
    double tx = 0.0, ty = 0.0;                  // pixels
};

Eigen::Matrix3d euler_rotation(double yaw, double pitch, double roll);

/// k * P as a 2x3 matrix.
Eigen::Matrix<double, 2, 3> euler_to_projection(const OrthoPose& pose);

Shape2D project(const MeanShape3D& mean3d, const OrthoPose& pose);

/// Scale from RMS extents, translation from centroids, zero angles.
OrthoPose default_pose_init(const MeanShape3D& mean3d, const Shape2D& s);

struct PoseFitResult {
    OrthoPose pose;
    double residual_norm = 0.0;  // ||project(mean3d, pose) - S||_F
    int iterations = 0;
    bool degenerate = false;  // singular normal equations; pose is best-so-far
};

/// Gauss-Newton minimization of ||project(mean3d, pose) - S||^2 over all six
/// pose parameters, analytic Jacobian, step halving (up to 10 halvings per
/// iteration) until the residual decreases. Stops when the accepted update
/// norm falls below tol or after max_iter iterations. Requires n >= 3.
PoseFitResult fit_pose(const MeanShape3D& mean3d, const Shape2D& s, const OrthoPose& init,
                       int max_iter = 100, double tol = 1e-10);

/// 2n x 6 Jacobian of the stacked projection residual at `pose`; parameter
/// order (k, yaw, pitch, roll, tx, ty). Rows interleave x and y per landmark.
Eigen::MatrixXd projection_jacobian(const MeanShape3D& mean3d, const OrthoPose& pose);

// ----------------------------------------------------------------------------
// Mean-shape file: plain text, first line n, then n lines "x y z".

/// Loads and recenters the shape so its centroid sits at the origin.
MeanShape3D load_mean_shape3d(const std::string& path);
void save_mean_shape3d(const std::string& path, const MeanShape3D& shape);

}  // namespace krfws

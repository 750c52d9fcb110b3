#include "krfws/geom.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>

namespace krfws {

double FaceBox::diagonal() const { return std::sqrt(w * w + h * h); }

FaceBox shape_bounds(const Shape2D& s) {
    if (s.cols() == 0) throw DataError("shape_bounds: empty shape");
    FaceBox box;
    box.x = s.row(0).minCoeff();
    box.y = s.row(1).minCoeff();
    box.w = s.row(0).maxCoeff() - box.x;
    box.h = s.row(1).maxCoeff() - box.y;
    return box;
}

Shape2D apply_affine(const Shape2D& s, const AffineParams& p) {
    Eigen::Matrix2d m;
    m << p.a, p.b, p.c, p.d;
    Shape2D out = m * s;
    out.row(0).array() += p.tx;
    out.row(1).array() += p.ty;
    return out;
}

Eigen::Vector2d apply_affine(const Eigen::Vector2d& pt, const AffineParams& p) {
    return {p.a * pt.x() + p.b * pt.y() + p.tx, p.c * pt.x() + p.d * pt.y() + p.ty};
}

AffineParams compose_affine(const AffineParams& second, const AffineParams& first) {
    AffineParams out;
    out.a = second.a * first.a + second.b * first.c;
    out.b = second.a * first.b + second.b * first.d;
    out.c = second.c * first.a + second.d * first.c;
    out.d = second.c * first.b + second.d * first.d;
    out.tx = second.a * first.tx + second.b * first.ty + second.tx;
    out.ty = second.c * first.tx + second.d * first.ty + second.ty;
    return out;
}

AffineParams invert_affine(const AffineParams& p) {
    const double det = p.a * p.d - p.b * p.c;
    if (std::fabs(det) <= 1e-8) throw NumericError("invert_affine: transform is singular");
    AffineParams inv;
    inv.a = p.d / det;
    inv.b = -p.b / det;
    inv.c = -p.c / det;
    inv.d = p.a / det;
    inv.tx = -(inv.a * p.tx + inv.b * p.ty);
    inv.ty = -(inv.c * p.tx + inv.d * p.ty);
    return inv;
}

AffineParams similarity_align(const Shape2D& src, const Shape2D& dst) {
    if (src.cols() != dst.cols()) throw UsageError("similarity_align: landmark count mismatch");
    if (src.cols() < 2) throw UsageError("similarity_align: need at least 2 points");

    const Eigen::Vector2d src_mean = src.rowwise().mean();
    const Eigen::Vector2d dst_mean = dst.rowwise().mean();
    const Shape2D sc = src.colwise() - src_mean;
    const Shape2D dc = dst.colwise() - dst_mean;

    const double denom = sc.squaredNorm();
    if (denom <= 1e-12) throw NumericError("similarity_align: degenerate source shape");

    // Complex least squares: (a + i b) minimizing sum |(a+ib) z_src - z_dst|^2.
    double re = 0.0, im = 0.0;
    for (Eigen::Index i = 0; i < sc.cols(); ++i) {
        re += sc(0, i) * dc(0, i) + sc(1, i) * dc(1, i);
        im += sc(0, i) * dc(1, i) - sc(1, i) * dc(0, i);
    }
    re /= denom;
    im /= denom;

    AffineParams p;
    p.a = re;
    p.b = -im;
    p.c = im;
    p.d = re;
    const Eigen::Vector2d t = dst_mean - Eigen::Vector2d(p.a * src_mean.x() + p.b * src_mean.y(),
                                                         p.c * src_mean.x() + p.d * src_mean.y());
    p.tx = t.x();
    p.ty = t.y();
    return p;
}

// ----------------------------------------------------------------------------

Eigen::Matrix3d euler_rotation(double yaw, double pitch, double roll) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
    return rz * ry * rx;
}

Eigen::Matrix<double, 2, 3> euler_to_projection(const OrthoPose& pose) {
    return pose.scale * euler_rotation(pose.yaw, pose.pitch, pose.roll).topRows<2>();
}

Shape2D project(const MeanShape3D& mean3d, const OrthoPose& pose) {
    Shape2D out = euler_to_projection(pose) * mean3d;
    out.row(0).array() += pose.tx;
    out.row(1).array() += pose.ty;
    return out;
}

OrthoPose default_pose_init(const MeanShape3D& mean3d, const Shape2D& s) {
    const Eigen::Vector2d s_mean = s.rowwise().mean();
    const Shape2D sc = s.colwise() - s_mean;
    const double rms2d = std::sqrt(sc.squaredNorm() / static_cast<double>(s.cols()));
    const Eigen::Matrix2Xd flat = mean3d.topRows<2>();
    const double rms3d = std::sqrt(flat.squaredNorm() / static_cast<double>(mean3d.cols()));

    OrthoPose pose;
    pose.scale = rms3d > 1e-12 ? std::max(rms2d / rms3d, 1e-6) : 1.0;
    pose.tx = s_mean.x();
    pose.ty = s_mean.y();
    return pose;
}

namespace {

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    return a - M_PI;
}

double projection_residual(const MeanShape3D& mean3d, const OrthoPose& pose, const Shape2D& s) {
    return (project(mean3d, pose) - s).norm();
}

}  // namespace

Eigen::MatrixXd projection_jacobian(const MeanShape3D& mean3d, const OrthoPose& pose) {
    const int n = static_cast<int>(mean3d.cols());
    const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
    const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
    const double cr = std::cos(pose.roll), sr = std::sin(pose.roll);

    Eigen::Matrix3d rx, ry, rz, drx, dry, drz;
    rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
    drx << 0, 0, 0, 0, -sp, -cp, 0, cp, -sp;
    dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
    drz << -sr, -cr, 0, cr, -sr, 0, 0, 0, 0;

    const Eigen::Matrix<double, 2, 3> p_k = (rz * ry * rx).topRows<2>();
    const Eigen::Matrix<double, 2, 3> p_yaw = pose.scale * (rz * dry * rx).topRows<2>();
    const Eigen::Matrix<double, 2, 3> p_pitch = pose.scale * (rz * ry * drx).topRows<2>();
    const Eigen::Matrix<double, 2, 3> p_roll = pose.scale * (drz * ry * rx).topRows<2>();

    Eigen::MatrixXd jac(2 * n, 6);
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d pt = mean3d.col(i);
        jac.block<2, 1>(2 * i, 0) = p_k * pt;
        jac.block<2, 1>(2 * i, 1) = p_yaw * pt;
        jac.block<2, 1>(2 * i, 2) = p_pitch * pt;
        jac.block<2, 1>(2 * i, 3) = p_roll * pt;
        jac(2 * i, 4) = 1.0;
        jac(2 * i + 1, 4) = 0.0;
        jac(2 * i, 5) = 0.0;
        jac(2 * i + 1, 5) = 1.0;
    }
    return jac;
}

PoseFitResult fit_pose(const MeanShape3D& mean3d, const Shape2D& s, const OrthoPose& init,
                       int max_iter, double tol) {
    if (mean3d.cols() != s.cols()) throw UsageError("fit_pose: landmark count mismatch");
    if (s.cols() < 3) throw UsageError("fit_pose: need at least 3 landmarks");
    if (!(init.scale > 0.0)) throw UsageError("fit_pose: init scale must be positive");

    const int n = static_cast<int>(s.cols());
    OrthoPose pose = init;
    double residual = projection_residual(mean3d, pose, s);

    PoseFitResult result;
    result.pose = pose;
    result.residual_norm = residual;

    for (int iter = 0; iter < max_iter; ++iter) {
        result.iterations = iter + 1;

        Eigen::VectorXd r(2 * n);
        const Shape2D proj = project(mean3d, pose);
        for (int i = 0; i < n; ++i) {
            r[2 * i] = proj(0, i) - s(0, i);
            r[2 * i + 1] = proj(1, i) - s(1, i);
        }
        const Eigen::MatrixXd jac = projection_jacobian(mean3d, pose);
        const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
        const Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * r;

        const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(jtj);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            result.degenerate = true;
            break;
        }
        Eigen::Matrix<double, 6, 1> step = -ldlt.solve(jtr);
        if (!step.allFinite()) {
            result.degenerate = true;
            break;
        }

        // Halve until the residual decreases and the scale stays positive.
        double factor = 1.0;
        bool accepted = false;
        OrthoPose candidate;
        double cand_residual = residual;
        for (int h = 0; h <= 10; ++h) {
            candidate = pose;
            candidate.scale += factor * step[0];
            candidate.yaw += factor * step[1];
            candidate.pitch += factor * step[2];
            candidate.roll += factor * step[3];
            candidate.tx += factor * step[4];
            candidate.ty += factor * step[5];
            if (candidate.scale > 0.0) {
                cand_residual = projection_residual(mean3d, candidate, s);
                if (cand_residual < residual) {
                    accepted = true;
                    break;
                }
            }
            factor *= 0.5;
        }
        if (!accepted) break;

        pose = candidate;
        residual = cand_residual;
        result.pose = pose;
        result.residual_norm = residual;
        if ((factor * step).norm() < tol) break;
    }

    result.pose.yaw = wrap_angle(result.pose.yaw);
    result.pose.pitch = wrap_angle(result.pose.pitch);
    result.pose.roll = wrap_angle(result.pose.roll);
    return result;
}

// ----------------------------------------------------------------------------

MeanShape3D load_mean_shape3d(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_mean_shape3d: cannot open " + path);
    int n = 0;
    if (!(in >> n) || n < 1)
        throw DataError("load_mean_shape3d: bad point count in " + path);
    MeanShape3D shape(3, n);
    for (int i = 0; i < n; ++i) {
        double x, y, z;
        if (!(in >> x >> y >> z))
            throw DataError("load_mean_shape3d: truncated at point " + std::to_string(i + 1) +
                            " in " + path);
        shape.col(i) << x, y, z;
    }
    // recenter only when meaningfully off-origin so that save/load round
    // trips keep already-centered shapes bit-identical
    const Eigen::Vector3d centroid = shape.rowwise().mean();
    const double scale = std::max(shape.cwiseAbs().maxCoeff(), 1.0);
    if (centroid.norm() > 1e-9 * scale) return shape.colwise() - centroid;
    return shape;
}

void save_mean_shape3d(const std::string& path, const MeanShape3D& shape) {
    std::ofstream out(path);
    if (!out) throw DataError("save_mean_shape3d: cannot open " + path);
    out << shape.cols() << "\n";
    char line[160];
    for (Eigen::Index i = 0; i < shape.cols(); ++i) {
        std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", shape(0, i), shape(1, i),
                      shape(2, i));
        out << line;
    }
}

}  // namespace krfws

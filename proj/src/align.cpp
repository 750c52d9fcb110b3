#include "krfws/align.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace krfws {

// ----------------------------------------------------------------------------
// Configs

int StageFeatureConfig::descriptor_length() const {
    return phog_length(patch_side, patch_side, levels, hog);
}

AprConfig::AprConfig() {
    feature.patch_side = 64;
    feature.levels = {64, 32, 16};
    feature.hog.variant = HogVariant::Extended;
}

Apr3dConfig::Apr3dConfig() {
    feature.patch_side = 64;
    feature.levels = {64, 32, 16};
    feature.hog.variant = HogVariant::Extended;
}

LbfConfig::LbfConfig() {
    feature.patch_side = 32;
    feature.levels = {32, 16, 8};
    feature.hog.variant = HogVariant::Basic;
    feature.hog.block_cells = 0;  // single block per pyramid level
}

// ----------------------------------------------------------------------------
// Frames and sample generation

WorkFrame make_face_frame(const GrayImage& img, const Shape2D& current, int crop_side,
                          double face_px) {
    const FaceBox bounds = shape_bounds(current);
    const double diag = bounds.diagonal();
    if (!(diag > 1e-6)) throw NumericError("make_face_frame: degenerate shape");

    const double scale = face_px * std::sqrt(2.0) / diag;
    WorkFrame frame;
    frame.to_crop.a = frame.to_crop.d = scale;
    frame.to_crop.b = frame.to_crop.c = 0.0;
    frame.to_crop.tx = 0.5 * crop_side - scale * bounds.cx();
    frame.to_crop.ty = 0.5 * crop_side - scale * bounds.cy();
    frame.crop = warp_similarity(img, scale, frame.to_crop.tx, frame.to_crop.ty, crop_side,
                                 crop_side);
    return frame;
}

WorkFrame make_box_frame(const GrayImage& img, const FaceBox& box, int crop_side,
                         double face_px) {
    const double diag = box.diagonal();
    if (!(diag > 1e-6)) throw NumericError("make_box_frame: degenerate box");
    const double scale = face_px * std::sqrt(2.0) / diag;
    WorkFrame frame;
    frame.to_crop.a = frame.to_crop.d = scale;
    frame.to_crop.b = frame.to_crop.c = 0.0;
    frame.to_crop.tx = 0.5 * crop_side - scale * box.cx();
    frame.to_crop.ty = 0.5 * crop_side - scale * box.cy();
    frame.crop = warp_similarity(img, scale, frame.to_crop.tx, frame.to_crop.ty, crop_side,
                                 crop_side);
    return frame;
}

Shape2D place_mean_shape(const Shape2D& mean_shape, const FaceBox& box) {
    const FaceBox bounds = shape_bounds(mean_shape);
    const double diag = bounds.diagonal();
    if (!(diag > 1e-12)) throw NumericError("place_mean_shape: degenerate mean shape");
    const double scale = box.diagonal() / diag;
    Shape2D out = mean_shape;
    out.row(0) = (out.row(0).array() - bounds.cx()) * scale + box.cx();
    out.row(1) = (out.row(1).array() - bounds.cy()) * scale + box.cy();
    return out;
}

namespace {

Shape2D perturb_shape(const Shape2D& gt, const FaceBox& box, const PerturbConfig& cfg,
                      Rng& rng) {
    const double angle = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg) * M_PI / 180.0;
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double face_size = std::max(box.w, box.h);
    const double dx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * face_size;
    const double dy = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * face_size;

    const Eigen::Vector2d center = gt.rowwise().mean();
    const double ca = scale * std::cos(angle);
    const double sa = scale * std::sin(angle);
    Shape2D out(2, gt.cols());
    for (Eigen::Index i = 0; i < gt.cols(); ++i) {
        const double x = gt(0, i) - center.x();
        const double y = gt(1, i) - center.y();
        out(0, i) = ca * x - sa * y + center.x() + dx;
        out(1, i) = sa * x + ca * y + center.y() + dy;
    }
    return out;
}

void validate_faces(std::span<const AnnotatedFace> faces) {
    if (faces.empty()) throw DataError("no training faces");
    const Eigen::Index n = faces[0].shape.cols();
    for (const AnnotatedFace& f : faces) {
        if (f.shape.cols() != n)
            throw DataError("landmark count mismatch: " + f.name + " has " +
                            std::to_string(f.shape.cols()) + ", expected " + std::to_string(n));
        if (f.image.empty()) throw DataError("face without pixels: " + f.name);
    }
}

}  // namespace

std::vector<TrainSample> make_perturbed_samples(std::span<const AnnotatedFace> faces,
                                                const Shape2D& mean_shape,
                                                const PerturbConfig& config, Rng& rng) {
    validate_faces(faces);
    std::vector<TrainSample> samples;
    samples.reserve(faces.size() * static_cast<std::size_t>(config.per_image));
    for (std::size_t f = 0; f < faces.size(); ++f) {
        Rng face_rng = rng.child(f);
        samples.push_back({static_cast<int>(f), place_mean_shape(mean_shape, faces[f].bbox)});
        for (int p = 1; p < config.per_image; ++p)
            samples.push_back(
                {static_cast<int>(f), perturb_shape(faces[f].shape, faces[f].bbox, config,
                                                    face_rng)});
    }
    return samples;
}

std::vector<TrainSample> make_exchanged_samples(std::span<const AnnotatedFace> faces,
                                                const Shape2D& mean_shape,
                                                const PerturbConfig& config, Rng& rng) {
    validate_faces(faces);
    std::vector<TrainSample> samples;
    samples.reserve(faces.size() * static_cast<std::size_t>(config.per_image));
    for (std::size_t f = 0; f < faces.size(); ++f) {
        Rng face_rng = rng.child(f);
        samples.push_back({static_cast<int>(f), place_mean_shape(mean_shape, faces[f].bbox)});
        for (int p = 1; p < config.per_image; ++p) {
            std::size_t other = f;
            if (faces.size() > 1)
                while (other == f) other = face_rng.uniform_index(faces.size());
            samples.push_back(
                {static_cast<int>(f), place_mean_shape(faces[other].shape, faces[f].bbox)});
        }
    }
    return samples;
}

Shape2D procrustes_mean_shape(std::span<const AnnotatedFace> faces, int iterations) {
    validate_faces(faces);
    const Eigen::Index n = faces[0].shape.cols();

    auto normalize = [](Shape2D s) {
        const Eigen::Vector2d c = s.rowwise().mean();
        s.colwise() -= c;
        const double rms = std::sqrt(s.squaredNorm() / static_cast<double>(s.cols()));
        if (rms > 1e-12) s /= rms;
        return s;
    };

    Shape2D mean = normalize(faces[0].shape);
    for (int it = 0; it < iterations; ++it) {
        Shape2D sum = Shape2D::Zero(2, n);
        for (const AnnotatedFace& f : faces)
            sum += apply_affine(f.shape, similarity_align(f.shape, mean));
        mean = normalize(sum / static_cast<double>(faces.size()));
    }
    return mean;
}

// ----------------------------------------------------------------------------
// Shared feature extraction

namespace {

Eigen::VectorXf whole_crop_descriptor(const GrayImage& crop, const StageFeatureConfig& cfg) {
    const PhogDescriptor d = phog(crop, cfg.levels, cfg.hog);
    return Eigen::Map<const Eigen::VectorXf>(d.values.data(),
                                             static_cast<Eigen::Index>(d.values.size()));
}

Eigen::VectorXf landmark_descriptor(const GrayImage& crop, double x, double y,
                                    const StageFeatureConfig& cfg) {
    const GrayImage patch = extract_patch(crop, x, y, cfg.patch_side);
    const PhogDescriptor d = phog(patch, cfg.levels, cfg.hog);
    return Eigen::Map<const Eigen::VectorXf>(d.values.data(),
                                             static_cast<Eigen::Index>(d.values.size()));
}

struct AffinePair {
    double a, b, c, d;  // linear part only
};

AffinePair linear_part(const AffineParams& p) { return {p.a, p.b, p.c, p.d}; }

Eigen::Vector2d apply_linear(const AffinePair& m, const Eigen::Vector2d& v) {
    return {m.a * v.x() + m.b * v.y(), m.c * v.x() + m.d * v.y()};
}

AffinePair invert_linear(const AffinePair& m) {
    const double det = m.a * m.d - m.b * m.c;
    if (std::fabs(det) <= 1e-12) throw NumericError("degenerate similarity in LBF frame");
    return {m.d / det, -m.b / det, -m.c / det, m.a / det};
}

}  // namespace

// ----------------------------------------------------------------------------
// APR

AprModel apr_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                   const AprConfig& config, const TrainConfig& train) {
    validate_faces(faces);
    if (samples.empty()) throw DataError("apr_train: no samples");
    if (config.iterations < 1) throw UsageError("apr_train: need at least one iteration");

    const int n_samples = static_cast<int>(samples.size());
    const int dim = config.feature.descriptor_length();
    const Rng root(train.seed);

    AprModel model;
    model.config = config;
    for (int iter = 0; iter < config.iterations; ++iter) {
        const Rng iter_rng = root.child(0xA5000u + static_cast<std::uint64_t>(iter));

        Eigen::MatrixXf X(dim, n_samples);
        Eigen::MatrixXd ya(1, n_samples), yb(1, n_samples), yc(1, n_samples), yd(1, n_samples);
        Eigen::MatrixXd yt(2, n_samples);
        std::vector<AffineParams> to_crop(static_cast<std::size_t>(n_samples));

        parallel_for(n_samples, [&](int i) {
            const TrainSample& s = samples[static_cast<std::size_t>(i)];
            const AnnotatedFace& face = faces[static_cast<std::size_t>(s.face)];
            const WorkFrame frame = make_face_frame(face.image, s.shape,
                                                    config.feature.patch_side, config.face_px);
            X.col(i) = whole_crop_descriptor(frame.crop, config.feature);
            const Shape2D sc = apply_affine(s.shape, frame.to_crop);
            const Shape2D gc = apply_affine(face.shape, frame.to_crop);
            const AffineParams p = similarity_align(sc, gc);
            ya(0, i) = p.a;
            yb(0, i) = p.b;
            yc(0, i) = p.c;
            yd(0, i) = p.d;
            yt(0, i) = p.tx;
            yt(1, i) = p.ty;
            to_crop[static_cast<std::size_t>(i)] = frame.to_crop;
        });

        AprIterationModel m;
        m.fa = train_forest(X, ya, config.forest, iter_rng.child(1).seed());
        m.fb = train_forest(X, yb, config.forest, iter_rng.child(2).seed());
        m.fc = train_forest(X, yc, config.forest, iter_rng.child(3).seed());
        m.fd = train_forest(X, yd, config.forest, iter_rng.child(4).seed());
        m.ft = train_forest(X, yt, config.forest, iter_rng.child(5).seed());

        parallel_for(n_samples, [&](int i) {
            TrainSample& s = samples[static_cast<std::size_t>(i)];
            AffineParams p;
            p.a = predict(m.fa, X.col(i))[0];
            p.b = predict(m.fb, X.col(i))[0];
            p.c = predict(m.fc, X.col(i))[0];
            p.d = predict(m.fd, X.col(i))[0];
            const Eigen::VectorXd t = predict(m.ft, X.col(i));
            p.tx = t[0];
            p.ty = t[1];
            const AffineParams& frame = to_crop[static_cast<std::size_t>(i)];
            const Shape2D corrected = apply_affine(apply_affine(s.shape, frame), p);
            s.shape = apply_affine(corrected, invert_affine(frame));
        });

        model.iterations.push_back(std::move(m));
    }
    return model;
}

Shape2D apr_apply(const GrayImage& img, const Shape2D& shape, const AprModel& model) {
    if (model.iterations.empty()) throw UsageError("apr_apply: untrained model");
    Shape2D current = shape;
    for (const AprIterationModel& m : model.iterations) {
        const WorkFrame frame = make_face_frame(img, current, model.config.feature.patch_side,
                                                model.config.face_px);
        const Eigen::VectorXf x = whole_crop_descriptor(frame.crop, model.config.feature);
        AffineParams p;
        p.a = predict(m.fa, x)[0];
        p.b = predict(m.fb, x)[0];
        p.c = predict(m.fc, x)[0];
        p.d = predict(m.fd, x)[0];
        const Eigen::VectorXd t = predict(m.ft, x);
        p.tx = t[0];
        p.ty = t[1];
        const Shape2D corrected = apply_affine(apply_affine(current, frame.to_crop), p);
        current = apply_affine(corrected, invert_affine(frame.to_crop));
    }
    return current;
}

// ----------------------------------------------------------------------------
// 3D-APR

Apr3dModel apr3d_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                       const MeanShape3D& mean3d, const Apr3dConfig& config,
                       const TrainConfig& train) {
    validate_faces(faces);
    if (samples.empty()) throw DataError("apr3d_train: no samples");
    if (mean3d.cols() != faces[0].shape.cols())
        throw DataError("apr3d_train: mean 3-D shape has " + std::to_string(mean3d.cols()) +
                        " landmarks, faces have " + std::to_string(faces[0].shape.cols()));

    const int n_samples = static_cast<int>(samples.size());
    const int dim = config.feature.descriptor_length();
    const Rng root(train.seed);

    Eigen::MatrixXf X(dim, n_samples);
    Eigen::MatrixXd dk(1, n_samples), dang(3, n_samples), dt(2, n_samples);
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(n_samples), 0);

    parallel_for(n_samples, [&](int i) {
        const TrainSample& s = samples[static_cast<std::size_t>(i)];
        const AnnotatedFace& face = faces[static_cast<std::size_t>(s.face)];
        const WorkFrame frame = make_face_frame(face.image, s.shape, config.feature.patch_side,
                                                config.face_px);
        X.col(i) = whole_crop_descriptor(frame.crop, config.feature);

        const Shape2D sc = apply_affine(s.shape, frame.to_crop);
        const Shape2D gc = apply_affine(face.shape, frame.to_crop);
        const PoseFitResult cur = fit_pose(mean3d, sc, default_pose_init(mean3d, sc));
        const PoseFitResult gt = fit_pose(mean3d, gc, default_pose_init(mean3d, gc));
        if (cur.degenerate || gt.degenerate) return;

        dk(0, i) = gt.pose.scale - cur.pose.scale;
        dang(0, i) = gt.pose.yaw - cur.pose.yaw;
        dang(1, i) = gt.pose.pitch - cur.pose.pitch;
        dang(2, i) = gt.pose.roll - cur.pose.roll;
        dt(0, i) = gt.pose.tx - cur.pose.tx;
        dt(1, i) = gt.pose.ty - cur.pose.ty;
        valid[static_cast<std::size_t>(i)] = 1;
    });

    std::vector<int> keep;
    for (int i = 0; i < n_samples; ++i)
        if (valid[static_cast<std::size_t>(i)]) keep.push_back(i);
    if (static_cast<int>(keep.size()) < n_samples)
        std::cerr << "apr3d_train: warning: excluded " << n_samples - keep.size()
                  << " samples with degenerate pose fits\n";
    if (keep.empty()) throw NumericError("apr3d_train: every pose fit was degenerate");

    Eigen::MatrixXf Xk(dim, static_cast<Eigen::Index>(keep.size()));
    Eigen::MatrixXd yk(1, static_cast<Eigen::Index>(keep.size()));
    Eigen::MatrixXd yang(3, static_cast<Eigen::Index>(keep.size()));
    Eigen::MatrixXd yt(2, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        Xk.col(static_cast<Eigen::Index>(j)) = X.col(keep[j]);
        yk(0, static_cast<Eigen::Index>(j)) = dk(0, keep[j]);
        yang.col(static_cast<Eigen::Index>(j)) = dang.col(keep[j]);
        yt.col(static_cast<Eigen::Index>(j)) = dt.col(keep[j]);
    }

    Apr3dModel model;
    model.config = config;
    model.mean3d = mean3d;
    model.scale_forest = train_forest(Xk, yk, config.forest, root.child(1).seed());
    model.angle_forest = train_forest(Xk, yang, config.forest, root.child(2).seed());
    model.translation_forest = train_forest(Xk, yt, config.forest, root.child(3).seed());

    parallel_for(n_samples, [&](int i) {
        TrainSample& s = samples[static_cast<std::size_t>(i)];
        s.shape = apr3d_apply(faces[static_cast<std::size_t>(s.face)].image, s.shape, model);
    });
    return model;
}

Shape2D apr3d_apply(const GrayImage& img, const Shape2D& shape, const Apr3dModel& model) {
    if (model.scale_forest.trees.empty()) throw UsageError("apr3d_apply: untrained model");
    const WorkFrame frame = make_face_frame(img, shape, model.config.feature.patch_side,
                                            model.config.face_px);
    const Shape2D sc = apply_affine(shape, frame.to_crop);
    const PoseFitResult fit = fit_pose(model.mean3d, sc, default_pose_init(model.mean3d, sc));
    if (fit.degenerate) {
        std::cerr << "apr3d_apply: warning: degenerate pose fit, shape left unchanged\n";
        return shape;
    }
    const Eigen::VectorXf x = whole_crop_descriptor(frame.crop, model.config.feature);
    OrthoPose pose = fit.pose;
    pose.scale = std::max(pose.scale + predict(model.scale_forest, x)[0], 1e-6);
    const Eigen::VectorXd da = predict(model.angle_forest, x);
    pose.yaw += da[0];
    pose.pitch += da[1];
    pose.roll += da[2];
    const Eigen::VectorXd dt = predict(model.translation_forest, x);
    pose.tx += dt[0];
    pose.ty += dt[1];
    return apply_affine(project(model.mean3d, pose), invert_affine(frame.to_crop));
}

// ----------------------------------------------------------------------------
// LBF cascade

namespace {

struct SparseCodes {
    std::vector<std::vector<std::int32_t>> rows;  // sorted active columns per sample
    int columns = 0;                              // includes the trailing bias column
};

// Ridge regression of R (2n x N targets) on binary rows; solves the primal
// normal equations when the design is narrow and the kernel (dual) form when
// it is wide.
Eigen::MatrixXd ridge_solve(const SparseCodes& codes, const Eigen::MatrixXd& targets,
                            std::span<const int> rows_used, double lambda) {
    const int n_used = static_cast<int>(rows_used.size());
    const int dim = codes.columns;
    const int out_dim = static_cast<int>(targets.rows());

    if (dim <= n_used) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(dim, out_dim);
        for (int i : rows_used) {
            const auto& act = codes.rows[static_cast<std::size_t>(i)];
            for (std::int32_t a : act) {
                for (std::int32_t b : act) gram(a, b) += 1.0;
                xty.row(a) += targets.col(i).transpose();
            }
        }
        gram.diagonal().array() += lambda;
        return gram.ldlt().solve(xty).transpose();  // 2n x dim
    }

    // dual: W = Phi^T (Phi Phi^T + lambda I)^-1 R^T
    Eigen::MatrixXd kernel(n_used, n_used);
    for (int i = 0; i < n_used; ++i) {
        const auto& a = codes.rows[static_cast<std::size_t>(rows_used[i])];
        for (int j = i; j < n_used; ++j) {
            const auto& b = codes.rows[static_cast<std::size_t>(rows_used[j])];
            int shared = 0;
            std::size_t p = 0, q = 0;
            while (p < a.size() && q < b.size()) {
                if (a[p] == b[q]) {
                    ++shared;
                    ++p;
                    ++q;
                } else if (a[p] < b[q]) {
                    ++p;
                } else {
                    ++q;
                }
            }
            kernel(i, j) = kernel(j, i) = shared;
        }
    }
    kernel.diagonal().array() += lambda;

    Eigen::MatrixXd rhs(n_used, out_dim);
    for (int i = 0; i < n_used; ++i) rhs.row(i) = targets.col(rows_used[i]).transpose();
    const Eigen::MatrixXd alpha = kernel.ldlt().solve(rhs);  // n_used x 2n

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(out_dim, dim);
    for (int i = 0; i < n_used; ++i)
        for (std::int32_t a : codes.rows[static_cast<std::size_t>(rows_used[i])])
            weights.col(a) += alpha.row(i).transpose();
    return weights;
}

Eigen::VectorXd apply_codes(const Eigen::MatrixXd& weights,
                            const std::vector<std::int32_t>& active) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(weights.rows());
    for (std::int32_t a : active) out += weights.col(a);
    return out;
}

double holdout_mse(const Eigen::MatrixXd& weights, const SparseCodes& codes,
                   const Eigen::MatrixXd& targets, std::span<const int> rows_used) {
    double sum = 0.0;
    for (int i : rows_used)
        sum += (apply_codes(weights, codes.rows[static_cast<std::size_t>(i)]) - targets.col(i))
                   .squaredNorm();
    return sum / static_cast<double>(rows_used.size());
}

}  // namespace

LbfModel lbf_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                   const Shape2D& mean_shape, const LbfConfig& config, const TrainConfig& train) {
    validate_faces(faces);
    if (samples.empty()) throw DataError("lbf_train: no samples");
    if (mean_shape.cols() != faces[0].shape.cols())
        throw DataError("lbf_train: mean shape landmark count mismatch");

    const int n_landmarks = static_cast<int>(mean_shape.cols());
    const int n_samples = static_cast<int>(samples.size());
    const int feat_dim = config.feature.descriptor_length();
    const Rng root(train.seed);

    LbfModel model;
    model.config = config;
    model.mean_shape = mean_shape;

    for (int iter = 0; iter < config.iterations; ++iter) {
        const Rng iter_rng = root.child(0x1BF000u + static_cast<std::uint64_t>(iter));

        // per-landmark features and mean-frame residual targets
        std::vector<Eigen::MatrixXf> X(static_cast<std::size_t>(n_landmarks));
        std::vector<Eigen::MatrixXd> Y(static_cast<std::size_t>(n_landmarks));
        for (int l = 0; l < n_landmarks; ++l) {
            X[static_cast<std::size_t>(l)].resize(feat_dim, n_samples);
            Y[static_cast<std::size_t>(l)].resize(2, n_samples);
        }
        std::vector<AffinePair> mean_to_cur(static_cast<std::size_t>(n_samples));
        std::vector<AffineParams> frames(static_cast<std::size_t>(n_samples));

        parallel_for(n_samples, [&](int i) {
            const TrainSample& s = samples[static_cast<std::size_t>(i)];
            const AnnotatedFace& face = faces[static_cast<std::size_t>(s.face)];
            const WorkFrame frame =
                make_face_frame(face.image, s.shape, config.crop_side, config.face_px);
            const Shape2D sc = apply_affine(s.shape, frame.to_crop);
            const Shape2D gc = apply_affine(face.shape, frame.to_crop);
            const AffinePair fwd = linear_part(similarity_align(mean_shape, sc));
            const AffinePair inv = invert_linear(fwd);
            for (int l = 0; l < n_landmarks; ++l) {
                X[static_cast<std::size_t>(l)].col(i) =
                    landmark_descriptor(frame.crop, sc(0, l), sc(1, l), config.feature);
                Y[static_cast<std::size_t>(l)].col(i) =
                    apply_linear(inv, gc.col(l) - sc.col(l));
            }
            mean_to_cur[static_cast<std::size_t>(i)] = fwd;
            frames[static_cast<std::size_t>(i)] = frame.to_crop;
        });

        LbfIterationModel m;
        m.landmark_forests.resize(static_cast<std::size_t>(n_landmarks));
        parallel_for(n_landmarks, [&](int l) {
            m.landmark_forests[static_cast<std::size_t>(l)] =
                train_forest(X[static_cast<std::size_t>(l)], Y[static_cast<std::size_t>(l)],
                             config.forest, iter_rng.child(static_cast<std::uint64_t>(l)).seed());
        });

        // concatenated leaf codes + bias column
        SparseCodes codes;
        codes.rows.resize(static_cast<std::size_t>(n_samples));
        std::vector<std::int32_t> offsets(static_cast<std::size_t>(n_landmarks) + 1, 0);
        for (int l = 0; l < n_landmarks; ++l)
            offsets[static_cast<std::size_t>(l) + 1] =
                offsets[static_cast<std::size_t>(l)] +
                m.landmark_forests[static_cast<std::size_t>(l)].total_leaves();
        codes.columns = offsets[static_cast<std::size_t>(n_landmarks)] + 1;
        parallel_for(n_samples, [&](int i) {
            auto& row = codes.rows[static_cast<std::size_t>(i)];
            row.reserve(static_cast<std::size_t>(n_landmarks) + 1);
            for (int l = 0; l < n_landmarks; ++l) {
                const LeafCode code = leaf_code(m.landmark_forests[static_cast<std::size_t>(l)],
                                                X[static_cast<std::size_t>(l)].col(i));
                for (std::int32_t a : code.active)
                    row.push_back(offsets[static_cast<std::size_t>(l)] + a);
            }
            row.push_back(codes.columns - 1);  // bias
        });

        // stacked residual targets (x, y per landmark)
        Eigen::MatrixXd targets(2 * n_landmarks, n_samples);
        for (int l = 0; l < n_landmarks; ++l) {
            targets.row(2 * l) = Y[static_cast<std::size_t>(l)].row(0);
            targets.row(2 * l + 1) = Y[static_cast<std::size_t>(l)].row(1);
        }

        // lambda by held-out images, then refit on everything
        std::vector<int> face_ids;
        for (const TrainSample& s : samples)
            if (face_ids.empty() || face_ids.back() != s.face) face_ids.push_back(s.face);
        std::sort(face_ids.begin(), face_ids.end());
        face_ids.erase(std::unique(face_ids.begin(), face_ids.end()), face_ids.end());
        Rng holdout_rng = iter_rng.child(0xFACEu);
        holdout_rng.shuffle(face_ids);
        const std::size_t n_holdout =
            std::min(face_ids.size() - 1,
                     std::max<std::size_t>(1, static_cast<std::size_t>(
                                                  train.holdout_fraction *
                                                  static_cast<double>(face_ids.size()))));
        std::vector<std::uint8_t> is_holdout_face(faces.size(), 0);
        for (std::size_t i = 0; i < n_holdout; ++i)
            is_holdout_face[static_cast<std::size_t>(face_ids[face_ids.size() - 1 - i])] = 1;

        std::vector<int> fit_rows, val_rows;
        for (int i = 0; i < n_samples; ++i)
            (is_holdout_face[static_cast<std::size_t>(samples[static_cast<std::size_t>(i)].face)]
                 ? val_rows
                 : fit_rows)
                .push_back(i);

        double best_lambda = train.ridge_lambdas.front();
        if (train.ridge_lambdas.size() > 1 && !val_rows.empty() && !fit_rows.empty()) {
            double best_mse = std::numeric_limits<double>::infinity();
            for (double lambda : train.ridge_lambdas) {
                const Eigen::MatrixXd w = ridge_solve(codes, targets, fit_rows, lambda);
                const double mse = holdout_mse(w, codes, targets, val_rows);
                if (mse < best_mse) {
                    best_mse = mse;
                    best_lambda = lambda;
                }
            }
        }
        std::vector<int> all_rows(static_cast<std::size_t>(n_samples));
        std::iota(all_rows.begin(), all_rows.end(), 0);
        m.global_weights = ridge_solve(codes, targets, all_rows, best_lambda);

        // advance the training shapes through this iteration
        parallel_for(n_samples, [&](int i) {
            TrainSample& s = samples[static_cast<std::size_t>(i)];
            const Eigen::VectorXd delta =
                apply_codes(m.global_weights, codes.rows[static_cast<std::size_t>(i)]);
            Shape2D sc = apply_affine(s.shape, frames[static_cast<std::size_t>(i)]);
            const AffinePair& fwd = mean_to_cur[static_cast<std::size_t>(i)];
            for (int l = 0; l < n_landmarks; ++l)
                sc.col(l) += apply_linear(fwd, Eigen::Vector2d(delta[2 * l], delta[2 * l + 1]));
            s.shape = apply_affine(sc, invert_affine(frames[static_cast<std::size_t>(i)]));
        });

        model.iterations.push_back(std::move(m));
    }
    return model;
}

namespace {

Shape2D lbf_step(const GrayImage& img, const Shape2D& shape, const LbfModel& model,
                 const LbfIterationModel& m) {
    const LbfConfig& cfg = model.config;
    const int n = static_cast<int>(model.mean_shape.cols());
    const WorkFrame frame = make_face_frame(img, shape, cfg.crop_side, cfg.face_px);
    Shape2D sc = apply_affine(shape, frame.to_crop);
    const AffinePair fwd = linear_part(similarity_align(model.mean_shape, sc));

    std::vector<std::int32_t> active;
    active.reserve(static_cast<std::size_t>(n) + 1);
    std::int32_t offset = 0;
    for (int l = 0; l < n; ++l) {
        const Eigen::VectorXf x = landmark_descriptor(frame.crop, sc(0, l), sc(1, l), cfg.feature);
        const LeafCode code = leaf_code(m.landmark_forests[static_cast<std::size_t>(l)], x);
        for (std::int32_t a : code.active) active.push_back(offset + a);
        offset += m.landmark_forests[static_cast<std::size_t>(l)].total_leaves();
    }
    active.push_back(static_cast<std::int32_t>(m.global_weights.cols()) - 1);

    const Eigen::VectorXd delta = apply_codes(m.global_weights, active);
    for (int l = 0; l < n; ++l)
        sc.col(l) += apply_linear(fwd, Eigen::Vector2d(delta[2 * l], delta[2 * l + 1]));
    return apply_affine(sc, invert_affine(frame.to_crop));
}

}  // namespace

Shape2D lbf_apply(const GrayImage& img, const Shape2D& shape, const LbfModel& model) {
    if (model.iterations.empty()) throw UsageError("lbf_apply: untrained model");
    Shape2D current = shape;
    for (const LbfIterationModel& m : model.iterations) current = lbf_step(img, current, model, m);
    return current;
}

std::vector<Shape2D> lbf_apply_trace(const GrayImage& img, const Shape2D& shape,
                                     const LbfModel& model) {
    if (model.iterations.empty()) throw UsageError("lbf_apply_trace: untrained model");
    std::vector<Shape2D> trace;
    Shape2D current = shape;
    for (const LbfIterationModel& m : model.iterations) {
        current = lbf_step(img, current, model, m);
        trace.push_back(current);
    }
    return trace;
}

// ----------------------------------------------------------------------------
// Pipeline

PipelineModel train_pipeline(std::span<const AnnotatedFace> faces, const MeanShape3D& mean3d,
                             const PipelineConfig& config) {
    validate_faces(faces);
    PipelineModel model;
    model.n_landmarks = static_cast<int>(faces[0].shape.cols());
    model.mean_shape = procrustes_mean_shape(faces);

    Rng rng(config.train.seed);
    std::vector<TrainSample> samples;
    if (config.use_apr || config.use_apr3d) {
        Rng sample_rng = rng.child(1);
        samples = make_perturbed_samples(faces, model.mean_shape, config.train.perturb,
                                         sample_rng);
    }
    if (config.use_apr) model.apr = apr_train(faces, samples, config.apr, config.train);
    if (config.use_apr3d) {
        if (mean3d.cols() != model.n_landmarks)
            throw DataError("train_pipeline: mean 3-D shape does not match the landmark scheme");
        model.apr3d = apr3d_train(faces, samples, mean3d, config.apr3d, config.train);
    }
    if (config.use_lbf) {
        if (samples.empty()) {
            Rng sample_rng = rng.child(2);
            samples = make_exchanged_samples(faces, model.mean_shape, config.train.perturb,
                                             sample_rng);
        }
        model.lbf = lbf_train(faces, samples, model.mean_shape, config.lbf, config.train);
    }
    return model;
}

Shape2D run_pipeline(const GrayImage& img, const FaceBox& box, const PipelineModel& model,
                     const StageOptions& stages) {
    const PipelineTrace trace = run_pipeline_trace(img, box, model, stages);
    return trace.shapes.back();
}

PipelineTrace run_pipeline_trace(const GrayImage& img, const FaceBox& box,
                                 const PipelineModel& model, const StageOptions& stages) {
    if (model.mean_shape.cols() == 0) throw UsageError("run_pipeline: untrained model");
    PipelineTrace trace;
    Shape2D current = place_mean_shape(model.mean_shape, box);
    trace.labels.push_back("init");
    trace.shapes.push_back(current);

    if (stages.apr) {
        if (!model.apr) throw UsageError("run_pipeline: APR stage requested but not trained");
        current = apr_apply(img, current, *model.apr);
        trace.labels.push_back("apr");
        trace.shapes.push_back(current);
    }
    if (stages.apr3d) {
        if (!model.apr3d)
            throw UsageError("run_pipeline: 3D-APR stage requested but not trained");
        current = apr3d_apply(img, current, *model.apr3d);
        trace.labels.push_back("apr3d");
        trace.shapes.push_back(current);
    }
    if (stages.lbf) {
        if (!model.lbf) throw UsageError("run_pipeline: LBF stage requested but not trained");
        const std::vector<Shape2D> steps = lbf_apply_trace(img, current, *model.lbf);
        for (std::size_t i = 0; i < steps.size(); ++i) {
            trace.labels.push_back("lbf" + std::to_string(i + 1));
            trace.shapes.push_back(steps[i]);
        }
        current = trace.shapes.back();
    }
    return trace;
}

}  // namespace krfws

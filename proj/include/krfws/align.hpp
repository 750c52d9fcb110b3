#pragma once

#include <optional>
#include <span>
#include <vector>

#include "krfws/data.hpp"
#include "krfws/forest.hpp"
#include "krfws/geom.hpp"
#include "krfws/hog.hpp"

namespace krfws {

// ============================================================================
// Shape initialization + alignment pipeline
// ============================================================================
//
// Three stages, each optional: APR regresses a 2-D affine correction of the
// whole shape, 3D-APR regresses an update to a scaled-orthographic pose and
// re-projects a mean 3-D shape, and the LBF-style cascade regresses
// per-landmark residuals from forest leaf codes. All stages work in a
// face-centered crop: the current shape's bounding-box diagonal is mapped to
// face_px * sqrt(2) pixels, so descriptors see a face of roughly
// face_px x face_px regardless of image scale.

struct StageFeatureConfig {
    int patch_side = 64;
    std::vector<int> levels = {64, 32, 16};  // PHOG cell sizes, coarsest first
    HogParams hog;

    int descriptor_length() const;
};

struct PerturbConfig {
    int per_image = 10;  // total initial shapes per image (first is bbox-placed)
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double translate_frac = 0.05;  // of face size, per axis
    double rotate_deg = 15.0;
};

struct TrainConfig {
    PerturbConfig perturb;
    std::uint64_t seed = 1;
    std::vector<double> ridge_lambdas = {0.1, 1.0, 10.0};
    double holdout_fraction = 0.2;  // lambda selection split, by image
};

// One in-flight training/inference state: which image, current shape estimate.
struct TrainSample {
    int face = 0;
    Shape2D shape;
};

// ----------------------------------------------------------------------------
// Working frame

struct WorkFrame {
    AffineParams to_crop;  // image -> crop (uniform scale + translation)
    GrayImage crop;
};

/// Crop of size crop_side whose center holds the current shape estimate,
/// rescaled so the shape's bounding-box diagonal spans face_px * sqrt(2).
WorkFrame make_face_frame(const GrayImage& img, const Shape2D& current, int crop_side,
                          double face_px);

/// Same crop built from a detector box instead of a shape (head-pose task).
WorkFrame make_box_frame(const GrayImage& img, const FaceBox& box, int crop_side,
                         double face_px);

/// Mean shape scaled by the bbox-diagonal ratio and centered in the box.
Shape2D place_mean_shape(const Shape2D& mean_shape, const FaceBox& box);

/// Per-image initial shapes: one bbox-placed mean shape, the rest similarity
/// perturbations of the ground truth (scale/rotation/translation ranges from
/// the config).
std::vector<TrainSample> make_perturbed_samples(std::span<const AnnotatedFace> faces,
                                                const Shape2D& mean_shape,
                                                const PerturbConfig& config, Rng& rng);

/// Initial shapes drawn from other images' normalized ground-truth shapes
/// placed in this image's box, plus the bbox-placed mean shape.
std::vector<TrainSample> make_exchanged_samples(std::span<const AnnotatedFace> faces,
                                                const Shape2D& mean_shape,
                                                const PerturbConfig& config, Rng& rng);

/// Generalized Procrustes mean of the ground-truth shapes, centered at the
/// origin with unit RMS radius.
Shape2D procrustes_mean_shape(std::span<const AnnotatedFace> faces, int iterations = 5);

// ----------------------------------------------------------------------------
// APR: per-iteration forests for a, b, c, d and a joint forest for (tx, ty).

struct AprConfig {
    int iterations = 2;
    int face_px = 64;
    StageFeatureConfig feature;  // extended HOG over the 64x64 face by default
    ForestParams forest;

    AprConfig();
};

struct AprIterationModel {
    KForest fa, fb, fc, fd;  // scalar transform entries
    KForest ft;              // joint (tx, ty)
};

struct AprModel {
    AprConfig config;
    std::vector<AprIterationModel> iterations;
};

/// Trains the cascade; `samples` advance through each iteration's predicted
/// transform, so they leave this call holding the post-APR shapes.
AprModel apr_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                   const AprConfig& config, const TrainConfig& train);

Shape2D apr_apply(const GrayImage& img, const Shape2D& shape, const AprModel& model);

// ----------------------------------------------------------------------------
// 3D-APR: fits the mean 3-D shape to the current estimate, regresses a pose
// update, and returns the re-projected shape.

struct Apr3dConfig {
    int face_px = 64;
    StageFeatureConfig feature;
    ForestParams forest;

    Apr3dConfig();
};

struct Apr3dModel {
    Apr3dConfig config;
    MeanShape3D mean3d;
    KForest scale_forest;        // delta k
    KForest angle_forest;        // delta (yaw, pitch, roll)
    KForest translation_forest;  // delta (tx, ty)
};

Apr3dModel apr3d_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                       const MeanShape3D& mean3d, const Apr3dConfig& config,
                       const TrainConfig& train);

/// Degenerate pose fits return the input shape unchanged (with a warning on
/// stderr); otherwise the output is an exact projection of the mean shape.
Shape2D apr3d_apply(const GrayImage& img, const Shape2D& shape, const Apr3dModel& model);

// ----------------------------------------------------------------------------
// LBF cascade: per-landmark forests over local PHOG, one global ridge
// regression per iteration from concatenated leaf codes (plus a constant
// bias column) to the full shape residual in the mean-shape frame.

struct LbfConfig {
    int iterations = 5;
    int face_px = 64;
    int crop_side = 128;  // leaves margin for the 32x32 landmark patches
    StageFeatureConfig feature;
    ForestParams forest;  // 5 trees, depth 7 per landmark

    LbfConfig();
};

struct LbfIterationModel {
    std::vector<KForest> landmark_forests;
    Eigen::MatrixXd global_weights;  // 2n x (total leaves + 1)
};

struct LbfModel {
    LbfConfig config;
    Shape2D mean_shape;  // unit-RMS frame
    std::vector<LbfIterationModel> iterations;
};

LbfModel lbf_train(std::span<const AnnotatedFace> faces, std::vector<TrainSample>& samples,
                   const Shape2D& mean_shape, const LbfConfig& config, const TrainConfig& train);

Shape2D lbf_apply(const GrayImage& img, const Shape2D& shape, const LbfModel& model);

/// Shapes after each cascade iteration (size = config.iterations).
std::vector<Shape2D> lbf_apply_trace(const GrayImage& img, const Shape2D& shape,
                                     const LbfModel& model);

// ----------------------------------------------------------------------------
// Full pipeline

struct PipelineModel {
    int n_landmarks = 0;
    Shape2D mean_shape;  // unit-RMS frame, used for bbox initialization
    std::optional<AprModel> apr;
    std::optional<Apr3dModel> apr3d;
    std::optional<LbfModel> lbf;
};

struct PipelineConfig {
    bool use_apr = true;
    bool use_apr3d = true;
    bool use_lbf = true;
    AprConfig apr;
    Apr3dConfig apr3d;
    LbfConfig lbf;
    TrainConfig train;
};

/// Trains the enabled stages in order; each stage consumes the shapes the
/// previous stage produced on the training images. A standalone LBF (no APR
/// stages) trains from exchanged ground-truth initializations instead.
/// mean3d is required when use_apr3d is set.
PipelineModel train_pipeline(std::span<const AnnotatedFace> faces, const MeanShape3D& mean3d,
                             const PipelineConfig& config);

struct StageOptions {
    bool apr = true;
    bool apr3d = true;
    bool lbf = true;
};

/// Mean shape in the box, then every enabled+trained stage. Requesting a
/// stage the model does not hold throws UsageError.
Shape2D run_pipeline(const GrayImage& img, const FaceBox& box, const PipelineModel& model,
                     const StageOptions& stages = {});

/// Shape after every pipeline step: init, APR, 3D-APR, then each LBF
/// iteration (only the stages that ran). Labels align with shapes.
struct PipelineTrace {
    std::vector<std::string> labels;
    std::vector<Shape2D> shapes;
};

PipelineTrace run_pipeline_trace(const GrayImage& img, const FaceBox& box,
                                 const PipelineModel& model, const StageOptions& stages = {});

}  // namespace krfws

#pragma once

#include <string>
#include <vector>

#include "krfws/geom.hpp"
#include "krfws/image.hpp"

namespace krfws {

// ============================================================================
// Dataset ingestion and synthetic harness
// ============================================================================

struct AnnotatedFace {
    std::string name;
    GrayImage image;
    Shape2D shape;  // ground truth landmarks
    FaceBox bbox;   // detector box
    bool has_pose = false;
    double yaw_deg = 0.0;    // pan
    double pitch_deg = 0.0;  // tilt
};

// ----------------------------------------------------------------------------
// 300-W style .pts annotations ("version / n_points / { x y ... }"). File
// coordinates are 1-indexed; loading shifts them to 0-indexed pixels and
// saving shifts back. Round-trips are stable to 6 decimals.

Shape2D load_pts(const std::string& path);
void save_pts(const std::string& path, const Shape2D& shape);

// ----------------------------------------------------------------------------
// Pointing'04 file names: personne<PP><S><NN...><signed tilt><signed pan>.<ext>
// e.g. "personne01146+0-30.jpg" -> person 1, series 1, tilt +0, pan -30.

struct Pointing04Name {
    int person = 0;
    int series = 0;
    int tilt_deg = 0;  // pitch
    int pan_deg = 0;   // yaw
};

Pointing04Name parse_pointing04_name(const std::string& filename);

/// Loads every parseable image in `dir`. Face region comes from `bbox_file`
/// ("name x y w h" per line) when given, otherwise the full image.
std::vector<AnnotatedFace> load_pointing04(const std::string& dir,
                                           const std::string& bbox_file = "");

// ----------------------------------------------------------------------------
// Synthetic faces: a mean 3-D shape projected at a random pose, a distinct
// oriented grating stamped at each landmark, plus background clutter. Ground
// truth is exact by construction (unless non-rigid jitter is requested, in
// which case the stamps follow the jittered truth).

struct SynthParams {
    int image_size = 128;
    double yaw_range = 0.45;  // radians
    double pitch_range = 0.35;
    double roll_range = 0.25;
    double scale_lo = 0.85;
    double scale_hi = 1.2;
    double nonrigid_px = 0.0;   // per-landmark truth jitter
    double bbox_jitter = 0.05;  // fraction of box size
    double background_noise = 0.04;
};

std::vector<AnnotatedFace> synth_faces(int count, std::uint64_t seed,
                                       const MeanShape3D& mean3d,
                                       const SynthParams& params = {});

/// Built-in 7-landmark scheme used by the synthetic harness: landmarks 0/1
/// are the right/left eye (used for error normalization), then nose tip,
/// mouth corners and jaw points.
MeanShape3D synth_mean_shape3d();

// ----------------------------------------------------------------------------
// 300-W splits. Expected layout under root: afw/, helen/trainset,
// helen/testset, lfpw/trainset, lfpw/testset, ibug/, each holding image +
// .pts pairs. Detector boxes come from an optional "name x y w h" list keyed
// by "<set>/<stem>"; tight ground-truth boxes are the fallback.

struct DatasetSplit {
    std::string name;  // train | common | challenging | full | custom
    std::vector<int> members;
};

struct Dataset300W {
    std::vector<AnnotatedFace> faces;
    DatasetSplit train;
    DatasetSplit common;
    DatasetSplit challenging;
    DatasetSplit full;
    std::vector<std::string> warnings;  // e.g. unexpected subset counts
};

struct Load300WOptions {
    std::string bbox_file;
    // Crop around 2.5x the detector box and cap the crop side; errors are
    // scale-normalized so this loses nothing while bounding memory. 0
    // disables cropping.
    int max_crop_side = 256;
};

Dataset300W make_300w_splits(const std::string& root, const Load300WOptions& opts = {});

/// Custom split: loads "image_path pts_path [x y w h]" lines.
std::vector<AnnotatedFace> load_custom_list(const std::string& list_file,
                                            const Load300WOptions& opts = {});

// ----------------------------------------------------------------------------
// 8-bit PNG/JPEG decoding; other formats are rejected. Color inputs reduce
// to grayscale with luma weights 0.299/0.587/0.114.

GrayImage load_image_gray(const std::string& path);

}  // namespace krfws

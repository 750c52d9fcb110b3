#include "krfws/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace krfws {

// ----------------------------------------------------------------------------
// .pts parsing

Shape2D load_pts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_pts: cannot open " + path);

    auto fail = [&](int line_no, const std::string& what) -> void {
        throw DataError("load_pts: " + path + ":" + std::to_string(line_no) + ": " + what);
    };

    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };

    if (!next_line() || line.rfind("version:", 0) != 0) fail(line_no, "expected 'version:' header");
    if (!next_line() || line.rfind("n_points:", 0) != 0)
        fail(line_no, "expected 'n_points:' header");
    int n = 0;
    try {
        n = std::stoi(line.substr(9));
    } catch (...) {
        fail(line_no, "bad point count");
    }
    if (n < 1) fail(line_no, "bad point count");
    if (!next_line() || line.find('{') == std::string::npos) fail(line_no, "expected '{'");

    Shape2D shape(2, n);
    for (int i = 0; i < n; ++i) {
        if (!next_line()) fail(line_no, "file ends before point " + std::to_string(i + 1));
        if (line.find('}') != std::string::npos)
            fail(line_no, "point count mismatch: got " + std::to_string(i) + " of " +
                              std::to_string(n));
        std::istringstream ss(line);
        double x, y;
        if (!(ss >> x >> y)) fail(line_no, "bad coordinate pair");
        // 1-indexed in the file, 0-indexed in memory
        shape(0, i) = x - 1.0;
        shape(1, i) = y - 1.0;
    }
    if (!next_line() || line.find('}') == std::string::npos) fail(line_no, "expected '}'");
    return shape;
}

void save_pts(const std::string& path, const Shape2D& shape) {
    std::ofstream out(path);
    if (!out) throw DataError("save_pts: cannot open " + path);
    out << "version: 1\n";
    out << "n_points:  " << shape.cols() << "\n";
    out << "{\n";
    char buf[80];
    for (Eigen::Index i = 0; i < shape.cols(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", shape(0, i) + 1.0, shape(1, i) + 1.0);
        out << buf;
    }
    out << "}\n";
}

// ----------------------------------------------------------------------------
// Pointing'04 names

Pointing04Name parse_pointing04_name(const std::string& filename) {
    static const std::regex pattern(
        R"(personne(\d{3,})([+-]\d+)([+-]\d+)\.(jpg|jpeg|png))",
        std::regex::icase);
    std::smatch m;
    if (!std::regex_match(filename, m, pattern))
        throw DataError("parse_pointing04_name: unrecognized file name '" + filename + "'");
    const std::string digits = m[1].str();
    Pointing04Name out;
    out.person = std::stoi(digits.substr(0, 2));
    out.series = digits[2] - '0';
    out.tilt_deg = std::stoi(m[2].str());
    out.pan_deg = std::stoi(m[3].str());
    return out;
}

namespace {

std::map<std::string, FaceBox> load_bbox_file(const std::string& path) {
    std::map<std::string, FaceBox> boxes;
    if (path.empty()) return boxes;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open bbox file " + path);
    std::string name;
    FaceBox box;
    while (in >> name >> box.x >> box.y >> box.w >> box.h) boxes[name] = box;
    return boxes;
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<AnnotatedFace> load_pointing04(const std::string& dir, const std::string& bbox_file) {
    if (!fs::is_directory(dir)) throw DataError("load_pointing04: not a directory: " + dir);
    const auto boxes = load_bbox_file(bbox_file);

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<AnnotatedFace> faces;
    for (const auto& file : files) {
        Pointing04Name parsed;
        try {
            parsed = parse_pointing04_name(file.filename().string());
        } catch (const DataError&) {
            continue;  // unrelated file
        }
        AnnotatedFace face;
        face.name = file.filename().string();
        face.image = load_image_gray(file.string());
        face.has_pose = true;
        face.yaw_deg = parsed.pan_deg;
        face.pitch_deg = parsed.tilt_deg;
        const auto it = boxes.find(face.name);
        face.bbox = it != boxes.end()
                        ? it->second
                        : FaceBox{0, 0, static_cast<double>(face.image.width),
                                  static_cast<double>(face.image.height)};
        faces.push_back(std::move(face));
    }
    if (faces.empty()) throw DataError("load_pointing04: no parseable images under " + dir);
    return faces;
}

// ----------------------------------------------------------------------------
// Synthetic faces

MeanShape3D synth_mean_shape3d() {
    MeanShape3D s(3, 7);
    // right eye, left eye, nose tip, mouth right, mouth left, jaw right, jaw left
    s << -12, 12, 0, -9, 9, -20, 20,        // x
        -10, -10, 2, 12, 12, 2, 2,          // y (down)
        6, 6, 14, 6, 6, -6, -6;             // z (toward camera)
    const Eigen::Vector3d c = s.rowwise().mean();
    return s.colwise() - c;
}

namespace {

void stamp_grating(GrayImage& img, double px, double py, double orientation,
                   double wavelength, double sigma, double amplitude) {
    const double ux = std::cos(orientation);
    const double uy = std::sin(orientation);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(std::floor(px)) - radius);
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(px)) + radius);
    const int y0 = std::max(0, static_cast<int>(std::floor(py)) - radius);
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(py)) + radius);
    const double two_pi = 2.0 * M_PI;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - px;
            const double dy = y - py;
            const double r2 = dx * dx + dy * dy;
            const double window = std::exp(-r2 / (2.0 * sigma * sigma));
            const double phase = two_pi * (ux * dx + uy * dy) / wavelength;
            img.at(x, y) += static_cast<float>(amplitude * std::cos(phase) * window);
        }
    }
}

}  // namespace

std::vector<AnnotatedFace> synth_faces(int count, std::uint64_t seed, const MeanShape3D& mean3d,
                                       const SynthParams& params) {
    if (count < 1) throw UsageError("synth_faces: count must be >= 1");
    const int n = static_cast<int>(mean3d.cols());
    const int size = params.image_size;

    const FaceBox frontal = shape_bounds(Shape2D(mean3d.topRows<2>()));
    const double frontal_diag = frontal.diagonal();

    const Rng base(seed);
    std::vector<AnnotatedFace> faces(static_cast<std::size_t>(count));
    for (int f = 0; f < count; ++f) {
        Rng rng = base.child(static_cast<std::uint64_t>(f));
        AnnotatedFace& face = faces[static_cast<std::size_t>(f)];
        face.name = "synth_" + std::to_string(f);

        OrthoPose pose;
        pose.yaw = rng.uniform(-params.yaw_range, params.yaw_range);
        pose.pitch = rng.uniform(-params.pitch_range, params.pitch_range);
        pose.roll = rng.uniform(-params.roll_range, params.roll_range);
        const double face_px = 0.42 * size * rng.uniform(params.scale_lo, params.scale_hi);
        pose.scale = face_px / frontal_diag * std::sqrt(2.0);
        pose.tx = 0.5 * size + rng.uniform(-0.04, 0.04) * size;
        pose.ty = 0.5 * size + rng.uniform(-0.04, 0.04) * size;
        face.has_pose = true;
        face.yaw_deg = pose.yaw * 180.0 / M_PI;
        face.pitch_deg = pose.pitch * 180.0 / M_PI;

        face.shape = project(mean3d, pose);
        if (params.nonrigid_px > 0.0)
            for (int l = 0; l < n; ++l) {
                face.shape(0, l) += rng.normal(0.0, params.nonrigid_px);
                face.shape(1, l) += rng.normal(0.0, params.nonrigid_px);
            }

        // background: gentle ramp plus white noise
        GrayImage img(size, size, 0.5f);
        const double gx = rng.uniform(-1.0, 1.0) * 0.1 / size;
        const double gy = rng.uniform(-1.0, 1.0) * 0.1 / size;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(x, y) += static_cast<float>(
                    gx * x + gy * y + rng.normal(0.0, params.background_noise));

        // one oriented grating per landmark; orientation tracks head roll and
        // scale tracks face size so appearance carries the pose
        const double scale_ratio = pose.scale * frontal_diag / (std::sqrt(2.0) * 0.42 * 128.0);
        for (int l = 0; l < n; ++l) {
            const double orientation = M_PI * l / n + pose.roll;
            const double wavelength = (5.0 + 2.0 * (l % 3)) * std::max(scale_ratio, 0.3);
            const double sigma = 3.5 * std::max(scale_ratio, 0.3);
            stamp_grating(img, face.shape(0, l), face.shape(1, l), orientation, wavelength,
                          sigma, 0.42);
        }
        for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
        face.image = std::move(img);

        FaceBox box = shape_bounds(face.shape);
        const double pad = 0.12 * std::max(box.w, box.h);
        box.x -= pad;
        box.y -= pad;
        box.w += 2 * pad;
        box.h += 2 * pad;
        const double jitter = params.bbox_jitter * std::max(box.w, box.h);
        box.x += rng.uniform(-jitter, jitter);
        box.y += rng.uniform(-jitter, jitter);
        box.w *= rng.uniform(1.0 - params.bbox_jitter, 1.0 + params.bbox_jitter);
        box.h *= rng.uniform(1.0 - params.bbox_jitter, 1.0 + params.bbox_jitter);
        face.bbox = box;
    }
    return faces;
}

// ----------------------------------------------------------------------------
// 300-W splits

namespace {

struct CropResult {
    GrayImage image;
    AffineParams to_crop;
};

CropResult crop_to_face(const GrayImage& img, const FaceBox& box, int max_side) {
    const double src_side = 2.5 * std::max(box.w, box.h);
    const double scale = std::min(1.0, static_cast<double>(max_side) / src_side);
    const int out_side = std::max(32, static_cast<int>(std::lround(src_side * scale)));
    AffineParams to_crop;
    to_crop.a = to_crop.d = scale;
    to_crop.b = to_crop.c = 0.0;
    to_crop.tx = 0.5 * out_side - scale * box.cx();
    to_crop.ty = 0.5 * out_side - scale * box.cy();
    CropResult out;
    out.image = warp_similarity(img, scale, to_crop.tx, to_crop.ty, out_side, out_side);
    out.to_crop = to_crop;
    return out;
}

AnnotatedFace load_annotated(const fs::path& img_path, const fs::path& pts_path,
                             const std::string& name, const FaceBox* box_hint,
                             const Load300WOptions& opts) {
    AnnotatedFace face;
    face.name = name;
    face.image = load_image_gray(img_path.string());
    face.shape = load_pts(pts_path.string());

    if (box_hint) {
        face.bbox = *box_hint;
    } else {
        // tight ground-truth box as detector stand-in
        face.bbox = shape_bounds(face.shape);
    }

    if (opts.max_crop_side > 0) {
        CropResult crop = crop_to_face(face.image, face.bbox, opts.max_crop_side);
        face.image = std::move(crop.image);
        face.shape = apply_affine(face.shape, crop.to_crop);
        const Eigen::Vector2d tl =
            apply_affine(Eigen::Vector2d(face.bbox.x, face.bbox.y), crop.to_crop);
        face.bbox = FaceBox{tl.x(), tl.y(), face.bbox.w * crop.to_crop.a,
                            face.bbox.h * crop.to_crop.a};
    }
    return face;
}

// image+pts pairs of one subset directory, sorted by name
std::vector<std::pair<fs::path, fs::path>> scan_subset(const fs::path& dir) {
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (!fs::is_directory(dir)) return pairs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        fs::path pts = entry.path();
        pts.replace_extension(".pts");
        if (fs::exists(pts)) pairs.emplace_back(entry.path(), pts);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

}  // namespace

Dataset300W make_300w_splits(const std::string& root, const Load300WOptions& opts) {
    const fs::path base(root);
    if (!fs::is_directory(base)) throw DataError("make_300w_splits: not a directory: " + root);
    const auto boxes = load_bbox_file(opts.bbox_file);

    Dataset300W ds;
    ds.train.name = "train";
    ds.common.name = "common";
    ds.challenging.name = "challenging";
    ds.full.name = "full";

    struct SubsetSpec {
        const char* rel;
        DatasetSplit Dataset300W::* split;
    };
    const SubsetSpec subsets[] = {
        {"afw", &Dataset300W::train},
        {"helen/trainset", &Dataset300W::train},
        {"lfpw/trainset", &Dataset300W::train},
        {"helen/testset", &Dataset300W::common},
        {"lfpw/testset", &Dataset300W::common},
        {"ibug", &Dataset300W::challenging},
    };

    for (const auto& subset : subsets) {
        const auto pairs = scan_subset(base / subset.rel);
        if (pairs.empty())
            ds.warnings.push_back(std::string("missing or empty subset: ") + subset.rel);
        for (const auto& [img_path, pts_path] : pairs) {
            const std::string key =
                std::string(subset.rel) + "/" + img_path.stem().string();
            const FaceBox* hint = nullptr;
            auto it = boxes.find(key);
            if (it == boxes.end()) it = boxes.find(img_path.stem().string());
            if (it != boxes.end()) hint = &it->second;

            (ds.*(subset.split)).members.push_back(static_cast<int>(ds.faces.size()));
            ds.faces.push_back(load_annotated(img_path, pts_path, key, hint, opts));
        }
    }

    ds.full.members = ds.common.members;
    ds.full.members.insert(ds.full.members.end(), ds.challenging.members.begin(),
                           ds.challenging.members.end());

    const auto check = [&](const DatasetSplit& split, std::size_t expected) {
        if (!split.members.empty() && split.members.size() != expected)
            ds.warnings.push_back(split.name + " has " + std::to_string(split.members.size()) +
                                  " images, expected " + std::to_string(expected));
    };
    check(ds.train, 3148);
    check(ds.common, 554);
    check(ds.challenging, 135);
    return ds;
}

std::vector<AnnotatedFace> load_custom_list(const std::string& list_file,
                                            const Load300WOptions& opts) {
    std::ifstream in(list_file);
    if (!in) throw DataError("load_custom_list: cannot open " + list_file);
    std::vector<AnnotatedFace> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string img_path, pts_path;
        if (!(ss >> img_path >> pts_path))
            throw DataError("load_custom_list: " + list_file + ":" + std::to_string(line_no) +
                            ": expected 'image pts [x y w h]'");
        FaceBox box;
        const bool has_box = static_cast<bool>(ss >> box.x >> box.y >> box.w >> box.h);
        faces.push_back(load_annotated(img_path, pts_path, fs::path(img_path).stem().string(),
                                       has_box ? &box : nullptr, opts));
    }
    if (faces.empty()) throw DataError("load_custom_list: no entries in " + list_file);
    return faces;
}

}  // namespace krfws

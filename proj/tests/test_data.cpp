#include <filesystem>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "krfws/data.hpp"

using namespace krfws;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("krfws_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("load_pts parses the 300-W text format") {
    TempDir tmp;
    const fs::path file = tmp.path / "face.pts";
    write_file(file,
               "version: 1\n"
               "n_points:  3\n"
               "{\n"
               "10.5 20.25\n"
               "1.0 1.0\n"
               "30 40\n"
               "}\n");
    const Shape2D s = load_pts(file.string());
    REQUIRE(s.cols() == 3);
    // 1-indexed file coordinates shift to 0-indexed
    CHECK(s(0, 0) == doctest::Approx(9.5));
    CHECK(s(1, 0) == doctest::Approx(19.25));
    CHECK(s(0, 1) == doctest::Approx(0.0));
    CHECK(s(1, 2) == doctest::Approx(39.0));
}

TEST_CASE("load_pts reports malformed files with line numbers") {
    TempDir tmp;
    const fs::path short_file = tmp.path / "short.pts";
    write_file(short_file, "version: 1\nn_points: 68\n{\n1 2\n}\n");
    CHECK_THROWS_WITH_AS(load_pts(short_file.string()),
                         doctest::Contains("point count mismatch"), DataError);

    const fs::path bad_header = tmp.path / "bad.pts";
    write_file(bad_header, "nonsense\n");
    CHECK_THROWS_AS(load_pts(bad_header.string()), DataError);

    CHECK_THROWS_AS(load_pts((tmp.path / "missing.pts").string()), DataError);
}

TEST_CASE("pts round-trip is stable to 6 decimals") {
    TempDir tmp;
    Shape2D s(2, 5);
    s << 1.123456, 20.5, 300.25, 4.000001, 55.5,
        9.654321, 0.0, 12.125, 7.999999, 44.25;
    const fs::path file = tmp.path / "rt.pts";
    save_pts(file.string(), s);
    const Shape2D back = load_pts(file.string());
    REQUIRE(back.cols() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(back(0, i) == doctest::Approx(s(0, i)).epsilon(1e-6));
        CHECK(back(1, i) == doctest::Approx(s(1, i)).epsilon(1e-6));
    }
}

TEST_CASE("parse_pointing04_name extracts person, series and angles") {
    const Pointing04Name a = parse_pointing04_name("personne01146+0-30.jpg");
    CHECK(a.person == 1);
    CHECK(a.series == 1);
    CHECK(a.tilt_deg == 0);
    CHECK(a.pan_deg == -30);

    const Pointing04Name b = parse_pointing04_name("personne0527-60+90.jpg");
    CHECK(b.person == 5);
    CHECK(b.series == 2);
    CHECK(b.tilt_deg == -60);
    CHECK(b.pan_deg == 90);

    CHECK_THROWS_AS(parse_pointing04_name("face.jpg"), DataError);
}

TEST_CASE("synth_faces is deterministic and count-independent") {
    const MeanShape3D mean3d = synth_mean_shape3d();
    const auto a = synth_faces(10, 42, mean3d);
    const auto b = synth_faces(10, 42, mean3d);
    const auto c = synth_faces(4, 42, mean3d);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(a[i].image.data == b[i].image.data);
        CHECK(a[i].shape == b[i].shape);
        CHECK(a[i].bbox.x == b[i].bbox.x);
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].image.data == c[i].image.data);

    const auto d = synth_faces(4, 43, mean3d);
    CHECK(a[0].image.data != d[0].image.data);
}

TEST_CASE("synth ground truth is consistent with its generating pose") {
    const MeanShape3D mean3d = synth_mean_shape3d();
    SynthParams params;
    params.nonrigid_px = 0.0;
    const auto faces = synth_faces(6, 7, mean3d, params);
    for (const auto& face : faces) {
        const PoseFitResult fit =
            fit_pose(mean3d, face.shape, default_pose_init(mean3d, face.shape));
        CHECK(fit.residual_norm < 1e-6);
        CHECK(std::fabs(fit.pose.yaw * 180.0 / M_PI - face.yaw_deg) < 1e-6);
        CHECK(std::fabs(fit.pose.pitch * 180.0 / M_PI - face.pitch_deg) < 1e-6);
    }
}

TEST_CASE("synthetic landmarks stay inside the image") {
    const MeanShape3D mean3d = synth_mean_shape3d();
    const auto faces = synth_faces(25, 3, mean3d);
    for (const auto& face : faces) {
        CHECK(face.shape.row(0).minCoeff() >= 0.0);
        CHECK(face.shape.row(1).minCoeff() >= 0.0);
        CHECK(face.shape.row(0).maxCoeff() <= face.image.width - 1);
        CHECK(face.shape.row(1).maxCoeff() <= face.image.height - 1);
    }
}

namespace {

void write_face_png(const fs::path& p, const GrayImage& img) {
    cv::Mat m(img.height, img.width, CV_8UC1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            m.at<std::uint8_t>(y, x) =
                static_cast<std::uint8_t>(std::lround(img.at(x, y) * 255.0f));
    REQUIRE(cv::imwrite(p.string(), m));
}

}  // namespace

TEST_CASE("make_300w_splits loads pairs, keeps splits disjoint, and warns on counts") {
    TempDir tmp;
    fs::create_directories(tmp.path / "afw");
    fs::create_directories(tmp.path / "helen" / "testset");
    fs::create_directories(tmp.path / "lfpw" / "testset");
    // no ibug/ directory: challenging must come back empty with a warning

    const MeanShape3D mean3d = synth_mean_shape3d();
    const auto faces = synth_faces(4, 5, mean3d);
    const char* names[] = {"afw/a1", "afw/a2", "helen/testset/h1", "lfpw/testset/l1"};
    for (int i = 0; i < 4; ++i) {
        const fs::path stem = tmp.path / names[i];
        write_face_png(stem.string() + ".png", faces[i].image);
        save_pts(stem.string() + ".pts", faces[i].shape);
    }

    Load300WOptions opts;
    opts.max_crop_side = 0;  // keep original geometry for exact comparisons
    const Dataset300W ds = make_300w_splits(tmp.path.string(), opts);
    REQUIRE(ds.faces.size() == 4);
    CHECK(ds.train.members.size() == 2);
    CHECK(ds.common.members.size() == 2);
    CHECK(ds.challenging.members.empty());
    CHECK(ds.full.members.size() == 2);
    CHECK(!ds.warnings.empty());  // subset counts differ from the standard protocol

    // disjoint: train vs full
    for (int t : ds.train.members)
        for (int f : ds.full.members) CHECK(t != f);

    // shapes round-trip through save_pts/load_pts to 6 decimals
    const AnnotatedFace& first = ds.faces[static_cast<std::size_t>(ds.train.members[0])];
    CHECK((first.shape - faces[0].shape).cwiseAbs().maxCoeff() < 1e-5);
    // tight gt box fallback when no bbox file is given
    CHECK(first.bbox.w == doctest::Approx(shape_bounds(faces[0].shape).w).epsilon(1e-5));
}

TEST_CASE("face cropping preserves normalized geometry") {
    TempDir tmp;
    fs::create_directories(tmp.path / "ibug");
    const MeanShape3D mean3d = synth_mean_shape3d();
    const auto faces = synth_faces(1, 9, mean3d);
    write_face_png((tmp.path / "ibug" / "i1.png").string(), faces[0].image);
    save_pts((tmp.path / "ibug" / "i1.pts").string(), faces[0].shape);

    Load300WOptions opts;
    opts.max_crop_side = 96;
    const Dataset300W ds = make_300w_splits(tmp.path.string(), opts);
    REQUIRE(ds.faces.size() == 1);
    const AnnotatedFace& face = ds.faces[0];
    CHECK(face.image.width <= 96);
    // relative geometry survives the crop: inter-landmark distance ratios
    const double orig_ratio = (faces[0].shape.col(0) - faces[0].shape.col(1)).norm() /
                              (faces[0].shape.col(2) - faces[0].shape.col(5)).norm();
    const double crop_ratio = (face.shape.col(0) - face.shape.col(1)).norm() /
                              (face.shape.col(2) - face.shape.col(5)).norm();
    CHECK(orig_ratio == doctest::Approx(crop_ratio).epsilon(1e-4));
}

TEST_CASE("load_image_gray round-trips PNG pixels and rejects other formats") {
    TempDir tmp;
    GrayImage img(8, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) img.at(x, y) = static_cast<float>((x + y * 8) % 256) / 255.0f;
    const fs::path file = tmp.path / "gray.png";
    write_face_png(file, img);
    const GrayImage back = load_image_gray(file.string());
    REQUIRE(back.width == 8);
    REQUIRE(back.height == 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) CHECK(back.at(x, y) == doctest::Approx(img.at(x, y)).epsilon(1e-3));

    CHECK_THROWS_AS(load_image_gray("/nonexistent/file.bmp"), DataError);
    CHECK_THROWS_AS(load_image_gray("/nonexistent/file.png"), DataError);
}

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "krfws/config.hpp"
#include "krfws/model_io.hpp"
#include "krfws/serialize.hpp"

namespace fs = std::filesystem;

namespace krfws {

namespace {

constexpr int kFormatVersion = 1;
constexpr char kMatrixMagic[] = "KRFWSMAT";

void write_feature_config(KeyValues& kv, const std::string& prefix,
                          const StageFeatureConfig& cfg) {
    kv.set_int(prefix + ".patch", cfg.patch_side);
    kv.set_int_list(prefix + ".levels", cfg.levels);
    kv.set_int(prefix + ".bins", cfg.hog.orientation_bins);
    kv.set_bool(prefix + ".signed", cfg.hog.signed_orientations);
    kv.set_int(prefix + ".block_cells", cfg.hog.block_cells);
    kv.set_string(prefix + ".variant",
                  cfg.hog.variant == HogVariant::Extended ? "extended" : "basic");
}

StageFeatureConfig read_feature_config(const KeyValues& kv, const std::string& prefix,
                                       const StageFeatureConfig& defaults) {
    StageFeatureConfig cfg = defaults;
    cfg.patch_side = kv.get_int(prefix + ".patch", cfg.patch_side);
    cfg.levels = kv.get_int_list(prefix + ".levels", cfg.levels);
    cfg.hog.orientation_bins = kv.get_int(prefix + ".bins", cfg.hog.orientation_bins);
    cfg.hog.signed_orientations = kv.get_bool(prefix + ".signed", cfg.hog.signed_orientations);
    cfg.hog.block_cells = kv.get_int(prefix + ".block_cells", cfg.hog.block_cells);
    const std::string variant = kv.get_string(
        prefix + ".variant", cfg.hog.variant == HogVariant::Extended ? "extended" : "basic");
    if (variant == "extended")
        cfg.hog.variant = HogVariant::Extended;
    else if (variant == "basic")
        cfg.hog.variant = HogVariant::Basic;
    else
        throw DataError("bundle: unknown HOG variant '" + variant + "'");
    return cfg;
}

void write_forest_config(KeyValues& kv, const std::string& prefix, const ForestParams& p) {
    kv.set_int(prefix + ".trees", p.n_trees);
    kv.set_double(prefix + ".bagging", p.bagging_fraction);
    kv.set_int(prefix + ".k", p.tree.K);
    kv.set_int(prefix + ".depth", p.tree.max_depth);
    kv.set_int(prefix + ".min_samples", p.tree.min_samples);
    kv.set_bool(prefix + ".weighted", p.tree.weighted);
    kv.set_double(prefix + ".svm_cost", p.tree.svm.cost);
    kv.set_double(prefix + ".svm_tol", p.tree.svm.tol);
    kv.set_int(prefix + ".svm_max_iter", p.tree.svm.max_iter);
}

ForestParams read_forest_config(const KeyValues& kv, const std::string& prefix,
                                const ForestParams& defaults) {
    ForestParams p = defaults;
    p.n_trees = kv.get_int(prefix + ".trees", p.n_trees);
    p.bagging_fraction = kv.get_double(prefix + ".bagging", p.bagging_fraction);
    p.tree.K = kv.get_int(prefix + ".k", p.tree.K);
    p.tree.max_depth = kv.get_int(prefix + ".depth", p.tree.max_depth);
    p.tree.min_samples = kv.get_int(prefix + ".min_samples", p.tree.min_samples);
    p.tree.weighted = kv.get_bool(prefix + ".weighted", p.tree.weighted);
    p.tree.svm.cost = kv.get_double(prefix + ".svm_cost", p.tree.svm.cost);
    p.tree.svm.tol = kv.get_double(prefix + ".svm_tol", p.tree.svm.tol);
    p.tree.svm.max_iter = kv.get_int(prefix + ".svm_max_iter", p.tree.svm.max_iter);
    return p;
}

void save_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_matrix: cannot open " + path);
    out.write(kMatrixMagic, sizeof(kMatrixMagic) - 1);
    write_mat(out, m);
}

Eigen::MatrixXd load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_matrix: cannot open " + path);
    expect_magic(in, kMatrixMagic, "load_matrix");
    return read_mat(in);
}

}  // namespace

void save_shape2d(const std::string& path, const Shape2D& shape) {
    std::ofstream out(path);
    if (!out) throw DataError("save_shape2d: cannot open " + path);
    out << shape.cols() << "\n";
    char buf[80];
    for (Eigen::Index i = 0; i < shape.cols(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", shape(0, i), shape(1, i));
        out << buf;
    }
}

Shape2D load_shape2d(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_shape2d: cannot open " + path);
    int n = 0;
    if (!(in >> n) || n < 1) throw DataError("load_shape2d: bad point count in " + path);
    Shape2D shape(2, n);
    for (int i = 0; i < n; ++i)
        if (!(in >> shape(0, i) >> shape(1, i)))
            throw DataError("load_shape2d: truncated file " + path);
    return shape;
}

void save_pipeline(const std::string& dir, const PipelineModel& model) {
    fs::create_directories(dir);
    const fs::path base(dir);

    KeyValues manifest;
    manifest.set_int("format_version", kFormatVersion);
    manifest.set_int("n_landmarks", model.n_landmarks);
    std::string stages;
    if (model.apr) stages += "apr";
    if (model.apr3d) stages += stages.empty() ? "apr3d" : ",apr3d";
    if (model.lbf) stages += stages.empty() ? "lbf" : ",lbf";
    manifest.set_string("stages", stages.empty() ? "none" : stages);
    manifest.save((base / "manifest.txt").string());
    save_shape2d((base / "mean_shape.txt").string(), model.mean_shape);

    if (model.apr) {
        const fs::path stage = base / "apr";
        fs::create_directories(stage);
        KeyValues cfg;
        cfg.set_int("iterations", model.apr->config.iterations);
        cfg.set_int("face_px", model.apr->config.face_px);
        write_feature_config(cfg, "feature", model.apr->config.feature);
        write_forest_config(cfg, "forest", model.apr->config.forest);
        cfg.save((stage / "config.txt").string());
        for (std::size_t i = 0; i < model.apr->iterations.size(); ++i) {
            const AprIterationModel& m = model.apr->iterations[i];
            const std::string tag = "iter" + std::to_string(i) + "_";
            save_forest((stage / (tag + "a.krf")).string(), m.fa);
            save_forest((stage / (tag + "b.krf")).string(), m.fb);
            save_forest((stage / (tag + "c.krf")).string(), m.fc);
            save_forest((stage / (tag + "d.krf")).string(), m.fd);
            save_forest((stage / (tag + "t.krf")).string(), m.ft);
        }
    }

    if (model.apr3d) {
        const fs::path stage = base / "apr3d";
        fs::create_directories(stage);
        KeyValues cfg;
        cfg.set_int("face_px", model.apr3d->config.face_px);
        write_feature_config(cfg, "feature", model.apr3d->config.feature);
        write_forest_config(cfg, "forest", model.apr3d->config.forest);
        cfg.save((stage / "config.txt").string());
        save_mean_shape3d((stage / "mean3d.txt").string(), model.apr3d->mean3d);
        save_forest((stage / "scale.krf").string(), model.apr3d->scale_forest);
        save_forest((stage / "angles.krf").string(), model.apr3d->angle_forest);
        save_forest((stage / "translation.krf").string(), model.apr3d->translation_forest);
    }

    if (model.lbf) {
        const fs::path stage = base / "lbf";
        fs::create_directories(stage);
        KeyValues cfg;
        cfg.set_int("iterations", model.lbf->config.iterations);
        cfg.set_int("face_px", model.lbf->config.face_px);
        cfg.set_int("crop_side", model.lbf->config.crop_side);
        write_feature_config(cfg, "feature", model.lbf->config.feature);
        write_forest_config(cfg, "forest", model.lbf->config.forest);
        cfg.save((stage / "config.txt").string());
        save_shape2d((stage / "mean_shape.txt").string(), model.lbf->mean_shape);
        for (std::size_t i = 0; i < model.lbf->iterations.size(); ++i) {
            const LbfIterationModel& m = model.lbf->iterations[i];
            const std::string tag = "iter" + std::to_string(i);
            for (std::size_t l = 0; l < m.landmark_forests.size(); ++l)
                save_forest((stage / (tag + "_lm" + std::to_string(l) + ".krf")).string(),
                            m.landmark_forests[l]);
            save_matrix((stage / (tag + "_W.bin")).string(), m.global_weights);
        }
    }
}

PipelineModel load_pipeline(const std::string& dir) {
    const fs::path base(dir);
    if (!fs::is_directory(base)) throw DataError("load_pipeline: not a directory: " + dir);
    const KeyValues manifest = KeyValues::load((base / "manifest.txt").string());
    const int version = manifest.get_int("format_version", -1);
    if (version != kFormatVersion)
        throw DataError("load_pipeline: unsupported bundle version " + std::to_string(version));

    PipelineModel model;
    model.n_landmarks = manifest.get_int("n_landmarks", 0);
    model.mean_shape = load_shape2d((base / "mean_shape.txt").string());
    if (model.mean_shape.cols() != model.n_landmarks)
        throw DataError("load_pipeline: mean shape does not match n_landmarks");

    if (fs::exists(base / "apr" / "config.txt")) {
        const fs::path stage = base / "apr";
        const KeyValues cfg = KeyValues::load((stage / "config.txt").string());
        AprModel apr;
        apr.config.iterations = cfg.get_int("iterations", apr.config.iterations);
        apr.config.face_px = cfg.get_int("face_px", apr.config.face_px);
        apr.config.feature = read_feature_config(cfg, "feature", apr.config.feature);
        apr.config.forest = read_forest_config(cfg, "forest", apr.config.forest);
        for (int i = 0; i < apr.config.iterations; ++i) {
            const std::string tag = "iter" + std::to_string(i) + "_";
            AprIterationModel m;
            m.fa = load_forest((stage / (tag + "a.krf")).string());
            m.fb = load_forest((stage / (tag + "b.krf")).string());
            m.fc = load_forest((stage / (tag + "c.krf")).string());
            m.fd = load_forest((stage / (tag + "d.krf")).string());
            m.ft = load_forest((stage / (tag + "t.krf")).string());
            apr.iterations.push_back(std::move(m));
        }
        model.apr = std::move(apr);
    }

    if (fs::exists(base / "apr3d" / "config.txt")) {
        const fs::path stage = base / "apr3d";
        const KeyValues cfg = KeyValues::load((stage / "config.txt").string());
        Apr3dModel apr3d;
        apr3d.config.face_px = cfg.get_int("face_px", apr3d.config.face_px);
        apr3d.config.feature = read_feature_config(cfg, "feature", apr3d.config.feature);
        apr3d.config.forest = read_forest_config(cfg, "forest", apr3d.config.forest);
        apr3d.mean3d = load_mean_shape3d((stage / "mean3d.txt").string());
        apr3d.scale_forest = load_forest((stage / "scale.krf").string());
        apr3d.angle_forest = load_forest((stage / "angles.krf").string());
        apr3d.translation_forest = load_forest((stage / "translation.krf").string());
        model.apr3d = std::move(apr3d);
    }

    if (fs::exists(base / "lbf" / "config.txt")) {
        const fs::path stage = base / "lbf";
        const KeyValues cfg = KeyValues::load((stage / "config.txt").string());
        LbfModel lbf;
        lbf.config.iterations = cfg.get_int("iterations", lbf.config.iterations);
        lbf.config.face_px = cfg.get_int("face_px", lbf.config.face_px);
        lbf.config.crop_side = cfg.get_int("crop_side", lbf.config.crop_side);
        lbf.config.feature = read_feature_config(cfg, "feature", lbf.config.feature);
        lbf.config.forest = read_forest_config(cfg, "forest", lbf.config.forest);
        lbf.mean_shape = load_shape2d((stage / "mean_shape.txt").string());
        for (int i = 0; i < lbf.config.iterations; ++i) {
            const std::string tag = "iter" + std::to_string(i);
            LbfIterationModel m;
            for (int l = 0; l < model.n_landmarks; ++l)
                m.landmark_forests.push_back(
                    load_forest((stage / (tag + "_lm" + std::to_string(l) + ".krf")).string()));
            m.global_weights = load_matrix((stage / (tag + "_W.bin")).string());
            lbf.iterations.push_back(std::move(m));
        }
        model.lbf = std::move(lbf);
    }
    return model;
}

}  // namespace krfws

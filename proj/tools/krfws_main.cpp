// krfws: K-cluster regression forests with weighted splitting, plus the
// face-shape initialization and alignment pipeline built on them.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "krfws/align.hpp"
#include "krfws/config.hpp"
#include "krfws/data.hpp"
#include "krfws/metrics.hpp"
#include "krfws/model_io.hpp"

namespace fs = std::filesystem;
using namespace krfws;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// ----------------------------------------------------------------------------
// Config plumbing: every paper hyperparameter has a named key carrying the
// paper's value as default (see README for the full key list).

ForestParams forest_from(const KeyValues& kv, const std::string& prefix, int trees,
                         int depth) {
    ForestParams p;
    p.n_trees = kv.get_int(prefix + ".trees", trees);
    p.tree.max_depth = kv.get_int(prefix + ".depth", depth);
    p.tree.min_samples = kv.get_int(prefix + ".min_samples", kv.get_int("min_samples", 5));
    p.tree.K = kv.get_int(prefix + ".k", kv.get_int("k", 2));
    p.tree.weighted = kv.get_bool(prefix + ".weighted", kv.get_bool("weighted", true));
    p.bagging_fraction = kv.get_double(prefix + ".bagging", kv.get_double("bagging", 0.63));
    p.tree.svm.cost = kv.get_double(prefix + ".svm_cost", kv.get_double("svm.cost", 1.0));
    p.tree.svm.tol = kv.get_double(prefix + ".svm_tol", kv.get_double("svm.tol", 0.1));
    p.tree.svm.max_iter =
        kv.get_int(prefix + ".svm_max_iter", kv.get_int("svm.max_iter", 1000));
    return p;
}

StageFeatureConfig feature_from(const KeyValues& kv, const std::string& prefix,
                                const StageFeatureConfig& defaults) {
    StageFeatureConfig cfg = defaults;
    cfg.patch_side = kv.get_int(prefix + ".patch", cfg.patch_side);
    cfg.levels = kv.get_int_list(prefix + ".levels", cfg.levels);
    cfg.hog.orientation_bins = kv.get_int(prefix + ".bins", cfg.hog.orientation_bins);
    const std::string variant = kv.get_string(
        prefix + ".variant", cfg.hog.variant == HogVariant::Extended ? "extended" : "basic");
    if (variant == "extended")
        cfg.hog.variant = HogVariant::Extended;
    else if (variant == "basic")
        cfg.hog.variant = HogVariant::Basic;
    else
        throw UsageError("config: unknown HOG variant '" + variant + "'");
    return cfg;
}

PipelineConfig pipeline_config_from(const KeyValues& kv, std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.apr.iterations = kv.get_int("apr.iterations", 2);
    cfg.apr.face_px = kv.get_int("apr.face_px", 64);
    cfg.apr.feature = feature_from(kv, "apr", cfg.apr.feature);
    cfg.apr.forest = forest_from(kv, "apr", 5, 7);

    cfg.apr3d.face_px = kv.get_int("apr3d.face_px", 64);
    cfg.apr3d.feature = feature_from(kv, "apr3d", cfg.apr3d.feature);
    cfg.apr3d.forest = forest_from(kv, "apr3d", 5, 7);

    cfg.lbf.iterations = kv.get_int("lbf.iterations", 5);
    cfg.lbf.face_px = kv.get_int("lbf.face_px", 64);
    cfg.lbf.crop_side = kv.get_int("lbf.crop", 128);
    cfg.lbf.feature = feature_from(kv, "lbf", cfg.lbf.feature);
    cfg.lbf.forest = forest_from(kv, "lbf", 5, 7);

    cfg.train.seed = seed;
    cfg.train.perturb.per_image = kv.get_int("train.perturbations", 10);
    cfg.train.perturb.scale_lo = kv.get_double("train.scale_lo", 0.9);
    cfg.train.perturb.scale_hi = kv.get_double("train.scale_hi", 1.1);
    cfg.train.perturb.translate_frac = kv.get_double("train.translate", 0.05);
    cfg.train.perturb.rotate_deg = kv.get_double("train.rotate", 15.0);
    cfg.train.holdout_fraction = kv.get_double("train.holdout", 0.2);
    cfg.train.ridge_lambdas = kv.get_double_list("train.lambdas", {0.1, 1.0, 10.0});
    return cfg;
}

SynthParams synth_params_from(const KeyValues& kv) {
    SynthParams p;
    p.image_size = kv.get_int("synth.image_size", 128);
    p.yaw_range = kv.get_double("synth.yaw_range", 0.45);
    p.pitch_range = kv.get_double("synth.pitch_range", 0.35);
    p.roll_range = kv.get_double("synth.roll_range", 0.25);
    p.nonrigid_px = kv.get_double("synth.nonrigid", 0.8);
    p.bbox_jitter = kv.get_double("synth.bbox_jitter", 0.05);
    return p;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const KeyValues& kv,
                        std::uint64_t seed) {
    KeyValues manifest = kv;
    manifest.set_string("run.command", command);
    manifest.set_u64("run.seed", seed);
    manifest.set_int("run.format_version", 1);
    manifest.save((dir / "run_manifest.txt").string());
}

// ----------------------------------------------------------------------------
// Dataset options shared by commands

struct DataOptions {
    int synth_count = 0;
    std::uint64_t synth_seed = 1;
    std::string root_300w;
    std::string list_file;
    std::string bbox_file;
};

void add_data_options(CLI::App* cmd, DataOptions& opts) {
    cmd->add_option("--synth", opts.synth_count, "use N synthetic faces");
    cmd->add_option("--synth-seed", opts.synth_seed, "synthetic dataset seed");
    cmd->add_option("--data300w", opts.root_300w, "300-W root directory");
    cmd->add_option("--list", opts.list_file, "custom 'image pts [x y w h]' list file");
    cmd->add_option("--bbox", opts.bbox_file, "detector box list ('name x y w h' per line)");
}

struct LoadedData {
    std::vector<AnnotatedFace> faces;  // training or evaluation set
    Dataset300W splits;               // populated only for 300-W
    bool is_300w = false;
};

LoadedData load_train_data(const DataOptions& opts, const KeyValues& kv) {
    LoadedData data;
    if (opts.synth_count > 0) {
        data.faces = synth_faces(opts.synth_count, opts.synth_seed, synth_mean_shape3d(),
                                 synth_params_from(kv));
    } else if (!opts.root_300w.empty()) {
        Load300WOptions lo;
        lo.bbox_file = opts.bbox_file;
        data.splits = make_300w_splits(opts.root_300w, lo);
        for (const std::string& w : data.splits.warnings)
            std::cerr << "warning: " << w << "\n";
        data.is_300w = true;
        for (int idx : data.splits.train.members)
            data.faces.push_back(data.splits.faces[static_cast<std::size_t>(idx)]);
    } else if (!opts.list_file.empty()) {
        Load300WOptions lo;
        lo.bbox_file = opts.bbox_file;
        data.faces = load_custom_list(opts.list_file, lo);
    } else {
        throw UsageError("no dataset given: pass --synth N, --data300w ROOT or --list FILE");
    }
    if (data.faces.empty()) throw DataError("dataset is empty");
    return data;
}

// ----------------------------------------------------------------------------
// Bundle-based stage training shared by train-apr / train-3dapr / train-lbf

struct StageContext {
    PipelineModel model;
    std::vector<TrainSample> samples;
    PipelineConfig config;
    bool fresh = false;
};

StageContext prepare_stage(const std::string& bundle_dir,
                           std::span<const AnnotatedFace> faces, const KeyValues& kv,
                           std::uint64_t seed, bool lbf_standalone) {
    StageContext ctx;
    const bool exists = fs::exists(fs::path(bundle_dir) / "manifest.txt");
    std::uint64_t effective_seed = seed;
    if (exists) {
        ctx.model = load_pipeline(bundle_dir);
        const KeyValues manifest = KeyValues::load((fs::path(bundle_dir) / "manifest.txt").string());
        effective_seed = manifest.get_u64("train_seed", seed);
    } else {
        ctx.fresh = true;
        ctx.model.n_landmarks = static_cast<int>(faces[0].shape.cols());
        ctx.model.mean_shape = procrustes_mean_shape(faces);
    }
    ctx.config = pipeline_config_from(kv, effective_seed);

    Rng rng(ctx.config.train.seed);
    const bool has_stage = ctx.model.apr.has_value() || ctx.model.apr3d.has_value();
    if (!has_stage && lbf_standalone) {
        Rng sample_rng = rng.child(2);
        ctx.samples = make_exchanged_samples(faces, ctx.model.mean_shape,
                                             ctx.config.train.perturb, sample_rng);
    } else {
        Rng sample_rng = rng.child(1);
        ctx.samples = make_perturbed_samples(faces, ctx.model.mean_shape,
                                             ctx.config.train.perturb, sample_rng);
    }

    // advance the samples through the already-trained stages
    if (ctx.model.apr || ctx.model.apr3d) {
        parallel_for(static_cast<int>(ctx.samples.size()), [&](int i) {
            TrainSample& s = ctx.samples[static_cast<std::size_t>(i)];
            const AnnotatedFace& face = faces[static_cast<std::size_t>(s.face)];
            if (ctx.model.apr) s.shape = apr_apply(face.image, s.shape, *ctx.model.apr);
            if (ctx.model.apr3d) s.shape = apr3d_apply(face.image, s.shape, *ctx.model.apr3d);
        });
    }
    return ctx;
}

void finish_stage(const std::string& bundle_dir, StageContext& ctx, const KeyValues& kv,
                  const std::string& command) {
    save_pipeline(bundle_dir, ctx.model);
    KeyValues manifest = KeyValues::load((fs::path(bundle_dir) / "manifest.txt").string());
    manifest.set_u64("train_seed", ctx.config.train.seed);
    manifest.save((fs::path(bundle_dir) / "manifest.txt").string());
    write_run_manifest(bundle_dir, command, kv, ctx.config.train.seed);
}

MeanShape3D resolve_mean3d(const std::string& mean3d_file, const DataOptions& data,
                           int n_landmarks) {
    if (!mean3d_file.empty()) {
        const MeanShape3D m = load_mean_shape3d(mean3d_file);
        if (m.cols() != n_landmarks)
            throw DataError("mean 3-D shape has " + std::to_string(m.cols()) +
                            " landmarks, dataset has " + std::to_string(n_landmarks));
        return m;
    }
    if (data.synth_count > 0) return synth_mean_shape3d();
    throw UsageError("--mean3d FILE is required for this dataset");
}

// ----------------------------------------------------------------------------
// Evaluation helpers

struct StageErrors {
    std::vector<std::string> labels;          // init, apr, apr3d, lbf1..
    std::vector<std::vector<double>> errors;  // per stage, per image
    std::vector<std::string> names;
};

StageErrors evaluate_staged(std::span<const AnnotatedFace> faces, const PipelineModel& model,
                            const StageOptions& stages) {
    StageErrors out;
    out.names.resize(faces.size());
    std::vector<std::vector<double>> per_image(faces.size());
    std::vector<std::vector<std::string>> labels(faces.size());
    parallel_for(static_cast<int>(faces.size()), [&](int i) {
        const AnnotatedFace& face = faces[static_cast<std::size_t>(i)];
        const PipelineTrace trace = run_pipeline_trace(face.image, face.bbox, model, stages);
        auto& errs = per_image[static_cast<std::size_t>(i)];
        for (const Shape2D& s : trace.shapes)
            errs.push_back(eye_distance_error(s, face.shape));
        labels[static_cast<std::size_t>(i)] = trace.labels;
        out.names[static_cast<std::size_t>(i)] = face.name;
    });
    out.labels = labels[0];
    out.errors.assign(out.labels.size(), std::vector<double>(faces.size(), 0.0));
    for (std::size_t i = 0; i < per_image.size(); ++i)
        for (std::size_t s = 0; s < per_image[i].size(); ++s)
            out.errors[s][i] = per_image[i][s];
    return out;
}

void write_stage_csv(const fs::path& path, const StageErrors& se) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "name";
    for (const std::string& label : se.labels) out << ',' << label;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < se.names.size(); ++i) {
        out << se.names[i];
        for (std::size_t s = 0; s < se.labels.size(); ++s) {
            std::snprintf(buf, sizeof(buf), "%.6f", se.errors[s][i]);
            out << ',' << buf;
        }
        out << "\n";
    }
    out << "mean";
    for (std::size_t s = 0; s < se.labels.size(); ++s) {
        double sum = 0;
        for (double e : se.errors[s]) sum += e;
        std::snprintf(buf, sizeof(buf), "%.6f", sum / static_cast<double>(se.errors[s].size()));
        out << ',' << buf;
    }
    out << "\n";
}

// ----------------------------------------------------------------------------
// Commands

int cmd_synth_bench(const DataOptions& data, const std::string& out_dir, int n_test,
                    const KeyValues& kv, std::uint64_t seed) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    const MeanShape3D mean3d = synth_mean_shape3d();
    const SynthParams sp = synth_params_from(kv);
    const int n_train = data.synth_count > 0 ? data.synth_count : 300;
    const auto train_faces = synth_faces(n_train, seed, mean3d, sp);
    const auto test_faces = synth_faces(n_test, mix64(seed + 0x7e57), mean3d, sp);

    PipelineConfig cfg = pipeline_config_from(kv, seed);
    std::printf("training pipeline on %d synthetic faces (%d samples/image)...\n", n_train,
                cfg.train.perturb.per_image);
    const PipelineModel model = train_pipeline(train_faces, mean3d, cfg);
    save_pipeline((dir / "bundle").string(), model);

    const StageErrors se = evaluate_staged(test_faces, model, StageOptions{});
    write_stage_csv(dir / "stage_errors.csv", se);
    write_run_manifest(dir, "synth-bench", kv, seed);

    std::printf("%-8s %s\n", "stage", "mean error (% of eye distance)");
    for (std::size_t s = 0; s < se.labels.size(); ++s) {
        double sum = 0;
        for (double e : se.errors[s]) sum += e;
        std::printf("%-8s %.3f\n", se.labels[s].c_str(),
                    sum / static_cast<double>(se.errors[s].size()));
    }
    std::printf("wrote %s\n", (dir / "stage_errors.csv").c_str());
    return kExitOk;
}

int cmd_train_stage(const std::string& stage, const DataOptions& data,
                    const std::string& bundle_dir, const std::string& mean3d_file,
                    const KeyValues& kv, std::uint64_t seed) {
    const LoadedData loaded = load_train_data(data, kv);
    StageContext ctx = prepare_stage(bundle_dir, loaded.faces, kv, seed, stage == "lbf");

    if (stage == "apr") {
        ctx.model.apr = apr_train(loaded.faces, ctx.samples, ctx.config.apr, ctx.config.train);
    } else if (stage == "apr3d") {
        const MeanShape3D mean3d = resolve_mean3d(mean3d_file, data, ctx.model.n_landmarks);
        ctx.model.apr3d =
            apr3d_train(loaded.faces, ctx.samples, mean3d, ctx.config.apr3d, ctx.config.train);
    } else {
        ctx.model.lbf = lbf_train(loaded.faces, ctx.samples, ctx.model.mean_shape,
                                  ctx.config.lbf, ctx.config.train);
    }
    finish_stage(bundle_dir, ctx, kv, "train-" + stage);
    std::printf("trained %s stage into %s\n", stage.c_str(), bundle_dir.c_str());
    return kExitOk;
}

int cmd_train_pose(const DataOptions& data, const std::string& pointing_dir, int folds,
                   bool weighted, const std::string& out_csv, const KeyValues& kv,
                   std::uint64_t seed) {
    std::vector<AnnotatedFace> faces;
    if (!pointing_dir.empty()) {
        faces = load_pointing04(pointing_dir, data.bbox_file);
    } else if (data.synth_count > 0) {
        faces = synth_faces(data.synth_count, data.synth_seed, synth_mean_shape3d(),
                            synth_params_from(kv));
    } else {
        throw UsageError("train-pose needs --pointing04 DIR or --synth N");
    }
    if (folds < 2) throw UsageError("train-pose: --folds must be >= 2");

    ForestParams forest = forest_from(kv, "pose", 20, 20);
    forest.tree.weighted = weighted;
    StageFeatureConfig feature;
    feature.patch_side = kv.get_int("pose.patch", 64);
    feature.levels = kv.get_int_list("pose.levels", {64, 32, 16});
    feature.hog.variant = HogVariant::Extended;

    // fold assignment: Pointing'04 2-fold splits by capture session, other
    // settings use a seeded shuffle
    const int n = static_cast<int>(faces.size());
    std::vector<int> fold(static_cast<std::size_t>(n), 0);
    bool by_session = false;
    if (!pointing_dir.empty() && folds == 2) {
        by_session = true;
        for (int i = 0; i < n; ++i) {
            const Pointing04Name parsed =
                parse_pointing04_name(faces[static_cast<std::size_t>(i)].name);
            fold[static_cast<std::size_t>(i)] = parsed.series == 1 ? 0 : 1;
        }
    } else {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(seed);
        rng.shuffle(order);
        for (int i = 0; i < n; ++i)
            fold[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % folds;
    }

    // features once, reused across folds
    const int dim = feature.descriptor_length();
    Eigen::MatrixXf X(dim, n);
    Eigen::MatrixXd Y(2, n);
    parallel_for(n, [&](int i) {
        const AnnotatedFace& face = faces[static_cast<std::size_t>(i)];
        const WorkFrame frame =
            make_box_frame(face.image, face.bbox, feature.patch_side, feature.patch_side);
        const PhogDescriptor d = phog(frame.crop, feature.levels, feature.hog);
        X.col(i) = Eigen::Map<const Eigen::VectorXf>(d.values.data(),
                                                     static_cast<Eigen::Index>(d.values.size()));
        Y(0, i) = face.yaw_deg;
        Y(1, i) = face.pitch_deg;
    });

    std::ofstream csv(out_csv);
    if (!csv) throw DataError("cannot write " + out_csv);
    csv << "fold,yaw_mae,pitch_mae,average\n";
    char buf[160];

    std::vector<std::pair<double, double>> all_pred, all_label;
    for (int f = 0; f < folds; ++f) {
        Eigen::MatrixXf Xtr(dim, n);
        Eigen::MatrixXd Ytr(2, n);
        int n_train = 0;
        for (int i = 0; i < n; ++i) {
            if (fold[static_cast<std::size_t>(i)] == f) continue;
            Xtr.col(n_train) = X.col(i);
            Ytr.col(n_train) = Y.col(i);
            ++n_train;
        }
        if (n_train == 0) throw DataError("train-pose: empty training fold");
        const KForest model = train_forest(Xtr.leftCols(n_train), Ytr.leftCols(n_train), forest,
                                           mix64(seed + static_cast<std::uint64_t>(f)));

        std::vector<std::pair<double, double>> pred, label;
        for (int i = 0; i < n; ++i) {
            if (fold[static_cast<std::size_t>(i)] != f) continue;
            const Eigen::VectorXd p = predict(model, X.col(i));
            pred.emplace_back(p[0], p[1]);
            label.emplace_back(Y(0, i), Y(1, i));
        }
        const PoseMae mae = pose_mae(pred, label);
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", f, mae.yaw, mae.pitch,
                      mae.average);
        csv << buf;
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_label.insert(all_label.end(), label.begin(), label.end());
    }
    const PoseMae overall = pose_mae(all_pred, all_label);
    std::snprintf(buf, sizeof(buf), "overall,%.6f,%.6f,%.6f\n", overall.yaw, overall.pitch,
                  overall.average);
    csv << buf;

    std::printf("%s %d-fold CV (%s): yaw MAE %.3f, pitch MAE %.3f, average %.3f\n",
                weighted ? "weighted" : "unweighted", folds,
                by_session ? "by session" : "random", overall.yaw, overall.pitch,
                overall.average);
    return kExitOk;
}

int cmd_eval(const std::string& bundle_dir, const DataOptions& data, const std::string& norm,
             const std::string& out_csv, const std::string& stages_arg, const KeyValues& kv) {
    const PipelineModel model = load_pipeline(bundle_dir);
    StageOptions stages;
    stages.apr = model.apr.has_value();
    stages.apr3d = model.apr3d.has_value();
    stages.lbf = model.lbf.has_value();
    if (!stages_arg.empty()) {
        stages.apr = false;
        stages.apr3d = false;
        stages.lbf = false;
        std::istringstream ss(stages_arg);
        std::string token;
        while (std::getline(ss, token, ',')) {
            if (token == "apr") stages.apr = true;
            else if (token == "apr3d") stages.apr3d = true;
            else if (token == "lbf") stages.lbf = true;
            else if (token == "none") {}
            else throw UsageError("eval: unknown stage '" + token + "'");
        }
    }

    const bool use_68 = norm == "inter-pupil" || norm == "inter-ocular";

    auto eval_set = [&](std::span<const AnnotatedFace> faces, std::vector<double>& errors,
                        std::vector<std::string>& names) {
        errors.resize(faces.size());
        names.resize(faces.size());
        parallel_for(static_cast<int>(faces.size()), [&](int i) {
            const AnnotatedFace& face = faces[static_cast<std::size_t>(i)];
            const Shape2D pred = run_pipeline(face.image, face.bbox, model, stages);
            errors[static_cast<std::size_t>(i)] =
                use_68 ? normalized_error(pred, face.shape, parse_norm_mode(norm))
                       : eye_distance_error(pred, face.shape);
            names[static_cast<std::size_t>(i)] = face.name;
        });
    };

    std::ofstream out(out_csv);
    if (!out) throw DataError("cannot write " + out_csv);
    char buf[64];

    if (!data.root_300w.empty()) {
        Load300WOptions lo;
        lo.bbox_file = data.bbox_file;
        Dataset300W ds = make_300w_splits(data.root_300w, lo);
        for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << "\n";

        out << "split,name,error\n";
        double sums[2] = {0, 0};
        std::size_t counts[2] = {0, 0};
        const DatasetSplit* splits[2] = {&ds.common, &ds.challenging};
        for (int s = 0; s < 2; ++s) {
            std::vector<AnnotatedFace> subset;
            for (int idx : splits[s]->members)
                subset.push_back(ds.faces[static_cast<std::size_t>(idx)]);
            if (subset.empty()) continue;
            std::vector<double> errors;
            std::vector<std::string> names;
            eval_set(subset, errors, names);
            for (std::size_t i = 0; i < errors.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.6f", errors[i]);
                out << splits[s]->name << ',' << names[i] << ',' << buf << "\n";
                sums[s] += errors[i];
            }
            counts[s] = errors.size();
        }
        for (int s = 0; s < 2; ++s) {
            if (counts[s] == 0) continue;
            std::snprintf(buf, sizeof(buf), "%.6f", sums[s] / counts[s]);
            out << splits[s]->name << ",mean," << buf << "\n";
            std::printf("%s mean: %s\n", splits[s]->name.c_str(), buf);
        }
        if (counts[0] + counts[1] > 0) {
            std::snprintf(buf, sizeof(buf), "%.6f",
                          (sums[0] + sums[1]) / static_cast<double>(counts[0] + counts[1]));
            out << "full,mean," << buf << "\n";
            std::printf("full mean: %s\n", buf);
        }
    } else {
        const LoadedData loaded = load_train_data(data, kv);
        std::vector<double> errors;
        std::vector<std::string> names;
        eval_set(loaded.faces, errors, names);
        out << "name,error\n";
        double sum = 0;
        for (std::size_t i = 0; i < errors.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.6f", errors[i]);
            out << names[i] << ',' << buf << "\n";
            sum += errors[i];
        }
        std::snprintf(buf, sizeof(buf), "%.6f", sum / static_cast<double>(errors.size()));
        out << "mean," << buf << "\n";
        std::printf("mean error: %s\n", buf);
    }
    return kExitOk;
}

int cmd_predict(const std::string& bundle_dir, const std::string& image_path,
                const std::vector<double>& bbox, const std::string& out_pts) {
    if (bbox.size() != 4) throw UsageError("predict: --bbox needs exactly x y w h");
    const PipelineModel model = load_pipeline(bundle_dir);
    const GrayImage img = load_image_gray(image_path);
    StageOptions stages;
    stages.apr = model.apr.has_value();
    stages.apr3d = model.apr3d.has_value();
    stages.lbf = model.lbf.has_value();
    const Shape2D pred = run_pipeline(img, FaceBox{bbox[0], bbox[1], bbox[2], bbox[3]}, model,
                                      stages);
    save_pts(out_pts, pred);
    std::printf("wrote %s\n", out_pts.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"K-cluster regression forests with weighted splitting: "
                 "face alignment and head-pose estimation"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_file;
    std::uint64_t seed = 1;
    int threads = 0;
    app.add_option("--config", config_file, "key = value config file")->capture_default_str();
    app.add_option("--seed", seed, "master RNG seed")->capture_default_str();
    app.add_option("--threads", threads, "cap worker threads (also via KRFWS_THREADS)");

    DataOptions data;

    auto* bench = app.add_subcommand("synth-bench",
                                     "train and evaluate the pipeline on synthetic faces");
    std::string bench_out = "synth_bench_out";
    int bench_test = 200;
    bench->add_option("--out", bench_out, "output directory")->capture_default_str();
    bench->add_option("--test", bench_test, "held-out face count")->capture_default_str();
    add_data_options(bench, data);

    std::string bundle_dir, mean3d_file;
    auto add_bundle_options = [&](CLI::App* cmd, bool with_mean3d) {
        cmd->add_option("--bundle", bundle_dir, "model bundle directory")->required();
        if (with_mean3d)
            cmd->add_option("--mean3d", mean3d_file,
                            "mean 3-D shape file (first line n, then 'x y z')");
        add_data_options(cmd, data);
    };
    add_bundle_options(app.add_subcommand("train-apr", "train the affine pose regression stage"),
                       false);
    add_bundle_options(
        app.add_subcommand("train-3dapr", "train the 3-D affine pose regression stage"), true);
    add_bundle_options(app.add_subcommand("train-lbf", "train the cascaded shape regressor"),
                       false);

    auto* pose = app.add_subcommand("train-pose", "head-pose cross-validation");
    std::string pointing_dir, pose_out = "pose_mae.csv";
    int folds = 2;
    bool weighted = true;
    pose->add_option("--pointing04", pointing_dir, "Pointing'04 image directory");
    pose->add_option("--folds", folds, "cross-validation folds")->capture_default_str();
    pose->add_option("--weighted", weighted, "use weighted splitting")->capture_default_str();
    pose->add_option("--out", pose_out, "MAE csv path")->capture_default_str();
    add_data_options(pose, data);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a bundle on a dataset");
    std::string eval_norm = "eye-distance", eval_out = "eval.csv", eval_stages;
    eval_cmd->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    eval_cmd->add_option("--norm", eval_norm,
                         "inter-pupil | inter-ocular | eye-distance (non-68 schemes)")
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "csv path")->capture_default_str();
    eval_cmd->add_option("--stages", eval_stages, "comma list of stages (default: all trained)");
    add_data_options(eval_cmd, data);

    auto* predict_cmd = app.add_subcommand("predict", "landmark a single face");
    std::string image_path, predict_out = "prediction.pts";
    std::vector<double> bbox_vals;
    predict_cmd->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    predict_cmd->add_option("--image", image_path, "PNG/JPEG input")->required();
    predict_cmd->add_option("--bbox", bbox_vals, "detector box: x y w h")->expected(4);
    predict_cmd->add_option("--out", predict_out, "output .pts path")->capture_default_str();

    try {
        app.parse(argc, argv);

        if (threads > 0) setenv("KRFWS_THREADS", std::to_string(threads).c_str(), 1);
        KeyValues kv;
        if (!config_file.empty()) kv = KeyValues::load(config_file);

        if (bench->parsed()) return cmd_synth_bench(data, bench_out, bench_test, kv, seed);
        if (app.got_subcommand("train-apr"))
            return cmd_train_stage("apr", data, bundle_dir, "", kv, seed);
        if (app.got_subcommand("train-3dapr"))
            return cmd_train_stage("apr3d", data, bundle_dir, mean3d_file, kv, seed);
        if (app.got_subcommand("train-lbf"))
            return cmd_train_stage("lbf", data, bundle_dir, "", kv, seed);
        if (pose->parsed())
            return cmd_train_pose(data, pointing_dir, folds, weighted, pose_out, kv, seed);
        if (eval_cmd->parsed())
            return cmd_eval(bundle_dir, data, eval_norm, eval_out, eval_stages, kv);
        if (predict_cmd->parsed())
            return cmd_predict(bundle_dir, image_path, bbox_vals, predict_out);
        throw UsageError("no command given");
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

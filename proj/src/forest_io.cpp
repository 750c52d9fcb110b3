#include <fstream>

#include "krfws/forest.hpp"
#include "krfws/serialize.hpp"

namespace krfws {

namespace {

constexpr char kMagic[] = "KRFWSFRT";
constexpr std::uint32_t kVersion = 1;

void write_model(std::ostream& out, const LinearModel& m) {
    write_vec(out, m.weights);
    write_f64(out, m.bias);
}

LinearModel read_model(std::istream& in) {
    LinearModel m;
    m.weights = read_vec(in);
    m.bias = read_f64(in);
    return m;
}

void write_tree(std::ostream& out, const KTree& tree) {
    write_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    write_i32(out, tree.n_leaves);
    for (const TreeNode& node : tree.nodes) {
        write_u8(out, node.is_leaf() ? 1 : 0);
        if (node.is_leaf()) {
            write_i32(out, node.leaf_index);
            write_vec(out, node.leaf_mean);
        } else {
            for (std::int32_t child : node.children) write_i32(out, child);
            write_u32(out, static_cast<std::uint32_t>(node.models.size()));
            for (const LinearModel& m : node.models) write_model(out, m);
        }
    }
}

KTree read_tree(std::istream& in, const TreeParams& params, int feature_dim, int target_dim) {
    KTree tree;
    tree.params = params;
    tree.feature_dim = feature_dim;
    tree.target_dim = target_dim;
    const std::uint32_t n_nodes = read_u32(in);
    tree.n_leaves = read_i32(in);
    tree.nodes.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        TreeNode& node = tree.nodes[i];
        if (read_u8(in)) {
            node.leaf_index = read_i32(in);
            node.leaf_mean = read_vec(in);
        } else {
            node.children.resize(static_cast<std::size_t>(params.K));
            for (std::int32_t& child : node.children) child = read_i32(in);
            const std::uint32_t n_models = read_u32(in);
            node.models.reserve(n_models);
            for (std::uint32_t m = 0; m < n_models; ++m) node.models.push_back(read_model(in));
        }
    }
    return tree;
}

}  // namespace

void write_forest(std::ostream& out, const KForest& forest) {
    out.write(kMagic, sizeof(kMagic) - 1);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(forest.params.tree.K));
    write_u32(out, static_cast<std::uint32_t>(forest.params.tree.max_depth));
    write_u32(out, static_cast<std::uint32_t>(forest.params.tree.min_samples));
    write_u8(out, forest.params.tree.weighted ? 1 : 0);
    write_f64(out, forest.params.tree.svm.cost);
    write_f64(out, forest.params.tree.svm.tol);
    write_u32(out, static_cast<std::uint32_t>(forest.params.tree.svm.max_iter));
    write_u32(out, static_cast<std::uint32_t>(forest.params.n_trees));
    write_f64(out, forest.params.bagging_fraction);
    write_u64(out, forest.seed);
    write_u32(out, static_cast<std::uint32_t>(forest.feature_dim));
    write_u32(out, static_cast<std::uint32_t>(forest.target_dim));
    for (const KTree& tree : forest.trees) write_tree(out, tree);
    if (!out) throw DataError("write_forest: stream write failed");
}

KForest read_forest(std::istream& in) {
    expect_magic(in, kMagic, "read_forest");
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw DataError("read_forest: unsupported container version " + std::to_string(version));

    KForest forest;
    forest.params.tree.K = static_cast<int>(read_u32(in));
    forest.params.tree.max_depth = static_cast<int>(read_u32(in));
    forest.params.tree.min_samples = static_cast<int>(read_u32(in));
    forest.params.tree.weighted = read_u8(in) != 0;
    forest.params.tree.svm.cost = read_f64(in);
    forest.params.tree.svm.tol = read_f64(in);
    forest.params.tree.svm.max_iter = static_cast<int>(read_u32(in));
    forest.params.n_trees = static_cast<int>(read_u32(in));
    forest.params.bagging_fraction = read_f64(in);
    forest.seed = read_u64(in);
    forest.feature_dim = static_cast<int>(read_u32(in));
    forest.target_dim = static_cast<int>(read_u32(in));
    forest.trees.reserve(static_cast<std::size_t>(forest.params.n_trees));
    for (int t = 0; t < forest.params.n_trees; ++t)
        forest.trees.push_back(
            read_tree(in, forest.params.tree, forest.feature_dim, forest.target_dim));
    return forest;
}

void save_forest(const std::string& path, const KForest& forest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_forest: cannot open " + path);
    write_forest(out, forest);
}

KForest load_forest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_forest: cannot open " + path);
    return read_forest(in);
}

}  // namespace krfws

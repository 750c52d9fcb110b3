#include "krfws/hog.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace krfws {

namespace {

constexpr double kNormGuard = 1e-10;

void validate_params(const HogParams& p) {
    if (p.cell_size < 2) throw UsageError("hog: cell_size must be >= 2");
    if (p.orientation_bins < 2) throw UsageError("hog: orientation_bins must be >= 2");
    if (p.block_cells < 0) throw UsageError("hog: block_cells must be >= 0");
}

struct CellGrid {
    int cells_x = 0;
    int cells_y = 0;
    int bins = 0;  // directed bin count actually accumulated
    std::vector<double> hist;  // cells_y * cells_x * bins

    double& at(int cx, int cy, int b) {
        return hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + b];
    }
    double at(int cx, int cy, int b) const {
        return hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + b];
    }
};

// Accumulates magnitude-weighted orientation votes per cell. `period` is pi
// for undirected and 2*pi for directed binning; bin centers sit at
// k * period / nbins, votes are shared linearly between the two neighbors.
CellGrid accumulate_cells(const GrayImage& patch, int cell, int nbins, double period) {
    CellGrid grid;
    grid.cells_x = patch.width / cell;
    grid.cells_y = patch.height / cell;
    grid.bins = nbins;
    grid.hist.assign(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * nbins, 0.0);

    const double bin_width = period / nbins;
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            const double gx = sample_clamped(patch, x + 1, y) - sample_clamped(patch, x - 1, y);
            const double gy = sample_clamped(patch, x, y + 1) - sample_clamped(patch, x, y - 1);
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag <= 0.0) continue;

            double theta = std::atan2(gy, gx);
            theta = std::fmod(theta, period);
            if (theta < 0.0) theta += period;

            const double c = theta / bin_width;
            int b0 = static_cast<int>(std::floor(c));
            double frac = c - b0;
            if (b0 >= nbins) { b0 -= nbins; }
            const int b1 = (b0 + 1) % nbins;

            const int cx = x / cell;
            const int cy = y / cell;
            grid.at(cx, cy, b0) += mag * (1.0 - frac);
            grid.at(cx, cy, b1) += mag * frac;
        }
    }
    return grid;
}

// L2-Hys: normalize, clip at 0.2, renormalize. Zero vectors stay zero.
void l2hys(std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double inv = 1.0 / std::max(std::sqrt(sq), kNormGuard);
    for (double& x : v) x = std::min(x * inv, 0.2);
    sq = 0.0;
    for (double x : v) sq += x * x;
    const double inv2 = 1.0 / std::max(std::sqrt(sq), kNormGuard);
    for (double& x : v) x *= inv2;
}

std::vector<float> hog_basic(const GrayImage& patch, const HogParams& p) {
    const double period = p.signed_orientations ? 2.0 * M_PI : M_PI;
    const CellGrid grid = accumulate_cells(patch, p.cell_size, p.orientation_bins, period);

    const int bc_x = p.block_cells == 0 ? grid.cells_x : p.block_cells;
    const int bc_y = p.block_cells == 0 ? grid.cells_y : p.block_cells;
    if (grid.cells_x % bc_x != 0 || grid.cells_y % bc_y != 0)
        throw UsageError("hog: cell grid not divisible into block_cells x block_cells blocks");
    const int blocks_x = grid.cells_x / bc_x;
    const int blocks_y = grid.cells_y / bc_y;

    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(blocks_x) * blocks_y * bc_x * bc_y * p.orientation_bins);
    std::vector<double> block;
    for (int by = 0; by < blocks_y; ++by) {
        for (int bx = 0; bx < blocks_x; ++bx) {
            block.clear();
            for (int cy = 0; cy < bc_y; ++cy)
                for (int cx = 0; cx < bc_x; ++cx)
                    for (int b = 0; b < p.orientation_bins; ++b)
                        block.push_back(grid.at(bx * bc_x + cx, by * bc_y + cy, b));
            l2hys(block);
            for (double v : block) out.push_back(static_cast<float>(v));
        }
    }
    return out;
}

// Extended (31-dim for 9 bins) descriptor: directed energies folded against
// four neighborhood normalization factors, plus four texture sums.
std::vector<float> hog_extended(const GrayImage& patch, const HogParams& p) {
    const int B = p.orientation_bins;
    const CellGrid grid = accumulate_cells(patch, p.cell_size, 2 * B, 2.0 * M_PI);
    const int cx_n = grid.cells_x;
    const int cy_n = grid.cells_y;

    // Squared norm of each cell's undirected histogram.
    std::vector<double> norms(static_cast<std::size_t>(cx_n) * cy_n, 0.0);
    for (int cy = 0; cy < cy_n; ++cy) {
        for (int cx = 0; cx < cx_n; ++cx) {
            double sq = 0.0;
            for (int b = 0; b < B; ++b) {
                const double u = grid.at(cx, cy, b) + grid.at(cx, cy, b + B);
                sq += u * u;
            }
            norms[static_cast<std::size_t>(cy) * cx_n + cx] = sq;
        }
    }
    auto norm_at = [&](int cx, int cy) {
        cx = std::clamp(cx, 0, cx_n - 1);
        cy = std::clamp(cy, 0, cy_n - 1);
        return norms[static_cast<std::size_t>(cy) * cx_n + cx];
    };

    const int dim = 3 * B + 4;
    std::vector<float> out(static_cast<std::size_t>(cx_n) * cy_n * dim, 0.0f);
    const double texture_scale = 1.0 / std::sqrt(2.0 * B);
    for (int cy = 0; cy < cy_n; ++cy) {
        for (int cx = 0; cx < cx_n; ++cx) {
            double factor[4];
            factor[0] = 1.0 / std::max(std::sqrt(norm_at(cx - 1, cy - 1) + norm_at(cx, cy - 1) +
                                                 norm_at(cx - 1, cy) + norm_at(cx, cy)),
                                       kNormGuard);
            factor[1] = 1.0 / std::max(std::sqrt(norm_at(cx, cy - 1) + norm_at(cx + 1, cy - 1) +
                                                 norm_at(cx, cy) + norm_at(cx + 1, cy)),
                                       kNormGuard);
            factor[2] = 1.0 / std::max(std::sqrt(norm_at(cx - 1, cy) + norm_at(cx, cy) +
                                                 norm_at(cx - 1, cy + 1) + norm_at(cx, cy + 1)),
                                       kNormGuard);
            factor[3] = 1.0 / std::max(std::sqrt(norm_at(cx, cy) + norm_at(cx + 1, cy) +
                                                 norm_at(cx, cy + 1) + norm_at(cx + 1, cy + 1)),
                                       kNormGuard);

            float* cell_out = out.data() + (static_cast<std::size_t>(cy) * cx_n + cx) * dim;
            double texture[4] = {0.0, 0.0, 0.0, 0.0};
            for (int b = 0; b < B; ++b) {
                const double ha = grid.at(cx, cy, b);
                const double hb = grid.at(cx, cy, b + B);
                double da = 0.0, db = 0.0, du = 0.0;
                for (int t = 0; t < 4; ++t) {
                    const double fa = ha * factor[t];
                    const double fb = hb * factor[t];
                    const double fu = std::min(fa + fb, 0.2);
                    da += std::min(fa, 0.2);
                    db += std::min(fb, 0.2);
                    du += fu;
                    texture[t] += fu;
                }
                cell_out[b] = static_cast<float>(0.5 * da);
                cell_out[b + B] = static_cast<float>(0.5 * db);
                cell_out[b + 2 * B] = static_cast<float>(0.5 * du);
            }
            for (int t = 0; t < 4; ++t)
                cell_out[3 * B + t] = static_cast<float>(texture_scale * texture[t]);
        }
    }
    return out;
}

}  // namespace

int hog_length(int width, int height, const HogParams& p) {
    validate_params(p);
    if (width % p.cell_size != 0 || height % p.cell_size != 0)
        throw UsageError("hog: patch side " + std::to_string(width) + "x" +
                         std::to_string(height) + " not divisible by cell size " +
                         std::to_string(p.cell_size));
    const int cells_x = width / p.cell_size;
    const int cells_y = height / p.cell_size;
    if (p.variant == HogVariant::Extended)
        return cells_x * cells_y * (3 * p.orientation_bins + 4);
    const int bc_x = p.block_cells == 0 ? cells_x : p.block_cells;
    const int bc_y = p.block_cells == 0 ? cells_y : p.block_cells;
    if (cells_x % bc_x != 0 || cells_y % bc_y != 0)
        throw UsageError("hog: cell grid not divisible into blocks");
    return (cells_x / bc_x) * (cells_y / bc_y) * bc_x * bc_y * p.orientation_bins;
}

std::vector<float> hog(const GrayImage& patch, const HogParams& params) {
    validate_params(params);
    if (patch.empty()) throw DataError("hog: empty patch");
    if (patch.width % params.cell_size != 0 || patch.height % params.cell_size != 0)
        throw UsageError("hog: patch side not divisible by cell size");
    if (params.variant == HogVariant::Extended) return hog_extended(patch, params);
    return hog_basic(patch, params);
}

PhogDescriptor phog(const GrayImage& patch, const std::vector<int>& levels,
                    const HogParams& params) {
    if (levels.empty()) throw UsageError("phog: empty level list");
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (levels[i] >= levels[i - 1])
            throw UsageError("phog: levels must be strictly decreasing (coarsest first)");

    PhogDescriptor d;
    d.levels = levels;
    for (int cell : levels) {
        HogParams p = params;
        p.cell_size = cell;
        const std::vector<float> part = hog(patch, p);
        d.values.insert(d.values.end(), part.begin(), part.end());
    }
    return d;
}

int phog_length(int width, int height, const std::vector<int>& levels,
                const HogParams& params) {
    if (levels.empty()) throw UsageError("phog: empty level list");
    int total = 0;
    for (int cell : levels) {
        HogParams p = params;
        p.cell_size = cell;
        total += hog_length(width, height, p);
    }
    return total;
}

}  // namespace krfws

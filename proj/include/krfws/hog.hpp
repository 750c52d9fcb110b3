#pragma once

#include <vector>

#include "krfws/image.hpp"

namespace krfws {

// ============================================================================
// HOG / PHOG descriptors
// ============================================================================

enum class HogVariant {
    Basic,     // per-cell histograms, L2-Hys block normalization
    Extended,  // 31-dim per cell: 2B directed + B undirected + 4 texture
};

struct HogParams {
    int cell_size = 8;
    // Cells per block per axis for the Basic variant. 0 means a single block
    // covering the whole patch. The Extended variant normalizes against
    // neighboring cells and ignores this field.
    int block_cells = 0;
    int orientation_bins = 9;
    bool signed_orientations = false;
    HogVariant variant = HogVariant::Basic;
};

struct PhogDescriptor {
    std::vector<float> values;
    std::vector<int> levels;  // cell sizes, coarsest (largest) first
};

/// Descriptor length for a w x h patch; pure function of the geometry.
int hog_length(int width, int height, const HogParams& params);

/// HOG over a full patch. Gradients are central differences with edge
/// replication; votes are magnitude-weighted and split linearly between the
/// two nearest orientation bins (bin centers at k * period / bins).
/// Requires both patch sides divisible by cell_size.
std::vector<float> hog(const GrayImage& patch, const HogParams& params);

/// Concatenated HOG over progressively finer cell sizes. `levels` must be
/// strictly decreasing (coarsest first) and every level must divide the
/// patch side.
PhogDescriptor phog(const GrayImage& patch, const std::vector<int>& levels,
                    const HogParams& params);

int phog_length(int width, int height, const std::vector<int>& levels,
                const HogParams& params);

}  // namespace krfws

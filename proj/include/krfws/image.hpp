#pragma once

#include <vector>

#include "krfws/common.hpp"

namespace krfws {

// ============================================================================
// GrayImage
// ============================================================================

/// Row-major grayscale image with intensities in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool empty() const { return width == 0 || height == 0; }
};

/// Pixel read with edge replication outside the image bounds.
float sample_clamped(const GrayImage& img, int x, int y);

/// Bilinear read at a fractional position, edge-replicated.
float sample_bilinear(const GrayImage& img, double x, double y);

/// side x side patch centered at (cx, cy); out-of-bounds pixels replicate the
/// nearest edge pixel. The patch's top-left source pixel is
/// round(c) - side/2 on each axis. side must be >= 4, center finite.
GrayImage extract_patch(const GrayImage& img, double cx, double cy, int side);

/// Resamples `img` through the similarity map crop(x) = scale * x + (tx, ty)
/// into an out_w x out_h image, bilinear, edge-replicated.
GrayImage warp_similarity(const GrayImage& img, double scale, double tx, double ty,
                          int out_w, int out_h);

}  // namespace krfws

#include "krfws/image.hpp"

#include <algorithm>
#include <cmath>

namespace krfws {

float sample_clamped(const GrayImage& img, int x, int y) {
    x = std::clamp(x, 0, img.width - 1);
    y = std::clamp(y, 0, img.height - 1);
    return img.at(x, y);
}

float sample_bilinear(const GrayImage& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = sample_clamped(img, x0, y0);
    const double v10 = sample_clamped(img, x0 + 1, y0);
    const double v01 = sample_clamped(img, x0, y0 + 1);
    const double v11 = sample_clamped(img, x0 + 1, y0 + 1);
    const double top = v00 + fx * (v10 - v00);
    const double bot = v01 + fx * (v11 - v01);
    return static_cast<float>(top + fy * (bot - top));
}

GrayImage extract_patch(const GrayImage& img, double cx, double cy, int side) {
    if (!(std::isfinite(cx) && std::isfinite(cy)))
        throw NumericError("extract_patch: non-finite patch center");
    if (side < 4) throw UsageError("extract_patch: side must be >= 4");
    if (img.empty()) throw DataError("extract_patch: empty image");

    const int x0 = static_cast<int>(std::lround(cx)) - side / 2;
    const int y0 = static_cast<int>(std::lround(cy)) - side / 2;
    GrayImage patch(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            patch.at(x, y) = sample_clamped(img, x0 + x, y0 + y);
    return patch;
}

GrayImage warp_similarity(const GrayImage& img, double scale, double tx, double ty,
                          int out_w, int out_h) {
    if (img.empty()) throw DataError("warp_similarity: empty image");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw NumericError("warp_similarity: non-positive scale");
    GrayImage out(out_w, out_h);
    const double inv = 1.0 / scale;
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y - ty) * inv;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x - tx) * inv;
            out.at(x, y) = sample_bilinear(img, sx, sy);
        }
    }
    return out;
}

}  // namespace krfws

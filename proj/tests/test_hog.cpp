#include <cmath>
#include <numeric>

#include "doctest.h"
#include "krfws/common.hpp"
#include "krfws/hog.hpp"

using namespace krfws;

namespace {

GrayImage random_patch(int side, std::uint64_t seed) {
    Rng rng(seed);
    GrayImage img(side, side);
    for (float& v : img.data) v = static_cast<float>(rng.uniform01());
    return img;
}

GrayImage horizontal_ramp(int side, float slope) {
    GrayImage img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) img.at(x, y) = slope * static_cast<float>(x);
    return img;
}

double l2(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("constant patch yields a zero descriptor") {
    const GrayImage img(32, 32, 0.7f);
    HogParams p;
    for (auto variant : {HogVariant::Basic, HogVariant::Extended}) {
        p.variant = variant;
        const auto d = hog(img, p);
        CHECK(l2(d) == 0.0);
    }
}

TEST_CASE("horizontal ramp puts all energy into the first orientation bin") {
    // gradient of a left-to-right ramp points along +x: orientation 0, the
    // bin whose center is the vertical-edge orientation
    const GrayImage img = horizontal_ramp(16, 0.02f);
    HogParams p;
    p.cell_size = 8;
    const auto d = hog(img, p);
    REQUIRE(d.size() == 4 * 9);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i % 9 == 0)
            CHECK(d[i] > 0.0f);
        else
            CHECK(d[i] == 0.0f);
    }
}

TEST_CASE("descriptor length is a pure function of geometry") {
    HogParams p;
    for (int side : {16, 32, 64})
        for (int cell : {4, 8, 16})
            for (int bins : {6, 9})
                for (auto variant : {HogVariant::Basic, HogVariant::Extended})
                    for (int bc : {0, 1, 2}) {
                        if (side % cell != 0) continue;
                        const int cells = side / cell;
                        if (bc != 0 && cells % bc != 0) continue;
                        p.cell_size = cell;
                        p.orientation_bins = bins;
                        p.variant = variant;
                        p.block_cells = bc;
                        const GrayImage img = random_patch(side, 7u * side + cell);
                        CHECK(static_cast<int>(hog(img, p).size()) ==
                              hog_length(side, side, p));
                    }
}

TEST_CASE("16x16 patch, cell 8, 9 unsigned bins, one block gives 36 values") {
    HogParams p;
    p.cell_size = 8;
    CHECK(hog_length(16, 16, p) == 36);
}

TEST_CASE("extended variant is 31-dimensional per cell") {
    HogParams p;
    p.variant = HogVariant::Extended;
    p.cell_size = 16;
    CHECK(hog_length(16, 16, p) == 31);
    CHECK(hog_length(32, 32, p) == 4 * 31);
}

TEST_CASE("hog is invariant to a constant intensity shift") {
    const GrayImage img = random_patch(32, 11);
    GrayImage shifted = img;
    for (float& v : shifted.data) v += 0.25f;
    HogParams p;
    p.cell_size = 8;
    for (auto variant : {HogVariant::Basic, HogVariant::Extended}) {
        p.variant = variant;
        const auto a = hog(img, p);
        const auto b = hog(shifted, p);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-4));
    }
}

TEST_CASE("block normalization cancels intensity scaling") {
    const GrayImage img = random_patch(32, 12);
    GrayImage scaled = img;
    for (float& v : scaled.data) v *= 2.0f;
    HogParams p;
    p.cell_size = 8;
    for (auto variant : {HogVariant::Basic, HogVariant::Extended}) {
        p.variant = variant;
        const auto a = hog(img, p);
        const auto b = hog(scaled, p);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
    }
}

TEST_CASE("hog rejects an indivisible patch side") {
    HogParams p;
    p.cell_size = 7;
    const GrayImage img = random_patch(16, 3);
    CHECK_THROWS_AS(hog(img, p), UsageError);
}

TEST_CASE("phog with a single level equals the hog call") {
    const GrayImage img = random_patch(32, 21);
    HogParams p;
    const auto d = phog(img, {32}, p);
    HogParams p32 = p;
    p32.cell_size = 32;
    const auto h = hog(img, p32);
    REQUIRE(d.values.size() == h.size());
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(d.values[i] == h[i]);
}

TEST_CASE("phog levels 32,16,8 on a 32x32 patch stack to 189 values") {
    const GrayImage img = random_patch(32, 22);
    HogParams p;  // basic, 9 bins, whole-patch block
    const auto d = phog(img, {32, 16, 8}, p);
    CHECK(d.values.size() == 189);
    CHECK(phog_length(32, 32, {32, 16, 8}, p) == 189);
}

TEST_CASE("phog of a constant patch is the zero vector") {
    const GrayImage img(32, 32, 0.3f);
    HogParams p;
    const auto d = phog(img, {32, 16}, p);
    for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("phog validates its level list") {
    const GrayImage img = random_patch(32, 23);
    HogParams p;
    CHECK_THROWS_AS(phog(img, {}, p), UsageError);
    CHECK_THROWS_AS(phog(img, {16, 32}, p), UsageError);
    CHECK_THROWS_AS(phog(img, {32, 10}, p), UsageError);  // 10 does not divide 32
}

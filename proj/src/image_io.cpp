#include <algorithm>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "krfws/data.hpp"

namespace krfws {

GrayImage load_image_gray(const std::string& path) {
    std::string ext;
    const auto dot = path.find_last_of('.');
    if (dot != std::string::npos) ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg")
        throw DataError("load_image_gray: only 8-bit PNG/JPEG are supported, got '" + path + "'");

    const cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("load_image_gray: cannot decode " + path);
    if (raw.depth() != CV_8U)
        throw DataError("load_image_gray: expected 8-bit pixels in " + path);

    GrayImage img(raw.cols, raw.rows);
    constexpr float kInv = 1.0f / 255.0f;
    if (raw.channels() == 1) {
        for (int y = 0; y < raw.rows; ++y) {
            const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
            for (int x = 0; x < raw.cols; ++x) img.at(x, y) = row[x] * kInv;
        }
    } else if (raw.channels() == 3 || raw.channels() == 4) {
        // OpenCV decodes BGR(A); reduce with luma weights 0.299/0.587/0.114
        const int ch = raw.channels();
        for (int y = 0; y < raw.rows; ++y) {
            const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
            for (int x = 0; x < raw.cols; ++x) {
                const float b = row[x * ch + 0];
                const float g = row[x * ch + 1];
                const float r = row[x * ch + 2];
                img.at(x, y) = (0.299f * r + 0.587f * g + 0.114f * b) * kInv;
            }
        }
    } else {
        throw DataError("load_image_gray: unsupported channel count in " + path);
    }
    return img;
}

}  // namespace krfws

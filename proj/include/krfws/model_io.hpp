#pragma once

#include <string>

#include "krfws/align.hpp"

namespace krfws {

// Pipeline bundle: a directory with manifest.txt, the shared 2-D mean shape,
// and one subdirectory per trained stage (layout in docs/formats.md).
// Writes are deterministic, so equal models produce byte-identical bundles.

void save_pipeline(const std::string& dir, const PipelineModel& model);
PipelineModel load_pipeline(const std::string& dir);

// Plain-text 2-D shape file: first line n, then n lines "x y".
void save_shape2d(const std::string& path, const Shape2D& shape);
Shape2D load_shape2d(const std::string& path);

}  // namespace krfws

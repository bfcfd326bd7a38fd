#pragma once

#include <vector>

#include "reshift/common.hpp"
#include "reshift/tensor.hpp"

namespace reshift {

// Frame-aligned acoustic conditioning: pitch, volume, and an optional
// externally supplied content embedding of any width.
struct Conditioning {
  std::vector<double> f0;      // Hz, 0 encodes unvoiced
  std::vector<double> volume;  // frame RMS
  Matrix content;              // frames x width; 0x0 when absent

  size_t frames() const { return f0.size(); }
  bool has_content() const { return content.rows > 0; }
  size_t width() const { return 2 + (has_content() ? content.cols : 0); }

  void validate() const {
    if (volume.size() != f0.size())
      throw ConfigError("conditioning: f0 and volume lengths differ");
    if (has_content() && content.rows != f0.size())
      throw ConfigError("conditioning: content frames (" + std::to_string(content.rows) +
                        ") do not match f0 frames (" + std::to_string(f0.size()) + ")");
    for (double v : f0)
      if (v < 0.0) throw ConfigError("conditioning: negative f0");
  }
};

}  // namespace reshift

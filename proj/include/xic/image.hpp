#pragma once

#include <cstddef>
#include <vector>

namespace xic {

// Unit-range image or patch, channel-major, single precision storage.
// Frames and training crops are held in this form; the network sees
// double-precision Tensor3 values after preprocessing.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t r, std::size_t x) {
    return data[(c * height + r) * width + x];
  }
  float at(std::size_t c, std::size_t r, std::size_t x) const {
    return data[(c * height + r) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

// A cropped, resized region of one modality.
using Patch = Image;

}  // namespace xic

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "xic/data.hpp"
#include "xic/error.hpp"

namespace xic {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    fail(ErrorKind::Format, "cannot read image " + path + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    fail(ErrorKind::Format, "cannot decode image " + path + ": " + msg);
  }
  Image out(channels, img.height, img.width);
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      out.data[c * n + i] = static_cast<float>(buf[i * channels + c]) / 255.0f;
  return out;
}

ImageInfo probe_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    fail(ErrorKind::Format, "cannot read image " + path + ": " + img.message);
  ImageInfo info{(img.format & PNG_FORMAT_FLAG_COLOR) ? 3u : 1u, img.height, img.width};
  png_image_free(&img);
  return info;
}

void write_png(const std::string& path, const Image& src) {
  require(src.channels == 1 || src.channels == 3, ErrorKind::InvalidInput,
          "write_png: need 1 or 3 channels");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(src.width);
  img.height = static_cast<png_uint_32>(src.height);
  img.format = src.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t n = src.width * src.height;
  std::vector<png_byte> buf(n * src.channels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < src.channels; ++c) {
      const float v = std::clamp(src.data[c * n + i], 0.0f, 1.0f);
      buf[i * src.channels + c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, ErrorKind::Io, "cannot write image " + path);
  if (!png_image_write_to_stdio(&img, f.get(), 0, buf.data(), 0, nullptr))
    fail(ErrorKind::Io, "cannot encode image " + path + ": " + img.message);
}

}  // namespace xic

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xic/data.hpp"
#include "xic/error.hpp"

namespace fs = std::filesystem;

namespace xic {

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 &&
         h > 0.0;
}

namespace {

std::vector<std::string> sorted_frames(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::Format, "missing frame directory " + dir.string());
  std::vector<std::pair<long, std::string>> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".png" && ext != ".PNG") continue;
    const auto stem = entry.path().stem().string();
    long index = 0;
    const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), index);
    require(ec == std::errc() && ptr == stem.data() + stem.size(), ErrorKind::Format,
            "frame file name is not numeric: " + entry.path().string());
    frames.emplace_back(index, entry.path().string());
  }
  std::sort(frames.begin(), frames.end());
  std::vector<std::string> out;
  out.reserve(frames.size());
  for (auto& f : frames) out.push_back(std::move(f.second));
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<BoundingBox> parse_groundtruth_text(std::string_view text, const std::string& source) {
  std::vector<BoundingBox> boxes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    std::vector<double> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ',' || std::isspace(static_cast<unsigned char>(line[i]))))
        ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ',' && !std::isspace(static_cast<unsigned char>(line[j])))
        ++j;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
      require(ec == std::errc() && ptr == line.data() + j && std::isfinite(v), ErrorKind::Format,
              source + ": malformed number '" + std::string(line.substr(i, j - i)) + "' at line " +
                  std::to_string(line_no));
      values.push_back(v);
      i = j;
    }
    if (values.size() == 4) {
      boxes.push_back({values[0], values[1], values[2], values[3]});
    } else if (values.size() == 8) {
      double x0 = values[0], x1 = values[0], y0 = values[1], y1 = values[1];
      for (int k = 0; k < 4; ++k) {
        x0 = std::min(x0, values[2 * k]);
        x1 = std::max(x1, values[2 * k]);
        y0 = std::min(y0, values[2 * k + 1]);
        y1 = std::max(y1, values[2 * k + 1]);
      }
      boxes.push_back({x0, y0, x1 - x0, y1 - y0});
    } else {
      fail(ErrorKind::Format, source + ": expected 4 or 8 numbers at line " +
                                  std::to_string(line_no) + ", found " +
                                  std::to_string(values.size()));
    }
  }
  return boxes;
}

std::vector<BoundingBox> parse_groundtruth(const std::string& path) {
  return parse_groundtruth_text(read_text(path), path);
}

std::string format_box(const BoundingBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f", b.x, b.y, b.w, b.h);
  return buf;
}

SequencePair load_sequence(const std::string& directory) {
  const fs::path dir(directory);
  SequencePair seq;
  seq.directory = directory;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  seq.rgb_frames = sorted_frames(dir / "visible");
  seq.t_frames = sorted_frames(dir / "infrared");
  require(seq.rgb_frames.size() == seq.t_frames.size(), ErrorKind::Format,
          directory + ": " + std::to_string(seq.rgb_frames.size()) + " visible frames but " +
              std::to_string(seq.t_frames.size()) + " infrared frames");
  require(!seq.rgb_frames.empty(), ErrorKind::Format, directory + ": no frames");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const ImageInfo a = probe_png(seq.rgb_frames[i]);
    const ImageInfo b = probe_png(seq.t_frames[i]);
    require(a.height == b.height && a.width == b.width, ErrorKind::Format,
            "frame size mismatch between " + seq.rgb_frames[i] + " and " + seq.t_frames[i]);
  }
  auto load_gt = [&](const char* file) -> std::optional<std::vector<BoundingBox>> {
    const fs::path p = dir / file;
    if (!fs::exists(p)) return std::nullopt;
    auto boxes = parse_groundtruth(p.string());
    require(boxes.size() == seq.size(), ErrorKind::Format,
            p.string() + ": " + std::to_string(boxes.size()) + " boxes for " +
                std::to_string(seq.size()) + " frames");
    return boxes;
  };
  seq.gt_rgb = load_gt("groundtruth_visible.txt");
  seq.gt_t = load_gt("groundtruth_infrared.txt");
  if (fs::exists(dir / "attributes.txt")) {
    const std::string text = read_text(dir / "attributes.txt");
    std::string token;
    std::istringstream ss(text);
    while (std::getline(ss, token, ',')) {
      token = trim(token);
      if (!token.empty()) seq.attributes.push_back(token);
    }
  }
  return seq;
}

std::vector<std::string> list_sequences(const std::string& root) {
  require(fs::is_directory(root), ErrorKind::Io, "not a directory: " + root);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::is_directory(entry.path() / "visible"))
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

LoadedFrames load_frames(const SequencePair& seq) {
  LoadedFrames f;
  f.rgb.reserve(seq.size());
  f.t.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    Image rgb = read_png(seq.rgb_frames[i]);
    if (rgb.channels == 1) {
      Image expanded(3, rgb.height, rgb.width);
      for (std::size_t c = 0; c < 3; ++c)
        std::copy(rgb.data.begin(), rgb.data.end(),
                  expanded.data.begin() + static_cast<std::ptrdiff_t>(c * rgb.data.size()));
      rgb = std::move(expanded);
    }
    Image t = read_png(seq.t_frames[i]);
    if (t.channels == 3) {
      // Thermal stored as color: keep the luminance-like mean.
      Image gray(1, t.height, t.width);
      const std::size_t n = t.height * t.width;
      for (std::size_t k = 0; k < n; ++k)
        gray.data[k] = (t.data[k] + t.data[n + k] + t.data[2 * n + k]) / 3.0f;
      t = std::move(gray);
    }
    f.rgb.push_back(std::move(rgb));
    f.t.push_back(std::move(t));
  }
  return f;
}

Image crop_resize(const Image& src, double center_row, double center_col, double win_h,
                  double win_w, std::size_t out_h, std::size_t out_w) {
  require(!src.empty() && out_h > 0 && out_w > 0 && win_h > 0.0 && win_w > 0.0,
          ErrorKind::InvalidInput, "crop_resize: empty source or window");
  Image out(src.channels, out_h, out_w);
  const double sy = win_h / static_cast<double>(out_h);
  const double sx = win_w / static_cast<double>(out_w);
  const double cy_idx = static_cast<double>(out_h / 2);
  const double cx_idx = static_cast<double>(out_w / 2);
  const double max_r = static_cast<double>(src.height - 1);
  const double max_c = static_cast<double>(src.width - 1);

  std::vector<std::size_t> c0(out_w), c1(out_w);
  std::vector<float> fx(out_w);
  for (std::size_t j = 0; j < out_w; ++j) {
    const double x = std::clamp(center_col + (static_cast<double>(j) - cx_idx) * sx - 0.5, 0.0, max_c);
    c0[j] = static_cast<std::size_t>(std::floor(x));
    c1[j] = std::min(c0[j] + 1, src.width - 1);
    fx[j] = static_cast<float>(x - static_cast<double>(c0[j]));
  }
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = std::clamp(center_row + (static_cast<double>(i) - cy_idx) * sy - 0.5, 0.0, max_r);
    const auto r0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t r1 = std::min(r0 + 1, src.height - 1);
    const auto fy = static_cast<float>(y - static_cast<double>(r0));
    for (std::size_t c = 0; c < src.channels; ++c) {
      const float* row0 = &src.data[(c * src.height + r0) * src.width];
      const float* row1 = &src.data[(c * src.height + r1) * src.width];
      float* dst = &out.data[(c * out_h + i) * out_w];
      for (std::size_t j = 0; j < out_w; ++j) {
        const float top = row0[c0[j]] + fx[j] * (row0[c1[j]] - row0[c0[j]]);
        const float bot = row1[c0[j]] + fx[j] * (row1[c1[j]] - row1[c0[j]]);
        dst[j] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

std::vector<TrainingPair> center_crop_pairs(const std::vector<Image>& rgb,
                                            const std::vector<Image>& t, const CropOptions& opt) {
  require(rgb.size() == t.size(), ErrorKind::InvalidInput,
          "center_crop_pairs: modality frame counts differ");
  require(opt.crop_ratio > 0.0 && opt.crop_ratio <= 1.0, ErrorKind::InvalidConfig,
          "center_crop_pairs: crop_ratio must be in (0, 1], crop larger than frame otherwise");
  require(opt.stride >= 1 && opt.out_size >= 1, ErrorKind::InvalidConfig,
          "center_crop_pairs: stride and out_size must be positive");
  require(opt.sequence_length == 2 || opt.sequence_length == 3, ErrorKind::InvalidConfig,
          "center_crop_pairs: sequence_length must be 2 or 3");
  std::vector<TrainingPair> pairs;
  const auto span = static_cast<std::size_t>(opt.sequence_length);
  if (rgb.size() < span) return pairs;

  auto crop = [&](const Image& img) {
    const double side = opt.crop_ratio * static_cast<double>(std::min(img.height, img.width));
    return crop_resize(img, 0.5 * static_cast<double>(img.height), 0.5 * static_cast<double>(img.width),
                       side, side, opt.out_size, opt.out_size);
  };
  for (std::size_t f = 0; f + span <= rgb.size(); f += opt.stride) {
    require(rgb[f].height == t[f].height && rgb[f].width == t[f].width, ErrorKind::InvalidInput,
            "center_crop_pairs: RGB and thermal frames differ in size");
    TrainingPair p;
    p.template_rgb = crop(rgb[f]);
    p.template_t = crop(t[f]);
    p.search_rgb = crop(rgb[f + 1]);
    p.search_t = crop(t[f + 1]);
    if (span == 3) {
      p.third_rgb = crop(rgb[f + 2]);
      p.third_t = crop(t[f + 2]);
    }
    const double c = static_cast<double>(opt.out_size / 2);
    p.pseudo_box = {c, c, 0.5 * static_cast<double>(opt.out_size), 0.5 * static_cast<double>(opt.out_size)};
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<TrainingPair> center_crop_pairs(const SequencePair& seq, const CropOptions& opt) {
  const LoadedFrames f = load_frames(seq);
  return center_crop_pairs(f.rgb, f.t, opt);
}

}  // namespace xic

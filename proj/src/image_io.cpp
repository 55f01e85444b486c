#include "wonderm/image.hpp"

#include <cstring>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace wonderm {

namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw PipelineError("cannot read image: " + path.string());
  if (m.depth() != CV_8U) throw PipelineError("not an 8-bit image: " + path.string());
  return m;
}

void store(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Fixed compression level keeps files byte-stable across runs.
  if (!cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_COMPRESSION, 3}))
    throw PipelineError("cannot write image: " + path.string());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = load(path, cv::IMREAD_COLOR);
  Image img(bgr.rows, bgr.cols, 3);
  for (int r = 0; r < bgr.rows; ++r) {
    const auto* src = bgr.ptr<std::uint8_t>(r);
    for (int c = 0; c < bgr.cols; ++c) {
      img(r, c, 0) = src[3 * c + 2];
      img(r, c, 1) = src[3 * c + 1];
      img(r, c, 2) = src[3 * c + 0];
    }
  }
  return img;
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat g = load(path, cv::IMREAD_GRAYSCALE);
  Mask m(g.rows, g.cols, 1);
  for (int r = 0; r < g.rows; ++r) {
    const auto* src = g.ptr<std::uint8_t>(r);
    for (int c = 0; c < g.cols; ++c) m(r, c) = src[c] >= 128 ? 1 : 0;
  }
  return m;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 3) throw PipelineError("write_image expects 3 channels");
  cv::Mat bgr(img.rows(), img.cols(), CV_8UC3);
  for (int r = 0; r < img.rows(); ++r) {
    auto* dst = bgr.ptr<std::uint8_t>(r);
    for (int c = 0; c < img.cols(); ++c) {
      dst[3 * c + 0] = img(r, c, 2);
      dst[3 * c + 1] = img(r, c, 1);
      dst[3 * c + 2] = img(r, c, 0);
    }
  }
  store(path, bgr);
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
  cv::Mat g(m.rows(), m.cols(), CV_8UC1);
  for (int r = 0; r < m.rows(); ++r) {
    auto* dst = g.ptr<std::uint8_t>(r);
    for (int c = 0; c < m.cols(); ++c) dst[c] = m(r, c) ? 255 : 0;
  }
  store(path, g);
}

}  // namespace wonderm

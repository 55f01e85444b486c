#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "wonderm/labels.hpp"

namespace wonderm {

// Interleaved (HWC) raster. Row r holds cols*channels values, channel-minor,
// the same layout OpenCV uses, so codec round trips are a plain copy.
template <typename T>
class Raster {
 public:
  using Scalar = T;
  using Storage = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Raster() = default;
  Raster(int rows, int cols, int channels, T fill = T{})
      : rows_(rows), cols_(cols), channels_(channels),
        data_(Storage::Constant(rows, static_cast<Eigen::Index>(cols) * channels, fill)) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  bool is_square() const { return rows_ == cols_; }
  Eigen::Index size() const { return data_.size(); }

  T& operator()(int r, int c, int ch = 0) { return data_(r, c * channels_ + ch); }
  const T& operator()(int r, int c, int ch = 0) const { return data_(r, c * channels_ + ch); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool operator==(const Raster& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_ &&
           (data_ == o.data_).all();
  }

  // Single channel extracted as a rows x cols matrix.
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> plane(int ch) const {
    Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> p(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) p(r, c) = (*this)(r, c, ch);
    return p;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  Storage data_;
};

using Image = Raster<std::uint8_t>;  // 8-bit, 3 channels (RGB order)
using Mask = Raster<std::uint8_t>;   // 1 channel, values 0 or 1

inline int count_true(const Mask& m) { return static_cast<int>((m.array() != 0).count()); }

// PNG/JPEG codecs. Images are held in RGB order; masks are read as grayscale
// and binarized at half of the channel maximum.
Image read_image(const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);
void write_mask(const std::filesystem::path& path, const Mask& m);

}  // namespace wonderm

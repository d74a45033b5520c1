#pragma once

// Grayscale image and matrix persistence.
//
//  * PGM P5 (maxval 255 or 65535) read/write, 8/16-bit grayscale PNG read.
//    Pixels are stored integer / maxval; never normalised by the observed max.
//  * LRM1: "LRM1", rows (u32 LE), cols (u32 LE), rows*cols f64 LE, column-major.

#include "cloudrm/errors.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace cloudrm::io {

struct GrayImage {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd pixels;  // height x width, entries in [0,1]

  GrayImage() = default;
  explicit GrayImage(Eigen::MatrixXd px)
      : width(static_cast<int>(px.cols())), height(static_cast<int>(px.rows())), pixels(std::move(px)) {}
};

GrayImage load_gray(const std::filesystem::path& path);

/// Writes binary PGM with maxval 255 (depth 8) or 65535 (depth 16), rounding
/// half up. Pixels are clamped to [0,1] first.
void save_gray(const GrayImage& img, const std::filesystem::path& path, int depth = 8);

/// Column i is the column-major vectorisation of image i.
Eigen::MatrixXd stack_to_matrix(const std::vector<GrayImage>& images);

/// Inverse of stack_to_matrix; values are clamped to [0,1].
std::vector<GrayImage> matrix_to_stack(const Eigen::MatrixXd& D, int width, int height);

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& M);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

}  // namespace cloudrm::io

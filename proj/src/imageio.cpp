#include "cloudrm/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <string>

namespace cloudrm::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing: " + std::strerror(errno));
  return out;
}

void finish_write(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

// ---------------------------------------------------------------- PGM

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const fs::path& path)
      : bytes_(bytes), path_(path) {}

  long next_int(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(std::string("truncated header, missing ") + what);
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > std::numeric_limits<int>::max()) fail(std::string(what) + " out of range");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(std::string("malformed ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator before raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError("PGM '" + path_.string() + "': " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  HeaderReader header(bytes, path);
  const long width = header.next_int("width");
  const long height = header.next_int("height");
  const long maxval = header.next_int("maxval");
  if (width <= 0 || height <= 0) header.fail("zero image size");
  if (maxval != 255 && maxval != 65535)
    header.fail("unsupported maxval " + std::to_string(maxval) + " (expected 255 or 65535)");
  const std::size_t offset = header.raster_offset();
  const std::size_t bytes_per_px = maxval == 255 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(width) * height * bytes_per_px;
  if (bytes.size() < offset + need)
    header.fail("truncated raster: expected " + std::to_string(need) + " bytes, found " +
                std::to_string(bytes.size() - std::min(bytes.size(), offset)));

  Eigen::MatrixXd px(height, width);
  const std::uint8_t* p = bytes.data() + offset;
  const double scale = 1.0 / static_cast<double>(maxval);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      unsigned v = *p++;
      if (bytes_per_px == 2) v = (v << 8) | *p++;
      px(y, x) = v * scale;
    }
  }
  return GrayImage(std::move(px));
}

// ---------------------------------------------------------------- PNG

struct PngFileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

GrayImage decode_png(const fs::path& path) {
  std::unique_ptr<std::FILE, PngFileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for reading");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("PNG '" + path.string() + "': libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("PNG '" + path.string() + "': libpng initialisation failed");
  }

  std::vector<png_byte> raster;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int depth = 0, color = 0;
  std::string problem;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG '" + path.string() + "': corrupt or truncated file");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &depth, &color, nullptr, nullptr, nullptr);
  if (color != PNG_COLOR_TYPE_GRAY) {
    problem = "only single-band grayscale PNG is supported (color type " + std::to_string(color) + ")";
  } else if (depth != 8 && depth != 16) {
    problem = "unsupported bit depth " + std::to_string(depth) + " (expected 8 or 16)";
  } else {
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    raster.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = raster.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!problem.empty()) throw FormatError("PNG '" + path.string() + "': " + problem);

  const double scale = depth == 8 ? 1.0 / 255.0 : 1.0 / 65535.0;
  Eigen::MatrixXd px(height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    const png_byte* r = rows[y];
    for (png_uint_32 x = 0; x < width; ++x) {
      const unsigned v = depth == 8 ? r[x] : (unsigned(r[2 * x]) << 8) | r[2 * x + 1];
      px(y, x) = v * scale;
    }
  }
  return GrayImage(std::move(px));
}

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

// ---------------------------------------------------------------- LRM1

constexpr std::array<char, 4> kLrmMagic{'L', 'R', 'M', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

void put_f64(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

GrayImage load_gray(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  if (bytes.size() >= kPngSignature.size() &&
      std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
    return decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '7')
    throw FormatError("'" + path.string() + "': PNM variant P" + std::string(1, char(bytes[1])) +
                      " is not supported (binary grayscale P5 only)");
  throw FormatError("'" + path.string() + "': unknown image format");
}

void save_gray(const GrayImage& img, const fs::path& path, int depth) {
  if (depth != 8 && depth != 16) throw std::invalid_argument("save_gray: depth must be 8 or 16");
  if (img.width <= 0 || img.height <= 0 || img.pixels.rows() != img.height ||
      img.pixels.cols() != img.width)
    throw std::invalid_argument("save_gray: inconsistent image dimensions");
  if (!img.pixels.allFinite()) throw std::invalid_argument("save_gray: non-finite pixels");

  const unsigned maxval = depth == 8 ? 255u : 65535u;
  auto out = open_for_write(path);
  out << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  std::vector<char> raster;
  raster.reserve(static_cast<std::size_t>(img.width) * img.height * (depth / 8));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.pixels(y, x), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::floor(v * maxval + 0.5));
      if (depth == 16) raster.push_back(static_cast<char>((q >> 8) & 0xFF));
      raster.push_back(static_cast<char>(q & 0xFF));
    }
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  finish_write(out, path);
}

Eigen::MatrixXd stack_to_matrix(const std::vector<GrayImage>& images) {
  if (images.empty()) throw std::invalid_argument("stack_to_matrix: empty stack");
  const int w = images.front().width;
  const int h = images.front().height;
  Eigen::MatrixXd D(static_cast<Eigen::Index>(w) * h, static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.width != w || img.height != h || img.pixels.rows() != h || img.pixels.cols() != w)
      throw std::invalid_argument("stack_to_matrix: image " + std::to_string(i) + " has a different shape");
    D.col(static_cast<Eigen::Index>(i)) = img.pixels.reshaped();
  }
  return D;
}

std::vector<GrayImage> matrix_to_stack(const Eigen::MatrixXd& D, int width, int height) {
  if (width <= 0 || height <= 0 || static_cast<Eigen::Index>(width) * height != D.rows())
    throw std::invalid_argument("matrix_to_stack: width*height does not match matrix rows");
  std::vector<GrayImage> out;
  out.reserve(D.cols());
  for (Eigen::Index i = 0; i < D.cols(); ++i)
    out.emplace_back(D.col(i).reshaped(height, width).cwiseMax(0.0).cwiseMin(1.0).eval());
  return out;
}

void write_matrix(const fs::path& path, const Eigen::MatrixXd& M) {
  if (M.rows() == 0 || M.cols() == 0) throw std::invalid_argument("write_matrix: empty matrix");
  if (M.rows() > std::numeric_limits<std::uint32_t>::max() ||
      M.cols() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("write_matrix: dimensions exceed 32 bits");
  auto out = open_for_write(path);
  out.write(kLrmMagic.data(), kLrmMagic.size());
  put_u32(out, static_cast<std::uint32_t>(M.rows()));
  put_u32(out, static_cast<std::uint32_t>(M.cols()));
  for (Eigen::Index k = 0; k < M.size(); ++k) put_f64(out, M(k));
  finish_write(out, path);
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  const auto bytes = slurp(path);
  const auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("LRM1 '" + path.string() + "': " + why);
  };
  if (bytes.size() < 12) throw fail("short header");
  if (!std::equal(kLrmMagic.begin(), kLrmMagic.end(), bytes.begin())) throw fail("bad magic");
  const auto rows = get_le(bytes.data() + 4, 4);
  const auto cols = get_le(bytes.data() + 8, 4);
  if (rows == 0 || cols == 0) throw fail("zero dimension");
  const std::uint64_t need = 12 + rows * cols * 8;
  if (bytes.size() < need) throw fail("short read: expected " + std::to_string(need) + " bytes");
  if (bytes.size() > need) throw fail("trailing bytes after matrix payload");

  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::uint8_t* p = bytes.data() + 12;
  for (Eigen::Index k = 0; k < M.size(); ++k, p += 8) M(k) = std::bit_cast<double>(get_le(p, 8));
  return M;
}

}  // namespace cloudrm::io

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace semstr::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Corners in order top-left, top-right, bottom-right, bottom-left (image
// coordinates, y pointing down). Must be strictly convex with positive
// signed area under that winding.
struct Quad {
  std::array<Point, 4> corners;

  static Quad from_rect(double left, double top, double right, double bottom);
  double signed_area() const;
};

// Projective transform with h(2,2) == 1.
class Homography {
 public:
  explicit Homography(const Eigen::Matrix3d& h);

  static Homography identity();

  Point apply(Point p) const;
  Homography inverse() const;
  const Eigen::Matrix3d& matrix() const { return h_; }

 private:
  Eigen::Matrix3d h_;
};

// Row-major grayscale image, intensities in [0,1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }
};

// Throws DegenerateQuadError when three corners are collinear (or the
// linear system is singular) and InputError when the quad is not convex in
// the expected winding.
void validate_quad(const Quad& q);

// Maps the quad corners onto (0,0), (w,0), (w,h), (0,h) by solving the
// 8-unknown direct linear transform system.
Homography compute_homography(const Quad& src, std::size_t dst_width, std::size_t dst_height);

// Bilinear sample with pixel centers at integer + 0.5; out-of-range
// coordinates clamp to the nearest edge pixel.
double sample_bilinear(const GrayImage& img, double x, double y);

// Output pixel (u,v) samples img at H^-1 (u+0.5, v+0.5).
GrayImage rectify(const GrayImage& img, const Quad& src, std::size_t dst_width,
                  std::size_t dst_height);

// Binary PGM (P5). 8- and 16-bit maxvals are accepted on read; writes 8-bit.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace semstr::geometry

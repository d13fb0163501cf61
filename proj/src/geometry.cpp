#include "semstr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/LU>

#include "semstr/errors.hpp"

namespace semstr::geometry {
namespace {

// Gaussian elimination with partial pivoting on an 8x8 system. Returns false
// when a pivot vanishes relative to the row scale.
bool solve8(std::array<std::array<double, 9>, 8>& m, std::array<double, 8>& x) {
  constexpr int n = 8;
  double scale = 0.0;
  for (const auto& row : m)
    for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(row[j]));
  if (scale == 0.0) return false;
  const double tiny = scale * 1e-13;

  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    if (std::abs(m[pivot][col]) <= tiny) return false;
    std::swap(m[col], m[pivot]);
    for (int r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      if (f == 0.0) continue;
      for (int c = col; c <= n; ++c) m[r][c] -= f * m[col][c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = m[r][n];
    for (int c = r + 1; c < n; ++c) acc -= m[r][c] * x[c];
    x[r] = acc / m[r][r];
  }
  return true;
}

}  // namespace

Quad Quad::from_rect(double left, double top, double right, double bottom) {
  return Quad{{Point{left, top}, Point{right, top}, Point{right, bottom}, Point{left, bottom}}};
}

double Quad::signed_area() const {
  double twice = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    const Point& a = corners[i];
    const Point& b = corners[(i + 1) % 4];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

Homography::Homography(const Eigen::Matrix3d& h) : h_(h) {
  if (!h_.allFinite() || h_(2, 2) == 0.0) throw InputError("homography is not normalizable");
  h_ /= h_(2, 2);
  if (h_.determinant() == 0.0) throw InputError("homography is singular");
}

Homography Homography::identity() { return Homography(Eigen::Matrix3d::Identity()); }

Point Homography::apply(Point p) const {
  const double w = h_(2, 0) * p.x + h_(2, 1) * p.y + h_(2, 2);
  return {(h_(0, 0) * p.x + h_(0, 1) * p.y + h_(0, 2)) / w,
          (h_(1, 0) * p.x + h_(1, 1) * p.y + h_(1, 2)) / w};
}

Homography Homography::inverse() const { return Homography(h_.inverse()); }

void validate_quad(const Quad& q) {
  for (const Point& p : q.corners)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InputError("quad has non-finite corner");
  bool negative = false;
  for (size_t i = 0; i < 4; ++i) {
    const Point& prev = q.corners[(i + 3) % 4];
    const Point& cur = q.corners[i];
    const Point& next = q.corners[(i + 1) % 4];
    const double c = (cur.x - prev.x) * (next.y - cur.y) - (cur.y - prev.y) * (next.x - cur.x);
    // Reference for "collinear": the product of the adjacent edge lengths.
    const double ref = std::hypot(next.x - cur.x, next.y - cur.y) *
                       std::hypot(prev.x - cur.x, prev.y - cur.y);
    if (std::abs(c) <= 1e-12 * ref || ref == 0.0) throw DegenerateQuadError();
    if (c < 0) negative = true;
  }
  if (negative || q.signed_area() <= 0.0)
    throw InputError("quad is not convex in top-left, top-right, bottom-right, bottom-left order");
}

Homography compute_homography(const Quad& src, std::size_t dst_width, std::size_t dst_height) {
  if (dst_width < 1 || dst_height < 1) throw InputError("destination size must be at least 1x1");
  validate_quad(src);

  const double w = static_cast<double>(dst_width);
  const double h = static_cast<double>(dst_height);
  const std::array<Point, 4> dst{Point{0, 0}, Point{w, 0}, Point{w, h}, Point{0, h}};

  std::array<std::array<double, 9>, 8> m{};
  for (size_t k = 0; k < 4; ++k) {
    const double x = src.corners[k].x, y = src.corners[k].y;
    const double u = dst[k].x, v = dst[k].y;
    m[2 * k] = {x, y, 1, 0, 0, 0, -x * u, -y * u, u};
    m[2 * k + 1] = {0, 0, 0, x, y, 1, -x * v, -y * v, v};
  }
  std::array<double, 8> sol{};
  if (!solve8(m, sol)) throw DegenerateQuadError();

  Eigen::Matrix3d hm;
  hm << sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0;
  return Homography(hm);
}

double sample_bilinear(const GrayImage& img, double x, double y) {
  const double maxx = static_cast<double>(img.width - 1);
  const double maxy = static_cast<double>(img.height - 1);
  const double px = std::clamp(x - 0.5, 0.0, maxx);
  const double py = std::clamp(y - 0.5, 0.0, maxy);
  const auto x0 = static_cast<size_t>(std::floor(px));
  const auto y0 = static_cast<size_t>(std::floor(py));
  const size_t x1 = std::min(x0 + 1, img.width - 1);
  const size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = px - static_cast<double>(x0);
  const double fy = py - static_cast<double>(y0);
  const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bottom = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

GrayImage rectify(const GrayImage& img, const Quad& src, std::size_t dst_width,
                  std::size_t dst_height) {
  if (img.empty() || img.pixels.size() != img.width * img.height)
    throw InputError("rectify needs a nonempty image");
  const Homography inv = compute_homography(src, dst_width, dst_height).inverse();
  GrayImage out(dst_width, dst_height);
  for (size_t v = 0; v < dst_height; ++v) {
    for (size_t u = 0; u < dst_width; ++u) {
      const Point p = inv.apply({static_cast<double>(u) + 0.5, static_cast<double>(v) + 0.5});
      out.at(u, v) = sample_bilinear(img, p.x, p.y);
    }
  }
  return out;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());

  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      int c = in.peek();
      if (c == EOF) throw InputError("truncated PGM header in " + path.string());
      if (c == '#') {
        std::string ignored;
        std::getline(in, ignored);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    in >> tok;
    return tok;
  };

  if (next_token() != "P5") throw InputError(path.string() + " is not a binary PGM (P5)");
  size_t width = 0, height = 0;
  long maxval = 0;
  try {
    width = std::stoul(next_token());
    height = std::stoul(next_token());
    maxval = std::stol(next_token());
  } catch (const std::logic_error&) {
    throw InputError("malformed PGM header in " + path.string());
  }
  if (width == 0 || height == 0 || maxval <= 0 || maxval > 65535)
    throw InputError("unsupported PGM dimensions or maxval in " + path.string());
  in.get();  // single whitespace before raster

  GrayImage img(width, height);
  const bool wide = maxval > 255;
  std::vector<unsigned char> raster(width * height * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size()))
    throw InputError("truncated PGM raster in " + path.string());
  const double denom = static_cast<double>(maxval);
  for (size_t i = 0; i < width * height; ++i) {
    const unsigned v = wide ? (static_cast<unsigned>(raster[2 * i]) << 8) | raster[2 * i + 1] : raster[i];
    img.pixels[i] = std::min(1.0, static_cast<double>(v) / denom);
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raster(img.pixels.size());
  for (size_t i = 0; i < raster.size(); ++i)
    raster[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
}

}  // namespace semstr::geometry

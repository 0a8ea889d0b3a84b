#include "viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

std::vector<std::uint8_t> normalize_bytes(const std::vector<double>& v) {
  std::vector<std::uint8_t> out(v.size(), 0);
  if (v.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((v[i] - lo) / (hi - lo) * 255.0));
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.shape().rank != 3 || image.shape()[2] != 3)
    throw std::invalid_argument(cat("write_ppm: expected [h,w,3], got ", image.shape().str()));
  const int h = image.shape()[0], w = image.shape()[1];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(cat("write_ppm: cannot open ", path.string()));
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error(cat("write_ppm: write failed for ", path.string()));
}

namespace {

void svg_polygon(std::ostringstream& out, const std::array<std::array<double, 2>, 4>& fp,
                 double scale, double cx, double bottom, const char* stroke, const char* dash) {
  out << "  <polygon points=\"";
  char buf[64];
  for (int i = 0; i < 4; ++i) {
    const double sx = cx + fp[static_cast<std::size_t>(i)][0] * scale;
    const double sy = bottom - fp[static_cast<std::size_t>(i)][1] * scale;
    std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", sx, sy);
    out << buf;
  }
  out << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\"";
  if (dash) out << " stroke-dasharray=\"" << dash << "\"";
  out << "/>\n";
}

}  // namespace

std::string bev_svg(const std::vector<Box3D>& gt, const std::vector<BevDetection>& det) {
  double max_x = 4.0, max_z = 8.0;
  const auto widen = [&](const Box3D& b) {
    for (const auto& c : bev_corners(b)) {
      max_x = std::max(max_x, std::abs(c[0]));
      max_z = std::max(max_z, c[1]);
    }
  };
  for (const auto& b : gt) widen(b);
  for (const auto& d : det) widen(d.box);
  max_x += 2.0;
  max_z += 2.0;

  const double size = 600.0, margin = 20.0;
  const double scale = std::min((size - 2 * margin) / (2 * max_x), (size - 2 * margin) / max_z);
  const double cx = size / 2, bottom = size - margin;

  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                size, size, size, size);
  out << buf;
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "  <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#ccc\"/>\n", cx,
                margin, cx, bottom);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "  <circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#444\"/>\n", cx, bottom);
  out << buf;
  for (const auto& b : gt) svg_polygon(out, bev_corners(b), scale, cx, bottom, "#1a7f37", nullptr);
  for (const auto& d : det) {
    svg_polygon(out, bev_corners(d.box), scale, cx, bottom, "#c0392b", "6,4");
    std::snprintf(buf, sizeof(buf),
                  "  <text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" fill=\"#c0392b\">%.2f</text>\n",
                  cx + d.box.cx * scale + 4, bottom - d.box.cz * scale - 4, d.score);
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace mono3d

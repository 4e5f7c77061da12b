#include "shiftbench/color.hpp"

#include <algorithm>
#include <cmath>

namespace shiftbench {

Rgb rotate_hue(Rgb color, double degrees) {
  if (degrees == 0.0) return color;
  const double r = color[0] / 255.0, g = color[1] / 255.0, b = color[2] / 255.0;
  const double vmax = std::max({r, g, b});
  const double vmin = std::min({r, g, b});
  const double chroma = vmax - vmin;
  if (chroma == 0.0) return color;

  double hue;
  if (vmax == r) hue = 60.0 * std::fmod((g - b) / chroma, 6.0);
  else if (vmax == g) hue = 60.0 * ((b - r) / chroma + 2.0);
  else hue = 60.0 * ((r - g) / chroma + 4.0);
  hue = std::fmod(hue + degrees, 360.0);
  if (hue < 0.0) hue += 360.0;

  const double hp = hue / 60.0;
  const double x = chroma * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r1 = chroma; g1 = x; break;
    case 1: r1 = x; g1 = chroma; break;
    case 2: g1 = chroma; b1 = x; break;
    case 3: g1 = x; b1 = chroma; break;
    case 4: r1 = x; b1 = chroma; break;
    default: r1 = chroma; b1 = x; break;
  }
  const double m = vmax - chroma;
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
  };
  return {to_byte(r1 + m), to_byte(g1 + m), to_byte(b1 + m)};
}

}  // namespace shiftbench

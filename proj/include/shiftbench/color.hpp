#pragma once

#include <string>

#include "shiftbench/image.hpp"

namespace shiftbench {

struct NamedColor {
  std::string name;
  Rgb rgb{0, 0, 0};

  bool operator==(const NamedColor&) const = default;
};

// Hue rotation in HSV space; saturation and value are kept. A zero rotation
// returns the input unchanged.
Rgb rotate_hue(Rgb color, double degrees);

}  // namespace shiftbench

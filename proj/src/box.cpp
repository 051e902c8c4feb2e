#include "dinorade/box.hpp"

#include <cmath>
#include <numbers>

#include "dinorade/errors.hpp"

namespace dinorade {

std::string_view class_id(ObjectClass c) {
  switch (c) {
    case ObjectClass::kSedan: return "Sedan";
    case ObjectClass::kBusOrTruck: return "BusOrTruck";
    case ObjectClass::kPedestrian: return "Pedestrian";
    case ObjectClass::kMotorcycle: return "Motorcycle";
    case ObjectClass::kBicycle: return "Bicycle";
  }
  return "?";
}

std::string_view class_display_name(ObjectClass c) {
  return c == ObjectClass::kBusOrTruck ? "Bus or Truck" : class_id(c);
}

std::optional<ObjectClass> parse_class(std::string_view id) {
  for (ObjectClass c : kAllClasses)
    if (class_id(c) == id || class_display_name(c) == id) return c;
  return std::nullopt;
}

double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

void validate(const Box3D& b) {
  if (!b.center.allFinite() || !b.dims.allFinite() || !std::isfinite(b.yaw))
    throw GeometryError("box has non-finite fields");
  if ((b.dims.array() <= 0.0).any()) throw GeometryError("box dims must be strictly positive");
}

}  // namespace dinorade

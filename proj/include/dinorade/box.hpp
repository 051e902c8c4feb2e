#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace dinorade {

/// The five evaluated road-user classes, in report column order.
enum class ObjectClass { kSedan = 0, kBusOrTruck, kPedestrian, kMotorcycle, kBicycle };

inline constexpr int kNumClasses = 5;

inline constexpr std::array<ObjectClass, kNumClasses> kAllClasses{
    ObjectClass::kSedan, ObjectClass::kBusOrTruck, ObjectClass::kPedestrian,
    ObjectClass::kMotorcycle, ObjectClass::kBicycle};

/// Identifier used in JSON ("Sedan", "BusOrTruck", ...).
std::string_view class_id(ObjectClass c);
/// Human-readable column heading ("Bus or Truck").
std::string_view class_display_name(ObjectClass c);
std::optional<ObjectClass> parse_class(std::string_view id);
inline int class_index(ObjectClass c) { return static_cast<int>(c); }

/// Rotated 3D box in the ego (radar) frame: x forward, y left, z up.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();  // length, width, height
  double yaw = 0.0;                                // (-pi, pi], counter-clockwise from +x
  ObjectClass cls = ObjectClass::kSedan;
  double score = 1.0;

  double length() const { return dims.x(); }
  double width() const { return dims.y(); }
  double height() const { return dims.z(); }
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// Throws GeometryError on non-positive dims or non-finite fields.
void validate(const Box3D& b);

}  // namespace dinorade

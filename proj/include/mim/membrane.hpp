#pragma once
// Dielectric membrane slab inside the cavity. The membrane is a thin plate of
// index n whose centre plane crosses the axis at `position` and may be tilted
// by small slopes tilt_y, tilt_z: the centre plane is
//   x_c(y, z) = position + tilt_y · y + tilt_z · z,
// and the slab occupies points within thickness/2 of that plane measured
// along the plane normal, i.e. |x - x_c| ≤ (thickness/2)·√(1 + tilt_y² + tilt_z²).

#include <cmath>

#include "mim/errors.hpp"

namespace mim {

struct MembraneConfig {
  double position = 0.0;          // centre of the membrane on the axis [m]
  double thickness = 50e-9;       // measured along the membrane normal [m]
  double refractive_index = 2.0;  // n ≥ 1; the coupling strength is n² - 1
  double tilt_y = 0.0;            // d x_c / d y (radians for small angles)
  double tilt_z = 0.0;            // d x_c / d z
  bool thin_limit = false;        // collapse the slab to a sheet of weight (n²-1)·thickness

  // susceptibility contrast χ = n² - 1
  double contrast() const {
    return refractive_index * refractive_index - 1.0;
  }

  // ratio of the axial chord through the tilted slab to the thickness
  double chord_factor() const {
    return std::sqrt(1.0 + tilt_y * tilt_y + tilt_z * tilt_z);
  }

  void validate() const {
    if (!(thickness > 0.0)) throw config_error("membrane thickness must be positive");
    if (!(refractive_index >= 1.0))
      throw config_error("membrane refractive index must be at least 1");
    if (!(std::abs(tilt_y) < 1e-2) || !(std::abs(tilt_z) < 1e-2))
      throw config_error("membrane tilt must stay below 10 mrad");
    if (!std::isfinite(position)) throw config_error("membrane position must be finite");
  }
};

// Pointwise susceptibility contrast: n² - 1 inside the slab, 0 outside. In
// the thin limit the slab stands for a delta sheet on the centre plane and
// the equivalent sheet weight (n² - 1)·thickness is returned instead; the
// caller supplies the δ(x - x_c) semantics.
inline double membrane_potential(double x, double y, double z,
                                 const MembraneConfig& mem) {
  if (mem.thin_limit) return mem.contrast() * mem.thickness;
  const double xc = mem.position + mem.tilt_y * y + mem.tilt_z * z;
  const double half_chord = 0.5 * mem.thickness * mem.chord_factor();
  return (std::abs(x - xc) <= half_chord) ? mem.contrast() : 0.0;
}

}  // namespace mim

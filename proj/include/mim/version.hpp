#pragma once

namespace mim {

inline constexpr const char* kVersion = "1.0.0";

// Speed of light, m/s (exact SI).
inline constexpr double kSpeedOfLight = 299792458.0;

}  // namespace mim

#pragma once

namespace drycurve {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace drycurve

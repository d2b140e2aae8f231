#pragma once

namespace garmnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace garmnet

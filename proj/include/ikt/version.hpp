#pragma once

namespace ikt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ikt

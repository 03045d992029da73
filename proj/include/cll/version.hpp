#pragma once

namespace cll {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cll

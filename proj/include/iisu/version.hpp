#pragma once

namespace iisu {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iisu

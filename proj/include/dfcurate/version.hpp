#pragma once

#include <string_view>

namespace dfcurate {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace dfcurate

#pragma once

namespace exin {

inline constexpr const char* kVersion = "0.1.0";

} // namespace exin

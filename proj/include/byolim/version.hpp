#pragma once

namespace byolim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace byolim

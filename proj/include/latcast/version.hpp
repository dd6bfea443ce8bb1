#pragma once

namespace latcast {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latcast

#pragma once

namespace automr {
inline constexpr const char* kVersion = "0.1.0";
}

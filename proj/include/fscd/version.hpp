#pragma once

namespace fscd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fscd

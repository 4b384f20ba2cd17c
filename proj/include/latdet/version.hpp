#pragma once

namespace latdet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latdet

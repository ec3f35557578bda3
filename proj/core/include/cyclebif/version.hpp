#pragma once

namespace cyclebif {

inline constexpr const char* kToolName = "cyclebif";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace cyclebif

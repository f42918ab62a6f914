#pragma once

namespace distillkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace distillkit

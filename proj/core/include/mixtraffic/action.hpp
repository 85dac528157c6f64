#pragma once

#include <cstdint>
#include <string_view>

namespace mixtraffic {

// RV action space.
enum class Action : std::uint8_t { Stop = 0, Go = 1 };

inline constexpr int kActionCount = 2;

constexpr std::string_view name_of(Action a) { return a == Action::Stop ? "Stop" : "Go"; }

}  // namespace mixtraffic

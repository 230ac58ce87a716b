#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace mtr {

inline constexpr std::size_t kNumActions = 10;
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "jumping",     "phoning", "playinginstrument", "reading",     "ridingbike",
    "ridinghorse", "running", "takingphoto",       "usingcomputer", "walking",
};

inline constexpr std::size_t kNumContextObjects = 4;
inline constexpr std::array<std::string_view, kNumContextObjects> kContextObjectNames = {
    "horse", "bicycle", "motorbike", "tvmonitor",
};

}  // namespace mtr

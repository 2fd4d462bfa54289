#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace callipaint {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Standard alphabet with padding; whitespace is ignored. Throws kFormat.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace callipaint

#pragma once

#include <string>
#include <string_view>

namespace weedid::io {

std::string base64_encode(std::string_view bytes);

/// Standard alphabet with padding; ASCII whitespace is ignored. Throws
/// Error(MalformedFile) on anything else.
std::string base64_decode(std::string_view text);

}  // namespace weedid::io

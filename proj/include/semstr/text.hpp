#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace semstr::text {

// Decodes UTF-8 into code points. Invalid sequences raise InputError.
std::u32string to_code_points(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);
std::string to_utf8(char32_t cp);

// Unicode NFC normalization.
std::string nfc(std::string_view utf8);

// Splits on every occurrence of `sep`; empty fields are kept.
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string_view trim(std::string_view s);

}  // namespace semstr::text

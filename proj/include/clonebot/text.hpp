#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clonebot {

/// Unicode NFC normalization followed by trimming outer whitespace.
/// Invalid UTF-8 sequences are replaced with U+FFFD.
std::string normalize_text(std::string_view text);

/// True when `text` holds nothing but Unicode whitespace.
bool is_blank(std::string_view text);

/// Splits on Unicode whitespace and emits every punctuation or symbol code
/// point (general categories P* and S*) as its own token: "Hey, you!" -> {"Hey", ",", "you", "!"}.
std::vector<std::string> split_words(std::string_view text);

/// Splits on Unicode whitespace only.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace clonebot

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clonebot/corpus.hpp"

namespace clonebot::detail {

struct RawRow {
  std::string conversation_id;
  std::string speaker_id;
  std::optional<std::int64_t> timestamp;
  std::string text;
};

/// Validates identifiers and normalizes text; nullopt marks a malformed row.
std::optional<RawRow> make_row(std::string conversation_id, std::string speaker_id,
                               std::optional<std::int64_t> timestamp, std::string_view text);

/// Groups rows into conversations, fills timestamps, orders and assigns ids.
ParseReport assemble(std::vector<RawRow> rows, std::size_t total, std::vector<std::size_t> malformed);

}  // namespace clonebot::detail

#include "clonebot/text.hpp"

#include <fstream>
#include <sstream>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "clonebot/binary_io.hpp"
#include "clonebot/error.hpp"

namespace clonebot {
namespace {

// Walks code points of a UTF-8 buffer, reporting [begin, end) byte ranges.
template <typename Fn>
void for_each_code_point(std::string_view text, Fn&& fn) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t begin = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    fn(c, static_cast<std::size_t>(begin), static_cast<std::size_t>(i));
  }
}

bool is_space(UChar32 c) { return c < 0 || u_isUWhiteSpace(c); }

template <typename IsBreak, typename IsSingle>
std::vector<std::string> tokenize(std::string_view text, IsBreak is_break, IsSingle is_single) {
  std::vector<std::string> out;
  std::size_t word_begin = std::string_view::npos;
  auto flush = [&](std::size_t end) {
    if (word_begin != std::string_view::npos) {
      out.emplace_back(text.substr(word_begin, end - word_begin));
      word_begin = std::string_view::npos;
    }
  };
  for_each_code_point(text, [&](UChar32 c, std::size_t b, std::size_t e) {
    if (is_break(c)) {
      flush(b);
    } else if (is_single(c)) {
      flush(b);
      out.emplace_back(text.substr(b, e - b));
    } else if (word_begin == std::string_view::npos) {
      word_begin = b;
    }
  });
  flush(text.size());
  return out;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");

  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");

  int32_t begin = 0;
  int32_t end = normalized.length();
  while (begin < end && u_isUWhiteSpace(normalized.char32At(begin)))
    begin = normalized.moveIndex32(begin, 1);
  while (end > begin) {
    const int32_t prev = normalized.moveIndex32(end, -1);
    if (!u_isUWhiteSpace(normalized.char32At(prev))) break;
    end = prev;
  }

  std::string out;
  normalized.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

bool is_blank(std::string_view text) {
  bool blank = true;
  for_each_code_point(text, [&](UChar32 c, std::size_t, std::size_t) {
    if (!is_space(c)) blank = false;
  });
  return blank;
}

std::vector<std::string> split_words(std::string_view text) {
  return tokenize(text, is_space, [](UChar32 c) {
    return (U_GET_GC_MASK(c) & (U_GC_P_MASK | U_GC_S_MASK)) != 0;
  });
}

std::vector<std::string> split_whitespace(std::string_view text) {
  return tokenize(text, is_space, [](UChar32) { return false; });
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

namespace io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IngestionError("read failed: " + path);
  return std::move(ss).str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("write failed: " + path);
}

}  // namespace io
}  // namespace clonebot

#include <algorithm>
#include <charconv>
#include <istream>
#include <iterator>

#include "clonebot/corpus.hpp"
#include "clonebot/error.hpp"
#include "corpus_internal.hpp"

namespace clonebot {
namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  bool complete = true;  // false when a quoted field ran to end of input
};

// RFC 4180 reader: quoted fields may hold separators, line breaks and
// doubled quotes; line breaks inside quotes are kept verbatim.
class CsvReader {
 public:
  explicit CsvReader(std::string data) : data_(std::move(data)) {}

  bool next(CsvRecord& record) {
    if (pos_ >= data_.size()) return false;
    record = CsvRecord{};
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    while (pos_ < data_.size()) {
      const char c = data_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_started_quoted) {
        quoted = true;
        field_started_quoted = true;
      } else if (c == ',') {
        record.fields.push_back(std::move(field));
        field.clear();
        field_started_quoted = false;
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
        record.fields.push_back(std::move(field));
        return true;
      } else {
        field.push_back(c);
      }
    }
    record.complete = !quoted;
    record.fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw SchemaError("CSV header has no column '" + name + "'");
}

}  // namespace

ParseReport parse_csv(std::istream& in, const CsvColumns& columns) {
  std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IngestionError("read error while loading CSV");
  if (data.starts_with("\xEF\xBB\xBF")) data.erase(0, 3);

  CsvReader reader(std::move(data));
  CsvRecord header;
  if (!reader.next(header)) throw SchemaError("CSV input has no header row");

  const std::size_t conv_col = column_index(header.fields, columns.conversation_id);
  const std::size_t speaker_col = column_index(header.fields, columns.speaker_id);
  const std::size_t ts_col = column_index(header.fields, columns.timestamp);
  const std::size_t text_col = column_index(header.fields, columns.text);
  const std::size_t needed = std::max({conv_col, speaker_col, ts_col, text_col}) + 1;

  std::vector<detail::RawRow> rows;
  std::vector<std::size_t> malformed;
  std::size_t total = 0;
  std::size_t record_no = 1;
  CsvRecord record;
  while (reader.next(record)) {
    ++record_no;
    if (record.fields.size() == 1 && record.fields[0].empty()) continue;
    ++total;

    std::optional<detail::RawRow> row;
    if (record.complete && record.fields.size() >= needed) {
      std::optional<std::int64_t> ts;
      bool ts_ok = true;
      const std::string& cell = record.fields[ts_col];
      if (!cell.empty()) {
        std::int64_t value = 0;
        auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        ts_ok = ec == std::errc{} && end == cell.data() + cell.size();
        if (ts_ok) ts = value;
      }
      if (ts_ok)
        row = detail::make_row(record.fields[conv_col], record.fields[speaker_col], ts, record.fields[text_col]);
    }
    if (row)
      rows.push_back(std::move(*row));
    else
      malformed.push_back(record_no);
  }
  return detail::assemble(std::move(rows), total, std::move(malformed));
}

}  // namespace clonebot

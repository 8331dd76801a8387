#include "triagebot/csv.hpp"

#include "triagebot/error.hpp"

namespace triagebot::csv {

std::vector<Record> parse(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool after_quote = false;    // just closed a quoted field
  bool field_started = false;  // anything seen on this line

  auto end_field = [&] {
    current.push_back(std::move(field));
    field.clear();
    after_quote = false;
  };
  auto end_record = [&] {
    if (field_started) {
      end_field();
      records.push_back(std::move(current));
    }
    current.clear();
    field.clear();
    field_started = false;
    after_quote = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      field_started = true;
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
    } else if (after_quote) {
      throw Error(Errc::format_error, "unexpected character after closing quote at offset " +
                                          std::to_string(i));
    } else if (c == '"') {
      if (!field.empty()) {
        throw Error(Errc::format_error,
                    "quote inside unquoted field at offset " + std::to_string(i));
      }
      in_quotes = true;
      field_started = true;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error(Errc::format_error, "unterminated quoted field");
  end_record();
  return records;
}

std::string escape_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_record(const Record& record) {
  std::string line;
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (i) line.push_back(',');
    line += escape_field(record[i]);
  }
  return line;
}

}  // namespace triagebot::csv

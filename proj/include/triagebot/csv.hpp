#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace triagebot::csv {

using Record = std::vector<std::string>;

// RFC 4180 style: comma separator, double-quoted fields, "" for an embedded
// quote. Accepts LF or CRLF line endings and a leading UTF-8 BOM. Blank lines
// are skipped. Throws Error(format_error) on an unterminated quote or on
// garbage after a closing quote.
std::vector<Record> parse(std::string_view text);

// Quotes the field only when it contains a comma, quote, CR or LF.
std::string escape_field(std::string_view field);

std::string format_record(const Record& record);

}  // namespace triagebot::csv

#pragma once

#include <string>
#include <vector>

namespace attrition {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// RFC 4180 parsing: comma delimiter, double-quote quoting, embedded
// delimiters/quotes/newlines inside quoted fields, CRLF or LF line ends.
// The first record is the header. Throws DataError on structural problems
// (ragged rows, unterminated quotes, missing file).
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& content, const std::string& origin);

// Quotes a field only when it contains a comma, quote, CR or LF.
void write_csv(const std::string& path, const CsvTable& table);
std::string csv_to_string(const CsvTable& table);

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

} // namespace attrition

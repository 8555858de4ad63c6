#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lclab::csv {

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

// RFC 4180 quoting when the field contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

// Splits LF-terminated text into rows of unquoted fields. A trailing newline
// does not produce an empty row. Throws InputError on unbalanced quotes.
std::vector<std::vector<std::string>> parse(std::string_view text);

}  // namespace lclab::csv

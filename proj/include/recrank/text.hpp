#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace recrank::text {

std::string_view trim(std::string_view s);

// Splits on every occurrence of `sep`; empty fields are kept.
std::vector<std::string_view> split(std::string_view s, std::string_view sep);

bool is_valid_utf8(std::string_view s);

// Returns `s` unchanged when it is valid UTF-8, otherwise reinterprets every
// byte as Latin-1 and re-encodes as UTF-8.
std::string latin1_fallback_to_utf8(std::string_view s);

// Case-fold (ASCII), trim, collapse internal whitespace runs to one space and
// strip one layer of surrounding straight or curly double quotes.
std::string normalize_title(std::string_view s);

// Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

// 1 - edit_distance / max(len); 1.0 for two empty strings.
double similarity(std::string_view a, std::string_view b);

// Wraps in double quotes, doubling any inner double quote.
std::string quote(std::string_view s);

// Extracts maximal double-quoted segments (straight quotes with "" as an
// escaped quote, or curly “...” pairs) in order. Returned strings are
// unescaped and without the surrounding quotes.
std::vector<std::string> quoted_segments(std::string_view s);

// Same scan as quoted_segments but returns the raw spans including the quotes.
std::vector<std::string_view> quoted_spans(std::string_view s);

std::string to_hex(std::string_view bytes);

// SHA-256 of `data` as lowercase hex.
std::string sha256_hex(std::string_view data);

// Backslash escapes for tab, newline, carriage return and backslash.
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

}  // namespace recrank::text

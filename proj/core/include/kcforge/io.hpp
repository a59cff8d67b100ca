#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kcforge::io {

/// Whole-file read; throws InputError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`. Readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal that parses back to exactly `v`.
std::string format_shortest(double v);
/// `%.17g`: round-trip exact, fixed width of significance.
std::string format_g17(double v);
/// Strict parse of the whole string; throws ParseError with `what` in the message.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

// Minimal RFC 4180 CSV: fields containing comma, quote or LF are quoted.

std::string csv_escape(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);

struct CsvRecord {
    std::size_t line = 0;   // 1-based line on which the record starts
    std::vector<std::string> fields;
};

/// Splits into records. Empty lines are skipped; a trailing '\r' before LF
/// is tolerated. Lines starting with '#' are skipped when `allow_comments`.
std::vector<CsvRecord> csv_parse(std::string_view text, bool allow_comments = false);

/// Escapes '\\', '\n', '\r', '\t' as two-character sequences.
std::string escape_text(std::string_view s);
std::string unescape_text(std::string_view s);

} // namespace kcforge::io

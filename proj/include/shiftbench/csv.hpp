#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace shiftbench::csv {

using Row = std::vector<std::string>;

// RFC 4180 style parsing: quoted fields may contain commas, doubled quotes
// and newlines. Both LF and CRLF terminators are accepted on input.
std::vector<Row> parse(std::string_view text);

// Reads and parses a file; throws DataError if it cannot be opened.
std::vector<Row> read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string join(const Row& fields);

// Shortest round-trip decimal representation.
std::string format_double(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

// Writes to a sibling temporary and renames, so readers never see a torn file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace shiftbench::csv

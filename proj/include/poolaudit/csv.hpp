#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace poolaudit::csv {

using Row = std::vector<std::string>;

// Splits one CSV line into fields. Double-quoted fields may contain commas
// and doubled quotes; embedded newlines are not supported.
Row split_line(std::string_view line);

// Calls `visit(row, line_number)` for every non-empty line. Line numbers are 1-based
// and include the header line when present.
void for_each_row(const std::filesystem::path& path,
                  const std::function<void(const Row&, std::size_t)>& visit);

std::string escape_field(std::string_view field);

// RFC-4180 record terminated with LF.
void write_row(std::ostream& out, const Row& row);

} // namespace poolaudit::csv

#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace refmort::csv {

/// One parsed data row; `line` is the 1-based line number in the source file.
struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// A header plus data rows. Fields are trimmed of surrounding whitespace and
/// double quotes; blank lines are skipped.
struct Document {
    std::vector<std::string> header;
    std::vector<Row> rows;

    /// Column index for `name`, or nullopt when absent.
    std::optional<std::size_t> column(std::string_view name) const;
    /// Column index for `name`; throws SchemaError naming `name` and `source` when absent.
    std::size_t require_column(std::string_view name, std::string_view source) const;
};

Document read(std::istream &in);
Document read_file(const std::string &path);

std::vector<std::string> split_line(std::string_view line);

/// Parse helpers that throw ValidationError with row context.
double parse_double(const std::string &text, std::size_t line, std::string_view column);
long long parse_integer(const std::string &text, std::size_t line, std::string_view column);

/// Shortest round-trippable decimal representation of `value`.
std::string format_double(double value);

} // namespace refmort::csv

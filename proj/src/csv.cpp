#include "refmort/csv.hpp"

#include "refmort/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace refmort::csv {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) {
            out.push_back(s[i]);
            if (s[i] == '"' && i + 1 < s.size() && s[i + 1] == '"') {
                ++i;
            }
        }
        return out;
    }
    return std::string(s);
}

} // namespace

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::string current;
    bool in_quotes = false;
    for (char ch : line) {
        if (ch == '"') {
            in_quotes = !in_quotes;
            current.push_back(ch);
        } else if (ch == ',' && !in_quotes) {
            out.push_back(unquote(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    out.push_back(unquote(current));
    return out;
}

std::optional<std::size_t> Document::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t Document::require_column(std::string_view name, std::string_view source) const {
    if (auto idx = column(name)) {
        return *idx;
    }
    throw SchemaError(std::string(source) + ": missing required column '" + std::string(name) +
                      "'");
}

Document read(std::istream &in) {
    Document doc;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_line(line);
        if (!have_header) {
            doc.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != doc.header.size()) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(doc.header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        doc.rows.push_back(Row{line_no, std::move(fields)});
    }
    return doc;
}

Document read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open '" + path + "'");
    }
    return read(in);
}

double parse_double(const std::string &text, std::size_t line, std::string_view column) {
    double value = 0.0;
    const auto *begin = text.data();
    const auto *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw ValidationError("line " + std::to_string(line) + ": column '" +
                              std::string(column) + "' is not a finite number: '" + text + "'");
    }
    return value;
}

long long parse_integer(const std::string &text, std::size_t line, std::string_view column) {
    long long value = 0;
    const auto *begin = text.data();
    const auto *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        // Accept integral values written with a decimal point, e.g. "3.0".
        const double as_double = parse_double(text, line, column);
        if (std::floor(as_double) != as_double) {
            throw ValidationError("line " + std::to_string(line) + ": column '" +
                                  std::string(column) + "' is not an integer: '" + text + "'");
        }
        return static_cast<long long>(as_double);
    }
    return value;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace refmort::csv

#include "poolaudit/csv.hpp"

#include "poolaudit/error.hpp"

#include <fstream>
#include <ostream>

namespace poolaudit::csv {

Row split_line(std::string_view line) {
    Row fields;
    std::string current;
    bool in_quotes = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"' && current.empty() && !was_quoted) {
            in_quotes = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
            was_quoted = false;
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

void for_each_row(const std::filesystem::path& path,
                  const std::function<void(const Row&, std::size_t)>& visit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("csv", "cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        visit(split_line(line), line_no);
    }
}

std::string escape_field(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) {
            out << ',';
        }
        out << escape_field(row[i]);
    }
    out << '\n';
}

} // namespace poolaudit::csv

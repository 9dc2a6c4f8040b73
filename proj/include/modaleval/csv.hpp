#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "modaleval/errors.hpp"

namespace modaleval {

struct CsvRow {
    std::size_t line_no = 0; // 1-based line the row starts on
    std::vector<std::string> fields;
};

// RFC-4180-ish reader: quoted fields, doubled quotes, CRLF, embedded
// newlines inside quotes. Whitespace is preserved verbatim.
inline std::vector<CsvRow> parse_csv(std::string_view text) {
    std::vector<CsvRow> rows;
    std::size_t line = 1;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        CsvRow row;
        row.line_no = line;
        std::string field;
        bool in_quotes = false;
        bool row_done = false;
        bool saw_any = false;
        while (i < n && !row_done) {
            char c = text[i];
            if (in_quotes) {
                if (c == '"') {
                    if (i + 1 < n && text[i + 1] == '"') {
                        field += '"';
                        i += 2;
                    } else {
                        in_quotes = false;
                        ++i;
                    }
                } else {
                    if (c == '\n') ++line;
                    field += c;
                    ++i;
                }
            } else if (c == '"' && field.empty()) {
                in_quotes = true;
                saw_any = true;
                ++i;
            } else if (c == ',') {
                row.fields.push_back(std::move(field));
                field.clear();
                saw_any = true;
                ++i;
            } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
                i += 2;
                ++line;
                row_done = true;
            } else if (c == '\n') {
                ++i;
                ++line;
                row_done = true;
            } else {
                field += c;
                saw_any = true;
                ++i;
            }
        }
        if (in_quotes) throw Error("MalformedRow", "unterminated quote at line " + std::to_string(row.line_no));
        row.fields.push_back(std::move(field));
        // Skip pure blank lines (common trailing newline case).
        if (row.fields.size() == 1 && row.fields[0].empty() && !saw_any) continue;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string csv_escape(std::string_view s) {
    bool need = s.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!need) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("short write to " + path);
}

} // namespace modaleval

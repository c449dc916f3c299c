#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uavids/error.hpp"

namespace uavids::csv {

struct Document {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 parser: comma separated, double-quote quoting, quotes escaped by
/// doubling, fields may contain embedded newlines. Accepts LF and CRLF.
inline Document parse(const std::string& text, const std::string& origin = "<string>") {
    Document doc;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any_field = false;
    auto end_field = [&]() {
        record.push_back(field);
        field.clear();
        any_field = false;
    };
    auto end_record = [&]() {
        end_field();
        if (doc.header.empty())
            doc.header = std::move(record);
        else
            doc.rows.push_back(std::move(record));
        record.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                in_quotes = true;
                any_field = true;
                break;
            case ',':
                end_field();
                any_field = true;  // a comma implies a following (possibly empty) field
                break;
            case '\r':
                break;
            case '\n':
                if (!field.empty() || any_field || !record.empty()) end_record();
                break;
            default:
                field.push_back(ch);
                any_field = true;
                break;
        }
    }
    if (in_quotes) throw IoFailure("unterminated quoted field in " + origin);
    if (!field.empty() || any_field || !record.empty()) end_record();
    for (const auto& row : doc.rows) {
        if (row.size() != doc.header.size())
            throw IoFailure("ragged row in " + origin + ": expected " +
                            std::to_string(doc.header.size()) + " fields, got " +
                            std::to_string(row.size()));
    }
    return doc;
}

inline Document read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoFailure("read error: " + path.string());
    return parse(buf.str(), path.string());
}

inline std::string escape_field(const std::string& s) {
    bool needs_quotes = s.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string format_row(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line.push_back(',');
        line += escape_field(fields[i]);
    }
    line.push_back('\n');
    return line;
}

}  // namespace uavids::csv

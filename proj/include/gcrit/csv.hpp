#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gcrit {

struct CsvRecord {
    std::size_t line_no = 0; // physical line the record starts on, 1-based
    std::vector<std::string> fields;
};

// RFC-4180-ish reader: quoted fields may contain commas, doubled quotes,
// and newlines. Accepts LF and CRLF. Blank lines are skipped.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    std::optional<CsvRecord> next() {
        int c = in_.get();
        while (c == '\n' || c == '\r') {
            if (c == '\n') ++line_;
            c = in_.get();
        }
        if (c == std::istream::traits_type::eof()) return std::nullopt;

        CsvRecord rec;
        rec.line_no = line_;
        std::string field;
        bool quoted = false;
        while (true) {
            if (c == std::istream::traits_type::eof()) {
                rec.fields.push_back(std::move(field));
                break;
            }
            char ch = static_cast<char>(c);
            if (quoted) {
                if (ch == '"') {
                    if (in_.peek() == '"') { field.push_back('"'); in_.get(); }
                    else quoted = false;
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(ch);
                }
            } else if (ch == '"' && field.empty()) {
                quoted = true;
            } else if (ch == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\n' || ch == '\r') {
                if (ch == '\r' && in_.peek() == '\n') in_.get();
                ++line_;
                rec.fields.push_back(std::move(field));
                return rec;
            } else {
                field.push_back(ch);
            }
            c = in_.get();
        }
        return rec;
    }

private:
    std::istream& in_;
    std::size_t line_ = 1;
};

inline std::string csv_escape(std::string_view field) {
    bool needs_quote = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs_quote) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    return out;
}

} // namespace gcrit

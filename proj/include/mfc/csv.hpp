#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfc {

/// RFC-4180 CSV writer; numeric fields use 17 significant digits so values
/// round-trip exactly.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary), width_(columns.size()) {
        if (!out_)
            throw std::runtime_error("CsvWriter: cannot open " + path);
        write_strings(columns);
    }

    void write_row(const std::vector<double>& values) {
        if (values.size() != width_)
            throw std::invalid_argument("CsvWriter: column count mismatch");
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i)
                line += ',';
            line += format(values[i]);
        }
        line += "\r\n";
        out_ << line;
    }

    void write_strings(const std::vector<std::string>& fields) {
        if (fields.size() != width_)
            throw std::invalid_argument("CsvWriter: column count mismatch");
        std::string line;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i)
                line += ',';
            line += quote(fields[i]);
        }
        line += "\r\n";
        out_ << line;
    }

    static std::string format(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos)
            return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"')
                q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
    std::size_t width_;
};

} // namespace mfc

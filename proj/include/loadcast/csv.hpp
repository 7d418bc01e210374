#ifndef LOADCAST_CSV_HPP
#define LOADCAST_CSV_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "loadcast/errors.hpp"

namespace loadcast {

// Shortest representation that round-trips the double exactly. Used for
// data-carrying files (frames, feature tables, checkpoints stay lossless).
inline std::string format_full(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// 6 significant digits, for human-facing report files.
inline std::string format_sig6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw ParseError("invalid number '" + s + "' " + context);
    }
    return v;
}

struct CsvRow {
    int line_no = 0;
    std::vector<std::string> fields;
};

struct CsvFile {
    std::string path;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

// Plain comma-separated files with a mandatory header row. Quoting is not
// supported; none of the schemas need embedded commas.
inline CsvFile read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    CsvFile f;
    f.path = path;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (f.header.empty()) {
            f.header = split_csv_line(line);
        } else {
            f.rows.push_back({line_no, split_csv_line(line)});
        }
    }
    if (f.header.empty()) throw ParseError("empty file: " + path);
    return f;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary); // binary: byte-identical across runs
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& l : lines) out << l << '\n';
}

inline std::string join_csv(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += fields[i];
    }
    return out;
}

} // namespace loadcast

#endif

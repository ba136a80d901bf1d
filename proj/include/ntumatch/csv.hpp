#ifndef NTUMATCH_CSV_HPP
#define NTUMATCH_CSV_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntumatch/errors.hpp"

namespace ntumatch {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int columnIndex(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        return -1;
    }

    int requireColumn(const std::string& name) const {
        const int k = columnIndex(name);
        if (k < 0) throw SchemaError("missing column '" + name + "'");
        return k;
    }
};

namespace csv {

inline std::vector<std::string> splitLine(const std::string& line) {
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

inline CsvTable read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
    t.header = splitLine(line);
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        auto cells = splitLine(line);
        if (cells.size() != t.header.size())
            throw SchemaError(path + ":" + std::to_string(lineNo) + ": expected " +
                              std::to_string(t.header.size()) + " cells, got " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

/// Fixed 17-significant-digit formatting so doubles round-trip exactly.
inline std::string formatDouble(double v) {
    if (v == -std::numeric_limits<double>::infinity()) return "-inf";
    if (v == std::numeric_limits<double>::infinity()) return "inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parseDouble(const std::string& s, const std::string& where) {
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(where + ": not a number: '" + s + "'");
    }
}

inline long parseLong(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(where + ": not an integer: '" + s + "'");
    }
}

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw DataError("cannot write " + path);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k) out_ << ',';
            out_ << cells[k];
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

} // namespace csv
} // namespace ntumatch

#endif

#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace v2x {

/// Shortest round-trippable rendering is not needed here; a fixed %.10g keeps
/// files compact and identical across repeated runs.
inline std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

}  // namespace v2x

#include "mcrb/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mcrb/error.hpp"

namespace mcrb::csv {

namespace {

void append_row(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += cells[i];
    }
    out += '\n';
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

bool has_columns(const Table& t, std::initializer_list<const char*> names) {
    return std::all_of(names.begin(), names.end(), [&](const char* n) {
        return std::find(t.header.begin(), t.header.end(), n) != t.header.end();
    });
}

// Pivot rows keyed by an x column into one column per criterion.
Table pivot_rmse(const Table& t, const std::string& x_name, std::size_t x_col, std::size_t crit_col,
                 std::size_t value_col) {
    static const std::vector<std::string> order{"mcrb", "aic", "aicc", "mdl", "bound_min"};
    std::vector<std::string> xs;
    std::map<std::string, std::map<std::string, std::string>> cells;
    for (const auto& row : t.rows) {
        const std::string& x = row[x_col];
        if (std::find(xs.begin(), xs.end(), x) == xs.end()) {
            xs.push_back(x);
        }
        cells[x][row[crit_col]] = row[value_col];
    }
    Table out;
    out.header.push_back(x_name);
    for (const auto& c : order) {
        out.header.push_back(c == "bound_min" ? c : "rmse_" + c);
    }
    for (const auto& x : xs) {
        std::vector<std::string> r{x};
        for (const auto& c : order) {
            const auto it = cells[x].find(c);
            if (it == cells[x].end()) {
                throw SchemaMismatch("plotdata: sweep point " + x + " lacks criterion " + c);
            }
            r.push_back(it->second);
        }
        out.rows.push_back(std::move(r));
    }
    return out;
}

Table pivot_bounds(const Table& t) {
    const std::size_t sv = t.column("sweep_value");
    const std::size_t mc = t.column("m");
    const std::size_t bc = t.column("mean_bound");
    std::vector<std::string> sweeps;
    std::vector<std::string> ms;
    std::map<std::string, std::map<std::string, std::string>> cells;
    for (const auto& row : t.rows) {
        if (std::find(sweeps.begin(), sweeps.end(), row[sv]) == sweeps.end()) {
            sweeps.push_back(row[sv]);
        }
        if (std::find(ms.begin(), ms.end(), row[mc]) == ms.end()) {
            ms.push_back(row[mc]);
        }
        cells[row[mc]][row[sv]] = row[bc];
    }
    Table out;
    out.header.push_back("m");
    for (const auto& s : sweeps) {
        out.header.push_back("bound_" + s);
    }
    for (const auto& m : ms) {
        std::vector<std::string> r{m};
        for (const auto& s : sweeps) {
            const auto it = cells[m].find(s);
            r.push_back(it == cells[m].end() ? "nan" : it->second);
        }
        out.rows.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw SchemaMismatch("csv: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_string(const Table& t) {
    std::string out;
    append_row(out, t.header);
    for (const auto& r : t.rows) {
        append_row(out, r);
    }
    return out;
}

void write(const std::filesystem::path& path, const Table& t) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    os << to_string(t);
}

Table parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    Table t;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw SchemaMismatch("csv: row width differs from header");
        }
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) {
        throw SchemaMismatch("csv: empty input");
    }
    return t;
}

Table read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

Table plotdata(const Table& t) {
    if (t.rows.empty()) {
        throw SchemaMismatch("plotdata: CSV has no data rows");
    }
    if (has_columns(t, {"sweep_var", "sweep_value", "criterion", "rmse_rad"})) {
        const std::string x_name = t.rows.front()[t.column("sweep_var")];
        return pivot_rmse(t, x_name, t.column("sweep_value"), t.column("criterion"), t.column("rmse_rad"));
    }
    if (has_columns(t, {"T", "criterion", "rmse_log_spectrum"})) {
        return pivot_rmse(t, "T", t.column("T"), t.column("criterion"), t.column("rmse_log_spectrum"));
    }
    if (has_columns(t, {"sweep_value", "m", "mean_bound", "std_bound"})) {
        return pivot_bounds(t);
    }
    throw SchemaMismatch("plotdata: unrecognised CSV header");
}

std::filesystem::path emit_plotdata(const std::filesystem::path& csv_path) {
    const Table pd = plotdata(read(csv_path));
    auto out = csv_path;
    out.replace_filename(csv_path.stem().string() + "_plot.csv");
    write(out, pd);
    return out;
}

}  // namespace mcrb::csv

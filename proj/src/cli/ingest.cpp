#include "fab/cli/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fab::cli {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, Index row, const std::string& column) {
    const std::string s = strip(raw);
    if (s.empty()) {
        throw std::invalid_argument("row " + std::to_string(row) + ", column '" + column + "': missing value");
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw std::invalid_argument("row " + std::to_string(row) + ", column '" + column +
                                    "': not a finite number '" + s + "'");
    }
    return v;
}

struct Row {
    std::vector<double> values;  // y, x..., z...
};

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur += c;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quote in '" + line + "'");
    out.push_back(cur);
    return out;
}

Dataset ingest_csv_text(const std::string& text, const IngestOptions& opt) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty CSV: no header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = strip(h);

    auto find = [&](const std::string& name) -> std::ptrdiff_t {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const auto gcol = find(opt.group_column);
    const auto ycol = find(opt.response_column);
    if (gcol < 0) throw std::invalid_argument("missing required column '" + opt.group_column + "'");
    if (ycol < 0) throw std::invalid_argument("missing required column '" + opt.response_column + "'");
    for (const auto& z : opt.nuisance) {
        if (find(z) < 0) throw std::invalid_argument("missing nuisance column '" + z + "'");
        if (z == opt.group_column || z == opt.response_column)
            throw std::invalid_argument("nuisance column '" + z + "' is the group or response column");
    }

    Dataset ds;
    std::vector<std::size_t> xcols, zcols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<std::ptrdiff_t>(c) == gcol || static_cast<std::ptrdiff_t>(c) == ycol) continue;
        if (std::find(opt.nuisance.begin(), opt.nuisance.end(), header[c]) != opt.nuisance.end()) continue;
        xcols.push_back(c);
        ds.focal_columns.push_back(header[c]);
    }
    for (const auto& z : opt.nuisance) {
        zcols.push_back(static_cast<std::size_t>(find(z)));
        ds.nuisance_columns.push_back(z);
    }
    if (xcols.empty()) throw std::invalid_argument("no focal covariate columns");

    std::vector<std::string> order;
    std::map<std::string, std::vector<Row>> rows;
    Index row = 0;
    while (std::getline(in, line)) {
        if (strip(line).empty()) continue;
        ++row;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                                        " cells, found " + std::to_string(cells.size()));
        }
        const std::string g = strip(cells[static_cast<std::size_t>(gcol)]);
        if (g.empty()) throw std::invalid_argument("row " + std::to_string(row) + ", column '" + opt.group_column + "': missing value");
        Row r;
        r.values.push_back(parse_cell(cells[static_cast<std::size_t>(ycol)], row, opt.response_column));
        for (auto c : xcols) r.values.push_back(parse_cell(cells[c], row, header[c]));
        for (auto c : zcols) r.values.push_back(parse_cell(cells[c], row, header[c]));
        auto [it, fresh] = rows.try_emplace(g);
        if (fresh) order.push_back(g);
        it->second.push_back(std::move(r));
    }
    if (row == 0) throw std::invalid_argument("CSV has no data rows");
    ds.rows = row;

    const Index p = static_cast<Index>(xcols.size());
    const Index q = static_cast<Index>(zcols.size());
    for (const auto& g : order) {
        auto& rs = rows[g];
        std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.values < b.values; });
        const Index n = static_cast<Index>(rs.size());
        GroupData gd;
        gd.id = g;
        gd.y.resize(n);
        gd.X.resize(n, p);
        if (q > 0) gd.Z = Matrix(n, q);
        for (Index i = 0; i < n; ++i) {
            const auto& v = rs[static_cast<std::size_t>(i)].values;
            gd.y[i] = v[0];
            for (Index j = 0; j < p; ++j) gd.X(i, j) = v[static_cast<std::size_t>(1 + j)];
            for (Index j = 0; j < q; ++j) (*gd.Z)(i, j) = v[static_cast<std::size_t>(1 + p + j)];
        }
        ds.groups.push_back(std::move(gd));
    }
    return ds;
}

Dataset ingest_csv(const std::string& path, const IngestOptions& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open data file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ingest_csv_text(ss.str(), opt);
}

}  // namespace fab::cli

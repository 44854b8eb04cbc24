#include "volgan/surface.hpp"

#include "volgan/errors.hpp"
#include "volgan/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

namespace volgan::surface {

namespace {

void require_ascending(const std::vector<double>& axis, const char* name) {
    for (std::size_t n = 1; n < axis.size(); ++n) {
        if (!(axis[n] > axis[n - 1])) throw DataError(std::string("surface: ") + name + " axis must ascend strictly");
    }
}

bool nonnegative_kind(Kind k) { return k != Kind::price; }

} // namespace

std::string_view to_string(Kind kind) {
    switch (kind) {
    case Kind::price: return "price";
    case Kind::implied_vol: return "implied_vol";
    case Kind::local_vol: return "local_vol";
    case Kind::total_variance: return "total_variance";
    }
    return "unknown";
}

Kind kind_from_string(std::string_view name) {
    for (Kind k : {Kind::price, Kind::implied_vol, Kind::local_vol, Kind::total_variance}) {
        if (to_string(k) == name) return k;
    }
    throw DataError("surface: unknown kind '" + std::string(name) + "'");
}

Grid::Grid(Kind kind, std::vector<double> strikes, std::vector<double> maturities)
    : kind_(kind), strikes_(std::move(strikes)), maturities_(std::move(maturities)),
      values_(strikes_.size() * maturities_.size(), 0.0),
      states_(values_.size(), CellState::absent) {
    require_ascending(strikes_, "strike");
    require_ascending(maturities_, "maturity");
}

void Grid::set(std::size_t i, std::size_t j, double v, CellState s) {
    values_[i * maturities_.size() + j] = v;
    states_[i * maturities_.size() + j] = s;
}

void Grid::mark(std::size_t i, std::size_t j, CellState s) { states_[i * maturities_.size() + j] = s; }

std::size_t Grid::count(CellState s) const { return static_cast<std::size_t>(std::count(states_.begin(), states_.end(), s)); }

void Grid::validate() const {
    require_ascending(strikes_, "strike");
    require_ascending(maturities_, "maturity");
    for (std::size_t n = 0; n < values_.size(); ++n) {
        if (states_[n] != CellState::valid) continue;
        if (!std::isfinite(values_[n])) throw DataError("surface: non-finite value in a valid cell");
        if (nonnegative_kind(kind_) && values_[n] < 0.0) throw DataError("surface: negative vol/variance");
    }
}

Grid dupire_fdm(const Grid& prices, double rate) {
    if (prices.kind() != Kind::price) throw DataError("dupire: input grid must hold prices");
    const std::size_t ni = prices.n_strikes();
    const std::size_t nj = prices.n_maturities();
    if (ni < 3 || nj < 2) throw ShapeError("dupire: need at least 3 strikes and 2 maturities");

    const auto& k = prices.strikes();
    const auto& t = prices.maturities();
    Grid out(Kind::local_vol, k, t);
    std::size_t stencils = 0;
    std::size_t invalid = 0;
    for (std::size_t i = 1; i + 1 < ni; ++i) {
        const double h_lo = k[i] - k[i - 1];
        const double h_hi = k[i + 1] - k[i];
        for (std::size_t j = 1; j < nj; ++j) {
            if (!prices.valid(i, j) || !prices.valid(i - 1, j) || !prices.valid(i + 1, j) || !prices.valid(i, j - 1)) {
                continue;
            }
            ++stencils;
            const double v = prices.value(i, j);
            const double dv_dt = (v - prices.value(i, j - 1)) / (t[j] - t[j - 1]);
            const double dv_dk = (v - prices.value(i - 1, j)) / h_lo;
            const double d2v_dk2 =
                2.0 * ((prices.value(i + 1, j) - v) / h_hi - (v - prices.value(i - 1, j)) / h_lo) / (h_lo + h_hi);
            const double num = dv_dt + rate * k[i] * dv_dk;
            const double den = 0.5 * k[i] * k[i] * d2v_dk2;
            if (!(den > 0.0) || !(num >= 0.0)) {
                out.set(i, j, 0.0, CellState::invalid);
                ++invalid;
                continue;
            }
            out.set(i, j, std::sqrt(num / den));
        }
    }
    if (stencils > 0 && 2 * invalid > stencils) {
        throw NumericError("dupire: more than 50% of cells invalid (" + std::to_string(invalid) + "/" +
                           std::to_string(stencils) + ")");
    }
    return out;
}

Grid to_total_variance(const Grid& implied) {
    if (implied.kind() != Kind::implied_vol) throw DataError("to_total_variance: input must be an implied-vol grid");
    Grid out(Kind::total_variance, implied.strikes(), implied.maturities());
    for (std::size_t i = 0; i < implied.n_strikes(); ++i) {
        for (std::size_t j = 0; j < implied.n_maturities(); ++j) {
            const double s = implied.value(i, j);
            out.set(i, j, s * s * implied.maturities()[j], implied.state(i, j));
        }
    }
    return out;
}

Grid from_total_variance(const Grid& total_variance) {
    if (total_variance.kind() != Kind::total_variance) {
        throw DataError("from_total_variance: input must be a total-variance grid");
    }
    Grid out(Kind::implied_vol, total_variance.strikes(), total_variance.maturities());
    for (std::size_t i = 0; i < total_variance.n_strikes(); ++i) {
        for (std::size_t j = 0; j < total_variance.n_maturities(); ++j) {
            out.set(i, j, std::sqrt(total_variance.value(i, j) / total_variance.maturities()[j]),
                    total_variance.state(i, j));
        }
    }
    return out;
}

void write_csv(std::ostream& os, const Grid& grid) {
    os << "kind,T,K,value,valid\n";
    const auto kind = to_string(grid.kind());
    for (std::size_t j = 0; j < grid.n_maturities(); ++j) {
        for (std::size_t i = 0; i < grid.n_strikes(); ++i) {
            os << kind << ',' << io::format_double(grid.maturities()[j]) << ',' << io::format_double(grid.strikes()[i])
               << ',' << io::format_double(grid.value(i, j)) << ',' << (grid.valid(i, j) ? 1 : 0) << '\n';
        }
    }
}

void write_csv(const std::string& path, const Grid& grid) {
    auto os = io::open_output(path);
    write_csv(os, grid);
}

Grid read_csv(std::istream& is) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line) || io::trim(line) != "kind,T,K,value,valid") {
        throw ParseError("surface csv: expected header kind,T,K,value,valid", line_no);
    }
    struct Row {
        double value;
        bool valid;
    };
    std::map<std::pair<double, double>, Row> cells;
    std::set<double> strikes;
    std::set<double> maturities;
    std::string kind_name;
    while (std::getline(is, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const auto fields = io::split(line, ',');
        if (fields.size() != 5) throw ParseError("surface csv: expected 5 fields", line_no);
        if (kind_name.empty()) kind_name = fields[0];
        if (fields[0] != kind_name) throw ParseError("surface csv: mixed kinds", line_no);
        const double t = io::parse_double(fields[1], line_no);
        const double k = io::parse_double(fields[2], line_no);
        const double v = io::parse_double(fields[3], line_no);
        const long flag = io::parse_long(fields[4], line_no);
        if (flag != 0 && flag != 1) throw ParseError("surface csv: valid must be 0 or 1", line_no);
        if (!cells.emplace(std::make_pair(k, t), Row{v, flag == 1}).second) {
            throw ParseError("surface csv: duplicate cell", line_no);
        }
        strikes.insert(k);
        maturities.insert(t);
    }
    if (cells.empty()) throw ParseError("surface csv: no cells", line_no);
    Grid grid(kind_from_string(kind_name), {strikes.begin(), strikes.end()}, {maturities.begin(), maturities.end()});
    for (std::size_t i = 0; i < grid.n_strikes(); ++i) {
        for (std::size_t j = 0; j < grid.n_maturities(); ++j) {
            const auto it = cells.find({grid.strikes()[i], grid.maturities()[j]});
            if (it == cells.end()) continue;
            grid.set(i, j, it->second.value, it->second.valid ? CellState::valid : CellState::invalid);
        }
    }
    return grid;
}

Grid read_csv(const std::string& path) {
    auto is = io::open_input(path);
    return read_csv(is);
}

} // namespace volgan::surface

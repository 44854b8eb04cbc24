#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace volgan::surface {

enum class Kind { price, implied_vol, local_vol, total_variance };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);

/// Per-cell status. Absent cells have no finite-difference stencil; invalid
/// cells had one but produced no admissible value.
enum class CellState : std::uint8_t { valid, absent, invalid };

/// Rectangular (strike x maturity) grid. Values are stored strike-major:
/// value(i, j) sits at strikes[i], maturities[j].
class Grid {
public:
    Grid() = default;
    Grid(Kind kind, std::vector<double> strikes, std::vector<double> maturities);

    Kind kind() const { return kind_; }
    const std::vector<double>& strikes() const { return strikes_; }
    const std::vector<double>& maturities() const { return maturities_; }
    std::size_t n_strikes() const { return strikes_.size(); }
    std::size_t n_maturities() const { return maturities_.size(); }
    std::size_t size() const { return values_.size(); }

    double value(std::size_t i, std::size_t j) const { return values_[i * maturities_.size() + j]; }
    CellState state(std::size_t i, std::size_t j) const { return states_[i * maturities_.size() + j]; }
    bool valid(std::size_t i, std::size_t j) const { return state(i, j) == CellState::valid; }

    void set(std::size_t i, std::size_t j, double v, CellState s = CellState::valid);
    void mark(std::size_t i, std::size_t j, CellState s);

    std::size_t count(CellState s) const;

    /// Throws DataError unless axes ascend strictly, valid values are finite
    /// and vol/variance kinds are non-negative.
    void validate() const;

private:
    Kind kind_ = Kind::price;
    std::vector<double> strikes_;
    std::vector<double> maturities_;
    std::vector<double> values_;
    std::vector<CellState> states_;
};

/// Local volatility from a call-price grid by finite differences: backward
/// differences in T and K, three-point second difference in K.
/// Cells on the first maturity, first strike or last strike are absent;
/// cells with a non-positive second derivative or negative radicand are
/// invalid. Throws NumericError when more than half of the remaining cells
/// are invalid.
Grid dupire_fdm(const Grid& prices, double rate);

/// omega = sigma^2 T per cell.
Grid to_total_variance(const Grid& implied);

/// sigma = sqrt(omega / T) per cell.
Grid from_total_variance(const Grid& total_variance);

/// CSV with header `kind,T,K,value,valid`, one row per cell.
void write_csv(std::ostream& os, const Grid& grid);
void write_csv(const std::string& path, const Grid& grid);
Grid read_csv(std::istream& is);
Grid read_csv(const std::string& path);

} // namespace volgan::surface

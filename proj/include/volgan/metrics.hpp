#pragma once

#include "volgan/surface.hpp"

#include <json.hpp>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace volgan::metrics {

struct ErrorSummary {
    double mae = 0.0;
    double mape = 0.0;
};

/// Mean absolute error and mean absolute percentage error (as a fraction).
/// Throws ShapeError on length mismatch or empty input, DomainError when a
/// truth entry is zero.
ErrorSummary mae_mape(const std::vector<double>& predicted, const std::vector<double>& truth);

struct CellStats {
    double arpe = 0.0; // mean relative price error across parameter sets
    double mrpe = 0.0; // max
    double std = 0.0;  // population std
    std::size_t count = 0;
};

struct RepriceStats {
    std::vector<double> strikes;
    std::vector<double> maturities;
    std::vector<CellStats> cells; // strike-major, like surface::Grid
    double max_arpe = 0.0;
    double std_at_max_arpe = 0.0;
    double mrpe = 0.0;            // global maximum
    std::size_t zero_price_cells = 0;
    std::size_t sets = 0;

    const CellStats& cell(std::size_t i, std::size_t j) const { return cells[i * maturities.size() + j]; }
};

/// Reprices every valid cell with Black-Scholes at the surface's vol and
/// compares with the market grid. Implied-vol surfaces are used directly;
/// a local-vol surface is read as omega = sigma^2 T and converted with
/// sigma_hat = sqrt(omega / T). Cells with a zero market price are skipped
/// and counted. All grids must share the same axes.
RepriceStats reprice_stats(const std::vector<surface::Grid>& vol_surfaces,
                           const std::vector<surface::Grid>& market_prices, const std::vector<double>& rates,
                           double s0 = 1.0);

/// `T,K,arpe,mrpe,std`, one row per cell with at least one sample.
void write_heatmap(std::ostream& os, const RepriceStats& stats);
void write_heatmap(const std::string& path, const RepriceStats& stats);

/// Fixed repricing harness axes: 8 maturities on [0.5, 2] and 11 strikes.
std::vector<double> harness_maturities();
std::vector<double> harness_strikes();
constexpr int kHarnessSets = 50;

void to_json(nlohmann::json& j, const ErrorSummary& e);
void to_json(nlohmann::json& j, const RepriceStats& s);

} // namespace volgan::metrics

#include "volgan/metrics.hpp"

#include "volgan/black_scholes.hpp"
#include "volgan/errors.hpp"
#include "volgan/text_io.hpp"

#include <cmath>
#include <ostream>

namespace volgan::metrics {

ErrorSummary mae_mape(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size()) throw ShapeError("mae_mape: length mismatch");
    if (truth.empty()) throw ShapeError("mae_mape: empty input");
    ErrorSummary e;
    for (std::size_t n = 0; n < truth.size(); ++n) {
        if (truth[n] == 0.0) throw DomainError("mae_mape: MAPE undefined for a zero truth value");
        const double d = std::abs(truth[n] - predicted[n]);
        e.mae += d;
        e.mape += d / std::abs(truth[n]);
    }
    e.mae /= static_cast<double>(truth.size());
    e.mape /= static_cast<double>(truth.size());
    return e;
}

RepriceStats reprice_stats(const std::vector<surface::Grid>& vols, const std::vector<surface::Grid>& prices,
                           const std::vector<double>& rates, double s0) {
    if (vols.empty() || vols.size() != prices.size() || vols.size() != rates.size()) {
        throw ShapeError("reprice_stats: need matching, nonempty surface, price and rate lists");
    }
    RepriceStats st;
    st.strikes = prices.front().strikes();
    st.maturities = prices.front().maturities();
    st.sets = vols.size();
    const std::size_t ni = st.strikes.size();
    const std::size_t nj = st.maturities.size();
    std::vector<double> sum(ni * nj, 0.0);
    std::vector<double> sum_sq(ni * nj, 0.0);
    st.cells.assign(ni * nj, CellStats{});
    for (std::size_t s = 0; s < vols.size(); ++s) {
        const auto& v = vols[s];
        const auto& p = prices[s];
        if (p.kind() != surface::Kind::price) throw DataError("reprice_stats: market grid must hold prices");
        if (v.kind() != surface::Kind::implied_vol && v.kind() != surface::Kind::local_vol) {
            throw DataError("reprice_stats: surface must hold implied or local vols");
        }
        if (v.strikes() != st.strikes || v.maturities() != st.maturities || p.strikes() != st.strikes ||
            p.maturities() != st.maturities) {
            throw ShapeError("reprice_stats: grids are not aligned");
        }
        for (std::size_t i = 0; i < ni; ++i) {
            for (std::size_t j = 0; j < nj; ++j) {
                if (!v.valid(i, j) || !p.valid(i, j)) continue;
                const double t = st.maturities[j];
                const double mkt = p.value(i, j);
                if (mkt == 0.0) {
                    ++st.zero_price_cells;
                    continue;
                }
                double sigma = v.value(i, j);
                if (v.kind() == surface::Kind::local_vol) {
                    const double omega = sigma * sigma * t;
                    sigma = std::sqrt(omega / t);
                }
                const double model = bs::call({s0, st.strikes[i], t, rates[s], sigma});
                const double rel = std::abs(mkt - model) / std::abs(mkt);
                const std::size_t c = i * nj + j;
                auto& cs = st.cells[c];
                sum[c] += rel;
                sum_sq[c] += rel * rel;
                cs.mrpe = std::max(cs.mrpe, rel);
                ++cs.count;
            }
        }
    }
    for (std::size_t c = 0; c < st.cells.size(); ++c) {
        auto& cs = st.cells[c];
        if (cs.count == 0) continue;
        const double n = static_cast<double>(cs.count);
        cs.arpe = sum[c] / n;
        cs.std = std::sqrt(std::max(sum_sq[c] / n - cs.arpe * cs.arpe, 0.0));
        if (cs.arpe > st.max_arpe) {
            st.max_arpe = cs.arpe;
            st.std_at_max_arpe = cs.std;
        }
        st.mrpe = std::max(st.mrpe, cs.mrpe);
    }
    return st;
}

void write_heatmap(std::ostream& os, const RepriceStats& st) {
    os << "T,K,arpe,mrpe,std\n";
    for (std::size_t j = 0; j < st.maturities.size(); ++j) {
        for (std::size_t i = 0; i < st.strikes.size(); ++i) {
            const auto& c = st.cell(i, j);
            if (c.count == 0) continue;
            os << io::format_double(st.maturities[j]) << ',' << io::format_double(st.strikes[i]) << ','
               << io::format_double(c.arpe) << ',' << io::format_double(c.mrpe) << ',' << io::format_double(c.std)
               << '\n';
        }
    }
}

void write_heatmap(const std::string& path, const RepriceStats& st) {
    auto os = io::open_output(path);
    write_heatmap(os, st);
}

std::vector<double> harness_maturities() {
    std::vector<double> t(8);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = 0.5 + 1.5 * static_cast<double>(j) / 7.0;
    return t;
}

std::vector<double> harness_strikes() { return {0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.4, 1.7, 2.0, 2.5}; }

void to_json(nlohmann::json& j, const ErrorSummary& e) { j = {{"mae", e.mae}, {"mape", e.mape}}; }

void to_json(nlohmann::json& j, const RepriceStats& s) {
    j = {{"max_arpe", s.max_arpe},
         {"std_at_max_arpe", s.std_at_max_arpe},
         {"mrpe", s.mrpe},
         {"zero_price_cells", s.zero_price_cells},
         {"sets", s.sets}};
}

} // namespace volgan::metrics

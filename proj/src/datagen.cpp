#include "volgan/datagen.hpp"

#include "volgan/black_scholes.hpp"
#include "volgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace volgan::datagen {

namespace {

constexpr const char* kHeader = "task,param_set,k,sigma_atm,T,r,k_log,sigma_implied,target";

std::mt19937_64 sub_rng(std::uint64_t seed, int set, int attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(set), static_cast<std::uint32_t>(attempt)};
    return std::mt19937_64(seq);
}

double draw(std::mt19937_64& rng, Range r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::vector<double> draw_axis(std::mt19937_64& rng, Range r, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = draw(rng, r);
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw DataError("datagen: repeated grid point; widen the range");
    return v;
}

heston::Params draw_params(std::mt19937_64& rng, const SamplingSpec& s) {
    heston::Params p;
    p.kappa = draw(rng, s.kappa);
    p.rho = draw(rng, s.rho);
    p.gamma = draw(rng, s.gamma);
    p.v_bar = draw(rng, s.v_bar);
    p.v0 = draw(rng, s.v0);
    p.r = draw(rng, s.r);
    p.s0 = 1.0;
    return p;
}

void check_range(Range r, const char* name) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
        throw ConfigError(std::string("sampling spec: bad range for ") + name);
    }
}

Range parse_range(const io::KeyValues& kv, const std::string& key, Range fallback) {
    if (!kv.has(key)) return fallback;
    const auto parts = io::split(kv.get(key, ""), ',');
    if (parts.size() == 1) {
        const double v = io::parse_double(parts[0], 0);
        return {v, v};
    }
    if (parts.size() != 2) throw ConfigError("sampling spec: '" + key + "' needs lo,hi or a single value");
    return {io::parse_double(parts[0], 0), io::parse_double(parts[1], 0)};
}

std::string format_range(Range r) {
    if (r.lo == r.hi) return io::format_double(r.lo);
    return io::format_double(r.lo) + "," + io::format_double(r.hi);
}

} // namespace

std::string to_string(Task t) { return t == Task::implied ? "implied" : "local"; }

Task task_from_string(const std::string& name) {
    if (name == "implied") return Task::implied;
    if (name == "local") return Task::local;
    throw ConfigError("unknown task '" + name + "'");
}

SamplingSpec SamplingSpec::training_ranges() { return {}; }

SamplingSpec SamplingSpec::test_surface() {
    SamplingSpec s;
    s.r = {0.02, 0.02};
    s.kappa = {2.7, 2.7};
    s.rho = {-0.4, -0.4};
    s.gamma = {0.2, 0.2};
    s.v_bar = {0.4, 0.4};
    s.v0 = {0.4, 0.4};
    s.moneyness = {0.3, 2.8};
    s.maturity = {0.3, 2.0};
    s.n_param_sets = 1;
    s.n_maturities = 11;
    s.n_strikes = 157;
    s.seed = 20240612;
    return s;
}

void SamplingSpec::validate() const {
    check_range(r, "r");
    check_range(kappa, "kappa");
    check_range(rho, "rho");
    check_range(gamma, "gamma");
    check_range(v_bar, "v_bar");
    check_range(v0, "v0");
    check_range(moneyness, "moneyness");
    check_range(maturity, "maturity");
    if (n_param_sets < 1 || n_maturities < 1 || n_strikes < 1) throw ConfigError("sampling spec: counts must be >= 1");
    if (!(moneyness.lo > 0.0) || !(maturity.lo > 0.0)) throw ConfigError("sampling spec: moneyness and maturity must be > 0");
    if (!(rho.lo > -1.0 && rho.hi < 1.0)) throw ConfigError("sampling spec: rho must lie in (-1, 1)");
    if (!(v_bar.lo > 0.0) || !(v0.lo > 0.0) || kappa.lo < 0.0 || gamma.lo < 0.0) {
        throw ConfigError("sampling spec: variance parameters out of domain");
    }
    if (!(max_drop_fraction >= 0.0 && max_drop_fraction <= 1.0) || max_attempts < 1) {
        throw ConfigError("sampling spec: bad drop fraction or attempt budget");
    }
    cos.validate();
}

std::vector<std::string> SamplingSpec::config_keys() {
    return {"r",          "kappa",          "rho",          "gamma",     "v_bar",         "v0",
            "moneyness",  "maturity",       "n_param_sets", "n_maturities", "n_strikes", "seed",
            "max_drop_fraction", "max_attempts", "cos_terms", "cos_width"};
}

SamplingSpec SamplingSpec::from_config(const io::KeyValues& kv) {
    kv.require_known(config_keys());
    SamplingSpec s;
    s.r = parse_range(kv, "r", s.r);
    s.kappa = parse_range(kv, "kappa", s.kappa);
    s.rho = parse_range(kv, "rho", s.rho);
    s.gamma = parse_range(kv, "gamma", s.gamma);
    s.v_bar = parse_range(kv, "v_bar", s.v_bar);
    s.v0 = parse_range(kv, "v0", s.v0);
    s.moneyness = parse_range(kv, "moneyness", s.moneyness);
    s.maturity = parse_range(kv, "maturity", s.maturity);
    s.n_param_sets = static_cast<int>(kv.get_long("n_param_sets", s.n_param_sets));
    s.n_maturities = static_cast<int>(kv.get_long("n_maturities", s.n_maturities));
    s.n_strikes = static_cast<int>(kv.get_long("n_strikes", s.n_strikes));
    s.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(s.seed)));
    s.max_drop_fraction = kv.get_double("max_drop_fraction", s.max_drop_fraction);
    s.max_attempts = static_cast<int>(kv.get_long("max_attempts", s.max_attempts));
    s.cos.n_terms = static_cast<int>(kv.get_long("cos_terms", s.cos.n_terms));
    s.cos.trunc_width = kv.get_double("cos_width", s.cos.trunc_width);
    s.validate();
    return s;
}

io::KeyValues SamplingSpec::to_config() const {
    io::KeyValues kv;
    kv.set("r", format_range(r));
    kv.set("kappa", format_range(kappa));
    kv.set("rho", format_range(rho));
    kv.set("gamma", format_range(gamma));
    kv.set("v_bar", format_range(v_bar));
    kv.set("v0", format_range(v0));
    kv.set("moneyness", format_range(moneyness));
    kv.set("maturity", format_range(maturity));
    kv.set("n_param_sets", std::to_string(n_param_sets));
    kv.set("n_maturities", std::to_string(n_maturities));
    kv.set("n_strikes", std::to_string(n_strikes));
    kv.set("seed", std::to_string(seed));
    kv.set("max_drop_fraction", io::format_double(max_drop_fraction));
    kv.set("max_attempts", std::to_string(max_attempts));
    kv.set("cos_terms", std::to_string(cos.n_terms));
    kv.set("cos_width", io::format_double(cos.trunc_width));
    return kv;
}

std::vector<heston::Params> sample_params(const SamplingSpec& spec) {
    spec.validate();
    std::vector<heston::Params> out;
    for (int set = 0; set < spec.n_param_sets; ++set) {
        auto rng = sub_rng(spec.seed, set, 0);
        out.push_back(draw_params(rng, spec));
    }
    return out;
}

ParamSetGrids build_grids(const heston::Params& p, const std::vector<double>& strikes,
                          const std::vector<double>& maturities, Task task, const heston::CosConfig& cos) {
    ParamSetGrids g;
    g.params = p;
    g.prices = surface::Grid(surface::Kind::price, strikes, maturities);
    g.implied = surface::Grid(surface::Kind::implied_vol, strikes, maturities);
    g.atm_vol.assign(maturities.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < maturities.size(); ++j) {
        const double t = maturities[j];
        const auto prices = heston::cos_call_prices(p, strikes, t, cos);
        for (std::size_t i = 0; i < strikes.size(); ++i) {
            g.prices.set(i, j, prices[i]);
            try {
                g.implied.set(i, j, bs::implied_vol(prices[i], p.s0, strikes[i], t, p.r));
            } catch (const Error&) {
                g.implied.set(i, j, 0.0, surface::CellState::invalid);
                ++g.dropped;
            }
        }
        try {
            g.atm_vol[j] = bs::implied_vol(heston::cos_call_price(p, p.s0, t, cos), p.s0, p.s0, t, p.r);
        } catch (const Error&) {
            // Without an ATM vol the whole maturity column is unusable.
            for (std::size_t i = 0; i < strikes.size(); ++i) {
                if (g.implied.valid(i, j)) {
                    g.implied.mark(i, j, surface::CellState::invalid);
                    ++g.dropped;
                }
            }
        }
    }
    if (task == Task::local) g.local = surface::dupire_fdm(g.prices, p.r);
    return g;
}

void append_rows(const ParamSetGrids& g, int param_set, Task task, std::vector<FeatureRow>& rows) {
    const auto& strikes = g.implied.strikes();
    const auto& mats = g.implied.maturities();
    for (std::size_t j = 0; j < mats.size(); ++j) {
        if (!std::isfinite(g.atm_vol[j])) continue;
        for (std::size_t i = 0; i < strikes.size(); ++i) {
            if (!g.implied.valid(i, j)) continue;
            if (task == Task::local && !g.local.valid(i, j)) continue;
            FeatureRow row;
            row.param_set = param_set;
            row.k = strikes[i] / g.params.s0;
            row.sigma_atm = g.atm_vol[j];
            row.T = mats[j];
            row.r = g.params.r;
            row.k_log = std::log(row.k) - row.r * row.T;
            if (task == Task::local) {
                row.sigma_implied = g.implied.value(i, j);
                row.target = g.local.value(i, j);
            } else {
                row.sigma_implied = std::numeric_limits<double>::quiet_NaN();
                row.target = g.implied.value(i, j);
            }
            rows.push_back(row);
        }
    }
}

namespace {

BuildResult build_impl(const SamplingSpec& spec, Task task, const std::vector<double>* fixed_strikes,
                       const std::vector<double>* fixed_maturities) {
    spec.validate();
    BuildResult out;
    out.data.task = task;
    for (int set = 0; set < spec.n_param_sets; ++set) {
        bool accepted = false;
        for (int attempt = 0; attempt < spec.max_attempts && !accepted; ++attempt) {
            auto rng = sub_rng(spec.seed, set, attempt);
            const auto p = draw_params(rng, spec);
            std::vector<double> maturities;
            std::vector<double> strikes;
            if (fixed_strikes != nullptr) {
                maturities = *fixed_maturities;
                strikes = *fixed_strikes;
            } else {
                maturities = draw_axis(rng, spec.maturity, spec.n_maturities);
                strikes = draw_axis(rng, spec.moneyness, spec.n_strikes);
            }
            for (auto& k : strikes) k *= p.s0;
            ParamSetGrids g;
            try {
                g = build_grids(p, strikes, maturities, task, spec.cos);
            } catch (const NumericError&) {
                ++out.rejected_grids; // too many invalid FDM cells
                continue;
            } catch (const ConvergenceError&) {
                ++out.rejected_grids;
                continue;
            }
            const double cells = static_cast<double>(strikes.size() * maturities.size());
            if (static_cast<double>(g.dropped) > spec.max_drop_fraction * cells) {
                ++out.rejected_grids;
                continue;
            }
            g.attempt = attempt;
            append_rows(g, set, task, out.data.rows);
            out.grids.push_back(std::move(g));
            accepted = true;
        }
        if (!accepted) throw DataError("datagen: parameter set " + std::to_string(set) + " rejected on every attempt");
    }
    return out;
}

} // namespace

BuildResult build_dataset(const SamplingSpec& spec, Task task) { return build_impl(spec, task, nullptr, nullptr); }

BuildResult build_on_axes(const SamplingSpec& spec, const std::vector<double>& strikes,
                          const std::vector<double>& maturities, Task task) {
    if (strikes.empty() || maturities.empty()) throw ShapeError("datagen: empty axes");
    return build_impl(spec, task, &strikes, &maturities);
}

void export_dataset(std::ostream& os, const Dataset& ds) {
    os << kHeader << '\n';
    const auto task = to_string(ds.task);
    for (const auto& r : ds.rows) {
        os << task << ',' << r.param_set << ',' << io::format_double(r.k) << ',' << io::format_double(r.sigma_atm) << ','
           << io::format_double(r.T) << ',' << io::format_double(r.r) << ',' << io::format_double(r.k_log) << ',';
        if (ds.task == Task::local) os << io::format_double(r.sigma_implied);
        os << ',' << io::format_double(r.target) << '\n';
    }
}

void export_dataset(const std::string& path, const Dataset& ds) {
    auto os = io::open_output(path);
    export_dataset(os, ds);
    if (!os) throw DataError("dataset: write failed: " + path);
}

Dataset import_dataset(std::istream& is) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line) || io::trim(line) != kHeader) {
        throw ParseError(std::string("dataset csv: expected header ") + kHeader, line_no);
    }
    Dataset ds;
    bool have_task = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const auto f = io::split(line, ',');
        if (f.size() != 9) throw ParseError("dataset csv: expected 9 fields", line_no);
        Task task;
        try {
            task = task_from_string(f[0]);
        } catch (const ConfigError&) {
            throw ParseError("dataset csv: unknown task '" + f[0] + "'", line_no);
        }
        if (!have_task) {
            ds.task = task;
            have_task = true;
        } else if (task != ds.task) {
            throw ParseError("dataset csv: mixed tasks", line_no);
        }
        FeatureRow r;
        r.param_set = static_cast<int>(io::parse_long(f[1], line_no));
        r.k = io::parse_double(f[2], line_no);
        r.sigma_atm = io::parse_double(f[3], line_no);
        r.T = io::parse_double(f[4], line_no);
        r.r = io::parse_double(f[5], line_no);
        r.k_log = io::parse_double(f[6], line_no);
        if (task == Task::local) {
            r.sigma_implied = io::parse_double(f[7], line_no);
        } else {
            if (!f[7].empty()) throw ParseError("dataset csv: sigma_implied must be empty for the implied task", line_no);
            r.sigma_implied = std::numeric_limits<double>::quiet_NaN();
        }
        r.target = io::parse_double(f[8], line_no);
        if (!(r.k > 0.0) || !(r.sigma_atm > 0.0) || !(r.T > 0.0)) {
            throw ParseError("dataset csv: k, sigma_atm and T must be positive", line_no);
        }
        ds.rows.push_back(r);
    }
    return ds;
}

Dataset import_dataset(const std::string& path) {
    auto is = io::open_input(path);
    return import_dataset(is);
}

} // namespace volgan::datagen

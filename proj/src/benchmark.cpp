#include "volgan/benchmark.hpp"

#include "volgan/errors.hpp"
#include "volgan/ssvi.hpp"
#include "volgan/text_io.hpp"

#include <chrono>
#include <ostream>

namespace volgan::benchmark {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Market {
    std::vector<surface::Grid> prices;
    std::vector<double> rates;
};

Market market_of(const datagen::BuildResult& h) {
    Market m;
    for (const auto& g : h.grids) {
        m.prices.push_back(g.prices);
        m.rates.push_back(g.params.r);
    }
    return m;
}

} // namespace

datagen::SamplingSpec harness_spec(std::uint64_t seed) {
    auto spec = datagen::SamplingSpec::training_ranges();
    spec.n_param_sets = metrics::kHarnessSets;
    spec.n_maturities = static_cast<int>(metrics::harness_maturities().size());
    spec.n_strikes = static_cast<int>(metrics::harness_strikes().size());
    spec.seed = seed;
    return spec;
}

datagen::BuildResult build_harness(const datagen::SamplingSpec& spec) {
    return datagen::build_on_axes(spec, metrics::harness_strikes(), metrics::harness_maturities(),
                                  datagen::Task::local);
}

const Row& Result::row(const std::string& method) const {
    for (const auto& r : rows) {
        if (r.method == method) return r;
    }
    throw StateError("benchmark: no row for method '" + method + "'");
}

Config default_config(std::uint64_t seed) {
    Config c;
    c.gan.task = datagen::Task::local;
    c.gan.seed = seed;
    c.baseline = c.gan;
    c.baseline.baseline_mode = true;
    c.baseline.constraints_enabled = false;
    c.baseline.weights.lambda4 = 0.0;
    c.baseline.batchnorm = false;
    return c;
}

metrics::RepriceStats reprice_generator(const nn::Network& gen, const datagen::BuildResult& harness) {
    const auto m = market_of(harness);
    std::vector<surface::Grid> vols;
    for (const auto& g : harness.grids) {
        vols.push_back(gan::generate_surface(gen, datagen::Task::local, gan::context_from_grids(g, datagen::Task::local)));
    }
    return metrics::reprice_stats(vols, m.prices, m.rates);
}

Result run(const datagen::Dataset& train, const datagen::BuildResult& harness, const Config& cfg) {
    if (train.task != datagen::Task::local) throw ConfigError("benchmark: training data must be the local task");
    if (harness.grids.empty()) throw DataError("benchmark: empty harness");
    const auto m = market_of(harness);
    Result out;

    auto trained = [&](const std::string& name, const gan::TrainConfig& tc) {
        const auto res = gan::train(train, tc);
        out.rows.push_back({name, res.report.seconds, reprice_generator(res.generator, harness)});
    };
    if (cfg.run_gan) trained("gan", cfg.gan);

    if (cfg.run_ssvi) {
        const auto t0 = Clock::now();
        std::vector<surface::Grid> vols;
        for (const auto& g : harness.grids) {
            ssvi::FitOptions fo;
            fo.rate = g.params.r;
            const auto fit = ssvi::fit(g.implied, g.params.s0, fo);
            vols.push_back(ssvi::implied_vol_grid(fit.params, g.implied.strikes(), g.implied.maturities(),
                                                  g.params.s0, g.params.r));
        }
        const double secs = seconds_since(t0);
        out.rows.push_back({"ssvi", secs, metrics::reprice_stats(vols, m.prices, m.rates)});
    }

    if (cfg.run_fdm) {
        const auto t0 = Clock::now();
        std::vector<surface::Grid> vols;
        for (const auto& g : harness.grids) vols.push_back(surface::dupire_fdm(g.prices, g.params.r));
        const double secs = seconds_since(t0);
        out.rows.push_back({"fdm", secs, metrics::reprice_stats(vols, m.prices, m.rates)});
    }

    if (cfg.run_baseline) trained("baseline", cfg.baseline);
    return out;
}

void write_table(std::ostream& os, const Result& r) {
    os << "method,train_seconds,max_arpe,std_at_max_arpe,mrpe\n";
    for (const auto& row : r.rows) {
        os << row.method << ',' << io::format_double(row.train_seconds) << ','
           << io::format_double(row.stats.max_arpe) << ',' << io::format_double(row.stats.std_at_max_arpe) << ','
           << io::format_double(row.stats.mrpe) << '\n';
    }
}

void to_json(nlohmann::json& j, const Result& r) {
    j = nlohmann::json::array();
    for (const auto& row : r.rows) {
        j.push_back({{"method", row.method}, {"train_seconds", row.train_seconds}, {"stats", row.stats}});
    }
}

} // namespace volgan::benchmark

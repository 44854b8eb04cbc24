#include "volgan/arbitrage.hpp"
#include "volgan/datagen.hpp"
#include "volgan/errors.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <sstream>

using namespace volgan;
using datagen::Range;
using datagen::SamplingSpec;
using datagen::Task;

namespace {

SamplingSpec tiny(int sets, int mats, int strikes) {
    auto s = SamplingSpec::training_ranges();
    s.n_param_sets = sets;
    s.n_maturities = mats;
    s.n_strikes = strikes;
    return s;
}

} // namespace

TEST_CASE("degenerate ranges give constant parameters") {
    auto s = tiny(5, 2, 2);
    s.kappa = {1.1, 1.1};
    s.rho = {-0.3, -0.3};
    s.gamma = {0.2, 0.2};
    s.v_bar = {0.05, 0.05};
    s.v0 = {0.07, 0.07};
    s.r = {0.01, 0.01};
    for (const auto& p : datagen::sample_params(s)) {
        CHECK(p.kappa == 1.1);
        CHECK(p.rho == -0.3);
        CHECK(p.v0 == 0.07);
        CHECK(p.s0 == 1.0);
    }
}

TEST_CASE("sampled marginals are uniform by decile") {
    auto s = tiny(10000, 1, 1);
    const auto ps = datagen::sample_params(s);
    auto check = [&](auto field, Range r) {
        std::array<int, 10> bins{};
        for (const auto& p : ps) {
            const double u = (field(p) - r.lo) / (r.hi - r.lo);
            REQUIRE(u >= 0.0);
            REQUIRE(u < 1.0);
            ++bins[static_cast<std::size_t>(u * 10.0)];
        }
        for (int b : bins) CHECK(std::abs(b / 10000.0 - 0.1) <= 0.02);
    };
    check([](const heston::Params& p) { return p.kappa; }, s.kappa);
    check([](const heston::Params& p) { return p.rho; }, s.rho);
    check([](const heston::Params& p) { return p.gamma; }, s.gamma);
    check([](const heston::Params& p) { return p.v_bar; }, s.v_bar);
    check([](const heston::Params& p) { return p.v0; }, s.v0);
    check([](const heston::Params& p) { return p.r; }, s.r);
}

TEST_CASE("out-of-training spec holds the fixed values") {
    const auto s = SamplingSpec::test_surface();
    const auto ps = datagen::sample_params(s);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].kappa == 2.7);
    CHECK(ps[0].rho == -0.4);
    CHECK(ps[0].gamma == 0.2);
    CHECK(ps[0].v_bar == 0.4);
    CHECK(ps[0].v0 == 0.4);
    CHECK(ps[0].r == 0.02);
    CHECK(s.n_maturities == 11);
    CHECK(s.n_strikes == 157);
    CHECK(s.moneyness.lo == 0.3);
    CHECK(s.moneyness.hi == 2.8);
    CHECK(s.maturity.lo == 0.3);
    CHECK(s.maturity.hi == 2.0);
}

TEST_CASE("1 x 3 x 4 implied dataset has 12 rows and the k_log identity") {
    const auto res = datagen::build_dataset(tiny(1, 3, 4), Task::implied);
    REQUIRE(res.data.size() == 12);
    for (const auto& row : res.data.rows) {
        CHECK(row.k_log == std::log(row.k) - row.r * row.T);
        CHECK(row.k > 0.0);
        CHECK(row.sigma_atm > 0.0);
        CHECK(std::isnan(row.sigma_implied));
        CHECK(row.target > 0.0);
    }
}

TEST_CASE("flat-vol world gives sqrt(v0) everywhere") {
    auto s = tiny(2, 4, 6);
    s.gamma = {1e-12, 1e-12};
    s.v0 = {0.09, 0.09};
    s.v_bar = {0.09, 0.09};
    const auto res = datagen::build_dataset(s, Task::implied);
    REQUIRE(res.data.size() == 48);
    for (const auto& row : res.data.rows) {
        CHECK(std::abs(row.target - 0.3) < 1e-6);
        CHECK(std::abs(row.sigma_atm - 0.3) < 1e-6);
    }
}

TEST_CASE("local task rows carry implied vol and exclude boundary cells") {
    const auto res = datagen::build_dataset(tiny(2, 6, 8), Task::local);
    REQUIRE(res.grids.size() == 2);
    // Interior stencils only: (8 - 2) strikes x (6 - 1) maturities per set at most.
    CHECK(res.data.size() <= 2 * 6 * 5);
    CHECK(res.data.size() >= 2 * 6 * 5 / 2);
    for (const auto& row : res.data.rows) {
        CHECK(row.sigma_implied > 0.0);
        CHECK(row.target > 0.0);
    }
}

TEST_CASE("generation is reproducible bit-exactly") {
    const auto a = datagen::build_dataset(tiny(2, 5, 7), Task::implied);
    const auto b = datagen::build_dataset(tiny(2, 5, 7), Task::implied);
    std::ostringstream sa;
    std::ostringstream sb;
    datagen::export_dataset(sa, a.data);
    datagen::export_dataset(sb, b.data);
    CHECK(sa.str() == sb.str());
    auto other = tiny(2, 5, 7);
    other.seed += 1;
    std::ostringstream sc;
    datagen::export_dataset(sc, datagen::build_dataset(other, Task::implied).data);
    CHECK(sa.str() != sc.str());
}

TEST_CASE("generated implied-vol grids are free of static arbitrage") {
    const auto res = datagen::build_dataset(tiny(4, 12, 15), Task::implied);
    for (const auto& g : res.grids) {
        const auto rep = arb::audit_surface(g.implied, {1.0, g.params.r, 1e-8});
        CHECK(rep.butterfly_violations == 0);
        CHECK(rep.calendar_violations == 0);
    }
}

TEST_CASE("empty dataset round trip") {
    datagen::Dataset ds;
    std::ostringstream os;
    datagen::export_dataset(os, ds);
    CHECK(os.str() == "task,param_set,k,sigma_atm,T,r,k_log,sigma_implied,target\n");
    std::istringstream is(os.str());
    CHECK(datagen::import_dataset(is).size() == 0);
}

TEST_CASE("random 100-row round trip is value-exact") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.01, 3.0);
    for (Task task : {Task::implied, Task::local}) {
        datagen::Dataset ds;
        ds.task = task;
        for (int n = 0; n < 100; ++n) {
            datagen::FeatureRow r;
            r.param_set = n % 7;
            r.k = u(rng);
            r.sigma_atm = u(rng);
            r.T = u(rng);
            r.r = u(rng) / 60.0;
            r.k_log = std::log(r.k) - r.r * r.T;
            r.sigma_implied = task == Task::local ? u(rng) : std::nan("");
            r.target = u(rng);
            ds.rows.push_back(r);
        }
        std::stringstream ss;
        datagen::export_dataset(ss, ds);
        const auto back = datagen::import_dataset(ss);
        REQUIRE(back.size() == 100);
        CHECK(back.task == task);
        for (std::size_t n = 0; n < 100; ++n) {
            const auto& a = ds.rows[n];
            const auto& b = back.rows[n];
            CHECK(a.k == b.k);
            CHECK(a.sigma_atm == b.sigma_atm);
            CHECK(a.T == b.T);
            CHECK(a.r == b.r);
            CHECK(a.k_log == b.k_log);
            CHECK(a.target == b.target);
            if (task == Task::local) CHECK(a.sigma_implied == b.sigma_implied);
        }
    }
}

TEST_CASE("hand-written fixture parses to known rows") {
    const auto ds = datagen::import_dataset(std::string(VOLGAN_FIXTURE_DIR) + "/dataset_local_3rows.csv");
    REQUIRE(ds.size() == 3);
    CHECK(ds.task == Task::local);
    CHECK(ds.rows[0].k == 0.75);
    CHECK(ds.rows[0].k_log == std::log(0.75) - 0.02 * 0.5);
    CHECK(ds.rows[1].k_log == std::log(1.25) - 0.02 * 0.5);
    CHECK(ds.rows[1].sigma_implied == 0.19);
    CHECK(ds.rows[2].param_set == 2);
    CHECK(ds.rows[2].k_log == -0.06);
    CHECK(ds.rows[2].target == 0.305);
}

TEST_CASE("malformed rows report their line") {
    try {
        datagen::import_dataset(std::string(VOLGAN_FIXTURE_DIR) + "/dataset_bad_row.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream short_row("task,param_set,k,sigma_atm,T,r,k_log,sigma_implied,target\nimplied,0,1\n");
    CHECK_THROWS_AS(datagen::import_dataset(short_row), ParseError);
    std::istringstream bad_header("task,k\n");
    CHECK_THROWS_AS(datagen::import_dataset(bad_header), ParseError);
}

TEST_CASE("spec config round trip and validation") {
    auto s = SamplingSpec::test_surface();
    s.n_strikes = 9;
    const auto back = SamplingSpec::from_config(s.to_config());
    CHECK(back.kappa.lo == 2.7);
    CHECK(back.moneyness.hi == 2.8);
    CHECK(back.n_strikes == 9);
    CHECK(back.seed == s.seed);
    io::KeyValues bad;
    bad.set("kappa", "3,1");
    CHECK_THROWS_AS(SamplingSpec::from_config(bad), ConfigError);
    io::KeyValues unknown;
    unknown.set("kapa", "1");
    CHECK_THROWS_AS(SamplingSpec::from_config(unknown), ConfigError);
}

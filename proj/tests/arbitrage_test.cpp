#include "volgan/arbitrage.hpp"
#include "volgan/black_scholes.hpp"
#include "volgan/errors.hpp"
#include "volgan/heston.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace volgan;

namespace {

// Straight re-derivation of the three penalty means, kept apart from the
// library's probe bookkeeping.
struct Brute {
    double l_c = 0.0;
    double l_bf = 0.0;
    double l_inf = 0.0;
};

Brute brute_penalties(const std::function<double(double, double)>& w, const std::vector<std::pair<double, double>>& pts,
                      double h) {
    Brute b;
    for (const auto& pt : pts) {
        const double k = pt.first;
        const double t = pt.second;
        const double dt = (w(k, t + h) - w(k, t - h)) / (2 * h);
        const double wk = (w(k + h, t) - w(k - h, t)) / (2 * h);
        const double wkk = (w(k + h, t) + w(k - h, t) - 2 * w(k, t)) / (h * h);
        const double w0 = w(k, t);
        const double term1 = std::pow(1 - k * wk / (2 * w0), 2);
        const double term2 = wk / 4 * (1 / w0 + 0.25);
        const double lb = term1 - term2 + wkk / 2;
        b.l_c += std::max(0.0, -dt);
        b.l_bf += std::max(0.0, -lb);
        b.l_inf += std::fabs(wkk);
    }
    const double m = static_cast<double>(pts.size());
    b.l_c /= m;
    b.l_bf /= m;
    b.l_inf /= m;
    return b;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

surface::Grid flat_iv(double sigma, const std::vector<double>& k, const std::vector<double>& t) {
    surface::Grid g(surface::Kind::implied_vol, k, t);
    for (std::size_t i = 0; i < k.size(); ++i) {
        for (std::size_t j = 0; j < t.size(); ++j) g.set(i, j, sigma);
    }
    return g;
}

} // namespace

TEST_CASE("calendar functional") {
    auto linear = [](double, double t) { return 0.04 * t; };
    CHECK(arb::l_cal(linear, 0.3, 1.0) == doctest::Approx(0.04).epsilon(1e-9));
    auto flat = [](double, double) { return 0.07; };
    CHECK(arb::l_cal(flat, 0.3, 1.0) == 0.0);
    auto quad = [](double, double t) { return 0.04 * t * t; };
    CHECK(std::abs(arb::l_cal(quad, 0.0, 1.0) - 0.08) < 1e-10);

    const arb::Domain dom{0.5, 2.0};
    CHECK(arb::calendar_stencil(0.5, 1e-3, dom) == arb::Stencil::forward);
    CHECK(arb::calendar_stencil(2.0, 1e-3, dom) == arb::Stencil::backward);
    CHECK(std::abs(arb::l_cal(quad, 0.0, 0.5, 1e-3, dom) - 0.04) < 1e-4);
    CHECK_THROWS_AS(arb::l_cal(quad, 0.0, 1.0, 0.6, {0.5, 1.5}), DomainError);
}

TEST_CASE("butterfly functional values") {
    for (double level : {1e-3, 0.04, 2.0}) {
        auto flat = [level](double, double) { return level; };
        for (double h : {1e-4, 1e-3, 0.1}) CHECK(arb::l_but(flat, 0.7, 1.0, h) == 1.0);
    }
    auto lin = [](double k, double) { return 0.04 + 0.01 * k; };
    CHECK(arb::l_but(lin, 0.0, 1.0) == doctest::Approx(0.936875).epsilon(1e-6));
    CHECK(std::abs(arb::l_but(lin, 0.0, 1.0) - 0.936875) < 1e-6);
    auto neg = [](double, double) { return -0.01; };
    CHECK_THROWS_AS(arb::l_but(neg, 0.0, 1.0), DomainError);
}

TEST_CASE("penalty terms on simple surfaces") {
    std::vector<std::pair<double, double>> pts;
    for (double k : {-0.5, 0.0, 0.4}) {
        for (double t : {0.5, 1.0, 1.7}) pts.emplace_back(k, t);
    }
    auto flat_vol = [](double, double t) { return 0.09 * t; };
    const auto p = arb::penalty_terms(flat_vol, pts);
    CHECK(std::abs(p.l_c) <= 1e-12);
    CHECK(std::abs(p.l_bf) <= 1e-12);
    CHECK(std::abs(p.l_inf) <= 1e-12);

    auto falling = [](double, double t) { return 0.2 - 0.05 * t; };
    const auto f = arb::penalty_terms(falling, pts);
    CHECK(f.l_c == doctest::Approx(0.05).epsilon(1e-8));
}

TEST_CASE("penalty terms match an independent recomputation") {
    auto quad = [](double k, double t) { return 0.5 + 0.02 * t - 0.1 * k - 1.5 * k * k - 0.01 * t * t + 0.05 * k * t; };
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uk(-0.4, 0.4);
    std::uniform_real_distribution<double> ut(0.5, 2.0);
    std::vector<std::pair<double, double>> pts;
    for (int n = 0; n < 40; ++n) pts.emplace_back(uk(rng), ut(rng));
    const auto ours = arb::penalty_terms(quad, pts);
    const auto ref = brute_penalties(quad, pts, 1e-3);
    CHECK(ours.l_c > 0.0);
    CHECK(ours.l_bf > 0.0);
    CHECK(ours.l_c == doctest::Approx(ref.l_c).epsilon(1e-12));
    // Second differences divide rounding noise by h^2.
    CHECK(ours.l_bf == doctest::Approx(ref.l_bf).epsilon(1e-8));
    CHECK(ours.l_inf == doctest::Approx(ref.l_inf).epsilon(1e-8));

    // Mean semantics: order and duplication leave the values unchanged.
    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto doubled = pts;
    doubled.insert(doubled.end(), pts.begin(), pts.end());
    for (const auto& other : {shuffled, doubled}) {
        const auto q = arb::penalty_terms(quad, other);
        CHECK(q.l_c == doctest::Approx(ours.l_c).epsilon(1e-13));
        CHECK(q.l_bf == doctest::Approx(ours.l_bf).epsilon(1e-13));
        CHECK(q.l_inf == doctest::Approx(ours.l_inf).epsilon(1e-13));
    }
}

TEST_CASE("penalty gradient w.r.t. probe values") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 1e-2;
    std::vector<arb::Probe> probes;
    for (int n = 0; n < 12; ++n) {
        arb::Probe p;
        p.k = 0.5 * u(rng);
        p.maturity = 1.0;
        p.w = 0.05 + 0.01 * u(rng);
        p.w_kp = p.w + 0.002 * u(rng);
        p.w_km = p.w + 0.002 * u(rng);
        p.w_tp = p.w + 0.001 * u(rng);
        p.w_tm = p.w + 0.001 * u(rng);
        p.t_stencil = static_cast<arb::Stencil>(n % 3);
        probes.push_back(p);
    }
    arb::PenaltyGrad g;
    const auto base = arb::penalties_from_probes(probes, h, &g);
    CHECK(base.l_bf > 0.0);
    const double eps = 1e-9;
    for (std::size_t n = 0; n < probes.size(); ++n) {
        for (int s = 0; s < 5; ++s) {
            auto bump = [&](double d) {
                auto q = probes;
                double* slot[] = {&q[n].w, &q[n].w_kp, &q[n].w_km, &q[n].w_tp, &q[n].w_tm};
                *slot[s] += d;
                return arb::penalties_from_probes(q, h);
            };
            const auto up = bump(eps);
            const auto dn = bump(-eps);
            CHECK(g.d_l_c[n][s] == doctest::Approx((up.l_c - dn.l_c) / (2 * eps)).epsilon(1e-5).scale(1.0));
            CHECK(g.d_l_bf[n][s] == doctest::Approx((up.l_bf - dn.l_bf) / (2 * eps)).epsilon(1e-5).scale(1.0));
            CHECK(g.d_l_inf[n][s] == doctest::Approx((up.l_inf - dn.l_inf) / (2 * eps)).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("audit of flat and hand-broken surfaces") {
    const auto k = linspace(0.5, 2.5, 20);
    const auto t = linspace(0.5, 2.0, 8);
    for (double rate : {0.0, 0.03}) {
        const auto rep = arb::audit_surface(flat_iv(0.25, k, t), {1.0, rate, 1e-8});
        CHECK(rep.butterfly_violations == 0);
        CHECK(rep.calendar_violations == 0);
        CHECK(rep.total_cells == 160);
        CHECK(rep.min_l_but == doctest::Approx(1.0));
    }

    // Total variance at strike index 7 falls over three maturity steps.
    auto g = flat_iv(0.25, k, t);
    const double w_col[] = {0.25, 0.2, 0.15, 0.1};
    for (std::size_t j = 0; j < 4; ++j) g.set(7, j + 4, std::sqrt(w_col[j] / t[j + 4]));
    const auto rep = arb::audit_surface(g);
    CHECK(rep.calendar_violations == 3);
    CHECK(rep.min_l_cal < 0.0);
}

TEST_CASE("Heston implied-vol grids are free of violations") {
    std::vector<heston::Params> sets{{2.7, -0.4, 0.2, 0.4, 0.4, 0.02, 1.0},
                                     {1.15, -0.34, 0.44, 0.04, 0.06, 0.006, 1.0},
                                     {2.9, -0.1, 0.01, 0.5, 0.5, 0.0, 1.0},
                                     {1.0, -0.7, 0.4, 0.05, 0.08, 0.03, 1.0}};
    const auto k = linspace(0.5, 2.5, 25);
    const auto t = linspace(0.5, 2.0, 10);
    for (const auto& p : sets) {
        surface::Grid iv(surface::Kind::implied_vol, k, t);
        for (std::size_t i = 0; i < k.size(); ++i) {
            for (std::size_t j = 0; j < t.size(); ++j) {
                const double price = heston::cos_call_price(p, k[i], t[j]);
                try {
                    iv.set(i, j, bs::implied_vol(price, 1.0, k[i], t[j], p.r));
                } catch (const Error&) {
                    iv.mark(i, j, surface::CellState::invalid);
                }
            }
        }
        const auto rep = arb::audit_surface(iv, {1.0, p.r, 1e-8});
        INFO("kappa=" << p.kappa << " rho=" << p.rho << " min_l_but=" << rep.min_l_but << " min_l_cal=" << rep.min_l_cal);
        CHECK(rep.butterfly_violations == 0);
        CHECK(rep.calendar_violations == 0);
    }
}

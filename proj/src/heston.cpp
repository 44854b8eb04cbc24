#include "volgan/heston.hpp"

#include "volgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace volgan::heston {

namespace {

using cplx = std::complex<double>;

// log(1 + q) / q, accurate for small |q|.
cplx log1p_over(cplx q) {
    if (std::abs(q) < 1e-4) {
        return 1.0 - q / 2.0 + q * q / 3.0 - q * q * q / 4.0;
    }
    return std::log(1.0 + q) / q;
}

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

enum class Payoff { call, put };

std::vector<double> cos_prices(const Params& p, const std::vector<double>& strikes, double maturity,
                               const CosConfig& cfg, Payoff payoff) {
    p.validate();
    cfg.validate();
    if (!(maturity > 0.0)) throw DomainError("cos pricing: maturity must be positive");
    for (double strike : strikes) {
        if (!(strike > 0.0)) throw DomainError("cos pricing: strike must be positive");
    }

    const auto [c1, c2] = log_price_cumulants(p, maturity);
    const double half_width = cfg.trunc_width * std::sqrt(std::max(c2, 1e-14));
    const double a = c1 - half_width;
    const double b = c1 + half_width;
    const double width = b - a;

    // The density coefficients do not depend on the strike.
    std::vector<double> cf_re(static_cast<std::size_t>(cfg.n_terms));
    for (int k = 0; k < cfg.n_terms; ++k) {
        const double u = k * std::numbers::pi / width;
        cf_re[static_cast<std::size_t>(k)] = std::exp(log_charfn(p, p.v0, maturity, u) - cplx(0.0, u * a)).real();
    }

    std::vector<double> out;
    out.reserve(strikes.size());
    for (double strike : strikes) {
        const double log_k = std::clamp(std::log(strike), a, b);
        // Payoff support [lo, hi] and sign of the (e^y - K) integrand.
        const double lo = payoff == Payoff::call ? log_k : a;
        const double hi = payoff == Payoff::call ? b : log_k;
        const double sign = payoff == Payoff::call ? 1.0 : -1.0;

        const double e_lo = std::exp(lo);
        const double e_hi = std::exp(hi);
        double sum = 0.0;
        for (int k = 0; k < cfg.n_terms; ++k) {
            const double u = k * std::numbers::pi / width;
            double chi;
            double psi;
            if (k == 0) {
                chi = e_hi - e_lo;
                psi = hi - lo;
            } else {
                const double uh = u * (hi - a);
                const double ul = u * (lo - a);
                chi = (std::cos(uh) * e_hi - std::cos(ul) * e_lo + u * (std::sin(uh) * e_hi - std::sin(ul) * e_lo)) /
                      (1.0 + u * u);
                psi = (std::sin(uh) - std::sin(ul)) / u;
            }
            const double coeff = sign * 2.0 / width * (chi - strike * psi);
            sum += (k == 0 ? 0.5 : 1.0) * cf_re[static_cast<std::size_t>(k)] * coeff;
        }
        const double price = std::exp(-p.r * maturity) * sum;
        if (!std::isfinite(price)) throw NumericError("cos pricing: non-finite price");

        const double discounted_k = strike * std::exp(-p.r * maturity);
        const double lower =
            payoff == Payoff::call ? std::max(p.s0 - discounted_k, 0.0) : std::max(discounted_k - p.s0, 0.0);
        const double upper = payoff == Payoff::call ? p.s0 : discounted_k;
        const double tol = 1e-8 * p.s0;
        if (price < lower - tol || price > upper + tol) {
            std::ostringstream os;
            os << "cos pricing: price " << price << " outside no-arbitrage bounds [" << lower << ", " << upper
               << "]; increase n_terms";
            throw ConvergenceError(os.str());
        }
        out.push_back(std::clamp(price, lower, upper));
    }
    return out;
}

} // namespace

void Params::validate() const {
    if (!(kappa >= 0.0)) throw DomainError("heston: kappa must be >= 0");
    if (!(gamma >= 0.0)) throw DomainError("heston: gamma must be >= 0");
    if (!(v_bar > 0.0)) throw DomainError("heston: v_bar must be > 0");
    if (!(v0 > 0.0)) throw DomainError("heston: v0 must be > 0");
    if (!(rho > -1.0 && rho < 1.0)) throw DomainError("heston: rho must lie in (-1, 1)");
    if (!(s0 > 0.0)) throw DomainError("heston: s0 must be > 0");
    if (!std::isfinite(r)) throw DomainError("heston: r must be finite");
}

void CosConfig::validate() const {
    if (n_terms < 16 || (n_terms & (n_terms - 1)) != 0) {
        throw DomainError("cos: n_terms must be a power of two >= 16");
    }
    if (!(trunc_width > 0.0)) throw DomainError("cos: trunc_width must be > 0");
}

std::complex<double> log_charfn(const Params& p, double v_t, double tau, double psi) {
    if (!(tau >= 0.0)) throw DomainError("heston charfn: tau must be >= 0");
    const cplx i(0.0, 1.0);
    const double g2 = p.gamma * p.gamma;

    const cplx b = p.kappa - p.rho * p.gamma * i * psi;
    const cplx s = i * psi + psi * psi;
    const cplx m = std::sqrt(b * b + g2 * s);
    const cplx bm = b + m;

    // (b - M) / gamma^2 and N^{-1} = (b - M) / (b + M), written without the
    // cancelling difference b - M so that gamma -> 0 stays accurate.
    const cplx coef_b = -s / bm;
    const cplx n_inv = -g2 * s / (bm * bm);
    const cplx decay = std::exp(-m * tau);

    const cplx b_tau = coef_b * (1.0 - decay) / (1.0 - n_inv * decay);
    const cplx q_over_g2 = (-s / (bm * bm)) * (1.0 - decay) / (1.0 - n_inv);
    const cplx q = g2 * q_over_g2;
    const cplx a_tau = p.r * i * psi * tau + p.kappa * p.v_bar * (coef_b * tau - 2.0 * q_over_g2 * log1p_over(q));

    const cplx out = a_tau + b_tau * v_t + i * psi * std::log(p.s0);
    if (!finite(out)) throw NumericError("heston charfn: non-finite intermediate");
    return out;
}

std::complex<double> charfn(const Params& p, double v_t, double tau, double psi) {
    return std::exp(log_charfn(p, v_t, tau, psi));
}

Cumulants log_price_cumulants(const Params& p, double maturity) {
    constexpr double h = 1e-3;
    const cplx up = log_charfn(p, p.v0, maturity, h);
    const cplx dn = log_charfn(p, p.v0, maturity, -h);
    return {(up - dn).imag() / (2.0 * h), -(up + dn).real() / (h * h)};
}

double cos_call_price(const Params& p, double strike, double maturity, const CosConfig& cfg) {
    return cos_prices(p, {strike}, maturity, cfg, Payoff::call).front();
}

std::vector<double> cos_call_prices(const Params& p, const std::vector<double>& strikes, double maturity,
                                    const CosConfig& cfg) {
    return cos_prices(p, strikes, maturity, cfg, Payoff::call);
}

double cos_put_price(const Params& p, double strike, double maturity, const CosConfig& cfg) {
    return cos_prices(p, {strike}, maturity, cfg, Payoff::put).front();
}

} // namespace volgan::heston

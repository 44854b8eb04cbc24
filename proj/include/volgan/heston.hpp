#pragma once

#include <complex>
#include <vector>

namespace volgan::heston {

struct Params {
    double kappa = 0.0;  // mean-reversion rate
    double rho = 0.0;    // spot/variance correlation
    double gamma = 0.0;  // vol of variance
    double v_bar = 0.0;  // long-run variance
    double v0 = 0.0;     // initial variance
    double r = 0.0;      // risk-free rate
    double s0 = 1.0;     // spot

    /// Throws DomainError when any invariant is violated.
    void validate() const;
};

struct CosConfig {
    int n_terms = 512;
    double trunc_width = 12.0;

    void validate() const;
};

/// Exponent A(tau) + B(tau) v_t + i psi ln(s0) of the Heston characteristic
/// function of ln S_T. Evaluated in the rearranged form with e^{-M tau}, which
/// stays on the principal branch of the complex logarithm for all maturities.
std::complex<double> log_charfn(const Params& p, double v_t, double tau, double psi);

/// E[exp(i psi ln S_T)] given variance v_t and time to maturity tau.
std::complex<double> charfn(const Params& p, double v_t, double tau, double psi);

/// First two cumulants of ln S_T, read off the characteristic exponent by
/// central differences at psi = 0.
struct Cumulants {
    double c1;
    double c2;
};
Cumulants log_price_cumulants(const Params& p, double maturity);

/// European call by Fourier-cosine expansion of the log-price density.
double cos_call_price(const Params& p, double strike, double maturity, const CosConfig& cfg = {});

/// Calls for several strikes at one maturity, sharing the characteristic
/// function evaluations. Element-wise identical to cos_call_price.
std::vector<double> cos_call_prices(const Params& p, const std::vector<double>& strikes, double maturity,
                                    const CosConfig& cfg = {});

/// European put from the same expansion with put payoff coefficients.
double cos_put_price(const Params& p, double strike, double maturity, const CosConfig& cfg = {});

} // namespace volgan::heston

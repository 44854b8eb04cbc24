#pragma once

namespace volgan::bs {

struct Quote {
    double s0 = 1.0;
    double strike = 1.0;
    double maturity = 1.0;
    double rate = 0.0;
    double sigma = 0.0;
};

double norm_cdf(double x);

/// Closed-form call value. sigma = 0 gives the discounted intrinsic value.
double call(const Quote& q);

struct ImpliedVolOptions {
    double lo = 1e-6;
    double hi = 5.0;
    double tol = 1e-10;  // absolute price tolerance, scaled by s0
    int max_iter = 200;
};

/// Brent root of call(sigma) - price on [lo, hi].
/// Throws InvalidPriceError outside (intrinsic, s0) and BracketError when the
/// bracket does not contain the root or the iteration budget is exhausted.
double implied_vol(double price, double s0, double strike, double maturity, double rate,
                   const ImpliedVolOptions& opt = {});

} // namespace volgan::bs

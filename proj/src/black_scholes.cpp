#include "volgan/black_scholes.hpp"

#include "volgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace volgan::bs {

namespace {

void check_quote(double s0, double strike, double maturity) {
    if (!(s0 > 0.0) || !(strike > 0.0)) throw DomainError("black-scholes: s0 and strike must be positive");
    if (!(maturity > 0.0)) throw DomainError("black-scholes: maturity must be positive");
}

// Brent's method (bisection / secant / inverse quadratic interpolation).
template <class F>
double brent_root(F&& f, double a, double b, double fa, double fb, double xtol, int max_iter) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double c = b;
    double fc = fb;
    double d = b - a;
    double e = d;
    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol1 = 2.0 * eps * std::abs(b) + 0.5 * xtol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            const double s = fb / fa;
            double p;
            double q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qa = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
            const double min2 = std::abs(e * q);
            if (2.0 * p < std::min(min1, min2)) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol1 ? d : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
    }
    throw BracketError("implied vol: Brent iteration budget exhausted");
}

} // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double call(const Quote& q) {
    check_quote(q.s0, q.strike, q.maturity);
    if (!(q.sigma >= 0.0)) throw DomainError("black-scholes: sigma must be >= 0");
    const double df_k = q.strike * std::exp(-q.rate * q.maturity);
    const double sd = q.sigma * std::sqrt(q.maturity);
    if (sd == 0.0) return std::max(q.s0 - df_k, 0.0);
    if (!std::isfinite(sd)) return q.s0;
    const double d1 = (std::log(q.s0 / df_k) + 0.5 * sd * sd) / sd;
    const double d2 = d1 - sd;
    if (q.s0 > df_k) {
        // In the money: intrinsic plus the out-of-the-money put keeps the time value.
        const double put = df_k * norm_cdf(-d2) - q.s0 * norm_cdf(-d1);
        return (q.s0 - df_k) + std::max(put, 0.0);
    }
    return std::max(q.s0 * norm_cdf(d1) - df_k * norm_cdf(d2), 0.0);
}

double implied_vol(double price, double s0, double strike, double maturity, double rate,
                   const ImpliedVolOptions& opt) {
    check_quote(s0, strike, maturity);
    const double intrinsic = std::max(s0 - strike * std::exp(-rate * maturity), 0.0);
    if (!std::isfinite(price) || price <= intrinsic - 1e-12 * s0 || price >= s0) {
        std::ostringstream os;
        os << "implied vol: price " << price << " outside the no-arbitrage bracket (" << intrinsic << ", " << s0 << ")";
        throw InvalidPriceError(os.str());
    }
    // Rows at or below the intrinsic bound (within 1e-12) are nudged just above it.
    if (price <= intrinsic) price = intrinsic + 1e-12 * s0;

    auto f = [&](double sigma) { return call({s0, strike, maturity, rate, sigma}) - price; };
    const double f_lo = f(opt.lo);
    const double f_hi = f(opt.hi);
    if (f_lo == 0.0) return opt.lo;
    if (f_hi == 0.0) return opt.hi;
    if ((f_lo > 0.0) == (f_hi > 0.0)) {
        std::ostringstream os;
        os << "implied vol: root not bracketed by [" << opt.lo << ", " << opt.hi << "]";
        throw BracketError(os.str());
    }
    // Converge in sigma to machine precision; the price residual is checked after.
    const double sigma = brent_root(f, opt.lo, opt.hi, f_lo, f_hi, 0.0, opt.max_iter);
    if (std::abs(f(sigma)) > opt.tol * s0) {
        std::ostringstream os;
        os << "implied vol: residual " << f(sigma) << " above tolerance";
        throw BracketError(os.str());
    }
    return sigma;
}

} // namespace volgan::bs

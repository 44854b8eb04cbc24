#include "volgan/ssvi.hpp"

#include "volgan/errors.hpp"
#include "volgan/text_io.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace volgan::ssvi {

namespace {

constexpr double kRhoLo = -0.99;
constexpr double kRhoHi = 0.0;
constexpr double kLambdaLo = 1e-3;
constexpr double kLambdaHi = 50.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double to_box(double x, double lo, double hi) { return lo + (hi - lo) * logistic(x); }

double from_box(double y, double lo, double hi) {
    const double u = (y - lo) / (hi - lo);
    return std::log(u / (1.0 - u));
}

struct FitData {
    std::vector<double> k;
    std::vector<double> theta;
    std::vector<double> w;
};

double sse(const FitData& d, double rho, double lambda) {
    double acc = 0.0;
    for (std::size_t n = 0; n < d.k.size(); ++n) {
        const double e = total_variance(d.theta[n], rho, lambda, d.k[n]) - d.w[n];
        acc += e * e;
    }
    return acc;
}

double objective(const gsl_vector* x, void* data) {
    const auto& d = *static_cast<const FitData*>(data);
    return sse(d, to_box(gsl_vector_get(x, 0), kRhoLo, kRhoHi), to_box(gsl_vector_get(x, 1), kLambdaLo, kLambdaHi));
}

std::vector<double> split_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& f : io::split(text, ';')) out.push_back(io::parse_double(f, 0));
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t n = 0; n < v.size(); ++n) {
        if (n) s += ';';
        s += io::format_double(v[n]);
    }
    return s;
}

} // namespace

double ThetaCurve::at(double maturity) const {
    if (!(maturity > 0.0)) throw DomainError("ssvi: maturity must be positive");
    const auto& t = maturities;
    const auto& th = theta;
    if (maturity <= t.front()) return th.front() * maturity / t.front();
    if (t.size() == 1) return th.front();
    const auto hi = std::upper_bound(t.begin(), t.end(), maturity);
    std::size_t j = static_cast<std::size_t>(hi - t.begin());
    if (j == t.size()) j = t.size() - 1;
    const double slope = (th[j] - th[j - 1]) / (t[j] - t[j - 1]);
    return th[j - 1] + slope * (maturity - t[j - 1]);
}

void ThetaCurve::validate() const {
    if (maturities.empty() || maturities.size() != theta.size()) throw DataError("ssvi: theta curve needs matching knots");
    for (std::size_t n = 0; n < maturities.size(); ++n) {
        if (!(maturities[n] > 0.0) || !(theta[n] > 0.0)) throw DomainError("ssvi: theta knots must be positive");
        if (n > 0 && (!(maturities[n] > maturities[n - 1]) || theta[n] < theta[n - 1])) {
            throw DomainError("ssvi: theta must be non-decreasing on ascending maturities");
        }
    }
}

void Params::validate() const {
    if (!(rho > -1.0 && rho < 1.0)) throw DomainError("ssvi: rho must lie in (-1, 1)");
    if (!(lambda > 0.0)) throw DomainError("ssvi: lambda must be positive");
    theta_curve.validate();
}

double heston_like_phi(double theta, double lambda) {
    if (!(theta > 0.0) || !(lambda > 0.0)) throw DomainError("ssvi: phi needs theta > 0 and lambda > 0");
    const double x = lambda * theta;
    if (x < 1e-4) return 0.5 - x / 6.0 + x * x / 24.0;
    return (1.0 - -std::expm1(-x) / x) / x;
}

double total_variance(double theta, double rho, double lambda, double k_log) {
    const double phi = heston_like_phi(theta, lambda);
    const double a = phi * k_log + rho;
    return 0.5 * theta * (1.0 + rho * phi * k_log + std::sqrt(a * a + (1.0 - rho * rho)));
}

double total_variance(const Params& p, double k_log, double maturity) {
    return total_variance(p.theta_curve.at(maturity), p.rho, p.lambda, k_log);
}

double implied_vol(const Params& p, double k_log, double maturity) {
    return std::sqrt(total_variance(p, k_log, maturity) / maturity);
}

FitResult fit(const surface::Grid& iv, double s0, const FitOptions& opt) {
    if (iv.kind() != surface::Kind::implied_vol) throw DataError("ssvi fit: input must be an implied-vol grid");
    if (!(s0 > 0.0)) throw DomainError("ssvi fit: s0 must be positive");
    const auto& strikes = iv.strikes();
    const auto& mats = iv.maturities();

    FitResult out;
    ThetaCurve& curve = out.params.theta_curve;
    FitData data;
    for (std::size_t j = 0; j < mats.size(); ++j) {
        std::size_t best = strikes.size();
        double dist = opt.atm_tolerance;
        for (std::size_t i = 0; i < strikes.size(); ++i) {
            const double d = std::abs(strikes[i] / s0 - 1.0);
            if (iv.valid(i, j) && d <= dist) {
                dist = d;
                best = i;
            }
        }
        if (best == strikes.size()) {
            std::ostringstream os;
            os << "ssvi fit: no valid strike within " << opt.atm_tolerance * 100 << "% of ATM at T=" << mats[j];
            throw DataError(os.str());
        }
        const double sigma = iv.value(best, j);
        double theta = sigma * sigma * mats[j];
        // Running maximum keeps the pinned curve calendar-consistent.
        if (!curve.theta.empty()) theta = std::max(theta, curve.theta.back());
        if (!(theta > 0.0)) throw DataError("ssvi fit: ATM total variance must be positive");
        curve.maturities.push_back(mats[j]);
        curve.theta.push_back(theta);
        for (std::size_t i = 0; i < strikes.size(); ++i) {
            if (!iv.valid(i, j)) continue;
            const double s = iv.value(i, j);
            data.k.push_back(std::log(strikes[i] / s0) - opt.rate * mats[j]);
            data.theta.push_back(theta);
            data.w.push_back(s * s * mats[j]);
        }
    }

    gsl_set_error_handler_off();
    gsl_multimin_function fn{&objective, 2, &data};
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> solver(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2), &gsl_multimin_fminimizer_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(2), &gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(2), &gsl_vector_free);
    gsl_vector_set(x.get(), 0, from_box(-0.5, kRhoLo, kRhoHi));
    gsl_vector_set(x.get(), 1, from_box(1.0, kLambdaLo, kLambdaHi));

    // Restarting from the incumbent with a fresh simplex guards against
    // a collapsed simplex stalling short of the minimum.
    for (int round = 0; round <= opt.restarts; ++round) {
        gsl_vector_set_all(step.get(), 1.0);
        gsl_multimin_fminimizer_set(solver.get(), &fn, x.get(), step.get());
        for (int it = 0; it < opt.max_iter; ++it) {
            ++out.iterations;
            if (gsl_multimin_fminimizer_iterate(solver.get()) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver.get()), 1e-12) == GSL_SUCCESS) break;
        }
        gsl_vector_memcpy(x.get(), gsl_multimin_fminimizer_x(solver.get()));
    }
    out.params.rho = to_box(gsl_vector_get(x.get(), 0), kRhoLo, kRhoHi);
    out.params.lambda = to_box(gsl_vector_get(x.get(), 1), kLambdaLo, kLambdaHi);
    out.sse = sse(data, out.params.rho, out.params.lambda);
    if (!std::isfinite(out.sse)) throw NumericError("ssvi fit: non-finite objective");
    return out;
}

surface::Grid implied_vol_grid(const Params& p, const std::vector<double>& strikes,
                               const std::vector<double>& maturities, double s0, double rate) {
    surface::Grid g(surface::Kind::implied_vol, strikes, maturities);
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        for (std::size_t j = 0; j < maturities.size(); ++j) {
            g.set(i, j, implied_vol(p, std::log(strikes[i] / s0) - rate * maturities[j], maturities[j]));
        }
    }
    return g;
}

void write_params(std::ostream& os, const Params& p) {
    io::KeyValues kv;
    kv.set("rho", io::format_double(p.rho));
    kv.set("lambda", io::format_double(p.lambda));
    kv.set("maturities", join_doubles(p.theta_curve.maturities));
    kv.set("theta", join_doubles(p.theta_curve.theta));
    kv.write(os);
}

void write_params(const std::string& path, const Params& p) {
    auto os = io::open_output(path);
    write_params(os, p);
}

Params read_params(std::istream& is) {
    const auto kv = io::KeyValues::parse(is);
    kv.require_known({"rho", "lambda", "maturities", "theta"});
    for (const char* key : {"rho", "lambda", "maturities", "theta"}) {
        if (!kv.has(key)) throw ConfigError(std::string("ssvi params: missing key '") + key + "'");
    }
    Params p;
    p.rho = kv.get_double("rho", 0.0);
    p.lambda = kv.get_double("lambda", 0.0);
    p.theta_curve.maturities = split_doubles(kv.get("maturities", ""));
    p.theta_curve.theta = split_doubles(kv.get("theta", ""));
    p.validate();
    return p;
}

Params read_params(const std::string& path) {
    auto is = io::open_input(path);
    return read_params(is);
}

} // namespace volgan::ssvi

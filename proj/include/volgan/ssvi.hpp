#pragma once

#include "volgan/surface.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace volgan::ssvi {

/// ATM total variance knots. Between knots theta is linear in T; below the
/// first knot it scales linearly to zero at T = 0; past the last knot the
/// final segment's slope is continued (flat for a single knot).
struct ThetaCurve {
    std::vector<double> maturities;
    std::vector<double> theta;

    double at(double maturity) const;
    void validate() const;
};

struct Params {
    double rho = 0.0;
    double lambda = 1.0;
    ThetaCurve theta_curve;

    void validate() const;
};

/// phi(theta) = (1 - (1 - e^{-lambda theta}) / (lambda theta)) / (lambda theta).
double heston_like_phi(double theta, double lambda);

/// w(k, theta) = theta/2 (1 + rho phi k + sqrt((phi k + rho)^2 + 1 - rho^2)).
double total_variance(double theta, double rho, double lambda, double k_log);
double total_variance(const Params& p, double k_log, double maturity);
double implied_vol(const Params& p, double k_log, double maturity);

struct FitOptions {
    double rate = 0.0;           // k_log = ln(K / s0) - rate * T
    double atm_tolerance = 0.01; // max |K / s0 - 1| for the ATM proxy strike
    int max_iter = 4000;
    int restarts = 3;
};

struct FitResult {
    Params params;
    double sse = 0.0;
    int iterations = 0;
};

/// Pins theta to the ATM column of each maturity and fits (rho, lambda) by
/// Nelder-Mead on the squared total-variance error over valid cells,
/// with rho in (-0.99, 0) and lambda in (1e-3, 50).
FitResult fit(const surface::Grid& iv, double s0, const FitOptions& opt = {});

/// Implied-vol grid of a fitted surface on the given axes.
surface::Grid implied_vol_grid(const Params& p, const std::vector<double>& strikes,
                               const std::vector<double>& maturities, double s0, double rate);

void write_params(std::ostream& os, const Params& p);
void write_params(const std::string& path, const Params& p);
Params read_params(std::istream& is);
Params read_params(const std::string& path);

} // namespace volgan::ssvi

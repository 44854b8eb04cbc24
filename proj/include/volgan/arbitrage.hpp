#pragma once

#include "volgan/surface.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <limits>
#include <vector>

namespace volgan::arb {

struct PenaltyWeights {
    double lambda1 = 1.0;    // calendar
    double lambda2 = 1.0;    // butterfly
    double lambda3 = 1e-4;   // large-moneyness
    double lambda4 = 1e-3;   // adversarial

    void validate(bool constraints_enabled) const;
};

/// Total variance omega(k, T) at log-moneyness k and maturity T.
using Evaluator = std::function<double(double k, double maturity)>;

/// Maturity range the evaluator accepts. T - h below `lo` or T + h above
/// `hi` switches the calendar difference to one side.
struct Domain {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

double l_cal(const Evaluator& omega, double k, double maturity, double h = 1e-3, const Domain& dom = {});
double l_but(const Evaluator& omega, double k, double maturity, double h = 1e-3);

/// (1 - k w'/(2w))^2 - (w'/4)(1/w + 1/4) + w''/2
double butterfly_functional(double k, double w, double dw, double d2w);
/// Partial derivatives of butterfly_functional w.r.t. (w, dw, d2w).
std::array<double, 3> butterfly_functional_grad(double k, double w, double dw, double d2w);

enum class Stencil { central, forward, backward };

/// omega at a point and its four probes (k +- h, T +- h).
struct Probe {
    double k = 0.0;
    double maturity = 0.0;
    double w = 0.0;
    double w_kp = 0.0;
    double w_km = 0.0;
    double w_tp = 0.0;
    double w_tm = 0.0;
    Stencil t_stencil = Stencil::central;
};

struct Penalties {
    double l_c = 0.0;
    double l_bf = 0.0;
    double l_inf = 0.0;
    std::size_t skipped = 0; // points with omega <= 0, left out of L_bf
};

/// Sensitivity of each penalty mean to the five omega values of a probe, in
/// the order (w, w_kp, w_km, w_tp, w_tm).
struct PenaltyGrad {
    std::vector<std::array<double, 5>> d_l_c;
    std::vector<std::array<double, 5>> d_l_bf;
    std::vector<std::array<double, 5>> d_l_inf;
};

Penalties penalties_from_probes(const std::vector<Probe>& probes, double h, PenaltyGrad* grad = nullptr);

Stencil calendar_stencil(double maturity, double h, const Domain& dom);

/// L_c, L_bf, L_inf over the sample points.
Penalties penalty_terms(const Evaluator& omega, const std::vector<std::pair<double, double>>& points,
                        double h = 1e-3, const Domain& dom = {});

struct ArbitrageReport {
    std::size_t butterfly_violations = 0;
    std::size_t calendar_violations = 0;
    std::size_t total_cells = 0;
    double min_l_but = std::numeric_limits<double>::infinity();
    double min_l_cal = std::numeric_limits<double>::infinity();

    ArbitrageReport& operator+=(const ArbitrageReport& other);
};

struct AuditOptions {
    double s0 = 1.0;
    double rate = 0.0;
    double tol = 1e-8;
};

/// Grid-based audit of an implied-vol surface in total variance. The
/// butterfly functional uses three-point differences in forward
/// log-moneyness (one-sided at the first and last strike); the calendar
/// check compares each cell with the previous maturity interpolated to the
/// same log-moneyness.
ArbitrageReport audit_surface(const surface::Grid& iv, const AuditOptions& opt = {});

void to_json(nlohmann::json& j, const ArbitrageReport& r);

} // namespace volgan::arb

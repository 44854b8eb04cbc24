#include "volgan/arbitrage.hpp"

#include "volgan/errors.hpp"

#include <algorithm>
#include <cmath>

namespace volgan::arb {

namespace {

// Derivatives at x of the quadratic through three points.
struct Quad {
    double d1;
    double d2;
};

Quad quad_derivs(const double* x, const double* f, double at) {
    double d1 = 0.0;
    double d2 = 0.0;
    for (int m = 0; m < 3; ++m) {
        const int a = (m + 1) % 3;
        const int b = (m + 2) % 3;
        const double den = (x[m] - x[a]) * (x[m] - x[b]);
        d1 += f[m] * ((at - x[a]) + (at - x[b])) / den;
        d2 += f[m] * 2.0 / den;
    }
    return {d1, d2};
}

double json_number(double x) { return std::isfinite(x) ? x : 0.0; }

} // namespace

void PenaltyWeights::validate(bool constraints_enabled) const {
    for (double l : {lambda1, lambda2, lambda3}) {
        if (!std::isfinite(l) || l < 0.0) throw ConfigError("penalty weights must be finite and >= 0");
        if (constraints_enabled && !(l > 0.0)) throw ConfigError("penalty weights must be > 0 with constraints enabled");
    }
    if (!(lambda4 >= 0.0 && lambda4 <= 1.0)) throw ConfigError("lambda4 must lie in [0, 1]");
}

Stencil calendar_stencil(double maturity, double h, const Domain& dom) {
    const bool lo_out = maturity - h < dom.lo;
    const bool hi_out = maturity + h > dom.hi;
    if (lo_out && hi_out) throw DomainError("l_cal: both maturity probes fall outside the domain");
    if (lo_out) return Stencil::forward;
    if (hi_out) return Stencil::backward;
    return Stencil::central;
}

double l_cal(const Evaluator& omega, double k, double maturity, double h, const Domain& dom) {
    switch (calendar_stencil(maturity, h, dom)) {
    case Stencil::forward: return (omega(k, maturity + h) - omega(k, maturity)) / h;
    case Stencil::backward: return (omega(k, maturity) - omega(k, maturity - h)) / h;
    case Stencil::central: break;
    }
    return (omega(k, maturity + h) - omega(k, maturity - h)) / (2.0 * h);
}

double butterfly_functional(double k, double w, double dw, double d2w) {
    const double a = 1.0 - k * dw / (2.0 * w);
    return a * a - 0.25 * dw * (1.0 / w + 0.25) + 0.5 * d2w;
}

std::array<double, 3> butterfly_functional_grad(double k, double w, double dw, double d2w) {
    (void)d2w;
    const double a = 1.0 - k * dw / (2.0 * w);
    const double d_w = 2.0 * a * (k * dw / (2.0 * w * w)) + 0.25 * dw / (w * w);
    const double d_dw = 2.0 * a * (-k / (2.0 * w)) - 0.25 * (1.0 / w + 0.25);
    return {d_w, d_dw, 0.5};
}

double l_but(const Evaluator& omega, double k, double maturity, double h) {
    const double w = omega(k, maturity);
    if (!(w > 0.0)) throw DomainError("l_but: total variance must be positive");
    const double wp = omega(k + h, maturity);
    const double wm = omega(k - h, maturity);
    return butterfly_functional(k, w, (wp - wm) / (2.0 * h), (wp - 2.0 * w + wm) / (h * h));
}

Penalties penalties_from_probes(const std::vector<Probe>& probes, double h, PenaltyGrad* grad) {
    if (probes.empty()) throw ShapeError("penalties: need at least one sample point");
    const double inv_m = 1.0 / static_cast<double>(probes.size());
    Penalties out;
    if (grad) {
        grad->d_l_c.assign(probes.size(), {});
        grad->d_l_bf.assign(probes.size(), {});
        grad->d_l_inf.assign(probes.size(), {});
    }
    for (std::size_t n = 0; n < probes.size(); ++n) {
        const Probe& p = probes[n];
        // Slots: 0 w, 1 w_kp, 2 w_km, 3 w_tp, 4 w_tm.
        double cal = 0.0;
        std::array<double, 5> d_cal{};
        switch (p.t_stencil) {
        case Stencil::central:
            cal = (p.w_tp - p.w_tm) / (2.0 * h);
            d_cal[3] = 1.0 / (2.0 * h);
            d_cal[4] = -1.0 / (2.0 * h);
            break;
        case Stencil::forward:
            cal = (p.w_tp - p.w) / h;
            d_cal[3] = 1.0 / h;
            d_cal[0] = -1.0 / h;
            break;
        case Stencil::backward:
            cal = (p.w - p.w_tm) / h;
            d_cal[0] = 1.0 / h;
            d_cal[4] = -1.0 / h;
            break;
        }
        if (cal < 0.0) {
            out.l_c -= cal * inv_m;
            if (grad) {
                for (int s = 0; s < 5; ++s) grad->d_l_c[n][s] = -d_cal[s] * inv_m;
            }
        }

        const double dw = (p.w_kp - p.w_km) / (2.0 * h);
        const double d2w = (p.w_kp - 2.0 * p.w + p.w_km) / (h * h);
        const double sign = d2w < 0.0 ? -1.0 : (d2w > 0.0 ? 1.0 : 0.0);
        out.l_inf += std::abs(d2w) * inv_m;
        if (grad) {
            grad->d_l_inf[n][0] = -2.0 * sign / (h * h) * inv_m;
            grad->d_l_inf[n][1] = sign / (h * h) * inv_m;
            grad->d_l_inf[n][2] = sign / (h * h) * inv_m;
        }

        if (!(p.w > 0.0)) {
            ++out.skipped;
            continue;
        }
        const double but = butterfly_functional(p.k, p.w, dw, d2w);
        if (but < 0.0) {
            out.l_bf -= but * inv_m;
            if (grad) {
                const auto g = butterfly_functional_grad(p.k, p.w, dw, d2w);
                // dw = (w_kp - w_km) / 2h, d2w = (w_kp - 2w + w_km) / h^2
                auto& d = grad->d_l_bf[n];
                d[0] = -(g[0] - 2.0 * g[2] / (h * h)) * inv_m;
                d[1] = -(g[1] / (2.0 * h) + g[2] / (h * h)) * inv_m;
                d[2] = -(-g[1] / (2.0 * h) + g[2] / (h * h)) * inv_m;
            }
        }
    }
    return out;
}

Penalties penalty_terms(const Evaluator& omega, const std::vector<std::pair<double, double>>& points, double h,
                        const Domain& dom) {
    std::vector<Probe> probes;
    probes.reserve(points.size());
    for (const auto& [k, t] : points) {
        Probe p;
        p.k = k;
        p.maturity = t;
        p.t_stencil = calendar_stencil(t, h, dom);
        p.w = omega(k, t);
        p.w_kp = omega(k + h, t);
        p.w_km = omega(k - h, t);
        p.w_tp = p.t_stencil == Stencil::backward ? p.w : omega(k, t + h);
        p.w_tm = p.t_stencil == Stencil::forward ? p.w : omega(k, t - h);
        if (!(p.w > 0.0)) throw DomainError("penalty_terms: total variance must be positive");
        probes.push_back(p);
    }
    return penalties_from_probes(probes, h);
}

ArbitrageReport& ArbitrageReport::operator+=(const ArbitrageReport& other) {
    butterfly_violations += other.butterfly_violations;
    calendar_violations += other.calendar_violations;
    total_cells += other.total_cells;
    min_l_but = std::min(min_l_but, other.min_l_but);
    min_l_cal = std::min(min_l_cal, other.min_l_cal);
    return *this;
}

ArbitrageReport audit_surface(const surface::Grid& iv, const AuditOptions& opt) {
    if (iv.kind() != surface::Kind::implied_vol) throw DataError("audit: input must be an implied-vol grid");
    const std::size_t ni = iv.n_strikes();
    const std::size_t nj = iv.n_maturities();
    if (ni < 3 || nj < 2) throw ShapeError("audit: need at least 3 strikes and 2 maturities");
    const auto w = surface::to_total_variance(iv);
    const auto& t = iv.maturities();

    auto x_at = [&](std::size_t i, std::size_t j) { return std::log(iv.strikes()[i] / opt.s0) - opt.rate * t[j]; };

    ArbitrageReport rep;
    for (std::size_t j = 0; j < nj; ++j) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ni; ++i) {
            if (w.valid(i, j)) idx.push_back(i);
        }
        rep.total_cells += idx.size();
        if (idx.size() >= 3) {
            for (std::size_t n = 0; n < idx.size(); ++n) {
                const std::size_t c = std::clamp<std::size_t>(n, 1, idx.size() - 2);
                const double xs[3] = {x_at(idx[c - 1], j), x_at(idx[c], j), x_at(idx[c + 1], j)};
                const double fs[3] = {w.value(idx[c - 1], j), w.value(idx[c], j), w.value(idx[c + 1], j)};
                const double x = x_at(idx[n], j);
                const double wv = w.value(idx[n], j);
                const auto d = quad_derivs(xs, fs, x);
                const double but = wv > 0.0 ? butterfly_functional(x, wv, d.d1, d.d2) : -1.0;
                rep.min_l_but = std::min(rep.min_l_but, but);
                if (but < -opt.tol) ++rep.butterfly_violations;
            }
        }
        if (j == 0) continue;
        // Previous maturity column as a piecewise-linear function of x.
        std::vector<double> px;
        std::vector<double> pw;
        for (std::size_t i = 0; i < ni; ++i) {
            if (!w.valid(i, j - 1)) continue;
            px.push_back(x_at(i, j - 1));
            pw.push_back(w.value(i, j - 1));
        }
        for (std::size_t i : idx) {
            double prev;
            const double x = x_at(i, j);
            if (px.size() >= 2 && x >= px.front() && x <= px.back()) {
                const auto hi = std::upper_bound(px.begin(), px.end(), x);
                std::size_t b = static_cast<std::size_t>(hi - px.begin());
                if (b == px.size()) b = px.size() - 1;
                const double u = (x - px[b - 1]) / (px[b] - px[b - 1]);
                prev = pw[b - 1] + u * (pw[b] - pw[b - 1]);
            } else if (w.valid(i, j - 1)) {
                prev = w.value(i, j - 1);
            } else {
                continue;
            }
            const double diff = w.value(i, j) - prev;
            rep.min_l_cal = std::min(rep.min_l_cal, diff / (t[j] - t[j - 1]));
            if (diff < -opt.tol) ++rep.calendar_violations;
        }
    }
    return rep;
}

void to_json(nlohmann::json& j, const ArbitrageReport& r) {
    j = nlohmann::json{{"butterfly_violations", r.butterfly_violations},
                       {"calendar_violations", r.calendar_violations},
                       {"total_cells", r.total_cells},
                       {"min_l_but", json_number(r.min_l_but)},
                       {"min_l_cal", json_number(r.min_l_cal)}};
}

} // namespace volgan::arb

#include "volgan/gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace volgan::gan {

namespace {

constexpr double kClamp = 1e-7;
constexpr double kStdFloor = 1e-6;

// Independent streams for init, split, shuffling and noise.
std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
    Matrix out(static_cast<long>(to - from), m.cols());
    for (std::size_t n = from; n < to; ++n) out.row(static_cast<long>(n - from)) = m.row(static_cast<long>(idx[n]));
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

double clamp_prob(double p) { return std::clamp(p, kClamp, 1.0 - kClamp); }

bool inside_clamp(double p) { return p > kClamp && p < 1.0 - kClamp; }

void add_into(nn::Gradients& acc, const nn::Gradients& g) {
    for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += g[n];
}

bool finite(const GeneratorLoss& l) {
    return std::isfinite(l.total) && std::isfinite(l.mse) && std::isfinite(l.l_c) && std::isfinite(l.l_bf) &&
           std::isfinite(l.l_inf) && std::isfinite(l.l_dg);
}

std::vector<double> column(const Matrix& m, long c) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (long r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
    return v;
}

} // namespace

Columns columns(Task task) {
    if (task == Task::implied) return {};
    return {0, 1, 2, 3, 4, 5, 6};
}

Matrix feature_matrix(const std::vector<FeatureRow>& rows, Task task) {
    const auto c = columns(task);
    Matrix x(static_cast<long>(rows.size()), c.dim);
    for (std::size_t n = 0; n < rows.size(); ++n) {
        const auto r = static_cast<long>(n);
        x(r, c.k) = rows[n].k;
        x(r, c.sigma_atm) = rows[n].sigma_atm;
        x(r, c.T) = rows[n].T;
        x(r, c.r) = rows[n].r;
        x(r, c.k_log) = rows[n].k_log;
        if (c.sigma_implied >= 0) x(r, c.sigma_implied) = rows[n].sigma_implied;
    }
    return x;
}

Matrix target_vector(const std::vector<FeatureRow>& rows) {
    Matrix y(static_cast<long>(rows.size()), 1);
    for (std::size_t n = 0; n < rows.size(); ++n) y(static_cast<long>(n), 0) = rows[n].target;
    return y;
}

FeatureStats feature_stats(const Matrix& x) {
    if (x.rows() < 1) throw ShapeError("feature_stats: empty matrix");
    FeatureStats s;
    s.mean = x.colwise().mean();
    s.std = Matrix::Constant(1, x.cols(), kStdFloor);
    if (x.rows() > 1) {
        for (long c = 0; c < x.cols(); ++c) {
            const double var = (x.col(c).array() - s.mean(0, c)).square().sum() / static_cast<double>(x.rows() - 1);
            s.std(0, c) = std::max(std::sqrt(var), kStdFloor);
        }
    }
    return s;
}

Matrix make_noise_batch(const FeatureStats& stats, long rows, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix z(rows, stats.mean.cols());
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < z.cols(); ++c) z(r, c) = stats.mean(0, c) + std::max(stats.std(0, c), kStdFloor) * n(rng);
    }
    return z;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (generator_depth != 1 && generator_depth != 2) throw ConfigError("generator_depth must be 1 or 2");
    if (hidden_width < 1 || baseline_width < 1 || baseline_depth < 1) throw ConfigError("layer widths must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(probe_h > 0.0) || !std::isfinite(probe_h)) throw ConfigError("probe_h must be > 0");
    if (!(softplus_beta > 0.0)) throw ConfigError("softplus_beta must be > 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    for (const auto& a : {adam_g, adam_d}) {
        if (!(a.lr > 0.0) || !(a.beta1 >= 0.0 && a.beta1 < 1.0) || !(a.beta2 >= 0.0 && a.beta2 < 1.0) || !(a.eps > 0.0)) {
            throw ConfigError("bad Adam hyper-parameters");
        }
    }
    weights.validate(constraints_enabled);
}

std::vector<std::string> TrainConfig::config_keys() {
    return {"task",           "generator_depth", "hidden_width",      "epochs",         "batch_size",
            "lambda1",        "lambda2",         "lambda3",           "lambda4",        "seed",
            "probe_h",        "lr_g",            "lr_d",              "adam_beta1",     "adam_beta2",
            "adam_eps",       "softplus_beta",   "batchnorm",         "constraints_enabled", "mse_enabled",
            "baseline_mode",  "baseline_depth",  "baseline_width",    "baseline_activation", "d_epochs_first",
            "validation_fraction"};
}

TrainConfig TrainConfig::from_config(const io::KeyValues& kv) {
    kv.require_known(config_keys());
    TrainConfig c;
    c.task = datagen::task_from_string(kv.get("task", "implied"));
    c.generator_depth = static_cast<int>(kv.get_long("generator_depth", c.generator_depth));
    c.hidden_width = static_cast<int>(kv.get_long("hidden_width", c.hidden_width));
    c.epochs = static_cast<int>(kv.get_long("epochs", c.epochs));
    c.batch_size = static_cast<int>(kv.get_long("batch_size", c.batch_size));
    c.weights.lambda1 = kv.get_double("lambda1", c.weights.lambda1);
    c.weights.lambda2 = kv.get_double("lambda2", c.weights.lambda2);
    c.weights.lambda3 = kv.get_double("lambda3", c.weights.lambda3);
    c.weights.lambda4 = kv.get_double("lambda4", c.weights.lambda4);
    c.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(c.seed)));
    c.probe_h = kv.get_double("probe_h", c.probe_h);
    c.adam_g.lr = kv.get_double("lr_g", c.adam_g.lr);
    c.adam_d.lr = kv.get_double("lr_d", c.adam_d.lr);
    c.adam_g.beta1 = c.adam_d.beta1 = kv.get_double("adam_beta1", c.adam_g.beta1);
    c.adam_g.beta2 = c.adam_d.beta2 = kv.get_double("adam_beta2", c.adam_g.beta2);
    c.adam_g.eps = c.adam_d.eps = kv.get_double("adam_eps", c.adam_g.eps);
    c.softplus_beta = kv.get_double("softplus_beta", c.softplus_beta);
    c.batchnorm = kv.get_bool("batchnorm", c.batchnorm);
    c.constraints_enabled = kv.get_bool("constraints_enabled", c.constraints_enabled);
    c.mse_enabled = kv.get_bool("mse_enabled", c.mse_enabled);
    c.baseline_mode = kv.get_bool("baseline_mode", c.baseline_mode);
    c.baseline_depth = static_cast<int>(kv.get_long("baseline_depth", c.baseline_depth));
    c.baseline_width = static_cast<int>(kv.get_long("baseline_width", c.baseline_width));
    c.baseline_activation = nn::activation_from_string(kv.get("baseline_activation", "relu"));
    c.d_epochs_first = kv.get_bool("d_epochs_first", c.d_epochs_first);
    c.validation_fraction = kv.get_double("validation_fraction", c.validation_fraction);
    c.validate();
    return c;
}

io::KeyValues TrainConfig::to_config() const {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    io::KeyValues kv;
    kv.set("task", datagen::to_string(task));
    kv.set("generator_depth", std::to_string(generator_depth));
    kv.set("hidden_width", std::to_string(hidden_width));
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lambda1", io::format_double(weights.lambda1));
    kv.set("lambda2", io::format_double(weights.lambda2));
    kv.set("lambda3", io::format_double(weights.lambda3));
    kv.set("lambda4", io::format_double(weights.lambda4));
    kv.set("seed", std::to_string(seed));
    kv.set("probe_h", io::format_double(probe_h));
    kv.set("lr_g", io::format_double(adam_g.lr));
    kv.set("lr_d", io::format_double(adam_d.lr));
    kv.set("adam_beta1", io::format_double(adam_g.beta1));
    kv.set("adam_beta2", io::format_double(adam_g.beta2));
    kv.set("adam_eps", io::format_double(adam_g.eps));
    kv.set("softplus_beta", io::format_double(softplus_beta));
    kv.set("batchnorm", b(batchnorm));
    kv.set("constraints_enabled", b(constraints_enabled));
    kv.set("mse_enabled", b(mse_enabled));
    kv.set("baseline_mode", b(baseline_mode));
    kv.set("baseline_depth", std::to_string(baseline_depth));
    kv.set("baseline_width", std::to_string(baseline_width));
    kv.set("baseline_activation", nn::to_string(baseline_activation));
    kv.set("d_epochs_first", b(d_epochs_first));
    kv.set("validation_fraction", io::format_double(validation_fraction));
    return kv;
}

nn::Network make_generator(const TrainConfig& cfg, int input_dim, std::uint64_t seed) {
    std::vector<nn::LayerSpec> specs;
    if (cfg.baseline_mode) {
        for (int l = 0; l < cfg.baseline_depth; ++l) specs.push_back({cfg.baseline_width, false, cfg.baseline_activation});
    } else {
        for (int l = 0; l < cfg.generator_depth; ++l) specs.push_back({cfg.hidden_width, cfg.batchnorm, nn::Activation::softplus});
    }
    specs.push_back({1, false, nn::Activation::softplus});
    return nn::Network::make(input_dim, specs, seed, cfg.softplus_beta);
}

nn::Network make_discriminator(const TrainConfig& cfg, int input_dim, std::uint64_t seed) {
    return nn::Network::make(input_dim,
                             {{cfg.hidden_width, cfg.batchnorm, nn::Activation::softplus}, {1, false, nn::Activation::sigmoid}},
                             seed, cfg.softplus_beta);
}

// ---------------------------------------------------------------- losses

GeneratorLoss generator_loss(nn::Network& gen, const nn::Network* disc, const Matrix& x, const Matrix& y,
                             const Matrix& noise, Task task, const LossOptions& opt) {
    const auto col = columns(task);
    const long b = x.rows();
    if (b < 2) throw ShapeError("generator_loss: batch needs at least 2 rows");
    if (x.cols() != col.dim || y.rows() != b || y.cols() != 1) throw ShapeError("generator_loss: batch shape mismatch");
    if (gen.input_dim() != col.dim) throw ShapeError("generator_loss: generator input width does not match the task");
    const bool adversarial = opt.adversarial && opt.weights.lambda4 > 0.0;
    if (adversarial && disc == nullptr) throw StateError("generator_loss: adversarial term needs a discriminator");

    GeneratorLoss out;
    const double h = opt.h;

    // Base rows, then x+h, x-h, T+h, T-h probe blocks.
    const int blocks = opt.constraints ? 5 : 1;
    Matrix stacked(b * blocks, col.dim);
    stacked.topRows(b) = x;
    if (opt.constraints) {
        for (int blk = 1; blk < 5; ++blk) {
            auto rows = stacked.middleRows(blk * b, b);
            rows = x;
            for (long r = 0; r < b; ++r) {
                const double rate = x(r, col.r);
                double xl = x(r, col.k_log);
                double t = x(r, col.T);
                if (blk == 1) xl += h;
                if (blk == 2) xl -= h;
                if (blk == 3) t += h;
                if (blk == 4) t -= h;
                rows(r, col.k_log) = xl;
                rows(r, col.T) = t;
                rows(r, col.k) = std::exp(xl + rate * t);
            }
        }
    }

    nn::Cache cache;
    const Matrix g = opt.update_running ? gen.forward_train(stacked, cache, true)
                                        : static_cast<const nn::Network&>(gen).forward_train(stacked, cache);
    Matrix d_out = Matrix::Zero(g.rows(), 1);

    const Matrix resid = g.topRows(b) - y;
    out.mse = resid.squaredNorm() / static_cast<double>(b);
    if (opt.mse) d_out.topRows(b) += 2.0 * resid / static_cast<double>(b);

    if (opt.constraints) {
        std::vector<arb::Probe> probes(static_cast<std::size_t>(b));
        auto omega = [&](int blk, long r) {
            const double gv = g(blk * b + r, 0);
            return gv * gv * stacked(blk * b + r, col.T);
        };
        for (long r = 0; r < b; ++r) {
            auto& p = probes[static_cast<std::size_t>(r)];
            p.k = x(r, col.k_log);
            p.maturity = x(r, col.T);
            p.w = omega(0, r);
            p.w_kp = omega(1, r);
            p.w_km = omega(2, r);
            p.w_tp = omega(3, r);
            p.w_tm = omega(4, r);
            p.t_stencil = arb::calendar_stencil(p.maturity, h, arb::Domain{});
        }
        arb::PenaltyGrad pg;
        const auto pen = arb::penalties_from_probes(probes, h, &pg);
        out.l_c = pen.l_c;
        out.l_bf = pen.l_bf;
        out.l_inf = pen.l_inf;
        out.skipped = pen.skipped;
        const auto& w = opt.weights;
        for (long r = 0; r < b; ++r) {
            const auto n = static_cast<std::size_t>(r);
            for (int slot = 0; slot < 5; ++slot) {
                const double d_omega =
                    w.lambda1 * pg.d_l_c[n][slot] + w.lambda2 * pg.d_l_bf[n][slot] + w.lambda3 * pg.d_l_inf[n][slot];
                if (d_omega == 0.0) continue;
                const long row = slot * b + r;
                d_out(row, 0) += d_omega * 2.0 * g(row, 0) * stacked(row, col.T);
            }
        }
    }
    out.grads = gen.backward(cache, d_out);

    if (adversarial) {
        if (noise.rows() < 2 || noise.cols() != col.dim) throw ShapeError("generator_loss: noise batch shape mismatch");
        nn::Cache gc;
        const Matrix gz = static_cast<const nn::Network&>(gen).forward_train(noise, gc);
        nn::Cache dc;
        const Matrix p = disc->forward_train(hcat(noise, gz), dc);
        const double nb = static_cast<double>(noise.rows());
        Matrix d_p(p.rows(), 1);
        for (long r = 0; r < p.rows(); ++r) {
            out.l_dg -= std::log(clamp_prob(p(r, 0))) / nb;
            d_p(r, 0) = inside_clamp(p(r, 0)) ? -opt.weights.lambda4 / (nb * p(r, 0)) : 0.0;
        }
        Matrix d_in;
        disc->backward(dc, d_p, &d_in);
        add_into(out.grads, gen.backward(gc, d_in.rightCols(1)));
    }

    out.total = (opt.mse ? out.mse : 0.0) + opt.weights.lambda1 * out.l_c + opt.weights.lambda2 * out.l_bf +
                opt.weights.lambda3 * out.l_inf + (adversarial ? opt.weights.lambda4 * out.l_dg : 0.0);
    return out;
}

DiscriminatorLoss discriminator_loss(const nn::Network& gen, nn::Network& disc, const Matrix& x, const Matrix& y,
                                     bool update_running) {
    const long b = x.rows();
    if (b < 2 || y.rows() != b || y.cols() != 1) throw ShapeError("discriminator_loss: batch shape mismatch");
    if (disc.input_dim() != x.cols() + 1) throw ShapeError("discriminator_loss: discriminator input width mismatch");
    nn::Cache gc;
    const Matrix fake_y = gen.forward_train(x, gc);

    DiscriminatorLoss out;
    const double nb = static_cast<double>(b);
    auto run = [&](const Matrix& input, bool real) {
        nn::Cache c;
        const Matrix p = update_running ? disc.forward_train(input, c, true)
                                        : static_cast<const nn::Network&>(disc).forward_train(input, c);
        Matrix d_p(b, 1);
        double loss = 0.0;
        for (long r = 0; r < b; ++r) {
            const double q = p(r, 0);
            if (real) {
                loss -= std::log(clamp_prob(q)) / nb;
                d_p(r, 0) = inside_clamp(q) ? -1.0 / (nb * q) : 0.0;
            } else {
                loss -= std::log(1.0 - clamp_prob(q)) / nb;
                d_p(r, 0) = inside_clamp(q) ? 1.0 / (nb * (1.0 - q)) : 0.0;
            }
        }
        auto grads = disc.backward(c, d_p);
        return std::make_pair(loss, grads);
    };
    auto [real_loss, real_grads] = run(hcat(x, y), true);
    auto [fake_loss, fake_grads] = run(hcat(x, fake_y), false);
    out.real = real_loss;
    out.fake = fake_loss;
    out.total = real_loss + fake_loss;
    out.grads = std::move(real_grads);
    add_into(out.grads, fake_grads);
    return out;
}

// ---------------------------------------------------------------- surfaces

double SurfaceContext::atm_vol_at(double t) const {
    if (atm_maturities.empty() || atm_maturities.size() != atm_vols.size()) {
        throw ConfigError("surface context: missing ATM curve");
    }
    if (t <= atm_maturities.front()) return atm_vols.front();
    if (t >= atm_maturities.back()) return atm_vols.back();
    const auto it = std::upper_bound(atm_maturities.begin(), atm_maturities.end(), t);
    const auto j = static_cast<std::size_t>(it - atm_maturities.begin());
    const double w = (t - atm_maturities[j - 1]) / (atm_maturities[j] - atm_maturities[j - 1]);
    return (1.0 - w) * atm_vols[j - 1] + w * atm_vols[j];
}

SurfaceContext context_from_grids(const datagen::ParamSetGrids& g, Task task) {
    SurfaceContext c;
    const double s0 = g.params.s0;
    for (double k : g.implied.strikes()) c.strikes.push_back(k / s0);
    c.maturities = g.implied.maturities();
    c.r = g.params.r;
    for (std::size_t j = 0; j < c.maturities.size(); ++j) {
        if (!std::isfinite(g.atm_vol[j])) continue;
        c.atm_maturities.push_back(c.maturities[j]);
        c.atm_vols.push_back(g.atm_vol[j]);
    }
    if (task == Task::local) {
        c.sigma_implied = surface::Grid(surface::Kind::implied_vol, c.strikes, c.maturities);
        for (std::size_t i = 0; i < c.strikes.size(); ++i) {
            for (std::size_t j = 0; j < c.maturities.size(); ++j) {
                c.sigma_implied.set(i, j, g.implied.value(i, j), g.implied.state(i, j));
            }
        }
    }
    return c;
}

std::vector<SurfaceContext> contexts_from_dataset(const Dataset& ds) {
    std::map<int, std::vector<const FeatureRow*>> sets;
    for (const auto& r : ds.rows) sets[r.param_set].push_back(&r);
    std::vector<SurfaceContext> out;
    for (const auto& [id, rows] : sets) {
        std::set<double> ks;
        std::map<double, double> atm;
        for (const auto* r : rows) {
            ks.insert(r->k);
            atm.emplace(r->T, r->sigma_atm);
        }
        SurfaceContext c;
        c.strikes.assign(ks.begin(), ks.end());
        for (const auto& [t, v] : atm) {
            c.maturities.push_back(t);
            c.atm_maturities.push_back(t);
            c.atm_vols.push_back(v);
        }
        c.r = rows.front()->r;
        if (ds.task == Task::local) {
            c.sigma_implied = surface::Grid(surface::Kind::implied_vol, c.strikes, c.maturities);
            for (const auto* r : rows) {
                const auto i = static_cast<std::size_t>(std::lower_bound(c.strikes.begin(), c.strikes.end(), r->k) -
                                                        c.strikes.begin());
                const auto j = static_cast<std::size_t>(
                    std::lower_bound(c.maturities.begin(), c.maturities.end(), r->T) - c.maturities.begin());
                c.sigma_implied.set(i, j, r->sigma_implied);
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

surface::Grid generate_surface(const nn::Network& gen, Task task, const SurfaceContext& ctx) {
    const auto col = columns(task);
    if (gen.input_dim() != col.dim) throw ShapeError("generate_surface: generator input width does not match the task");
    if (ctx.strikes.empty() || ctx.maturities.empty()) throw ConfigError("generate_surface: empty grid spec");
    const bool local = task == Task::local;
    if (local && (ctx.sigma_implied.strikes() != ctx.strikes || ctx.sigma_implied.maturities() != ctx.maturities)) {
        throw ConfigError("generate_surface: local task needs a sigma_implied surface on the same axes");
    }
    surface::Grid out(local ? surface::Kind::local_vol : surface::Kind::implied_vol, ctx.strikes, ctx.maturities);
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t j = 0; j < ctx.maturities.size(); ++j) {
        for (std::size_t i = 0; i < ctx.strikes.size(); ++i) {
            if (local && !ctx.sigma_implied.valid(i, j)) continue;
            cells.emplace_back(i, j);
        }
    }
    if (cells.empty()) return out;
    Matrix x(static_cast<long>(cells.size()), col.dim);
    for (std::size_t n = 0; n < cells.size(); ++n) {
        const auto [i, j] = cells[n];
        const auto r = static_cast<long>(n);
        const double k = ctx.strikes[i];
        const double t = ctx.maturities[j];
        if (!(k > 0.0)) throw ConfigError("generate_surface: moneyness must be positive");
        x(r, col.k) = k;
        x(r, col.sigma_atm) = ctx.atm_vol_at(t);
        x(r, col.T) = t;
        x(r, col.r) = ctx.r;
        x(r, col.k_log) = std::log(k) - ctx.r * t;
        if (local) x(r, col.sigma_implied) = ctx.sigma_implied.value(i, j);
    }
    const Matrix y = gen.forward(x);
    for (std::size_t n = 0; n < cells.size(); ++n) {
        const double v = y(static_cast<long>(n), 0);
        out.set(cells[n].first, cells[n].second, v,
                std::isfinite(v) ? surface::CellState::valid : surface::CellState::invalid);
    }
    return out;
}

arb::ArbitrageReport audit_generated(const nn::Network& gen, Task task, const SurfaceContext& ctx) {
    const auto g = generate_surface(gen, task, ctx);
    if (g.n_strikes() < 3 || g.n_maturities() < 2) return {};
    surface::Grid iv(surface::Kind::implied_vol, g.strikes(), g.maturities());
    for (std::size_t i = 0; i < g.n_strikes(); ++i) {
        for (std::size_t j = 0; j < g.n_maturities(); ++j) iv.set(i, j, g.value(i, j), g.state(i, j));
    }
    return arb::audit_surface(iv, {1.0, ctx.r, 1e-8});
}

// ---------------------------------------------------------------- training

void to_json(nlohmann::json& j, const TrainReport& r) {
    nlohmann::json cfg;
    const auto kv = r.config.to_config();
    for (const auto& [k, v] : kv.entries()) cfg[k] = v;
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"mse", e.mse},
                          {"l_c", e.l_c},
                          {"l_bf", e.l_bf},
                          {"l_inf", e.l_inf},
                          {"l_dg", e.l_dg},
                          {"l_g", e.l_g},
                          {"l_d", e.l_d},
                          {"skipped", e.skipped},
                          {"batches", e.batches}});
    }
    j = {{"config", cfg},
         {"epochs", epochs},
         {"train_rows", r.train_rows},
         {"validation_rows", r.validation_rows},
         {"train_error", r.train_error},
         {"validation_error", r.validation_error},
         {"audit_train", r.audit_train},
         {"seconds", r.seconds}};
    if (r.has_test) j["audit_test"] = r.audit_test;
    if (!r.abort_reason.empty()) j["abort_reason"] = r.abort_reason;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::vector<SurfaceContext>& test_surfaces) {
    cfg.validate();
    if (data.task != cfg.task) throw ConfigError("train: dataset task does not match the config");
    if (data.rows.empty()) throw DataError("train: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();
    const auto col = columns(cfg.task);

    const Matrix x_all = feature_matrix(data.rows, cfg.task);
    const Matrix y_all = target_vector(data.rows);
    if (!x_all.allFinite() || !y_all.allFinite()) throw DataError("train: non-finite feature or target");
    const std::size_t n = data.rows.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 split_rng(derive_seed(cfg.seed, 3));
    std::shuffle(idx.begin(), idx.end(), split_rng);
    const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n)));
    const std::size_t n_train = n - n_val;
    if (n_train < 2) throw DataError("train: need at least 2 training rows");
    const Matrix x_train = rows_of(x_all, idx, 0, n_train);
    const Matrix y_train = rows_of(y_all, idx, 0, n_train);
    const Matrix x_val = rows_of(x_all, idx, n_train, n);
    const Matrix y_val = rows_of(y_all, idx, n_train, n);

    const auto stats = feature_stats(x_train);
    const auto y_stats = feature_stats(y_train);

    TrainResult res;
    res.report.config = cfg;
    res.report.train_rows = n_train;
    res.report.validation_rows = n_val;
    res.generator = make_generator(cfg, col.dim, derive_seed(cfg.seed, 1));
    res.generator.set_input_standardization(stats.mean, stats.std);
    const bool adversarial = !cfg.baseline_mode;
    if (adversarial) {
        res.discriminator = make_discriminator(cfg, col.dim + 1, derive_seed(cfg.seed, 2));
        res.discriminator.set_input_standardization(hcat(stats.mean, y_stats.mean), hcat(stats.std, y_stats.std));
    }
    auto& gen = res.generator;
    auto& disc = res.discriminator;
    nn::Adam adam_g(cfg.adam_g);
    nn::Adam adam_d(cfg.adam_d);

    LossOptions opt;
    opt.weights = cfg.weights;
    opt.h = cfg.probe_h;
    opt.mse = cfg.mse_enabled;
    opt.constraints = cfg.constraints_enabled;
    opt.adversarial = adversarial;

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 4));
    std::mt19937_64 noise_rng(derive_seed(cfg.seed, 5));
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    auto abort = [&](const std::string& why) {
        res.report.abort_reason = why;
        res.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw TrainingAborted("train: " + why, res.report);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::vector<std::pair<std::size_t, std::size_t>> batches;
        for (std::size_t from = 0; from < n_train; from += bs) {
            const std::size_t to = std::min(from + bs, n_train);
            if (to - from >= 2) batches.emplace_back(from, to);
        }
        EpochLosses el;
        el.epoch = epoch + 1;
        el.batches = batches.size();

        auto d_step = [&](std::size_t bi) {
            const auto [from, to] = batches[bi];
            const auto dl = discriminator_loss(gen, disc, rows_of(x_train, order, from, to),
                                               rows_of(y_train, order, from, to), true);
            if (!std::isfinite(dl.total)) {
                std::ostringstream os;
                os << "non-finite discriminator loss at epoch " << el.epoch << ", batch " << bi;
                abort(os.str());
            }
            adam_d.step(disc, dl.grads);
            el.l_d += dl.total / static_cast<double>(batches.size());
        };
        auto g_step = [&](std::size_t bi) {
            const auto [from, to] = batches[bi];
            const Matrix noise = adversarial ? make_noise_batch(stats, static_cast<long>(to - from), noise_rng) : Matrix();
            const auto gl = generator_loss(gen, adversarial ? &disc : nullptr, rows_of(x_train, order, from, to),
                                           rows_of(y_train, order, from, to), noise, cfg.task, opt);
            if (!finite(gl)) {
                std::ostringstream os;
                os << "non-finite generator loss at epoch " << el.epoch << ", batch " << bi << " (mse " << gl.mse
                   << ", l_c " << gl.l_c << ", l_bf " << gl.l_bf << ", l_inf " << gl.l_inf << ", l_dg " << gl.l_dg << ")";
                abort(os.str());
            }
            adam_g.step(gen, gl.grads);
            const double w = 1.0 / static_cast<double>(batches.size());
            el.mse += gl.mse * w;
            el.l_c += gl.l_c * w;
            el.l_bf += gl.l_bf * w;
            el.l_inf += gl.l_inf * w;
            el.l_dg += gl.l_dg * w;
            el.l_g += gl.total * w;
            el.skipped += gl.skipped;
        };

        try {
            if (cfg.d_epochs_first) {
                if (adversarial) {
                    for (std::size_t bi = 0; bi < batches.size(); ++bi) d_step(bi);
                }
                for (std::size_t bi = 0; bi < batches.size(); ++bi) g_step(bi);
            } else {
                for (std::size_t bi = 0; bi < batches.size(); ++bi) {
                    if (adversarial) d_step(bi);
                    g_step(bi);
                }
            }
        } catch (const TrainingAborted&) {
            throw;
        } catch (const NumericError& e) {
            // Adam refuses non-finite gradients.
            abort(std::string(e.what()) + " at epoch " + std::to_string(el.epoch));
        }
        res.report.epochs.push_back(el);
    }

    auto errors = [&](const Matrix& x, const Matrix& y) {
        const Matrix p = gen.forward(x);
        return metrics::mae_mape(column(p, 0), column(y, 0));
    };
    res.report.train_error = errors(x_train, y_train);
    if (n_val > 0) res.report.validation_error = errors(x_val, y_val);
    for (const auto& ctx : contexts_from_dataset(data)) res.report.audit_train += audit_generated(gen, cfg.task, ctx);
    for (const auto& ctx : test_surfaces) {
        res.report.audit_test += audit_generated(gen, cfg.task, ctx);
        res.report.has_test = true;
    }
    res.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace volgan::gan

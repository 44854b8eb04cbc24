// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion...] [--cli PATH]; no criterion runs all ten.

#include "oracles/finite_diff.hpp"
#include "oracles/heston_oracles.hpp"
#include "volgan/arbitrage.hpp"
#include "volgan/benchmark.hpp"
#include "volgan/black_scholes.hpp"
#include "volgan/datagen.hpp"
#include "volgan/gan.hpp"
#include "volgan/heston.hpp"
#include "volgan/ssvi.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace volgan;
using datagen::Task;
using nn::Matrix;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << x;
    return os.str();
}

std::string cli_path;

// ---------------------------------------------------------------- 1

Outcome pricing_oracles() {
    std::size_t ok = 0;
    std::ostringstream worst;
    double worst_z = 0.0;
    auto spec = datagen::SamplingSpec::training_ranges();
    const auto params = datagen::sample_params(spec);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> k_dist(0.5, 2.5);
    std::uniform_real_distribution<double> t_dist(0.5, 2.0);
    for (std::size_t s = 0; s < params.size(); ++s) {
        const double k = k_dist(rng);
        const double t = t_dist(rng);
        const double cos = heston::cos_call_price(params[s], k, t);
        const auto mc = test::heston_mc_call(params[s], k, t, 1'000'000, 500, 1000 + s);
        const double z = std::abs(cos - mc.price) / mc.std_error;
        if (z < 3.0) ++ok;
        if (z > worst_z) {
            worst_z = z;
            worst.str("");
            worst << "set " << s << " K=" << fmt(k) << " T=" << fmt(t) << " cos=" << fmt(cos, 8) << " mc=" << fmt(mc.price, 8)
                  << " se=" << fmt(mc.std_error, 3);
        }
    }
    std::size_t bs_ok = 0;
    double bs_worst = 0.0;
    const double sigmas[] = {0.1, 0.2, 0.3, 0.5};
    const double strikes[] = {0.5, 0.9, 1.0, 1.2, 2.0};
    const double mats[] = {0.5, 1.0, 2.0};
    int n = 0;
    for (double sig : sigmas) {
        for (double k : strikes) {
            const double t = mats[n++ % 3];
            const heston::Params p{1.5, -0.5, 1e-12, sig * sig, sig * sig, 0.02, 1.0};
            const double err = std::abs(heston::cos_call_price(p, k, t) - bs::call({1.0, k, t, 0.02, sig}));
            bs_worst = std::max(bs_worst, err);
            if (err <= 1e-6) ++bs_ok;
        }
    }
    return {ok == params.size() && bs_ok == 20,
            std::to_string(ok) + "/" + std::to_string(params.size()) + " sets within 3 se (worst z " + fmt(worst_z, 3) +
                ": " + worst.str() + "); degenerate vs Black-Scholes " + std::to_string(bs_ok) + "/20, max err " +
                fmt(bs_worst, 3)};
}

// ---------------------------------------------------------------- 2

Outcome implied_vol_round_trip() {
    std::size_t ok = 0;
    std::size_t total = 0;
    std::ostringstream fails;
    for (int i = 1; i <= 20; ++i) {
        const double sig = 0.05 * i;
        for (double k : {0.5, 1.0, 2.5}) {
            for (double t : {0.5, 2.0}) {
                ++total;
                const double price = bs::call({1.0, k, t, 0.02, sig});
                double err = INFINITY;
                try {
                    err = std::abs(bs::implied_vol(price, 1.0, k, t, 0.02) - sig);
                } catch (const Error&) {
                }
                if (err <= 1e-8) {
                    ++ok;
                } else {
                    fails << " (s=" << fmt(sig, 2) << ",K=" << k << ",T=" << t << ",err=" << fmt(err, 2) << ")";
                }
            }
        }
    }
    return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " recovered to 1e-8" +
                             (ok == total ? "" : "; failing:" + fails.str())};
}

// ---------------------------------------------------------------- 3

Matrix features(long rows, Task task, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> k(0.6, 2.2);
    std::uniform_real_distribution<double> t(0.6, 1.9);
    std::uniform_real_distribution<double> r(0.0, 0.05);
    std::uniform_real_distribution<double> s(0.2, 0.6);
    const auto c = gan::columns(task);
    Matrix x(rows, c.dim);
    for (long n = 0; n < rows; ++n) {
        x(n, c.k) = k(rng);
        x(n, c.T) = t(rng);
        x(n, c.r) = r(rng);
        x(n, c.sigma_atm) = s(rng);
        x(n, c.k_log) = std::log(x(n, c.k)) - x(n, c.r) * x(n, c.T);
        if (c.sigma_implied >= 0) x(n, c.sigma_implied) = s(rng);
    }
    return x;
}

struct GradCheck {
    double worst = 0.0;
    std::size_t kinks = 0;
    std::size_t checked = 0;
};

GradCheck check_all(std::vector<Matrix*> params, const nn::Gradients& grads, const std::function<double()>& loss,
                    double h, double floor, std::size_t samples, bool allow_kinks, double kink_tol = 1e-3) {
    GradCheck out;
    for (std::size_t p = 0; p < params.size(); ++p) {
        std::size_t kinks = 0;
        out.worst = std::max(out.worst, test::check_gradient(*params[p], grads[p], loss, h, floor, samples, 3 + p, nullptr,
                                                             allow_kinks ? &kinks : nullptr, kink_tol));
        out.kinks += kinks;
        out.checked += samples && static_cast<std::size_t>(params[p]->size()) > samples ? samples : params[p]->size();
    }
    return out;
}

// Network weights alone, under a fixed linear functional of the output.
GradCheck weight_check(nn::Network& net, const Matrix& x, std::size_t samples, bool relu) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    Matrix c(x.rows(), net.output_dim());
    for (long i = 0; i < c.size(); ++i) c(i) = n01(rng);
    auto loss = [&] {
        nn::Cache cache;
        return static_cast<const nn::Network&>(net).forward_train(x, cache).cwiseProduct(c).sum();
    };
    nn::Cache cache;
    static_cast<const nn::Network&>(net).forward_train(x, cache);
    const auto grads = net.backward(cache, c);
    // Wide relu layers put many pre-activations within one step of zero, and a
    // crossing stencil is off by up to half the slope jump. Slopes that
    // disagree at the tolerance itself mark the entry as a kink.
    return check_all(net.params(), grads, loss, 1e-5, relu ? 1e-4 : 1e-6, samples, relu, 1e-5);
}

GradCheck full_loss_check(const gan::TrainConfig& cfg, Task task, std::size_t samples) {
    const int dim = gan::columns(task).dim;
    const Matrix x = features(16, task, 7);
    nn::Network gen;
    gan::LossOptions opt;
    opt.weights = {1.0, 1.0, 0.01, cfg.baseline_mode ? 0.0 : 0.5};
    opt.h = 0.02;
    opt.adversarial = !cfg.baseline_mode;
    opt.update_running = false;
    // First init seed whose surface has butterfly arbitrage, so every term is live.
    for (std::uint64_t seed = 21; seed < 80; ++seed) {
        gen = gan::make_generator(cfg, dim, seed);
        const auto st = gan::feature_stats(x);
        gen.set_input_standardization(st.mean, st.std);
        auto o = opt;
        o.adversarial = false;
        if (gan::generator_loss(gen, nullptr, x, Matrix::Zero(16, 1), Matrix(), task, o).l_bf > 0.0) break;
    }
    auto disc = gan::make_discriminator(cfg, dim + 1, 22);
    std::mt19937_64 rng(8);
    const Matrix noise = gan::make_noise_batch(gan::feature_stats(x), 16, rng);
    const Matrix y = Matrix::Constant(16, 1, 0.35);
    const nn::Network* d = opt.adversarial ? &disc : nullptr;
    const auto l = gan::generator_loss(gen, d, x, y, noise, task, opt);
    auto loss = [&] { return gan::generator_loss(gen, d, x, y, noise, task, opt).total; };
    // Hinges and relu leave kinks in L_G; stencils across one are skipped.
    auto out = check_all(gen.params(), l.grads, loss, 1e-5, 1e-4, samples, true);
    if (!(l.l_bf > 0.0 && l.l_inf > 0.0)) out.worst = INFINITY;
    return out;
}

Outcome gradient_suite() {
    bool pass = true;
    std::ostringstream os;
    gan::TrainConfig gan1;
    gan1.generator_depth = 1;
    gan::TrainConfig gan2;
    gan::TrainConfig base;
    base.baseline_mode = true;
    base.batchnorm = false;
    const Matrix x = features(16, Task::implied, 3);

    auto report = [&](const std::string& name, const GradCheck& g, double tol) {
        const bool ok = g.worst < tol && g.kinks * 10 <= std::max<std::size_t>(g.checked, 10);
        pass = pass && ok;
        os << name << " " << fmt(g.worst, 2) << (g.kinks ? " (" + std::to_string(g.kinks) + "/" + std::to_string(g.checked) + " kinks skipped)" : "") << "; ";
    };
    {
        auto net = gan::make_generator(gan1, 5, 1);
        const auto st = gan::feature_stats(x);
        net.set_input_standardization(st.mean, st.std);
        report("gan-1 weights", weight_check(net, x, 0, false), 1e-5);
    }
    {
        auto net = gan::make_generator(gan2, 5, 2);
        report("gan-2 weights", weight_check(net, x, 0, false), 1e-5);
    }
    {
        auto net = gan::make_discriminator(gan2, 6, 3);
        Matrix xy(x.rows(), 6);
        // A varying last column: batchnorm zeroes the true gradient of a constant one.
        xy << x, features(16, Task::local, 4).col(gan::columns(Task::local).sigma_implied);
        report("discriminator weights", weight_check(net, xy, 0, false), 1e-5);
    }
    {
        auto net = gan::make_generator(base, 5, 4);
        report("baseline 4x400 weights", weight_check(net, x, 300, true), 1e-5);
    }
    gan::TrainConfig small1 = gan1;
    small1.hidden_width = 24;
    gan::TrainConfig small2 = gan2;
    small2.hidden_width = 24;
    gan::TrainConfig small_base = base;
    small_base.baseline_width = 40;
    report("L_G gan-1", full_loss_check(small1, Task::implied, 0), 1e-4);
    report("L_G gan-2", full_loss_check(small2, Task::implied, 0), 1e-4);
    report("L_G gan-2 local", full_loss_check(small2, Task::local, 0), 1e-4);
    report("L_G baseline", full_loss_check(small_base, Task::implied, 300), 1e-4);
    return {pass, "max rel error: " + os.str()};
}

// ---------------------------------------------------------------- 4

Outcome penalty_units() {
    auto flat = [](double, double) { return 0.04; };
    std::vector<std::pair<double, double>> pts;
    for (double k : {-0.4, 0.0, 0.3}) {
        for (double t : {0.5, 1.0, 1.5}) pts.emplace_back(k, t);
    }
    const double but = arb::l_but(flat, 0.2, 1.0);
    const auto pen = arb::penalty_terms(flat, pts);
    auto lin = [](double k, double) { return 0.04 + 0.01 * k; };
    const double hand = arb::l_but(lin, 0.0, 1.0);
    const bool pass = std::abs(but - 1.0) <= 1e-12 && std::abs(pen.l_c) <= 1e-12 && std::abs(pen.l_bf) <= 1e-12 &&
                      std::abs(pen.l_inf) <= 1e-12 && std::abs(hand - 0.936875) <= 1e-6;
    return {pass, "flat l_but=" + fmt(but, 17) + " L_c=" + fmt(pen.l_c) + " L_bf=" + fmt(pen.l_bf) + " L_inf=" +
                      fmt(pen.l_inf) + "; linear l_but=" + fmt(hand, 10)};
}

// ---------------------------------------------------------------- desk-scale training

const std::uint64_t kSeeds[] = {1, 2, 3};

datagen::Dataset desk_data(Task task) {
    auto spec = datagen::SamplingSpec::training_ranges();
    spec.n_param_sets = 3;
    spec.n_maturities = 30;
    spec.n_strikes = 25;
    return datagen::build_dataset(spec, task).data;
}

gan::TrainConfig desk_config(Task task, std::uint64_t seed) {
    gan::TrainConfig cfg;
    cfg.task = task;
    cfg.seed = seed;
    return cfg;
}

std::vector<gan::SurfaceContext> test_grid(Task task) {
    const auto t3 = datagen::build_dataset(datagen::SamplingSpec::test_surface(), task);
    return {gan::context_from_grids(t3.grids.front(), task)};
}

// ---------------------------------------------------------------- 5

Outcome arbitrage_ablation() {
    const auto data = desk_data(Task::implied);
    const auto test = test_grid(Task::implied);
    int good = 0;
    std::ostringstream os;
    for (auto seed : kSeeds) {
        auto cfg = desk_config(Task::implied, seed);
        const auto on = gan::train(data, cfg, test).report.audit_test;
        cfg.constraints_enabled = false;
        const auto off = gan::train(data, cfg, test).report.audit_test;
        const bool ok = on.butterfly_violations == 0 && on.calendar_violations == 0 &&
                        off.butterfly_violations > on.butterfly_violations;
        good += ok;
        os << "seed " << seed << ": on " << on.butterfly_violations << "/" << on.calendar_violations << " off "
           << off.butterfly_violations << "/" << off.calendar_violations << " of " << on.total_cells << (ok ? "" : " x")
           << "; ";
    }
    return {good >= 2, std::to_string(good) + "/3 seeds (butterfly/calendar on the test grid): " + os.str()};
}

// ---------------------------------------------------------------- 6

Outcome accuracy() {
    const auto data = desk_data(Task::implied);
    auto cfg = desk_config(Task::implied, kSeeds[0]);
    const auto g2 = gan::train(data, cfg).report.validation_error;
    cfg.generator_depth = 1;
    const auto g1 = gan::train(data, cfg).report.validation_error;
    return {g2.mape < 0.01 && g2.mae <= g1.mae, "gan-2 MAE " + fmt(g2.mae, 4) + " MAPE " + fmt(g2.mape * 100, 4) +
                                                   "%; gan-1 MAE " + fmt(g1.mae, 4) + " MAPE " + fmt(g1.mape * 100, 4) + "%"};
}

// ---------------------------------------------------------------- 7

Outcome repricing_benchmark() {
    const auto data = desk_data(Task::local);
    const auto harness = benchmark::build_harness(benchmark::harness_spec());
    auto once = benchmark::default_config(1);
    once.run_gan = once.run_baseline = false;
    const auto fixed = benchmark::run(data, harness, once);
    const auto& fdm = fixed.row("fdm").stats;
    const auto& ssvi = fixed.row("ssvi").stats;
    int good = 0;
    std::ostringstream os;
    os << "fdm max ARPE " << fmt(fdm.max_arpe * 100, 3) << "% MRPE " << fmt(fdm.mrpe * 100, 3) << "%; ssvi max ARPE "
       << fmt(ssvi.max_arpe * 100, 3) << "% MRPE " << fmt(ssvi.mrpe * 100, 3) << "%; ";
    for (auto seed : kSeeds) {
        auto cfg = benchmark::default_config(seed);
        cfg.gan = desk_config(Task::local, seed);
        cfg.run_ssvi = cfg.run_fdm = false;
        const auto r = benchmark::run(data, harness, cfg);
        const auto& g = r.row("gan").stats;
        const auto& b = r.row("baseline").stats;
        const bool ok = g.max_arpe <= fdm.max_arpe && b.mrpe >= g.mrpe;
        good += ok;
        os << "seed " << seed << ": gan max ARPE " << fmt(g.max_arpe * 100, 3) << "% MRPE " << fmt(g.mrpe * 100, 3)
           << "%, baseline MRPE " << fmt(b.mrpe * 100, 3) << "%" << (ok ? "" : " x") << "; ";
    }
    return {good >= 2, std::to_string(good) + "/3 seeds; " + os.str()};
}

// ---------------------------------------------------------------- 8

Outcome ssvi_checks() {
    bool exact = true;
    for (double theta : {1e-6, 0.01, 0.3, 2.0}) {
        for (double rho : {-0.9, -0.3, 0.0}) {
            for (double lambda : {1e-3, 1.0, 20.0}) exact = exact && ssvi::total_variance(theta, rho, lambda, 0.0) == theta;
        }
    }
    ssvi::Params truth;
    truth.rho = -0.4;
    truth.lambda = 2.0;
    truth.theta_curve = {{0.25, 0.5, 1.0, 2.0}, {0.012, 0.025, 0.052, 0.11}};
    std::vector<double> strikes;
    for (int i = 0; i <= 20; ++i) strikes.push_back(0.6 + 0.05 * i);
    const auto grid = ssvi::implied_vol_grid(truth, strikes, truth.theta_curve.maturities, 1.0, 0.0);
    const auto fit = ssvi::fit(grid, 1.0);
    const double drho = std::abs(fit.params.rho - truth.rho);
    const double dlambda = std::abs(fit.params.lambda - truth.lambda);
    std::size_t cal = 0;
    for (double k : strikes) {
        for (std::size_t j = 1; j < grid.n_maturities(); ++j) {
            const double lo = ssvi::total_variance(fit.params, std::log(k), grid.maturities()[j - 1]);
            const double hi = ssvi::total_variance(fit.params, std::log(k), grid.maturities()[j]);
            if (hi < lo) ++cal;
        }
    }
    return {exact && drho < 1e-3 && dlambda < 1e-3 && cal == 0,
            std::string("w(0,theta)=theta ") + (exact ? "exact" : "NOT exact") + "; |drho| " + fmt(drho, 2) +
                " |dlambda| " + fmt(dlambda, 2) + "; calendar violations on fit grid " + std::to_string(cal)};
}

// ---------------------------------------------------------------- 9

Outcome mse_ablation() {
    const auto data = desk_data(Task::implied);
    auto cfg = desk_config(Task::implied, kSeeds[0]);
    const double full = gan::train(data, cfg).report.validation_error.mae;
    cfg.mse_enabled = false;
    const double ablated = gan::train(data, cfg).report.validation_error.mae;
    return {ablated >= 10.0 * full, "validation MAE full " + fmt(full, 4) + ", without MSE " + fmt(ablated, 4) + " (" +
                                        fmt(ablated / full, 3) + "x)"};
}

// ---------------------------------------------------------------- 10

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome determinism() {
    namespace fs = std::filesystem;
    std::string gen_detail;
    bool gen_same = false;
    if (cli_path.empty()) {
        gen_detail = "no --cli given";
    } else {
        const auto dir = fs::temp_directory_path() / ("volgan_accept_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const auto spec = (dir / "spec.cfg").string();
        {
            std::ofstream os(spec);
            os << "n_param_sets = 2\nn_maturities = 10\nn_strikes = 12\nseed = 99\n";
        }
        std::string outs[2];
        for (int run = 0; run < 2; ++run) {
            const auto out = (dir / ("run" + std::to_string(run))).string();
            const auto cmd = cli_path + " generate --spec " + spec + " --out " + out + " > /dev/null";
            if (std::system(cmd.c_str()) != 0) {
                gen_detail = "generate failed";
                break;
            }
            outs[run] = slurp(out + "/dataset_implied.csv") + slurp(out + "/dataset_local.csv");
        }
        gen_same = !outs[0].empty() && outs[0] == outs[1];
        if (gen_detail.empty()) gen_detail = std::string("generate ") + (gen_same ? "byte-identical" : "differs");
        fs::remove_all(dir);
    }
    auto spec = datagen::SamplingSpec::training_ranges();
    spec.n_param_sets = 2;
    spec.n_maturities = 10;
    spec.n_strikes = 16;
    const auto data = datagen::build_dataset(spec, Task::implied).data;
    auto cfg = desk_config(Task::implied, 5);
    cfg.epochs = 1;
    const auto a = gan::train(data, cfg).report.epochs.front();
    const auto b = gan::train(data, cfg).report.epochs.front();
    const bool epoch_same = a.mse == b.mse && a.l_c == b.l_c && a.l_bf == b.l_bf && a.l_inf == b.l_inf &&
                            a.l_dg == b.l_dg && a.l_g == b.l_g && a.l_d == b.l_d;
    return {gen_same && epoch_same,
            gen_detail + "; first epoch losses " + (epoch_same ? "bit-identical" : "differ")};
}

} // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<const char*, Outcome (*)()>> criteria{
        {1, {"pricing oracles", pricing_oracles}},
        {2, {"implied-vol round trip", implied_vol_round_trip}},
        {3, {"gradient suite", gradient_suite}},
        {4, {"penalty unit values", penalty_units}},
        {5, {"arbitrage ablation", arbitrage_ablation}},
        {6, {"accuracy", accuracy}},
        {7, {"repricing benchmark", repricing_benchmark}},
        {8, {"ssvi checks", ssvi_checks}},
        {9, {"mse ablation", mse_ablation}},
        {10, {"determinism", determinism}},
    };
    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        if (arg == "--cli" && a + 1 < argc) {
            cli_path = argv[++a];
        } else {
            const int n = std::atoi(arg.c_str());
            if (!criteria.count(n)) {
                std::cerr << "unknown criterion " << arg << '\n';
                return 2;
            }
            selected.push_back(n);
        }
    }
    if (selected.empty()) {
        for (const auto& [n, c] : criteria) selected.push_back(n);
    }
    int failed = 0;
    for (int n : selected) {
        const auto& [name, fn] = criteria.at(n);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << ", " << fmt(secs, 3)
                  << " s): " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}

#include "volgan/arbitrage.hpp"
#include "volgan/benchmark.hpp"
#include "volgan/datagen.hpp"
#include "volgan/errors.hpp"
#include "volgan/gan.hpp"
#include "volgan/metrics.hpp"
#include "volgan/surface.hpp"
#include "volgan/text_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef VOLGAN_VERSION
#define VOLGAN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace volgan;
using nlohmann::json;

namespace {

// FNV-1a over the file bytes; identifies a dataset, not a security hash.
std::string file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path + " for hashing");
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize n = 0; n < is.gcount(); ++n) {
            h ^= static_cast<unsigned char>(buf[n]);
            h *= 1099511628211ull;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// Seed precedence: --seed, then VOLGAN_SEED, then the config file.
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag) {
    if (flag) return flag;
    if (const char* env = std::getenv("VOLGAN_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::exception&) {
            throw UsageError(std::string("VOLGAN_SEED is not an unsigned integer: ") + env);
        }
    }
    return std::nullopt;
}

io::KeyValues load_config(const std::string& path) { return path.empty() ? io::KeyValues{} : io::KeyValues::load(path); }

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct Manifest {
    std::string command;
    io::KeyValues config;
    std::uint64_t seed = 0;
    std::string dataset;
    std::vector<std::string> files;
    std::string report;

    void write(const std::string& dir) {
        json cfg = json::object();
        for (const auto& [k, v] : config.entries()) cfg[k] = v;
        json j{{"tool", "volgan"}, {"version", VOLGAN_VERSION}, {"command", command}, {"config", cfg}, {"seed", seed}};
        if (!dataset.empty()) j["dataset"] = {{"path", dataset}, {"fnv1a64", file_hash(dataset)}};
        for (const auto& f : files) {
            if (!fs::exists(f)) throw StateError("manifest: missing output " + f);
        }
        j["files"] = files;
        if (!report.empty()) j["report"] = report;
        auto os = io::open_output(join(dir, "manifest.json"));
        os << j.dump(2) << '\n';
    }
};

void write_json(const std::string& path, const json& j) {
    auto os = io::open_output(path);
    os << j.dump(2) << '\n';
}

datagen::SamplingSpec spec_from(const std::string& path, const datagen::SamplingSpec& fallback) {
    if (path.empty()) return fallback;
    const auto kv = io::KeyValues::load(path);
    // Unset keys keep the fallback's value.
    auto base = fallback.to_config();
    for (const auto& [k, v] : kv.entries()) base.set(k, v);
    base.require_known(datagen::SamplingSpec::config_keys());
    return datagen::SamplingSpec::from_config(base);
}

datagen::Task task_of(const nn::Network& gen) {
    if (gen.input_dim() == gan::columns(datagen::Task::implied).dim) return datagen::Task::implied;
    if (gen.input_dim() == gan::columns(datagen::Task::local).dim) return datagen::Task::local;
    throw DataError("checkpoint input width matches no task");
}

// ------------------------------------------------------------- commands

struct GenerateArgs {
    std::string spec;
    std::string out;
    std::string task = "both";
    bool grids = true;
    std::optional<std::uint64_t> seed;
};

void cmd_generate(const GenerateArgs& a) {
    auto spec = spec_from(a.spec, datagen::SamplingSpec::training_ranges());
    if (const auto s = seed_override(a.seed)) spec.seed = *s;
    spec.validate();
    make_dir(a.out);
    Manifest m;
    m.command = "generate";
    m.config = spec.to_config();
    m.seed = spec.seed;
    const auto spec_path = join(a.out, "spec.cfg");
    {
        auto os = io::open_output(spec_path);
        m.config.write(os);
    }
    m.files.push_back(spec_path);
    std::vector<datagen::Task> tasks;
    if (a.task == "both") {
        tasks = {datagen::Task::implied, datagen::Task::local};
    } else {
        tasks = {datagen::task_from_string(a.task)};
    }
    for (const auto task : tasks) {
        const auto built = datagen::build_dataset(spec, task);
        const auto name = "dataset_" + datagen::to_string(task) + ".csv";
        const auto path = join(a.out, name);
        datagen::export_dataset(path, built.data);
        m.files.push_back(path);
        if (m.dataset.empty()) m.dataset = path;
        std::cout << name << ": " << built.data.size() << " rows, " << built.rejected_grids << " rejected grids\n";
        if (!a.grids) continue;
        const auto gdir = join(a.out, "grids");
        make_dir(gdir);
        for (std::size_t s = 0; s < built.grids.size(); ++s) {
            const auto& g = built.grids[s];
            const auto stem = join(gdir, "set" + std::to_string(s) + "_");
            if (task == datagen::Task::implied || tasks.size() == 1) {
                surface::write_csv(stem + "price.csv", g.prices);
                surface::write_csv(stem + "implied.csv", g.implied);
                m.files.push_back(stem + "price.csv");
                m.files.push_back(stem + "implied.csv");
            }
            if (task == datagen::Task::local) {
                surface::write_csv(stem + "local.csv", g.local);
                m.files.push_back(stem + "local.csv");
            }
        }
    }
    m.write(a.out);
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    bool test_grid = true;
    std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a) {
    auto kv = load_config(a.config);
    kv.require_known(gan::TrainConfig::config_keys());
    const auto ds = datagen::import_dataset(a.data);
    if (!kv.has("task")) kv.set("task", datagen::to_string(ds.task));
    auto cfg = gan::TrainConfig::from_config(kv);
    if (const auto s = seed_override(a.seed)) cfg.seed = *s;
    make_dir(a.out);

    std::vector<gan::SurfaceContext> test;
    if (a.test_grid) {
        const auto t3 = datagen::build_dataset(datagen::SamplingSpec::test_surface(), cfg.task);
        test.push_back(gan::context_from_grids(t3.grids.front(), cfg.task));
    }
    Manifest m;
    m.command = "train";
    m.config = cfg.to_config();
    m.seed = cfg.seed;
    m.dataset = a.data;
    const auto report_path = join(a.out, "report.json");
    try {
        const auto res = gan::train(ds, cfg, test);
        const auto gpath = join(a.out, "generator.ckpt");
        res.generator.save(gpath);
        m.files.push_back(gpath);
        if (!cfg.baseline_mode) {
            const auto dpath = join(a.out, "discriminator.ckpt");
            res.discriminator.save(dpath);
            m.files.push_back(dpath);
        }
        write_json(report_path, json(res.report));
        const auto& r = res.report;
        std::cout << "validation MAE " << r.validation_error.mae << ", MAPE " << r.validation_error.mape * 100.0
                  << "%, train audit " << r.audit_train.butterfly_violations << " butterfly / "
                  << r.audit_train.calendar_violations << " calendar of " << r.audit_train.total_cells;
        if (r.has_test) {
            std::cout << ", test audit " << r.audit_test.butterfly_violations << " / " << r.audit_test.calendar_violations
                      << " of " << r.audit_test.total_cells;
        }
        std::cout << ", " << r.seconds << " s\n";
    } catch (const gan::TrainingAborted& e) {
        write_json(report_path, json(e.report()));
        throw;
    }
    m.files.push_back(report_path);
    m.report = report_path;
    m.write(a.out);
}

struct SurfaceArgs {
    std::string checkpoint;
    std::string spec;
    std::string out;
    int set = 0;
};

void cmd_surface(const SurfaceArgs& a) {
    const auto gen = nn::Network::load(a.checkpoint);
    const auto task = task_of(gen);
    const auto spec = spec_from(a.spec, datagen::SamplingSpec::test_surface());
    const auto built = datagen::build_dataset(spec, task);
    if (a.set < 0 || static_cast<std::size_t>(a.set) >= built.grids.size()) {
        throw UsageError("--set out of range: spec has " + std::to_string(built.grids.size()) + " sets");
    }
    const auto grid = gan::generate_surface(gen, task, gan::context_from_grids(built.grids[a.set], task));
    surface::write_csv(a.out, grid);
    std::cout << a.out << ": " << grid.n_maturities() << " x " << grid.n_strikes() << " " << surface::to_string(grid.kind())
              << " cells\n";
}

struct AuditArgs {
    std::string surface;
    std::string out;
    double rate = 0.0;
    double s0 = 1.0;
    double tol = 1e-8;
};

void cmd_audit(const AuditArgs& a) {
    auto grid = surface::read_csv(a.surface);
    if (grid.kind() == surface::Kind::total_variance) grid = surface::from_total_variance(grid);
    if (grid.kind() != surface::Kind::implied_vol) {
        throw DataError("audit: expected an implied_vol or total_variance surface, got " +
                        std::string(surface::to_string(grid.kind())));
    }
    const auto rep = arb::audit_surface(grid, {a.s0, a.rate, a.tol});
    const json j = rep;
    if (!a.out.empty()) write_json(a.out, j);
    std::cout << j.dump(2) << '\n';
}

struct RepriceArgs {
    std::string surface;
    std::string prices;
    std::string heatmap;
    double rate = 0.0;
    double s0 = 1.0;
};

void cmd_reprice(const RepriceArgs& a) {
    const auto vols = surface::read_csv(a.surface);
    const auto prices = surface::read_csv(a.prices);
    const auto stats = metrics::reprice_stats({vols}, {prices}, {a.rate}, a.s0);
    if (!a.heatmap.empty()) metrics::write_heatmap(a.heatmap, stats);
    json j = stats;
    j.erase("cells");
    std::cout << j.dump(2) << '\n';
}

struct BenchmarkArgs {
    std::string data;
    std::string config;
    std::string baseline_config;
    std::string out;
    std::uint64_t harness_seed = 20240613;
    std::optional<std::uint64_t> seed;
};

void cmd_benchmark(const BenchmarkArgs& a) {
    const auto ds = datagen::import_dataset(a.data);
    if (ds.task != datagen::Task::local) throw UsageError("benchmark: --data must be a local-task dataset");
    const auto seed = seed_override(a.seed).value_or(1);
    auto cfg = benchmark::default_config(seed);
    auto apply = [&](const std::string& path, gan::TrainConfig& tc) {
        if (path.empty()) return;
        auto base = tc.to_config();
        const auto kv = io::KeyValues::load(path);
        kv.require_known(gan::TrainConfig::config_keys());
        for (const auto& [k, v] : kv.entries()) base.set(k, v);
        tc = gan::TrainConfig::from_config(base);
        if (a.seed || std::getenv("VOLGAN_SEED")) tc.seed = seed;
    };
    apply(a.config, cfg.gan);
    apply(a.baseline_config, cfg.baseline);
    cfg.baseline.baseline_mode = true;
    make_dir(a.out);
    const auto harness = benchmark::build_harness(benchmark::harness_spec(a.harness_seed));
    const auto res = benchmark::run(ds, harness, cfg);

    Manifest m;
    m.command = "benchmark";
    m.config = cfg.gan.to_config();
    m.config.set("harness_seed", std::to_string(a.harness_seed));
    m.seed = cfg.gan.seed;
    m.dataset = a.data;
    const auto table = join(a.out, "benchmark.csv");
    {
        auto os = io::open_output(table);
        benchmark::write_table(os, res);
    }
    m.files.push_back(table);
    for (const auto& row : res.rows) {
        const auto hm = join(a.out, "heatmap_" + row.method + ".csv");
        metrics::write_heatmap(hm, row.stats);
        m.files.push_back(hm);
    }
    const auto report = join(a.out, "benchmark.json");
    write_json(report, json(res));
    m.files.push_back(report);
    m.report = report;
    m.write(a.out);

    std::cout << std::left << std::setw(10) << "method" << std::setw(16) << "train time (s)" << std::setw(22)
              << "max ARPE (std)" << "MRPE\n";
    for (const auto& row : res.rows) {
        std::ostringstream arpe;
        arpe << std::fixed << std::setprecision(3) << row.stats.max_arpe * 100.0 << "% (" << row.stats.std_at_max_arpe * 100.0
             << "%)";
        std::cout << std::setw(10) << row.method << std::setw(16) << std::fixed << std::setprecision(2) << row.train_seconds
                  << std::setw(22) << arpe.str() << std::setprecision(3) << row.stats.mrpe * 100.0 << "%\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volatility surfaces from a regularised GAN: data, training, audit and benchmarks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VOLGAN_VERSION);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Sample Heston sets and write feature datasets and grids");
    gen->add_option("--spec", ga.spec, "key=value sampling spec (defaults to the training design)")->check(CLI::ExistingFile);
    gen->add_option("--out", ga.out, "Output directory")->required();
    gen->add_option("--task", ga.task, "implied, local or both")->check(CLI::IsMember({"implied", "local", "both"}));
    gen->add_flag("!--no-grids", ga.grids, "Skip per-set surface CSVs");
    gen->add_option("--seed", ga.seed, "Sampling seed (overrides VOLGAN_SEED and the spec)");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train the generator/discriminator pair on a dataset");
    tr->add_option("--config", ta.config, "key=value training config")->check(CLI::ExistingFile);
    tr->add_option("--data", ta.data, "Dataset CSV from `generate`")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", ta.out, "Output directory")->required();
    tr->add_flag("!--no-test-grid", ta.test_grid, "Skip the out-of-training test-grid audit");
    tr->add_option("--seed", ta.seed, "Training seed (overrides VOLGAN_SEED and the config)");

    SurfaceArgs sa;
    auto* sf = app.add_subcommand("surface", "Evaluate a generator checkpoint on a grid");
    sf->add_option("--checkpoint", sa.checkpoint, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    sf->add_option("--spec", sa.spec, "Grid spec (defaults to the fixed test surface)")->check(CLI::ExistingFile);
    sf->add_option("--set", sa.set, "Parameter set index within the spec");
    sf->add_option("--out", sa.out, "Surface CSV")->required();

    AuditArgs aa;
    auto* au = app.add_subcommand("audit", "Count butterfly and calendar violations on a surface CSV");
    au->add_option("--surface", aa.surface, "implied_vol or total_variance surface CSV")->required()->check(CLI::ExistingFile);
    au->add_option("--rate", aa.rate, "Risk-free rate for forward log-moneyness");
    au->add_option("--s0", aa.s0, "Spot");
    au->add_option("--tol", aa.tol, "Violation tolerance");
    au->add_option("--out", aa.out, "Report JSON");

    RepriceArgs ra;
    auto* rp = app.add_subcommand("reprice", "Black-Scholes repricing errors of a vol surface against prices");
    rp->add_option("--surface", ra.surface, "implied_vol or local_vol surface CSV")->required()->check(CLI::ExistingFile);
    rp->add_option("--prices", ra.prices, "Price surface CSV on the same axes")->required()->check(CLI::ExistingFile);
    rp->add_option("--rate", ra.rate, "Risk-free rate");
    rp->add_option("--s0", ra.s0, "Spot");
    rp->add_option("--heatmap", ra.heatmap, "Write per-cell ARPE/MRPE/std CSV");

    BenchmarkArgs ba;
    auto* bm = app.add_subcommand("benchmark", "GAN vs SSVI vs FDM vs deep-MLP repricing on the 50x8x11 harness");
    bm->add_option("--data", ba.data, "Local-task training dataset CSV")->required()->check(CLI::ExistingFile);
    bm->add_option("--config", ba.config, "GAN training config overrides")->check(CLI::ExistingFile);
    bm->add_option("--baseline-config", ba.baseline_config, "Baseline MLP config overrides")->check(CLI::ExistingFile);
    bm->add_option("--harness-seed", ba.harness_seed, "Seed of the harness parameter sets");
    bm->add_option("--seed", ba.seed, "Training seed for both networks");
    bm->add_option("--out", ba.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::usage);
    }

    try {
        if (gen->parsed()) cmd_generate(ga);
        if (tr->parsed()) cmd_train(ta);
        if (sf->parsed()) cmd_surface(sa);
        if (au->parsed()) cmd_audit(aa);
        if (rp->parsed()) cmd_reprice(ra);
        if (bm->parsed()) cmd_benchmark(ba);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#pragma once

#include "volgan/heston.hpp"
#include "volgan/surface.hpp"
#include "volgan/text_io.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace volgan::datagen {

enum class Task { implied, local };

std::string to_string(Task t);
Task task_from_string(const std::string& name);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SamplingSpec {
    Range r{0.0, 0.05};
    Range kappa{0.0, 3.0};
    Range rho{-0.9, 0.0};
    Range gamma{0.01, 0.5};
    Range v_bar{0.01, 0.5};
    Range v0{0.05, 0.5};
    Range moneyness{0.5, 2.5};
    Range maturity{0.5, 2.0};
    int n_param_sets = 10;
    int n_maturities = 75;
    int n_strikes = 50;
    std::uint64_t seed = 20240611;
    double max_drop_fraction = 0.10;
    int max_attempts = 20;
    heston::CosConfig cos;

    /// Training/validation domain.
    static SamplingSpec training_ranges();
    /// Out-of-training surface: fixed parameters, 11 maturities x 157 strikes.
    static SamplingSpec test_surface();

    void validate() const;

    static SamplingSpec from_config(const io::KeyValues& kv);
    io::KeyValues to_config() const;
    static std::vector<std::string> config_keys();
};

struct FeatureRow {
    int param_set = 0;
    double k = 0.0;         // K / s0
    double sigma_atm = 0.0; // implied vol at K = s0, same maturity
    double T = 0.0;
    double r = 0.0;
    double k_log = 0.0;     // ln(k) - r T
    double sigma_implied = 0.0; // local task only
    double target = 0.0;

    bool operator==(const FeatureRow&) const = default;
};

struct Dataset {
    Task task = Task::implied;
    std::vector<FeatureRow> rows;

    std::size_t size() const { return rows.size(); }
};

/// Per parameter set: grids on the drawn axes, ATM vol per maturity and
/// counts of dropped cells.
struct ParamSetGrids {
    heston::Params params;
    surface::Grid prices;
    surface::Grid implied;
    surface::Grid local;        // empty axes for the implied task
    std::vector<double> atm_vol; // per maturity
    std::size_t dropped = 0;     // Brent failures
    int attempt = 0;             // redraws before acceptance
};

struct BuildResult {
    Dataset data;
    std::vector<ParamSetGrids> grids;
    std::size_t rejected_grids = 0;
};

/// Parameters of the first draw for each set (s0 = 1).
std::vector<heston::Params> sample_params(const SamplingSpec& spec);

/// Prices, implied vols, ATM curve and (local task) FDM local vols for each
/// parameter set, assembled into feature rows. A grid with more than
/// max_drop_fraction Brent failures, or with too many invalid FDM cells, is
/// redrawn from the next deterministic sub-seed.
BuildResult build_dataset(const SamplingSpec& spec, Task task);

/// Parameter sets sampled as in build_dataset, each priced on the given
/// fixed axes (the repricing harness and out-of-training grids).
BuildResult build_on_axes(const SamplingSpec& spec, const std::vector<double>& strikes,
                          const std::vector<double>& maturities, Task task);

/// Grids for one fixed parameter set on given axes; cells failing Brent are
/// marked invalid.
ParamSetGrids build_grids(const heston::Params& p, const std::vector<double>& strikes,
                          const std::vector<double>& maturities, Task task, const heston::CosConfig& cos = {});

/// Rows of one parameter set's grids.
void append_rows(const ParamSetGrids& g, int param_set, Task task, std::vector<FeatureRow>& rows);

void export_dataset(std::ostream& os, const Dataset& ds);
void export_dataset(const std::string& path, const Dataset& ds);
Dataset import_dataset(std::istream& is);
Dataset import_dataset(const std::string& path);

} // namespace volgan::datagen

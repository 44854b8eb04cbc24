#pragma once

#include "volgan/arbitrage.hpp"
#include "volgan/datagen.hpp"
#include "volgan/errors.hpp"
#include "volgan/metrics.hpp"
#include "volgan/nn.hpp"
#include "volgan/surface.hpp"
#include "volgan/text_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace volgan::gan {

using datagen::Dataset;
using datagen::FeatureRow;
using datagen::Task;
using nn::Matrix;

/// Column layout of the feature matrix. Implied: k, sigma_atm, T, r, k_log.
/// Local: k, sigma_atm, sigma_implied, T, r, k_log.
struct Columns {
    int k = 0;
    int sigma_atm = 1;
    int sigma_implied = -1;
    int T = 2;
    int r = 3;
    int k_log = 4;
    int dim = 5;
};

Columns columns(Task task);
Matrix feature_matrix(const std::vector<FeatureRow>& rows, Task task);
Matrix target_vector(const std::vector<FeatureRow>& rows);

struct FeatureStats {
    Matrix mean; // 1 x dim
    Matrix std;  // 1 x dim, floored at 1e-6
};

/// Per-column sample mean and standard deviation (n - 1 denominator).
FeatureStats feature_stats(const Matrix& x);

/// Shifted and scaled noise: column c ~ N(mean_c, std_c).
Matrix make_noise_batch(const FeatureStats& stats, long rows, std::mt19937_64& rng);

struct TrainConfig {
    Task task = Task::implied;
    int generator_depth = 2;
    int hidden_width = 100;
    int epochs = 50;
    int batch_size = 128;
    arb::PenaltyWeights weights;
    std::uint64_t seed = 1;
    double probe_h = 1e-3;
    nn::AdamConfig adam_g;
    nn::AdamConfig adam_d;
    double softplus_beta = 1.0;
    bool batchnorm = true;
    bool constraints_enabled = true;
    bool mse_enabled = true;
    bool baseline_mode = false;
    int baseline_depth = 4;
    int baseline_width = 400;
    nn::Activation baseline_activation = nn::Activation::relu;
    bool d_epochs_first = false;
    double validation_fraction = 0.15;

    void validate() const;
    static TrainConfig from_config(const io::KeyValues& kv);
    io::KeyValues to_config() const;
    static std::vector<std::string> config_keys();
};

/// GAN-1/GAN-2 (softplus hidden layers with batchnorm, softplus output), or
/// the deep baseline in baseline mode.
nn::Network make_generator(const TrainConfig& cfg, int input_dim, std::uint64_t seed);
/// One softplus hidden layer with batchnorm and a sigmoid output; the input
/// is the features plus the vol value.
nn::Network make_discriminator(const TrainConfig& cfg, int input_dim, std::uint64_t seed);

struct LossOptions {
    arb::PenaltyWeights weights;
    double h = 1e-3;
    bool mse = true;
    bool constraints = true;
    bool adversarial = true;
    bool update_running = true;
};

struct GeneratorLoss {
    double mse = 0.0;
    double l_c = 0.0;
    double l_bf = 0.0;
    double l_inf = 0.0;
    double l_dg = 0.0;
    double total = 0.0;
    std::size_t skipped = 0;
    nn::Gradients grads;
};

/// MSE + l1 L_c + l2 L_bf + l3 L_inf + l4 L_DG and its exact gradient.
/// Penalties use omega = G^2 T at the batch points and at probes x +- h
/// (x = k_log, moneyness rebuilt as exp(x + rT)) and T +- h at fixed x; base
/// and probe rows share one train-mode forward pass. L_DG feeds `noise`
/// through G and the frozen discriminator.
GeneratorLoss generator_loss(nn::Network& gen, const nn::Network* disc, const Matrix& x, const Matrix& y,
                             const Matrix& noise, Task task, const LossOptions& opt);

struct DiscriminatorLoss {
    double real = 0.0;
    double fake = 0.0;
    double total = 0.0;
    nn::Gradients grads;
};

/// -mean log D({X, y}) - mean log(1 - D({X, G(X)})) with G frozen. D output
/// is clamped to [1e-7, 1 - 1e-7] before the logs.
DiscriminatorLoss discriminator_loss(const nn::Network& gen, nn::Network& disc, const Matrix& x, const Matrix& y,
                                     bool update_running = true);

/// Features for one surface: axes in moneyness, rate, ATM curve and, for the
/// local task, the implied-vol surface on the same axes.
struct SurfaceContext {
    std::vector<double> strikes;
    std::vector<double> maturities;
    double r = 0.0;
    std::vector<double> atm_maturities;
    std::vector<double> atm_vols;
    surface::Grid sigma_implied;

    /// Linear in T, flat beyond the end points.
    double atm_vol_at(double maturity) const;
};

SurfaceContext context_from_grids(const datagen::ParamSetGrids& g, Task task);
/// One context per parameter set, axes rebuilt from the rows.
std::vector<SurfaceContext> contexts_from_dataset(const Dataset& ds);

/// Eval-mode generator output on every (k, T) node. Cells without a
/// sigma_implied value (local task) are absent.
surface::Grid generate_surface(const nn::Network& gen, Task task, const SurfaceContext& ctx);

/// Audit of a generated surface read as total variance sigma^2 T.
arb::ArbitrageReport audit_generated(const nn::Network& gen, Task task, const SurfaceContext& ctx);

struct EpochLosses {
    int epoch = 0;
    double mse = 0.0;
    double l_c = 0.0;
    double l_bf = 0.0;
    double l_inf = 0.0;
    double l_dg = 0.0;
    double l_g = 0.0;
    double l_d = 0.0;
    std::size_t skipped = 0;
    std::size_t batches = 0;
};

struct TrainReport {
    TrainConfig config;
    std::vector<EpochLosses> epochs;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    metrics::ErrorSummary train_error;
    metrics::ErrorSummary validation_error;
    arb::ArbitrageReport audit_train;
    arb::ArbitrageReport audit_test;
    bool has_test = false;
    double seconds = 0.0;
    std::string abort_reason;
};

void to_json(nlohmann::json& j, const TrainReport& r);

/// Raised when a loss turns non-finite; carries the report up to that point.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, TrainReport report)
        : NumericError(what), report_(std::move(report)) {}
    const TrainReport& report() const { return report_; }

private:
    TrainReport report_;
};

struct TrainResult {
    nn::Network generator;
    nn::Network discriminator; // empty in baseline mode
    TrainReport report;
};

/// Seeded 85/15 row split, then per epoch and batch one discriminator step
/// and one generator step (or all D steps then all G steps when
/// d_epochs_first is set). Deterministic for a given config.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::vector<SurfaceContext>& test_surfaces = {});

} // namespace volgan::gan

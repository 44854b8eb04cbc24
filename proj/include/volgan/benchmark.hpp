#pragma once

#include "volgan/datagen.hpp"
#include "volgan/gan.hpp"
#include "volgan/metrics.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace volgan::benchmark {

/// Repricing harness: training parameter ranges on the fixed 8 x 11 axes.
datagen::SamplingSpec harness_spec(std::uint64_t seed = 20240613);

/// Builds the harness grids (local-vol task, so FDM surfaces are included).
datagen::BuildResult build_harness(const datagen::SamplingSpec& spec);

struct Row {
    std::string method;
    double train_seconds = 0.0;
    metrics::RepriceStats stats;
};

struct Result {
    std::vector<Row> rows;
    const Row& row(const std::string& method) const;
};

struct Config {
    gan::TrainConfig gan;      // task must be local
    gan::TrainConfig baseline; // baseline_mode, task local
    bool run_gan = true;
    bool run_baseline = true;
    bool run_ssvi = true;
    bool run_fdm = true;
};

/// Default configs: GAN-2 with constraints, and the 4 x 400 relu MLP.
Config default_config(std::uint64_t seed);

/// Vol surfaces of each method on the harness axes, repriced against the
/// harness prices. GAN and baseline train on `train`; SSVI fits each
/// harness implied surface; FDM is the harness local-vol grid itself.
/// Training time for SSVI and FDM is the time spent fitting or
/// differencing all harness sets.
Result run(const datagen::Dataset& train, const datagen::BuildResult& harness, const Config& cfg);

/// Reprices a trained local-task generator on the harness.
metrics::RepriceStats reprice_generator(const nn::Network& gen, const datagen::BuildResult& harness);

/// `method,train_seconds,max_arpe,std_at_max_arpe,mrpe`.
void write_table(std::ostream& os, const Result& r);
void to_json(nlohmann::json& j, const Result& r);

} // namespace volgan::benchmark

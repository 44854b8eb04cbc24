#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace volgan::nn {

using Matrix = Eigen::MatrixXd;

enum class Activation { none, softplus, sigmoid, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerSpec {
    int width = 100;
    bool batchnorm = true;
    Activation activation = Activation::softplus;
};

struct Layer {
    Activation activation = Activation::none;
    double beta = 1.0; // softplus sharpness
    bool batchnorm = false;
    Matrix weight;     // fan_in x width
    Matrix bias;       // 1 x width, only without batchnorm
    Matrix gamma;      // 1 x width
    Matrix eta;        // 1 x width
    Matrix running_mean;
    Matrix running_var;
};

/// Scalar activation helpers, exposed for tests.
double softplus(double x, double beta);
double sigmoid(double x);

struct BatchNormConfig {
    double momentum = 0.9; // running = momentum * running + (1 - momentum) * batch
    double eps = 1e-5;
};

/// Gradients in the same order as Network::params().
using Gradients = std::vector<Matrix>;

class Network;

/// Intermediates of a train-mode forward pass. Only valid for the parameter
/// version it was recorded against.
struct Cache {
    std::uint64_t version = 0;
    const Network* owner = nullptr;
    Matrix input;                 // standardised input
    std::vector<Matrix> pre;      // layer input H_l
    std::vector<Matrix> xhat;     // normalised pre-activation (batchnorm layers)
    std::vector<Matrix> inv_std;  // 1 x width (batchnorm layers)
    std::vector<Matrix> z;        // pre-activation after batchnorm / bias
};

class Network {
public:
    Network() = default;

    /// Glorot-uniform weights from a seeded generator; gamma = 1, eta = 0,
    /// bias = 0, running mean 0 and variance 1.
    static Network make(int input_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed, double beta = 1.0,
                        BatchNormConfig bn = {});

    int input_dim() const { return input_dim_; }
    int output_dim() const;
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    const BatchNormConfig& bn_config() const { return bn_; }

    /// Fixed input standardisation x' = (x - shift) / scale.
    void set_input_standardization(const Matrix& shift, const Matrix& scale);
    const Matrix& input_shift() const { return in_shift_; }
    const Matrix& input_scale() const { return in_scale_; }

    /// Eval mode: batchnorm uses running statistics.
    Matrix forward(const Matrix& x) const;

    /// Train mode: batchnorm uses batch statistics. Running statistics are
    /// updated only when `update_running` is set.
    Matrix forward_train(const Matrix& x, Cache& cache, bool update_running = true);
    Matrix forward_train(const Matrix& x, Cache& cache) const;

    /// Reverse pass for a train-mode cache. Returns parameter gradients and,
    /// when `d_input` is given, the gradient w.r.t. the raw input.
    Gradients backward(const Cache& cache, const Matrix& d_output, Matrix* d_input = nullptr) const;

    std::vector<Matrix*> params();
    std::vector<const Matrix*> params() const;
    std::vector<std::string> param_names() const;
    Gradients zero_gradients() const;

    std::uint64_t version() const { return version_; }
    void touch() { ++version_; }

    void save(std::ostream& os) const;
    void save(const std::string& path) const;
    static Network load(std::istream& is);
    static Network load(const std::string& path);

private:
    Matrix forward_impl(const Matrix& x, Cache* cache, bool update_running);
    Matrix forward_batch(const Matrix& x, Cache* cache, std::vector<Matrix>* batch_mean,
                         std::vector<Matrix>* batch_var) const;

    int input_dim_ = 0;
    Matrix in_shift_;
    Matrix in_scale_;
    std::vector<Layer> layers_;
    BatchNormConfig bn_;
    std::uint64_t version_ = 1;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    /// Bias-corrected Adam update. A non-finite gradient aborts the step
    /// with NumericError before any parameter changes.
    void step(Network& net, const Gradients& grads);
    void step(const std::vector<Matrix*>& params, const Gradients& grads);

    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

} // namespace volgan::nn

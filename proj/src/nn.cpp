#include "volgan/nn.hpp"

#include "volgan/errors.hpp"
#include "volgan/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace volgan::nn {

namespace {

constexpr const char* kMagic = "volgan-mlp";
constexpr int kFormatVersion = 1;

Matrix activate(const Matrix& z, Activation a, double beta) {
    switch (a) {
    case Activation::none: return z;
    case Activation::softplus: return z.unaryExpr([beta](double x) { return softplus(x, beta); });
    case Activation::sigmoid: return z.unaryExpr([](double x) { return sigmoid(x); });
    case Activation::relu: return z.cwiseMax(0.0);
    }
    return z;
}

// Derivative of the activation evaluated from its input.
Matrix activate_grad(const Matrix& z, Activation a, double beta) {
    switch (a) {
    case Activation::none: return Matrix::Ones(z.rows(), z.cols());
    case Activation::softplus: return z.unaryExpr([beta](double x) { return sigmoid(beta * x); });
    case Activation::sigmoid:
        return z.unaryExpr([](double x) {
            const double s = sigmoid(x);
            return s * (1.0 - s);
        });
    case Activation::relu: return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    }
    return Matrix::Ones(z.rows(), z.cols());
}

void write_matrix(std::ostream& os, const char* name, const Matrix& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << io::format_double(m(r, c));
    }
    os << '\n';
}

std::string next_token(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw DataError("checkpoint: unexpected end of file");
    return tok;
}

long next_long(std::istream& is) { return io::parse_long(next_token(is), 0); }

Matrix read_matrix(std::istream& is, const char* name) {
    if (next_token(is) != name) throw DataError(std::string("checkpoint: expected matrix ") + name);
    const long rows = next_long(is);
    const long cols = next_long(is);
    if (rows < 0 || cols < 0) throw DataError("checkpoint: negative matrix size");
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) m(r, c) = io::parse_double(next_token(is), 0);
    }
    return m;
}

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("nn: non-finite ") + what);
}

} // namespace

double softplus(double x, double beta) {
    const double bx = beta * x;
    return (std::max(bx, 0.0) + std::log1p(std::exp(-std::abs(bx)))) / beta;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::none: return "none";
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    }
    return "none";
}

Activation activation_from_string(const std::string& name) {
    for (Activation a : {Activation::none, Activation::softplus, Activation::sigmoid, Activation::relu}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("unknown activation '" + name + "'");
}

Network Network::make(int input_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed, double beta,
                      BatchNormConfig bn) {
    if (input_dim < 1 || specs.empty()) throw ConfigError("nn: need input_dim >= 1 and at least one layer");
    if (!(beta > 0.0)) throw ConfigError("nn: softplus beta must be positive");
    Network net;
    net.input_dim_ = input_dim;
    net.bn_ = bn;
    net.in_shift_ = Matrix::Zero(1, input_dim);
    net.in_scale_ = Matrix::Ones(1, input_dim);
    std::mt19937_64 rng(seed);
    int fan_in = input_dim;
    for (const auto& s : specs) {
        if (s.width < 1) throw ConfigError("nn: layer width must be >= 1");
        Layer l;
        l.activation = s.activation;
        l.beta = beta;
        l.batchnorm = s.batchnorm;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + s.width));
        std::uniform_real_distribution<double> u(-limit, limit);
        l.weight.resize(fan_in, s.width);
        for (int c = 0; c < s.width; ++c) {
            for (int r = 0; r < fan_in; ++r) l.weight(r, c) = u(rng);
        }
        if (s.batchnorm) {
            l.gamma = Matrix::Ones(1, s.width);
            l.eta = Matrix::Zero(1, s.width);
            l.running_mean = Matrix::Zero(1, s.width);
            l.running_var = Matrix::Ones(1, s.width);
        } else {
            l.bias = Matrix::Zero(1, s.width);
        }
        net.layers_.push_back(std::move(l));
        fan_in = s.width;
    }
    return net;
}

int Network::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

void Network::set_input_standardization(const Matrix& shift, const Matrix& scale) {
    if (shift.rows() != 1 || scale.rows() != 1 || shift.cols() != input_dim_ || scale.cols() != input_dim_) {
        throw ShapeError("nn: standardisation vectors must be 1 x input_dim");
    }
    if ((scale.array() <= 0.0).any() || !scale.allFinite() || !shift.allFinite()) {
        throw DomainError("nn: standardisation scale must be positive and finite");
    }
    in_shift_ = shift;
    in_scale_ = scale;
}

Matrix Network::forward(const Matrix& x) const {
    if (x.cols() != input_dim_) throw ShapeError("nn: input has wrong number of columns");
    Matrix h = (x.rowwise() - in_shift_.row(0)).array().rowwise() / in_scale_.row(0).array();
    for (const auto& l : layers_) {
        Matrix z = h * l.weight;
        if (l.batchnorm) {
            const Eigen::RowVectorXd inv = (l.running_var.array() + bn_.eps).rsqrt().matrix();
            z = ((z.rowwise() - l.running_mean.row(0)).array().rowwise() * (inv.array() * l.gamma.row(0).array()))
                    .rowwise() +
                l.eta.row(0).array();
        } else {
            z.rowwise() += l.bias.row(0);
        }
        h = activate(z, l.activation, l.beta);
    }
    return h;
}

Matrix Network::forward_batch(const Matrix& x, Cache* cache, std::vector<Matrix>* batch_mean,
                              std::vector<Matrix>* batch_var) const {
    if (x.cols() != input_dim_) throw ShapeError("nn: input has wrong number of columns");
    const auto b = x.rows();
    const bool any_bn = std::any_of(layers_.begin(), layers_.end(), [](const Layer& l) { return l.batchnorm; });
    if (any_bn && b < 2) throw ShapeError("nn: batchnorm needs a batch of at least 2 rows");
    Matrix h = (x.rowwise() - in_shift_.row(0)).array().rowwise() / in_scale_.row(0).array();
    if (cache) {
        *cache = Cache{};
        cache->version = version_;
        cache->owner = this;
        cache->input = h;
    }
    for (const auto& l : layers_) {
        if (cache) cache->pre.push_back(h);
        Matrix z = h * l.weight;
        Matrix xhat;
        Matrix inv_std;
        if (l.batchnorm) {
            const Eigen::RowVectorXd mu = z.colwise().mean();
            const Matrix centered = z.rowwise() - mu;
            const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
            inv_std = (var.array() + bn_.eps).rsqrt().matrix();
            xhat = centered.array().rowwise() * inv_std.row(0).array();
            z = (xhat.array().rowwise() * l.gamma.row(0).array()).rowwise() + l.eta.row(0).array();
            if (batch_mean) batch_mean->push_back(mu);
            if (batch_var) batch_var->push_back(var);
        } else {
            z.rowwise() += l.bias.row(0);
            if (batch_mean) batch_mean->push_back(Matrix());
            if (batch_var) batch_var->push_back(Matrix());
        }
        if (cache) {
            cache->xhat.push_back(xhat);
            cache->inv_std.push_back(inv_std);
            cache->z.push_back(z);
        }
        h = activate(z, l.activation, l.beta);
    }
    return h;
}

Matrix Network::forward_train(const Matrix& x, Cache& cache, bool update_running) {
    std::vector<Matrix> mean;
    std::vector<Matrix> var;
    Matrix y = forward_batch(x, &cache, &mean, &var);
    if (update_running) {
        const double m = bn_.momentum;
        const double n = static_cast<double>(x.rows());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            if (!l.batchnorm) continue;
            l.running_mean = m * l.running_mean + (1.0 - m) * mean[i];
            l.running_var = m * l.running_var + (1.0 - m) * var[i] * (n / (n - 1.0));
        }
    }
    return y;
}

Matrix Network::forward_train(const Matrix& x, Cache& cache) const { return forward_batch(x, &cache, nullptr, nullptr); }

Gradients Network::backward(const Cache& cache, const Matrix& d_output, Matrix* d_input) const {
    if (cache.owner != this || cache.version != version_ || cache.pre.size() != layers_.size()) {
        throw StateError("nn: backward called with a stale or foreign cache");
    }
    const auto b = cache.input.rows();
    if (d_output.rows() != b || d_output.cols() != output_dim()) throw ShapeError("nn: upstream gradient shape mismatch");

    Gradients grads;
    std::vector<std::vector<Matrix>> per_layer(layers_.size());
    Matrix g = d_output;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& l = layers_[li];
        Matrix dz = g.cwiseProduct(activate_grad(cache.z[li], l.activation, l.beta));
        Matrix da;
        auto& out = per_layer[li];
        if (l.batchnorm) {
            const Matrix& xhat = cache.xhat[li];
            const Matrix d_gamma = (dz.cwiseProduct(xhat)).colwise().sum();
            const Matrix d_eta = dz.colwise().sum();
            const Matrix dxhat = dz.array().rowwise() * l.gamma.row(0).array();
            const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
            const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
            const double n = static_cast<double>(b);
            Matrix t = (n * dxhat).rowwise() - sum_dxhat;
            t -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
            da = (t.array().rowwise() * (cache.inv_std[li].row(0).array() / n)).matrix();
            out.push_back(cache.pre[li].transpose() * da);
            out.push_back(d_gamma);
            out.push_back(d_eta);
        } else {
            da = dz;
            out.push_back(cache.pre[li].transpose() * da);
            out.push_back(da.colwise().sum());
        }
        g = da * l.weight.transpose();
    }
    for (auto& v : per_layer) {
        for (auto& m : v) grads.push_back(std::move(m));
    }
    if (d_input) *d_input = g.array().rowwise() / in_scale_.row(0).array();
    return grads;
}

std::vector<Matrix*> Network::params() {
    std::vector<Matrix*> out;
    for (auto& l : layers_) {
        out.push_back(&l.weight);
        if (l.batchnorm) {
            out.push_back(&l.gamma);
            out.push_back(&l.eta);
        } else {
            out.push_back(&l.bias);
        }
    }
    return out;
}

std::vector<const Matrix*> Network::params() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers_) {
        out.push_back(&l.weight);
        if (l.batchnorm) {
            out.push_back(&l.gamma);
            out.push_back(&l.eta);
        } else {
            out.push_back(&l.bias);
        }
    }
    return out;
}

std::vector<std::string> Network::param_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto n = std::to_string(i);
        out.push_back("W" + n);
        if (layers_[i].batchnorm) {
            out.push_back("gamma" + n);
            out.push_back("eta" + n);
        } else {
            out.push_back("bias" + n);
        }
    }
    return out;
}

Gradients Network::zero_gradients() const {
    Gradients g;
    for (const Matrix* p : params()) g.push_back(Matrix::Zero(p->rows(), p->cols()));
    return g;
}

void Network::save(std::ostream& os) const {
    os << kMagic << ' ' << kFormatVersion << '\n';
    os << "input_dim " << input_dim_ << '\n';
    os << "batchnorm " << io::format_double(bn_.momentum) << ' ' << io::format_double(bn_.eps) << '\n';
    write_matrix(os, "input_shift", in_shift_);
    write_matrix(os, "input_scale", in_scale_);
    os << "layers " << layers_.size() << '\n';
    for (const auto& l : layers_) {
        os << "layer " << to_string(l.activation) << ' ' << io::format_double(l.beta) << ' ' << (l.batchnorm ? 1 : 0)
           << '\n';
        write_matrix(os, "weight", l.weight);
        if (l.batchnorm) {
            write_matrix(os, "gamma", l.gamma);
            write_matrix(os, "eta", l.eta);
            write_matrix(os, "running_mean", l.running_mean);
            write_matrix(os, "running_var", l.running_var);
        } else {
            write_matrix(os, "bias", l.bias);
        }
    }
}

void Network::save(const std::string& path) const {
    auto os = io::open_output(path);
    save(os);
    if (!os) throw DataError("checkpoint: write failed: " + path);
}

Network Network::load(std::istream& is) {
    if (next_token(is) != kMagic) throw DataError("checkpoint: bad magic");
    if (next_long(is) != kFormatVersion) throw DataError("checkpoint: unsupported version");
    Network net;
    if (next_token(is) != "input_dim") throw DataError("checkpoint: expected input_dim");
    net.input_dim_ = static_cast<int>(next_long(is));
    if (next_token(is) != "batchnorm") throw DataError("checkpoint: expected batchnorm");
    net.bn_.momentum = io::parse_double(next_token(is), 0);
    net.bn_.eps = io::parse_double(next_token(is), 0);
    net.in_shift_ = read_matrix(is, "input_shift");
    net.in_scale_ = read_matrix(is, "input_scale");
    if (next_token(is) != "layers") throw DataError("checkpoint: expected layers");
    const long n = next_long(is);
    Eigen::Index fan_in = net.input_dim_;
    for (long i = 0; i < n; ++i) {
        if (next_token(is) != "layer") throw DataError("checkpoint: expected layer");
        Layer l;
        l.activation = activation_from_string(next_token(is));
        l.beta = io::parse_double(next_token(is), 0);
        l.batchnorm = next_long(is) != 0;
        l.weight = read_matrix(is, "weight");
        if (l.weight.rows() != fan_in) throw ShapeError("checkpoint: layer dimensions do not chain");
        if (l.batchnorm) {
            l.gamma = read_matrix(is, "gamma");
            l.eta = read_matrix(is, "eta");
            l.running_mean = read_matrix(is, "running_mean");
            l.running_var = read_matrix(is, "running_var");
        } else {
            l.bias = read_matrix(is, "bias");
        }
        fan_in = l.weight.cols();
        net.layers_.push_back(std::move(l));
    }
    return net;
}

Network Network::load(const std::string& path) {
    auto is = io::open_input(path);
    return load(is);
}

void Adam::step(Network& net, const Gradients& grads) {
    step(net.params(), grads);
    net.touch();
}

void Adam::step(const std::vector<Matrix*>& params, const Gradients& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
            throw ShapeError("adam: gradient shape mismatch");
        }
        require_finite(grads[i], "gradient in adam step");
    }
    if (m_.empty()) {
        for (const auto& g : grads) {
            m_.push_back(Matrix::Zero(g.rows(), g.cols()));
            v_.push_back(Matrix::Zero(g.rows(), g.cols()));
        }
    } else if (m_.size() != grads.size()) {
        throw StateError("adam: parameter set changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
        *params[i] -= (cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps)).matrix();
    }
}

} // namespace volgan::nn

#include "rlfd/nn.hpp"

#include "rlfd/errors.hpp"

#include <cmath>

namespace rlfd {

std::string to_string(Activation activation) {
    return activation == Activation::Relu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw InvalidArgument("unknown activation: " + name);
}

int Mlp::parameter_count() const {
    int n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<int>(weights[l].size() + biases[l].size());
    return n;
}

Eigen::VectorXd Mlp::parameters() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.segment(o, weights[l].size()) = weights[l].reshaped();
        o += weights[l].size();
        flat.segment(o, biases[l].size()) = biases[l];
        o += biases[l].size();
    }
    return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("Mlp::set_parameters: size mismatch");
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l].reshaped() = flat.segment(o, weights[l].size());
        o += weights[l].size();
        biases[l] = flat.segment(o, biases[l].size());
        o += biases[l].size();
    }
}

Mlp make_mlp(const std::vector<int>& sizes, Activation activation, std::mt19937_64& rng, double output_scale) {
    if (sizes.size() < 2) throw InvalidArgument("make_mlp: need at least input and output sizes");
    for (int s : sizes)
        if (s < 1) throw InvalidArgument("make_mlp: layer sizes must be positive");
    Mlp net;
    net.sizes = sizes;
    net.activation = activation;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
        const double scale = l + 2 == sizes.size() ? limit * output_scale : limit;
        Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = scale * u(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }
    return net;
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache) {
    if (x.rows() != net.inputs()) throw InvalidArgument("mlp_forward: input size mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Eigen::MatrixXd h = x;
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = net.weights[l] * h;
        z.colwise() += net.biases[l];
        if (cache) {
            cache->inputs.push_back(h);
            cache->pre.push_back(z);
        }
        if (l + 1 == layers) {
            h = std::move(z);
        } else if (net.activation == Activation::Relu) {
            h = z.cwiseMax(0.0);
        } else {
            h = z.array().tanh().matrix();
        }
    }
    return h;
}

Eigen::MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_out,
                             Eigen::VectorXd* grad) {
    const std::size_t layers = net.weights.size();
    if (cache.pre.size() != layers) throw InvalidArgument("mlp_backward: cache from a different network");
    if (grad && grad->size() != net.parameter_count()) throw InvalidArgument("mlp_backward: gradient size mismatch");

    // Offsets of each layer in the flat layout.
    std::vector<Eigen::Index> offset(layers);
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offset[l] = o;
        o += net.weights[l].size() + net.biases[l].size();
    }

    Eigen::MatrixXd g = grad_out;
    for (std::size_t l = layers; l-- > 0;) {
        if (l + 1 < layers) {
            if (net.activation == Activation::Relu) {
                g = g.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
            } else {
                g = g.cwiseProduct((1.0 - cache.pre[l].array().tanh().square()).matrix());
            }
        }
        if (grad) {
            const Eigen::MatrixXd dw = g * cache.inputs[l].transpose();
            grad->segment(offset[l], dw.size()) += dw.reshaped();
            grad->segment(offset[l] + dw.size(), net.biases[l].size()) += g.rowwise().sum();
        }
        g = net.weights[l].transpose() * g;
    }
    return g;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (m.size() != params.size()) {
        m = Eigen::VectorXd::Zero(params.size());
        v = Eigen::VectorXd::Zero(params.size());
        t = 0;
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

void adam_step(Mlp& net, Adam& opt, const Eigen::VectorXd& grad) {
    Eigen::VectorXd p = net.parameters();
    opt.step(p, grad);
    net.set_parameters(p);
}

void soft_update(Mlp& target, const Mlp& online, double rho) {
    if (target.parameter_count() != online.parameter_count()) throw InvalidArgument("soft_update: shape mismatch");
    target.set_parameters(rho * online.parameters() + (1.0 - rho) * target.parameters());
}

}  // namespace rlfd

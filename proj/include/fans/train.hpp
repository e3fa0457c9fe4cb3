#pragma once
// Minibatch Adam training for the toy-model zoo.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fans/datasets.hpp"
#include "fans/error.hpp"
#include "fans/model.hpp"
#include "fans/random.hpp"

namespace fans {

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.05;
    std::size_t batch_size = 64;  // 0 = full batch
    double l2 = 0.0;
};

/// Sizes [d, K] with sigmoid head when K = 1 (binary) or softmax otherwise.
inline Architecture logistic_architecture(std::size_t d, std::size_t num_classes) {
    if (num_classes <= 2) return Architecture{{d, 1}, {}, Head::sigmoid};
    return Architecture{{d, num_classes}, {}, Head::softmax};
}

/// Xavier-uniform weights, zero biases.
inline Mlp init_mlp(const Architecture& arch, std::uint64_t seed) {
    Mlp model = Mlp::zeros(arch);
    Rng rng = Rng::stream(seed, StreamTag::training, {0});
    for (DenseLayer& layer : model.mutable_layers()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.rows + layer.cols));
        for (double& w : layer.weights) w = rng.uniform(-limit, limit);
    }
    return model;
}

inline double accuracy(const Predictor& model, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        hits += predicted_class(model, ds.inputs[i]) == static_cast<std::size_t>(ds.labels[i]);
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

/// Cross-entropy (softmax / sigmoid heads) or squared error (identity head)
/// minimised with Adam. Deterministic given the seed.
inline Mlp fit_mlp(const Dataset& ds, const Architecture& arch, const TrainConfig& cfg, std::uint64_t seed) {
    if (ds.size() == 0) throw ConfigError("fit: dataset is empty");
    ds.validate();
    if (arch.sizes.empty() || arch.sizes.front() != ds.dim())
        throw ConfigError("fit: architecture input width does not match dataset dimension " + std::to_string(ds.dim()));
    if (arch.head == Head::softmax && arch.sizes.back() < ds.num_classes)
        throw ConfigError("fit: softmax head has fewer outputs than classes");
    if (arch.head == Head::sigmoid && ds.num_classes > 2)
        throw ConfigError("fit: sigmoid head supports binary labels only");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("fit: learning rate must be positive");

    Mlp model = init_mlp(arch, seed);
    if (cfg.epochs == 0) return model;

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    auto zero_like = [&] {
        std::vector<DenseLayer> g;
        for (const DenseLayer& l : model.layers()) g.push_back(DenseLayer::zeros(l.rows, l.cols));
        return g;
    };
    std::vector<DenseLayer> m1 = zero_like(), m2 = zero_like();
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = cfg.batch_size == 0 ? ds.size() : std::min(cfg.batch_size, ds.size());
    Rng rng = Rng::stream(seed, StreamTag::training, {1});
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = ds.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < ds.size(); start += batch) {
            const std::size_t stop = std::min(start + batch, ds.size());
            std::vector<DenseLayer> grads = zero_like();
            double loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t r = order[b];
                const auto pass = model.forward(ds.inputs[r]);
                const Vector& out = pass.output;
                const int y = ds.labels[r];
                Vector delta(out.size());
                switch (model.head()) {
                    case Head::softmax:
                        for (std::size_t j = 0; j < out.size(); ++j)
                            delta[j] = out[j] - (static_cast<int>(j) == y ? 1.0 : 0.0);
                        loss -= std::log(std::max(out[static_cast<std::size_t>(y)], 1e-300));
                        break;
                    case Head::sigmoid:
                        delta[0] = out[0] - y;
                        loss -= std::log(std::max(y ? out[0] : 1.0 - out[0], 1e-300));
                        break;
                    case Head::identity:
                        delta[0] = 2.0 * (out[0] - y);
                        loss += (out[0] - y) * (out[0] - y);
                        break;
                }
                model.backward(pass, std::move(delta), &grads);
            }
            if (!std::isfinite(loss)) throw NumericError("fit: training diverged (non-finite loss)");
            ++step;
            const double scale = 1.0 / static_cast<double>(stop - start);
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto& layers = model.mutable_layers();
            auto update = [&](double& param, double g, double& a, double& v) {
                a = beta1 * a + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                param -= cfg.learning_rate * (a / c1) / (std::sqrt(v / c2) + eps);
            };
            for (std::size_t l = 0; l < layers.size(); ++l) {
                for (std::size_t i = 0; i < layers[l].weights.size(); ++i)
                    update(layers[l].weights[i], grads[l].weights[i] * scale + cfg.l2 * layers[l].weights[i],
                           m1[l].weights[i], m2[l].weights[i]);
                for (std::size_t i = 0; i < layers[l].bias.size(); ++i)
                    update(layers[l].bias[i], grads[l].bias[i] * scale, m1[l].bias[i], m2[l].bias[i]);
            }
        }
    }
    for (const DenseLayer& l : model.layers())
        if (!all_finite(l.weights) || !all_finite(l.bias)) throw NumericError("fit: training diverged");
    return model;
}

}  // namespace fans

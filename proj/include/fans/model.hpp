#pragma once
// Black-box predictor interface and the differentiable toy-model zoo.
//
// Every estimator in fans sees the model only through Predictor: a pure
// map from an input vector to K class probabilities (or one scalar for
// K = 1), plus an optional input-gradient channel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fans/error.hpp"
#include "fans/vector.hpp"

namespace fans {

class Predictor {
public:
    virtual ~Predictor() = default;

    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Vector predict(std::span<const double> x) const = 0;

    virtual bool has_gradient() const { return false; }

    /// d predict(x)[k] / dx.
    virtual Vector input_gradient(std::span<const double> /*x*/, std::size_t /*k*/) const {
        throw CapabilityError("model has no gradient channel");
    }

    /// Score above which a single-output model predicts class 1.
    virtual double decision_threshold() const { return 0.5; }
};

/// Output index used wherever a scalar prediction is needed.
struct Readout {
    std::size_t index = 0;
};

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

/// Readout fixed at the class the model assigns to the target input.
inline Readout readout_for(const Predictor& model, std::span<const double> target) {
    const Vector p = model.predict(target);
    return Readout{model.output_dim() == 1 ? 0 : argmax(p)};
}

inline void check_readout(const Predictor& model, Readout r) {
    if (r.index >= model.output_dim()) {
        throw ConfigError("readout index " + std::to_string(r.index) + " out of range for " +
                          std::to_string(model.output_dim()) + " outputs");
    }
}

inline double predict_scalar(const Predictor& model, std::span<const double> x, Readout r) {
    check_readout(model, r);
    return model.predict(x)[r.index];
}

inline Vector input_gradient(const Predictor& model, std::span<const double> x, Readout r) {
    check_readout(model, r);
    return model.input_gradient(x, r.index);
}

/// Absolute input gradient.
inline Vector saliency(const Predictor& model, std::span<const double> x, Readout r) {
    Vector g = input_gradient(model, x, r);
    for (double& v : g) v = std::abs(v);
    return g;
}

/// Class decision: argmax for K > 1, thresholded score for K = 1.
inline std::size_t predicted_class(const Predictor& model, std::span<const double> x) {
    const Vector p = model.predict(x);
    if (p.size() == 1) return p[0] > model.decision_threshold() ? 1 : 0;
    return argmax(p);
}

// ---------------------------------------------------------------------------
// Multilayer perceptron

enum class Activation { identity, relu, tanh, sigmoid };
enum class Head { softmax, sigmoid, identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline std::string_view to_string(Head h) {
    switch (h) {
        case Head::softmax: return "softmax";
        case Head::sigmoid: return "sigmoid";
        case Head::identity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline Head parse_head(std::string_view s) {
    if (s == "softmax") return Head::softmax;
    if (s == "sigmoid") return Head::sigmoid;
    if (s == "identity") return Head::identity;
    throw ConfigError("unknown head '" + std::string(s) + "'");
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace detail {

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > 0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return sigmoid(z);
    }
    return z;
}

// Derivative expressed through the pre-activation z.
inline double activate_prime(Activation a, double z) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return z > 0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = sigmoid(z);
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

}  // namespace detail

/// Dense affine map y = W x + b, W stored row-major with `rows` outputs.
struct DenseLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vector weights;
    Vector bias;

    static DenseLayer zeros(std::size_t rows, std::size_t cols) {
        return DenseLayer{rows, cols, Vector(rows * cols, 0.0), Vector(rows, 0.0)};
    }

    double& w(std::size_t r, std::size_t c) { return weights[r * cols + c]; }
    double w(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

/// Layer widths [d, h1, ..., K], one activation per hidden layer, output head.
struct Architecture {
    std::vector<std::size_t> sizes;
    std::vector<Activation> activations;
    Head head = Head::softmax;
};

class Mlp final : public Predictor {
public:
    /// Cached intermediate values of one forward pass.
    struct ForwardPass {
        std::vector<Vector> inputs;  // input to layer l
        std::vector<Vector> pre;     // W_l a_l + b_l
        Vector output;               // after the head
    };

    Mlp(std::vector<DenseLayer> layers, std::vector<Activation> hidden, Head head)
        : layers_(std::move(layers)), hidden_(std::move(hidden)), head_(head) {
        validate();
    }

    static Mlp zeros(const Architecture& arch) {
        if (arch.sizes.size() < 2) throw ValidationError("architecture needs at least input and output sizes");
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < arch.sizes.size(); ++l)
            layers.push_back(DenseLayer::zeros(arch.sizes[l + 1], arch.sizes[l]));
        return Mlp(std::move(layers), arch.activations, arch.head);
    }

    /// Single-output logistic regression sigma(w.x + bias).
    static Mlp logistic(Vector w, double bias) {
        const std::size_t d = w.size();
        return Mlp({DenseLayer{1, d, std::move(w), {bias}}}, {}, Head::sigmoid);
    }

    /// Single-output affine model w.x + bias with no squashing.
    static Mlp linear(Vector w, double bias) {
        const std::size_t d = w.size();
        return Mlp({DenseLayer{1, d, std::move(w), {bias}}}, {}, Head::identity);
    }

    std::size_t input_dim() const override { return layers_.front().cols; }
    std::size_t output_dim() const override { return layers_.back().rows; }
    bool has_gradient() const override { return true; }
    double decision_threshold() const override { return head_ == Head::identity ? 0.0 : 0.5; }

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }
    const std::vector<Activation>& hidden_activations() const { return hidden_; }
    Head head() const { return head_; }

    Architecture architecture() const {
        Architecture a;
        a.sizes.push_back(input_dim());
        for (const auto& l : layers_) a.sizes.push_back(l.rows);
        a.activations = hidden_;
        a.head = head_;
        return a;
    }

    ForwardPass forward(std::span<const double> x) const {
        require_size(x, input_dim(), "model input");
        ForwardPass pass;
        pass.inputs.reserve(layers_.size());
        pass.pre.reserve(layers_.size());
        Vector a(x.begin(), x.end());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const DenseLayer& layer = layers_[l];
            Vector z(layer.bias);
            for (std::size_t r = 0; r < layer.rows; ++r) {
                const double* row = &layer.weights[r * layer.cols];
                double acc = 0.0;
                for (std::size_t c = 0; c < layer.cols; ++c) acc += row[c] * a[c];
                z[r] += acc;
            }
            pass.inputs.push_back(std::move(a));
            if (l + 1 < layers_.size()) {
                a.resize(z.size());
                for (std::size_t r = 0; r < z.size(); ++r) a[r] = detail::activate(hidden_[l], z[r]);
            }
            pass.pre.push_back(std::move(z));
        }
        pass.output = apply_head(pass.pre.back());
        if (!all_finite(pass.output)) throw NumericError("non-finite model output (activation overflow)");
        return pass;
    }

    Vector predict(std::span<const double> x) const override { return forward(x).output; }

    Vector input_gradient(std::span<const double> x, std::size_t k) const override {
        if (k >= output_dim()) throw ConfigError("readout index out of range");
        const ForwardPass pass = forward(x);
        return backward(pass, head_jacobian_row(pass.output, k), nullptr);
    }

    /// d output[k] / d pre-head logits.
    Vector head_jacobian_row(std::span<const double> output, std::size_t k) const {
        Vector delta(output.size(), 0.0);
        switch (head_) {
            case Head::softmax:
                for (std::size_t j = 0; j < output.size(); ++j)
                    delta[j] = output[k] * ((j == k ? 1.0 : 0.0) - output[j]);
                break;
            case Head::sigmoid: delta[k] = output[k] * (1.0 - output[k]); break;
            case Head::identity: delta[k] = 1.0; break;
        }
        return delta;
    }

    /// Backpropagates a gradient with respect to the logits. Returns the
    /// input gradient; accumulates parameter gradients when `grads` is set
    /// (same shapes as layers()).
    Vector backward(const ForwardPass& pass, Vector delta, std::vector<DenseLayer>* grads) const {
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const DenseLayer& layer = layers_[l];
            const Vector& a = pass.inputs[l];
            if (grads) {
                DenseLayer& g = (*grads)[l];
                for (std::size_t r = 0; r < layer.rows; ++r) {
                    g.bias[r] += delta[r];
                    double* row = &g.weights[r * layer.cols];
                    for (std::size_t c = 0; c < layer.cols; ++c) row[c] += delta[r] * a[c];
                }
            }
            Vector upstream(layer.cols, 0.0);
            for (std::size_t r = 0; r < layer.rows; ++r) {
                const double* row = &layer.weights[r * layer.cols];
                for (std::size_t c = 0; c < layer.cols; ++c) upstream[c] += row[c] * delta[r];
            }
            if (l > 0) {
                const Vector& z = pass.pre[l - 1];
                for (std::size_t c = 0; c < upstream.size(); ++c)
                    upstream[c] *= detail::activate_prime(hidden_[l - 1], z[c]);
            }
            delta = std::move(upstream);
        }
        return delta;
    }

private:
    Vector apply_head(const Vector& z) const {
        switch (head_) {
            case Head::softmax: {
                const double m = *std::max_element(z.begin(), z.end());
                Vector p(z.size());
                double sum = 0.0;
                for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - m));
                for (double& v : p) v /= sum;
                return p;
            }
            case Head::sigmoid: return Vector{sigmoid(z[0])};
            case Head::identity: return z;
        }
        return z;
    }

    void validate() const {
        if (layers_.empty()) throw ValidationError("model has no layers");
        if (hidden_.size() + 1 != layers_.size()) {
            throw ValidationError("expected " + std::to_string(layers_.size() - 1) + " hidden activations, got " +
                                  std::to_string(hidden_.size()));
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const DenseLayer& layer = layers_[l];
            const std::string name = "layer " + std::to_string(l);
            if (layer.rows == 0 || layer.cols == 0) throw ValidationError(name + ": zero-sized layer");
            if (layer.weights.size() != layer.rows * layer.cols)
                throw ValidationError(name + ": weights length " + std::to_string(layer.weights.size()) +
                                      " does not match rows*cols = " + std::to_string(layer.rows * layer.cols));
            if (layer.bias.size() != layer.rows)
                throw ValidationError(name + ": bias length " + std::to_string(layer.bias.size()) +
                                      " does not match rows = " + std::to_string(layer.rows));
            if (l > 0 && layer.cols != layers_[l - 1].rows)
                throw ValidationError(name + ": input width " + std::to_string(layer.cols) +
                                      " does not match previous output width " + std::to_string(layers_[l - 1].rows));
            if (!all_finite(layer.weights) || !all_finite(layer.bias))
                throw NumericError(name + ": non-finite weight");
        }
        const std::size_t k = layers_.back().rows;
        if (head_ == Head::softmax && k < 2) throw ValidationError("softmax head needs at least 2 outputs");
        if (head_ != Head::softmax && k != 1)
            throw ValidationError(std::string(to_string(head_)) + " head needs exactly 1 output");
    }

    std::vector<DenseLayer> layers_;
    std::vector<Activation> hidden_;
    Head head_;
};

/// Opaque predictor backed by a callable; no gradient channel.
class FunctionModel final : public Predictor {
public:
    using Fn = std::function<Vector(std::span<const double>)>;

    FunctionModel(std::size_t input_dim, std::size_t output_dim, Fn fn, double threshold = 0.5)
        : d_(input_dim), k_(output_dim), fn_(std::move(fn)), threshold_(threshold) {}

    std::size_t input_dim() const override { return d_; }
    std::size_t output_dim() const override { return k_; }
    double decision_threshold() const override { return threshold_; }

    Vector predict(std::span<const double> x) const override {
        require_size(x, d_, "model input");
        Vector y = fn_(x);
        require_size(y, k_, "model output");
        if (!all_finite(y)) throw NumericError("non-finite model output");
        return y;
    }

private:
    std::size_t d_;
    std::size_t k_;
    Fn fn_;
    double threshold_;
};

}  // namespace fans

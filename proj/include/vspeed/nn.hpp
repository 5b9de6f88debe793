#pragma once

#include "vspeed/dsp.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vspeed::nn {

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Layer {
    RowMatrix<T> weights;  // fan_out x fan_in
    Vector<T> bias;
};

/// Fully connected regressor: rectifier on hidden layers, identity on the output.
template <typename T>
struct Dnn {
    std::vector<std::size_t> layer_sizes;
    std::vector<Layer<T>> layers;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t parameter_count() const;

    template <typename U>
    Dnn<U> cast() const {
        Dnn<U> out;
        out.layer_sizes = layer_sizes;
        for (const auto& l : layers) {
            out.layers.push_back({l.weights.template cast<U>(), l.bias.template cast<U>()});
        }
        return out;
    }
};

using DnnModel = Dnn<double>;

inline const std::vector<std::size_t> kReferenceLayers{1000, 200, 50, 10, 1};

template <typename T>
struct Samples {
    RowMatrix<T> x;
    Vector<T> y;

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
};

struct TrainConfig {
    int epochs = 200;
    double l2_factor = 1e-3;
    double learning_rate = 1e-3;
    int batch_size = 64;
    std::uint64_t seed = 0;
    bool shuffle = true;
    // Adam moment decay rates and denominator offset
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-7;
};

template <typename T>
struct TrainResult {
    Dnn<T> model;
    std::vector<double> loss_history;  // mean regularized batch loss per epoch
    std::vector<double> val_history;   // validation MSE per epoch, empty without validation data
    int best_epoch = -1;               // epoch whose parameters were kept; -1 when no validation
};

template <typename T>
struct Gradients {
    std::vector<RowMatrix<T>> weights;
    std::vector<Vector<T>> biases;
};

/// Weights ~ N(0, 2/fan_in), biases zero. Deterministic per seed and
/// independent of T (draws are made in double precision).
template <typename T>
Dnn<T> init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

template <typename T>
T forward(const Dnn<T>& model, std::span<const T> features);

template <typename T>
Vector<T> forward_batch(const Dnn<T>& model, const RowMatrix<T>& x);

template <typename T>
double mse(const Dnn<T>& model, const Samples<T>& data);

/// Sum of squared weights over all layers, biases excluded.
template <typename T>
double weight_norm_sq(const Dnn<T>& model);

/// mean((f(x) - y)^2) + l2 * sum ||W||^2
template <typename T>
double regularized_loss(const Dnn<T>& model, const RowMatrix<T>& x, const Vector<T>& y, double l2);

/// Backpropagated gradient of regularized_loss.
template <typename T>
Gradients<T> loss_gradient(const Dnn<T>& model, const RowMatrix<T>& x, const Vector<T>& y, double l2);

/// Sample visiting order for one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

/// Mini-batch Adam on the regularized MSE. With validation data, the
/// parameters of the epoch with the lowest validation MSE are returned.
template <typename T>
TrainResult<T> train(Dnn<T> model, const Samples<T>& data, const TrainConfig& cfg,
                     const Samples<T>* validation = nullptr);

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

/// Compares loss_gradient against central differences on up to `n_params`
/// randomly chosen parameters (all of them when the model is smaller).
GradientCheck gradient_check(const DnnModel& model, std::span<const double> features, double target,
                             double l2_factor, double h = 1e-5, std::size_t n_params = 100,
                             std::uint64_t seed = 0);

/// Text format:
///   vspeed-dnn 1
///   layers <n> <size_0> ... <size_{n-1}>
///   then per layer: "W <l> <rows> <cols>" + rows of values, "b <l> <n>" + one line of values.
template <typename T>
void save_model(const std::filesystem::path& path, const Dnn<T>& model);

template <typename T>
Dnn<T> load_model(const std::filesystem::path& path);

}  // namespace vspeed::nn

#include "vspeed/nn.hpp"

#include "vspeed/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vspeed::nn {

namespace {

template <typename T>
void check_input(const Dnn<T>& model, std::size_t cols) {
    if (model.layers.empty()) {
        throw std::invalid_argument("dnn: model has no layers");
    }
    if (cols != model.input_size()) {
        throw std::invalid_argument("dnn: input length " + std::to_string(cols) + " does not match input layer " +
                                    std::to_string(model.input_size()));
    }
}

// Forward pass keeping pre-activations for backprop.
template <typename T>
struct Trace {
    std::vector<RowMatrix<T>> pre;   // Z_l
    std::vector<RowMatrix<T>> post;  // A_l, post.back() is the output
};

template <typename T>
void run_forward(const Dnn<T>& model, const RowMatrix<T>& x, Trace<T>& tr) {
    const std::size_t n_layers = model.layers.size();
    tr.pre.resize(n_layers);
    tr.post.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const RowMatrix<T>& in = (l == 0) ? x : tr.post[l - 1];
        const auto& layer = model.layers[l];
        tr.pre[l].noalias() = in * layer.weights.transpose();
        tr.pre[l].rowwise() += layer.bias.transpose();
        if (l + 1 < n_layers) {
            tr.post[l] = tr.pre[l].cwiseMax(T(0));
        } else {
            tr.post[l] = tr.pre[l];
        }
    }
}

template <typename T>
void run_backward(const Dnn<T>& model, const RowMatrix<T>& x, const Vector<T>& y, double l2,
                  const Trace<T>& tr, Gradients<T>& g) {
    const std::size_t n_layers = model.layers.size();
    const auto batch = static_cast<T>(x.rows());
    g.weights.resize(n_layers);
    g.biases.resize(n_layers);

    RowMatrix<T> delta = (tr.post.back().col(0) - y) * (T(2) / batch);
    for (std::size_t l = n_layers; l-- > 0;) {
        if (l + 1 < n_layers) {
            delta = delta.cwiseProduct((tr.pre[l].array() > T(0)).template cast<T>().matrix());
        }
        const RowMatrix<T>& in = (l == 0) ? x : tr.post[l - 1];
        const auto& layer = model.layers[l];
        g.weights[l].noalias() = delta.transpose() * in;
        g.weights[l] += static_cast<T>(2.0 * l2) * layer.weights;
        g.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            RowMatrix<T> next = delta * layer.weights;
            delta.swap(next);
        }
    }
}

template <typename T>
struct AdamState {
    std::vector<RowMatrix<T>> m_w, v_w;
    std::vector<Vector<T>> m_b, v_b;

    explicit AdamState(const Dnn<T>& model) {
        for (const auto& l : model.layers) {
            m_w.push_back(RowMatrix<T>::Zero(l.weights.rows(), l.weights.cols()));
            v_w.push_back(RowMatrix<T>::Zero(l.weights.rows(), l.weights.cols()));
            m_b.push_back(Vector<T>::Zero(l.bias.size()));
            v_b.push_back(Vector<T>::Zero(l.bias.size()));
        }
    }
};

template <typename M, typename T>
void adam_step(M& param, const M& grad, M& m, M& v, T b1, T b2, T step, T eps) {
    m.array() = b1 * m.array() + (T(1) - b1) * grad.array();
    v.array() = b2 * v.array() + (T(1) - b2) * grad.array().square();
    param.array() -= step * m.array() / (v.array().sqrt() + eps);
}

template <typename T>
void gather_rows(const Samples<T>& data, std::span<const std::size_t> idx, RowMatrix<T>& xb, Vector<T>& yb) {
    xb.resize(static_cast<Eigen::Index>(idx.size()), data.x.cols());
    yb.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(idx[i]);
        xb.row(static_cast<Eigen::Index>(i)) = data.x.row(src);
        yb(static_cast<Eigen::Index>(i)) = data.y(src);
    }
}

struct ParamRef {
    std::size_t layer;
    bool is_bias;
    Eigen::Index row;
    Eigen::Index col;
};

ParamRef locate(const DnnModel& model, std::size_t flat) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        const auto nw = static_cast<std::size_t>(layer.weights.size());
        if (flat < nw) {
            const auto cols = static_cast<std::size_t>(layer.weights.cols());
            return {l, false, static_cast<Eigen::Index>(flat / cols), static_cast<Eigen::Index>(flat % cols)};
        }
        flat -= nw;
        const auto nb = static_cast<std::size_t>(layer.bias.size());
        if (flat < nb) {
            return {l, true, static_cast<Eigen::Index>(flat), 0};
        }
        flat -= nb;
    }
    throw std::out_of_range("gradient_check: parameter index out of range");
}

double& param_at(DnnModel& model, const ParamRef& p) {
    auto& layer = model.layers[p.layer];
    return p.is_bias ? layer.bias(p.row) : layer.weights(p.row, p.col);
}

double grad_at(const Gradients<double>& g, const ParamRef& p) {
    return p.is_bias ? g.biases[p.layer](p.row) : g.weights[p.layer](p.row, p.col);
}

}  // namespace

template <typename T>
std::size_t Dnn<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    }
    return n;
}

template <typename T>
Dnn<T> init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("init_model: need at least an input and an output layer");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) {
            throw std::invalid_argument("init_model: layer sizes must be positive");
        }
    }
    std::mt19937_64 rng(seed);
    Dnn<T> model;
    model.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(layer_sizes[l]);
        const auto fan_out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Layer<T> layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) {
                layer.weights(r, c) = static_cast<T>(dist(rng));
            }
        }
        layer.bias = Vector<T>::Zero(fan_out);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

template <typename T>
Vector<T> forward_batch(const Dnn<T>& model, const RowMatrix<T>& x) {
    check_input(model, static_cast<std::size_t>(x.cols()));
    Trace<T> tr;
    run_forward(model, x, tr);
    return tr.post.back().col(0);
}

template <typename T>
T forward(const Dnn<T>& model, std::span<const T> features) {
    check_input(model, features.size());
    RowMatrix<T> x = Eigen::Map<const RowMatrix<T>>(features.data(), 1, static_cast<Eigen::Index>(features.size()));
    return forward_batch(model, x)(0);
}

template <typename T>
double mse(const Dnn<T>& model, const Samples<T>& data) {
    if (data.size() == 0) {
        throw std::invalid_argument("mse: empty data");
    }
    constexpr Eigen::Index kChunk = 2048;
    double acc = 0.0;
    for (Eigen::Index start = 0; start < data.x.rows(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, data.x.rows() - start);
        RowMatrix<T> xb = data.x.middleRows(start, n);
        const Vector<T> pred = forward_batch(model, xb);
        acc += (pred - data.y.segment(start, n)).template cast<double>().squaredNorm();
    }
    return acc / static_cast<double>(data.size());
}

template <typename T>
double weight_norm_sq(const Dnn<T>& model) {
    double s = 0.0;
    for (const auto& l : model.layers) {
        s += l.weights.template cast<double>().squaredNorm();
    }
    return s;
}

template <typename T>
double regularized_loss(const Dnn<T>& model, const RowMatrix<T>& x, const Vector<T>& y, double l2) {
    const Vector<T> pred = forward_batch(model, x);
    const double data_term = (pred - y).template cast<double>().squaredNorm() / static_cast<double>(y.size());
    return data_term + l2 * weight_norm_sq(model);
}

template <typename T>
Gradients<T> loss_gradient(const Dnn<T>& model, const RowMatrix<T>& x, const Vector<T>& y, double l2) {
    check_input(model, static_cast<std::size_t>(x.cols()));
    if (x.rows() != y.size() || x.rows() == 0) {
        throw std::invalid_argument("loss_gradient: need matching non-empty inputs and targets");
    }
    Trace<T> tr;
    run_forward(model, x, tr);
    Gradients<T> g;
    run_backward(model, x, y, l2, tr, g);
    return g;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

template <typename T>
TrainResult<T> train(Dnn<T> model, const Samples<T>& data, const TrainConfig& cfg, const Samples<T>* validation) {
    if (data.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (static_cast<std::size_t>(data.x.rows()) != data.size()) {
        throw std::invalid_argument("train: feature/target count mismatch");
    }
    check_input(model, static_cast<std::size_t>(data.x.cols()));
    if (cfg.epochs < 0 || cfg.l2_factor < 0.0 || !(cfg.learning_rate > 0.0) || cfg.batch_size <= 0) {
        throw std::invalid_argument("train: invalid configuration");
    }
    const bool use_val = validation != nullptr && validation->size() > 0;

    TrainResult<T> result;
    result.model = model;
    if (cfg.epochs == 0) {
        return result;
    }

    AdamState<T> adam(model);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T eps = static_cast<T>(cfg.adam_epsilon);
    const std::size_t n = data.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    double best_val = std::numeric_limits<double>::infinity();
    long step = 0;

    RowMatrix<T> xb;
    Vector<T> yb;
    Trace<T> tr;
    Gradients<T> g;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            order = epoch_order(cfg.seed, epoch, n);
        }
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            gather_rows(data, std::span<const std::size_t>(order).subspan(start, len), xb, yb);
            run_forward(model, xb, tr);
            const double data_term =
                (tr.post.back().col(0) - yb).template cast<double>().squaredNorm() / static_cast<double>(len);
            loss_sum += data_term + cfg.l2_factor * weight_norm_sq(model);
            ++n_batches;
            run_backward(model, xb, yb, cfg.l2_factor, tr, g);

            ++step;
            const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            const T lr_t = static_cast<T>(cfg.learning_rate * std::sqrt(bias2) / bias1);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                adam_step(model.layers[l].weights, g.weights[l], adam.m_w[l], adam.v_w[l], b1, b2, lr_t, eps);
                adam_step(model.layers[l].bias, g.biases[l], adam.m_b[l], adam.v_b[l], b1, b2, lr_t, eps);
            }
        }
        result.loss_history.push_back(loss_sum / static_cast<double>(n_batches));

        if (use_val) {
            const double v = mse(model, *validation);
            result.val_history.push_back(v);
            if (v < best_val) {
                best_val = v;
                result.best_epoch = epoch;
                result.model = model;
            }
        }
    }
    if (!use_val) {
        result.model = std::move(model);
    }
    return result;
}

GradientCheck gradient_check(const DnnModel& model, std::span<const double> features, double target,
                             double l2_factor, double h, std::size_t n_params, std::uint64_t seed) {
    check_input(model, features.size());
    RowMatrixD x = Eigen::Map<const RowMatrixD>(features.data(), 1, static_cast<Eigen::Index>(features.size()));
    Vector<double> y(1);
    y(0) = target;

    const Gradients<double> g = loss_gradient(model, x, y, l2_factor);
    const std::size_t total = model.parameter_count();

    std::vector<std::size_t> picks(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (total > n_params) {
        std::mt19937_64 rng(seed);
        std::shuffle(picks.begin(), picks.end(), rng);
        picks.resize(n_params);
    }

    DnnModel probe = model;
    GradientCheck out;
    for (std::size_t flat : picks) {
        const ParamRef ref = locate(probe, flat);
        double& p = param_at(probe, ref);
        const double saved = p;
        p = saved + h;
        const double up = regularized_loss(probe, x, y, l2_factor);
        p = saved - h;
        const double down = regularized_loss(probe, x, y, l2_factor);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grad_at(g, ref);
        // relative error with an absolute floor for near-zero gradients
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
        ++out.checked;
    }
    return out;
}

template <typename T>
void save_model(const std::filesystem::path& path, const Dnn<T>& model) {
    dataio::atomic_write(path, [&](std::ostream& os) {
        os.precision(17);
        os << "vspeed-dnn 1\n";
        os << "layers " << model.layer_sizes.size();
        for (std::size_t s : model.layer_sizes) {
            os << ' ' << s;
        }
        os << '\n';
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& layer = model.layers[l];
            os << "W " << l << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << '\n';
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                    os << (c ? " " : "") << static_cast<double>(layer.weights(r, c));
                }
                os << '\n';
            }
            os << "b " << l << ' ' << layer.bias.size() << '\n';
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
                os << (r ? " " : "") << static_cast<double>(layer.bias(r));
            }
            os << '\n';
        }
    });
}

template <typename T>
Dnn<T> load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw dataio::IoError("cannot open model file " + path.string());
    }
    auto fail = [&](const std::string& what) {
        return dataio::ParseError(path.string() + ": " + what);
    };
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "vspeed-dnn" || version != 1) {
        throw fail("not a vspeed-dnn v1 file");
    }
    std::size_t n_sizes = 0;
    if (!(in >> tag >> n_sizes) || tag != "layers" || n_sizes < 2) {
        throw fail("bad layers line");
    }
    std::vector<std::size_t> sizes(n_sizes);
    for (auto& s : sizes) {
        if (!(in >> s) || s == 0) {
            throw fail("bad layer size");
        }
    }
    Dnn<T> model;
    model.layer_sizes = sizes;
    for (std::size_t l = 0; l + 1 < n_sizes; ++l) {
        std::size_t idx = 0;
        Eigen::Index rows = 0, cols = 0;
        if (!(in >> tag >> idx >> rows >> cols) || tag != "W" || idx != l ||
            rows != static_cast<Eigen::Index>(sizes[l + 1]) || cols != static_cast<Eigen::Index>(sizes[l])) {
            throw fail("bad weight header for layer " + std::to_string(l));
        }
        Layer<T> layer;
        layer.weights.resize(rows, cols);
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            double v = 0.0;
            if (!(in >> v)) {
                throw fail("truncated weights in layer " + std::to_string(l));
            }
            layer.weights.data()[i] = static_cast<T>(v);
        }
        Eigen::Index nb = 0;
        if (!(in >> tag >> idx >> nb) || tag != "b" || idx != l || nb != rows) {
            throw fail("bad bias header for layer " + std::to_string(l));
        }
        layer.bias.resize(nb);
        for (Eigen::Index i = 0; i < nb; ++i) {
            double v = 0.0;
            if (!(in >> v)) {
                throw fail("truncated biases in layer " + std::to_string(l));
            }
            layer.bias(i) = static_cast<T>(v);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

#define VSPEED_NN_INSTANTIATE(T)                                                                              \
    template struct Dnn<T>;                                                                                   \
    template Dnn<T> init_model<T>(const std::vector<std::size_t>&, std::uint64_t);                            \
    template T forward<T>(const Dnn<T>&, std::span<const T>);                                                 \
    template Vector<T> forward_batch<T>(const Dnn<T>&, const RowMatrix<T>&);                                  \
    template double mse<T>(const Dnn<T>&, const Samples<T>&);                                                 \
    template double weight_norm_sq<T>(const Dnn<T>&);                                                         \
    template double regularized_loss<T>(const Dnn<T>&, const RowMatrix<T>&, const Vector<T>&, double);        \
    template Gradients<T> loss_gradient<T>(const Dnn<T>&, const RowMatrix<T>&, const Vector<T>&, double);     \
    template TrainResult<T> train<T>(Dnn<T>, const Samples<T>&, const TrainConfig&, const Samples<T>*);       \
    template void save_model<T>(const std::filesystem::path&, const Dnn<T>&);                                 \
    template Dnn<T> load_model<T>(const std::filesystem::path&);

VSPEED_NN_INSTANTIATE(float)
VSPEED_NN_INSTANTIATE(double)

#undef VSPEED_NN_INSTANTIATE

}  // namespace vspeed::nn

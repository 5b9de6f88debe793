#include "vspeed/svr.hpp"

#include "vspeed/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace vspeed::svr {

namespace {

constexpr double kTau = 1e-12;

struct Standardization {
    std::vector<double> mean;
    std::vector<double> scale;
};

Standardization standardization(const RowMatrixD& x) {
    const auto n = static_cast<double>(x.rows());
    Standardization s;
    s.mean.resize(static_cast<std::size_t>(x.cols()));
    s.scale.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).mean();
        const double var = (x.col(j).array() - m).square().sum() / n;
        s.mean[static_cast<std::size_t>(j)] = m;
        // constant columns are centered but left unscaled
        s.scale[static_cast<std::size_t>(j)] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

// Solver for min 0.5 a'Qa + p'a, y'a = 0, 0 <= a <= C, with Q_ij = y_i y_j K_ij
// over the 2l doubled variables of epsilon-SVR.
class SmoSolver {
public:
    SmoSolver(const RowMatrixD& kernel, std::span<const double> targets, double c, double epsilon)
        : l_(static_cast<std::size_t>(kernel.rows())), k_(kernel), c_(c) {
        const std::size_t n = 2 * l_;
        alpha_.assign(n, 0.0);
        sign_.resize(n);
        p_.resize(n);
        for (std::size_t i = 0; i < l_; ++i) {
            sign_[i] = 1;
            p_[i] = epsilon - targets[i];
            sign_[i + l_] = -1;
            p_[i + l_] = epsilon + targets[i];
        }
        grad_ = p_;
    }

    double q(std::size_t i, std::size_t j) const {
        return sign_[i] * sign_[j] * k_(static_cast<Eigen::Index>(i % l_), static_cast<Eigen::Index>(j % l_));
    }

    void solve(double tolerance, long max_iterations) {
        for (iterations_ = 0; iterations_ < max_iterations; ++iterations_) {
            std::size_t i = 0, j = 0;
            if (select_working_set(tolerance, i, j)) {
                converged_ = true;
                break;
            }
            update_pair(i, j);
        }
        if (!converged_) {
            std::size_t i = 0, j = 0;
            converged_ = select_working_set(tolerance, i, j);
        }
    }

    std::vector<double> coefficients() const {
        std::vector<double> beta(l_);
        for (std::size_t i = 0; i < l_; ++i) {
            beta[i] = alpha_[i] - alpha_[i + l_];
        }
        return beta;
    }

    double rho() const {
        double ub = std::numeric_limits<double>::infinity();
        double lb = -std::numeric_limits<double>::infinity();
        double sum_free = 0.0;
        int n_free = 0;
        for (std::size_t i = 0; i < 2 * l_; ++i) {
            const double yg = sign_[i] * grad_[i];
            if (at_upper(i)) {
                if (sign_[i] == -1) {
                    ub = std::min(ub, yg);
                } else {
                    lb = std::max(lb, yg);
                }
            } else if (at_lower(i)) {
                if (sign_[i] == 1) {
                    ub = std::min(ub, yg);
                } else {
                    lb = std::max(lb, yg);
                }
            } else {
                ++n_free;
                sum_free += yg;
            }
        }
        return n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
    }

    /// Value of the maximized dual, i.e. -(0.5 a'Qa + p'a).
    double dual_objective() const {
        double v = 0.0;
        for (std::size_t i = 0; i < 2 * l_; ++i) {
            v += alpha_[i] * (grad_[i] + p_[i]);
        }
        return -0.5 * v;
    }

    double max_violation() const { return violation_; }
    long iterations() const { return iterations_; }
    bool converged() const { return converged_; }

private:
    bool at_upper(std::size_t i) const { return alpha_[i] >= c_; }
    bool at_lower(std::size_t i) const { return alpha_[i] <= 0.0; }

    // Second-order working set selection. Returns true when optimal.
    bool select_working_set(double tolerance, std::size_t& out_i, std::size_t& out_j) {
        const std::size_t n = 2 * l_;
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t gmax_idx = -1;
        std::ptrdiff_t gmin_idx = -1;
        double obj_diff_min = std::numeric_limits<double>::infinity();

        for (std::size_t t = 0; t < n; ++t) {
            if (sign_[t] == 1) {
                if (!at_upper(t) && -grad_[t] >= gmax) {
                    gmax = -grad_[t];
                    gmax_idx = static_cast<std::ptrdiff_t>(t);
                }
            } else if (!at_lower(t) && grad_[t] >= gmax) {
                gmax = grad_[t];
                gmax_idx = static_cast<std::ptrdiff_t>(t);
            }
        }
        if (gmax_idx < 0) {
            violation_ = 0.0;
            return true;
        }
        const auto i = static_cast<std::size_t>(gmax_idx);
        const double qii = q(i, i);
        for (std::size_t j = 0; j < n; ++j) {
            if (sign_[j] == 1) {
                if (!at_lower(j)) {
                    const double grad_diff = gmax + grad_[j];
                    gmax2 = std::max(gmax2, grad_[j]);
                    if (grad_diff > 0.0) {
                        const double quad = qii + q(j, j) - 2.0 * sign_[i] * q(i, j);
                        const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
                        if (obj <= obj_diff_min) {
                            gmin_idx = static_cast<std::ptrdiff_t>(j);
                            obj_diff_min = obj;
                        }
                    }
                }
            } else if (!at_upper(j)) {
                const double grad_diff = gmax - grad_[j];
                gmax2 = std::max(gmax2, -grad_[j]);
                if (grad_diff > 0.0) {
                    const double quad = qii + q(j, j) + 2.0 * sign_[i] * q(i, j);
                    const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
                    if (obj <= obj_diff_min) {
                        gmin_idx = static_cast<std::ptrdiff_t>(j);
                        obj_diff_min = obj;
                    }
                }
            }
        }
        violation_ = gmax + gmax2;
        if (violation_ < tolerance || gmin_idx < 0) {
            return true;
        }
        out_i = i;
        out_j = static_cast<std::size_t>(gmin_idx);
        return false;
    }

    void update_pair(std::size_t i, std::size_t j) {
        const double c = c_;
        const double old_i = alpha_[i];
        const double old_j = alpha_[j];
        const double qij = q(i, j);
        if (sign_[i] != sign_[j]) {
            double quad = q(i, i) + q(j, j) + 2.0 * qij;
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (-grad_[i] - grad_[j]) / quad;
            const double diff = alpha_[i] - alpha_[j];
            alpha_[i] += delta;
            alpha_[j] += delta;
            if (diff > 0.0) {
                if (alpha_[j] < 0.0) {
                    alpha_[j] = 0.0;
                    alpha_[i] = diff;
                }
            } else if (alpha_[i] < 0.0) {
                alpha_[i] = 0.0;
                alpha_[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha_[i] > c) {
                    alpha_[i] = c;
                    alpha_[j] = c - diff;
                }
            } else if (alpha_[j] > c) {
                alpha_[j] = c;
                alpha_[i] = c + diff;
            }
        } else {
            double quad = q(i, i) + q(j, j) - 2.0 * qij;
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (grad_[i] - grad_[j]) / quad;
            const double sum = alpha_[i] + alpha_[j];
            alpha_[i] -= delta;
            alpha_[j] += delta;
            if (sum > c) {
                if (alpha_[i] > c) {
                    alpha_[i] = c;
                    alpha_[j] = sum - c;
                }
            } else if (alpha_[j] < 0.0) {
                alpha_[j] = 0.0;
                alpha_[i] = sum;
            }
            if (sum > c) {
                if (alpha_[j] > c) {
                    alpha_[j] = c;
                    alpha_[i] = sum - c;
                }
            } else if (alpha_[i] < 0.0) {
                alpha_[i] = 0.0;
                alpha_[j] = sum;
            }
        }
        const double d_i = alpha_[i] - old_i;
        const double d_j = alpha_[j] - old_j;
        for (std::size_t k = 0; k < 2 * l_; ++k) {
            grad_[k] += q(i, k) * d_i + q(j, k) * d_j;
        }
    }

    std::size_t l_;
    const RowMatrixD& k_;
    double c_;
    std::vector<double> alpha_;
    std::vector<int> sign_;
    std::vector<double> p_;
    std::vector<double> grad_;
    double violation_ = std::numeric_limits<double>::infinity();
    long iterations_ = 0;
    bool converged_ = false;
};

void standardize_into(const SvrModel& model, std::span<const double> x, std::vector<double>& out) {
    out.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = (x[j] - model.mean[j]) / model.scale[j];
    }
}

}  // namespace

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

SvrFit svr_fit(const RowMatrixD& x, std::span<const double> y, const SvrConfig& cfg) {
    if (x.rows() < 2) {
        throw std::invalid_argument("svr_train: need at least 2 rows");
    }
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw std::invalid_argument("svr_train: " + std::to_string(x.rows()) + " rows but " +
                                    std::to_string(y.size()) + " targets");
    }
    if (x.cols() == 0) {
        throw std::invalid_argument("svr_train: zero-dimensional input");
    }
    if (!(cfg.c > 0.0) || cfg.epsilon < 0.0 || (cfg.gamma && !(*cfg.gamma > 0.0))) {
        throw std::invalid_argument("svr_train: need C > 0, epsilon >= 0, gamma > 0");
    }

    const Standardization st = standardization(x);
    RowMatrixD z(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            z(i, j) = (x(i, j) - st.mean[static_cast<std::size_t>(j)]) / st.scale[static_cast<std::size_t>(j)];
        }
    }

    double gamma = 0.0;
    if (cfg.gamma) {
        gamma = *cfg.gamma;
    } else {
        const double mean_var = z.array().square().colwise().mean().mean();
        gamma = mean_var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * mean_var) : 1.0 / static_cast<double>(x.cols());
    }

    SvrFit fit;
    const Eigen::Index l = x.rows();
    fit.kernel.resize(l, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        fit.kernel(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < l; ++j) {
            const double d2 = (z.row(i) - z.row(j)).squaredNorm();
            fit.kernel(i, j) = fit.kernel(j, i) = std::exp(-gamma * d2);
        }
    }

    SmoSolver solver(fit.kernel, y, cfg.c, cfg.epsilon);
    solver.solve(cfg.tolerance, cfg.max_iterations);

    fit.coefficients = solver.coefficients();
    fit.dual_objective = solver.dual_objective();
    fit.max_violation = solver.max_violation();
    fit.iterations = solver.iterations();
    fit.converged = solver.converged();

    SvrModel& m = fit.model;
    m.mean = st.mean;
    m.scale = st.scale;
    m.gamma = gamma;
    m.c = cfg.c;
    m.epsilon = cfg.epsilon;
    m.bias = -solver.rho();
    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < l; ++i) {
        if (fit.coefficients[static_cast<std::size_t>(i)] != 0.0) {
            sv.push_back(i);
        }
    }
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    for (std::size_t k = 0; k < sv.size(); ++k) {
        m.support_vectors.row(static_cast<Eigen::Index>(k)) = z.row(sv[k]);
        m.coefficients.push_back(fit.coefficients[static_cast<std::size_t>(sv[k])]);
    }
    return fit;
}

SvrModel svr_train(const RowMatrixD& x, std::span<const double> y, const SvrConfig& cfg) {
    return svr_fit(x, y, cfg).model;
}

double svr_predict(const SvrModel& model, std::span<const double> x) {
    if (x.size() != model.n_features()) {
        throw std::invalid_argument("svr_predict: expected " + std::to_string(model.n_features()) +
                                    " features, got " + std::to_string(x.size()));
    }
    std::vector<double> z;
    standardize_into(model, x, z);
    const auto d = static_cast<std::size_t>(model.support_vectors.cols());
    double f = model.bias;
    for (Eigen::Index k = 0; k < model.support_vectors.rows(); ++k) {
        const std::span<const double> sv(model.support_vectors.row(k).data(), d);
        f += model.coefficients[static_cast<std::size_t>(k)] * rbf(sv, z, model.gamma);
    }
    return f;
}

std::vector<GridPoint> default_grid() {
    std::vector<GridPoint> g;
    for (double c : {0.1, 1.0, 10.0, 100.0}) {
        for (double e : {0.01, 0.1, 1.0}) {
            g.push_back({c, e});
        }
    }
    return g;
}

GridResult grid_search(const RowMatrixD& x_train, std::span<const double> y_train, const RowMatrixD& x_val,
                       std::span<const double> y_val, const std::vector<GridPoint>& grid, const SvrConfig& base) {
    if (grid.empty()) {
        throw std::invalid_argument("grid_search: empty grid");
    }
    if (x_val.rows() == 0 || static_cast<std::size_t>(x_val.rows()) != y_val.size()) {
        throw std::invalid_argument("grid_search: validation set must be non-empty with matching targets");
    }
    GridResult res;
    res.rmse.reserve(grid.size());
    std::ptrdiff_t best = -1;
    const auto d = static_cast<std::size_t>(x_val.cols());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        SvrConfig cfg = base;
        cfg.c = grid[g].c;
        cfg.epsilon = grid[g].epsilon;
        const SvrModel m = svr_train(x_train, y_train, cfg);
        double se = 0.0;
        for (Eigen::Index i = 0; i < x_val.rows(); ++i) {
            const double e = svr_predict(m, std::span<const double>(x_val.row(i).data(), d)) - y_val[static_cast<std::size_t>(i)];
            se += e * e;
        }
        const double rmse = std::sqrt(se / static_cast<double>(x_val.rows()));
        res.rmse.push_back(rmse);
        if (best < 0) {
            best = static_cast<std::ptrdiff_t>(g);
            continue;
        }
        const GridPoint& cur = grid[static_cast<std::size_t>(best)];
        const double cur_rmse = res.rmse[static_cast<std::size_t>(best)];
        const bool better = rmse < cur_rmse ||
                            (rmse == cur_rmse && (grid[g].c < cur.c || (grid[g].c == cur.c && grid[g].epsilon < cur.epsilon)));
        if (better) {
            best = static_cast<std::ptrdiff_t>(g);
        }
    }
    res.best = grid[static_cast<std::size_t>(best)];
    res.best_rmse = res.rmse[static_cast<std::size_t>(best)];
    return res;
}

void save_model(const std::filesystem::path& path, const SvrModel& m) {
    dataio::atomic_write(path, [&](std::ostream& os) {
        os.precision(17);
        os << "vspeed-svr 1\n";
        os << "c " << m.c << " epsilon " << m.epsilon << " gamma " << m.gamma << " bias " << m.bias << '\n';
        os << "features " << m.n_features() << '\n';
        os << "mean";
        for (double v : m.mean) {
            os << ' ' << v;
        }
        os << "\nscale";
        for (double v : m.scale) {
            os << ' ' << v;
        }
        os << "\nsupport " << m.support_vectors.rows() << '\n';
        for (Eigen::Index k = 0; k < m.support_vectors.rows(); ++k) {
            os << m.coefficients[static_cast<std::size_t>(k)];
            for (Eigen::Index j = 0; j < m.support_vectors.cols(); ++j) {
                os << ' ' << m.support_vectors(k, j);
            }
            os << '\n';
        }
    });
}

SvrModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw dataio::IoError("cannot open SVR model " + path.string());
    }
    auto fail = [&](const std::string& what) { return dataio::ParseError(path.string() + ": " + what); };
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "vspeed-svr" || version != 1) {
        throw fail("not a vspeed-svr v1 file");
    }
    SvrModel m;
    std::string t1, t2, t3, t4;
    if (!(in >> t1 >> m.c >> t2 >> m.epsilon >> t3 >> m.gamma >> t4 >> m.bias) || t1 != "c" || t2 != "epsilon" ||
        t3 != "gamma" || t4 != "bias") {
        throw fail("bad parameter line");
    }
    std::size_t d = 0;
    if (!(in >> tag >> d) || tag != "features" || d == 0) {
        throw fail("bad features line");
    }
    m.mean.resize(d);
    m.scale.resize(d);
    if (!(in >> tag) || tag != "mean") {
        throw fail("missing mean");
    }
    for (auto& v : m.mean) {
        if (!(in >> v)) {
            throw fail("truncated mean");
        }
    }
    if (!(in >> tag) || tag != "scale") {
        throw fail("missing scale");
    }
    for (auto& v : m.scale) {
        if (!(in >> v)) {
            throw fail("truncated scale");
        }
    }
    Eigen::Index n_sv = 0;
    if (!(in >> tag >> n_sv) || tag != "support" || n_sv < 0) {
        throw fail("bad support line");
    }
    m.support_vectors.resize(n_sv, static_cast<Eigen::Index>(d));
    m.coefficients.resize(static_cast<std::size_t>(n_sv));
    for (Eigen::Index k = 0; k < n_sv; ++k) {
        if (!(in >> m.coefficients[static_cast<std::size_t>(k)])) {
            throw fail("truncated support vector " + std::to_string(k));
        }
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) {
            if (!(in >> m.support_vectors(k, j))) {
                throw fail("truncated support vector " + std::to_string(k));
            }
        }
    }
    return m;
}

}  // namespace vspeed::svr

#pragma once

#include "vspeed/dsp.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace vspeed::svr {

struct SvrConfig {
    double c = 10.0;
    double epsilon = 0.1;
    /// RBF width; when unset, 1 / (n_features * mean feature variance) of the
    /// standardized training set.
    std::optional<double> gamma;
    double tolerance = 1e-3;
    long max_iterations = 100000;
};

/// Trained epsilon-SVR with an RBF kernel. Inputs are standardized with the
/// training statistics before the kernel is evaluated.
struct SvrModel {
    std::vector<double> mean;
    std::vector<double> scale;
    RowMatrixD support_vectors;  // standardized
    std::vector<double> coefficients;  // alpha - alpha* per support vector
    double bias = 0.0;
    double gamma = 1.0;
    double c = 0.0;
    double epsilon = 0.0;

    std::size_t n_features() const { return mean.size(); }
};

struct SvrFit {
    SvrModel model;
    std::vector<double> coefficients;  // alpha - alpha* for every training row
    RowMatrixD kernel;                 // training Gram matrix (standardized inputs)
    double dual_objective = 0.0;       // maximized dual value
    double max_violation = 0.0;        // final maximal KKT violation
    long iterations = 0;
    bool converged = false;
};

struct GridPoint {
    double c = 10.0;
    double epsilon = 0.1;

    bool operator==(const GridPoint&) const = default;
};

struct GridResult {
    GridPoint best;
    double best_rmse = 0.0;
    std::vector<double> rmse;  // per grid point, same order as the input grid
};

double rbf(std::span<const double> a, std::span<const double> b, double gamma);

SvrFit svr_fit(const RowMatrixD& x, std::span<const double> y, const SvrConfig& cfg = {});
SvrModel svr_train(const RowMatrixD& x, std::span<const double> y, const SvrConfig& cfg = {});

double svr_predict(const SvrModel& model, std::span<const double> x);

/// C in {0.1, 1, 10, 100} x epsilon in {0.01, 0.1, 1}.
std::vector<GridPoint> default_grid();

/// Lowest validation RMSE wins; ties go to the smaller C, then the smaller epsilon.
GridResult grid_search(const RowMatrixD& x_train, std::span<const double> y_train, const RowMatrixD& x_val,
                       std::span<const double> y_val, const std::vector<GridPoint>& grid,
                       const SvrConfig& base = {});

/// Text format:
///   vspeed-svr 1
///   c <C> epsilon <eps> gamma <gamma> bias <b>
///   features <d>
///   mean <d values>
///   scale <d values>
///   support <n>
///   then n lines: <coefficient> <d standardized values>
void save_model(const std::filesystem::path& path, const SvrModel& model);
SvrModel load_model(const std::filesystem::path& path);

}  // namespace vspeed::svr

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any fails.

#include "oracles.hpp"

#include "vspeed/config.hpp"
#include "vspeed/dsp.hpp"
#include "vspeed/eval.hpp"
#include "vspeed/features.hpp"
#include "vspeed/nn.hpp"
#include "vspeed/pipeline.hpp"
#include "vspeed/svr.hpp"
#include "vspeed/synth.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace vspeed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) {
                detail += "; ";
            }
            detail += what;
        }
    }
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// Runs `body`, adds the runtime limit, prints one line.
bool criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0) {
        o.require(s < limit_s, "runtime " + fmt("%.1f", s) + " s exceeds " + fmt("%.0f", limit_s) + " s");
    }
    std::printf("%s criterion %d (%s) [%.1f s]%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), s,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
    std::fflush(stdout);
    return o.pass;
}

// ---- 1: modified attenuation -------------------------------------------------

Outcome ma_exactness() {
    Outcome o;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> sp(1.0, 200.0), tc(0.0, 10.0), tt(-5.0, 15.0);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double s = sp(rng), c = tc(rng), t = tt(rng);
        const double ref = oracle::ma(s, c, t);
        worst = std::max(worst, std::abs(features::ma_value(s, c, t) - ref) / ref);
    }
    o.require(worst <= 1e-12, "max relative error " + fmt("%.3g", worst));

    const auto times = features::frame_times(400, 1105, 44100);
    std::uniform_real_distribution<double> sp2(30.0, 105.0), tc2(0.5, 9.5), dd(0.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const double s = sp2(rng), c = tc2(rng);
        const auto p = features::ma_profile(s, c, {}, times);
        const auto arg = static_cast<std::size_t>(std::max_element(p.values.begin(), p.values.end()) - p.values.begin());
        o.require(arg == features::nearest_frame(c, 1105, 44100, 400), "profile peak off the nearest frame");
        const double d1 = dd(rng), d2 = d1 + 0.01 + dd(rng);
        const double a = features::ma_value(s, c, c + d1), b = features::ma_value(s, c, c - d1);
        o.require(std::abs(a - b) <= 1e-14 * a, "asymmetric about t_CPA");
        o.require(features::ma_value(s, c, c + d2) < a, "not decaying away from t_CPA");
    }
    o.detail = o.pass ? "max rel err " + fmt("%.2g", worst) : o.detail;
    return o;
}

// ---- 2: STFT vs direct DFT -----------------------------------------------------

Outcome stft_oracle() {
    Outcome o;
    std::mt19937_64 rng(202);
    std::normal_distribution<double> g(0.0, 0.3);
    dsp::AudioClip clip;
    clip.samples.resize(441000);
    for (auto& s : clip.samples) {
        s = static_cast<float>(g(rng));
    }
    const auto spec = dsp::stft(clip);
    o.require(spec.power.rows() == 400, "expected 400 frames, got " + std::to_string(spec.power.rows()));
    o.require(spec.power.cols() == 2049, "expected 2049 bins");
    const auto w = dsp::hamming_window(4096);
    const long n = static_cast<long>(clip.samples.size());
    std::uniform_int_distribution<long> pick(0, 399);
    double worst = 0.0;
    for (int f = 0; f < 100; ++f) {
        // always include both edge frames, where reflection padding matters
        const long i = f == 0 ? 0 : (f == 1 ? 399 : pick(rng));
        std::vector<double> frame(4096);
        for (long k = 0; k < 4096; ++k) {
            long idx = i * 1105 + k - 2048;
            if (idx < 0) idx = -idx;
            if (idx >= n) idx = 2 * (n - 1) - idx;
            frame[static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(k)] * clip.samples[static_cast<std::size_t>(idx)];
        }
        const auto ref = oracle::dft_power(frame);
        const double peak = *std::max_element(ref.begin(), ref.end());
        for (std::size_t b = 0; b < ref.size(); ++b) {
            // relative to the bin value, floored at 1e-9 of the frame's peak bin
            const double err = std::abs(spec.power(i, static_cast<Eigen::Index>(b)) - ref[b]) / std::max(ref[b], 1e-9 * peak);
            worst = std::max(worst, err);
        }
    }
    o.require(worst < 1e-6, "max relative error " + fmt("%.3g", worst));
    if (o.pass) {
        o.detail = "400x2049, 100 frames, max rel err " + fmt("%.2g", worst);
    }
    return o;
}

// ---- 3: backprop vs central differences ----------------------------------------

// Regularized loss from the raw parameters, evaluated independently in long double.
long double reference_loss(const nn::DnnModel& m, const std::vector<std::vector<double>>& xs,
                           const std::vector<double>& ys, double l2) {
    long double total = 0.0L;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        std::vector<long double> a(xs[s].begin(), xs[s].end());
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            const auto& layer = m.layers[l];
            std::vector<long double> z(static_cast<std::size_t>(layer.weights.rows()));
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                long double acc = layer.bias(r);
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                    acc += static_cast<long double>(layer.weights(r, c)) * a[static_cast<std::size_t>(c)];
                }
                const bool hidden = l + 1 < m.layers.size();
                z[static_cast<std::size_t>(r)] = hidden ? std::max(acc, 0.0L) : acc;
            }
            a = std::move(z);
        }
        const long double d = a[0] - ys[s];
        total += d * d;
    }
    long double reg = 0.0L;
    for (const auto& layer : m.layers) {
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            reg += static_cast<long double>(layer.weights.data()[i]) * layer.weights.data()[i];
        }
    }
    return total / static_cast<long double>(xs.size()) + l2 * reg;
}

Outcome gradient_check() {
    Outcome o;
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> depth(1, 3), width(2, 12), input(1, 20);
    std::normal_distribution<double> g;
    const double h = 1e-5, l2 = 1e-3;
    double worst = 0.0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> sizes{static_cast<std::size_t>(input(rng))};
        for (int d = depth(rng); d > 0; --d) {
            sizes.push_back(static_cast<std::size_t>(width(rng)));
        }
        sizes.push_back(1);
        auto m = nn::init_model<double>(sizes, rng());
        for (auto& layer : m.layers) {
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
                layer.bias(i) = 0.1 * g(rng);  // move off the all-zero bias start
            }
        }
        const std::size_t batch = 3;
        std::vector<std::vector<double>> xs(batch, std::vector<double>(sizes[0]));
        std::vector<double> ys(batch);
        RowMatrixD x(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(sizes[0]));
        nn::Vector<double> y(static_cast<Eigen::Index>(batch));
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t j = 0; j < sizes[0]; ++j) {
                xs[s][j] = g(rng);
                x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = xs[s][j];
            }
            ys[s] = g(rng);
            y(static_cast<Eigen::Index>(s)) = ys[s];
        }
        const auto grad = nn::loss_gradient(m, x, y, l2);
        auto probe = m;
        auto compare = [&](double& p, double analytic) {
            const double saved = p;
            p = saved + h;
            const long double up = reference_loss(probe, xs, ys, l2);
            p = saved - h;
            const long double down = reference_loss(probe, xs, ys, l2);
            p = saved;
            const double numeric = static_cast<double>((up - down) / (2.0L * h));
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
            ++checked;
        };
        for (std::size_t l = 0; l < probe.layers.size(); ++l) {
            auto& layer = probe.layers[l];
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                    compare(layer.weights(r, c), grad.weights[l](r, c));
                }
                compare(layer.bias(r), grad.biases[l](r));
            }
        }
    }
    o.require(worst < 1e-4, "max relative error " + fmt("%.3g", worst));
    if (o.pass) {
        o.detail = "20 models, " + std::to_string(checked) + " parameters, max rel err " + fmt("%.2g", worst);
    }
    return o;
}

// ---- 4: SVR vs dense QP ------------------------------------------------------------

Outcome svr_oracle() {
    Outcome o;
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> size(2, 20), dim(1, 6);
    std::uniform_real_distribution<double> logc(-1.0, 2.0), eps(0.0, 0.5);
    std::normal_distribution<double> g;
    double worst_obj = 0.0, worst_kkt = 0.0, worst_sum = 0.0, worst_box = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = static_cast<std::size_t>(size(rng));
        const auto d = static_cast<std::size_t>(dim(rng));
        RowMatrixD x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        std::vector<std::vector<double>> rows(n, std::vector<double>(d));
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double t = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                rows[i][j] = g(rng) * (1.0 + static_cast<double>(j));
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
                t += std::sin(rows[i][j]);
            }
            y[i] = 3.0 * t + 0.3 * g(rng);
        }
        svr::SvrConfig cfg;
        cfg.c = std::pow(10.0, logc(rng));
        cfg.epsilon = eps(rng);
        const auto fit = svr::svr_fit(x, y, cfg);
        const auto k = oracle::rbf_gram(rows);
        const auto qp = oracle::svr_dual(k.k, y, cfg.c, cfg.epsilon);
        worst_obj = std::max(worst_obj, std::abs(fit.dual_objective + qp.objective));
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(fit.coefficients.begin(), fit.coefficients.end(), 0.0)));
        for (std::size_t i = 0; i < n; ++i) {
            const double b = fit.coefficients[i];
            worst_box = std::max(worst_box, std::abs(b) - cfg.c);
            double f = fit.model.bias;
            for (std::size_t j = 0; j < n; ++j) {
                f += fit.coefficients[j] * k.k[i][j];
            }
            const double r = std::abs(f - y[i]);
            double viol = 0.0;
            if (b == 0.0) {
                viol = std::max(0.0, r - cfg.epsilon);  // inside the tube
            } else if (std::abs(b) < cfg.c - 1e-9) {
                viol = std::abs(r - cfg.epsilon);  // on the tube edge
            } else {
                viol = std::max(0.0, cfg.epsilon - r);  // on or outside the edge
            }
            worst_kkt = std::max(worst_kkt, viol);
        }
    }
    o.require(worst_obj < 1e-3, "dual objective gap " + fmt("%.3g", worst_obj));
    o.require(worst_kkt < 1e-3, "KKT violation " + fmt("%.3g", worst_kkt));
    o.require(worst_sum < 1e-9, "equality constraint residual " + fmt("%.3g", worst_sum));
    o.require(worst_box <= 1e-9, "box constraint exceeded by " + fmt("%.3g", worst_box));
    if (o.pass) {
        o.detail = "50 problems, objective gap " + fmt("%.2g", worst_obj) + ", KKT " + fmt("%.2g", worst_kkt);
    }
    return o;
}

// ---- 5 and 6: label correction on synthetic data ----------------------------------

struct SeedRun {
    std::uint64_t seed = 0;
    eval::ExperimentReport report;
};

std::vector<SeedRun> g_runs;

Outcome label_correction() {
    Outcome o;
    const auto cfg = config::load(fs::path(VSPEED_PRESET_DIR) / "desk.json");
    int label_better = 0, rmse_better = 0, std_better = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto dc = cfg.synth;
        dc.seed = seed;
        const auto ds = synth::make_dataset(dc);
        const auto data = pipeline::prepare(ds, cfg.pipeline);
        const auto out = pipeline::full_experiment(data, ds.labels_noisy, cfg.pipeline);
        const auto& r = out.report;
        const bool a = *r.label_error_corrected < *r.label_error_noisy;
        const bool b = r.after.rmse.average <= r.before.rmse.average;
        const bool c = r.after.offsets.std < r.before.offsets.std;
        label_better += a;
        rmse_better += b;
        std_better += c;
        std::printf("  seed %llu: label error %.4f -> %.4f, RMSE %.2f -> %.2f km/h, offset std %.3f -> %.3f s, "
                    "exact class %.1f -> %.1f %%\n",
                    static_cast<unsigned long long>(seed), *r.label_error_noisy, *r.label_error_corrected,
                    r.before.rmse.average, r.after.rmse.average, r.before.offsets.std, r.after.offsets.std,
                    r.before.classes.average.exact, r.after.classes.average.exact);
        std::fflush(stdout);
        g_runs.push_back({seed, r});
    }
    o.require(label_better >= 4, "(a) label error decreased in " + std::to_string(label_better) + "/5 seeds");
    o.require(rmse_better >= 4, "(b) RMSE did not increase in " + std::to_string(rmse_better) + "/5 seeds");
    o.require(std_better == 5, "(c) offset std decreased in " + std::to_string(std_better) + "/5 seeds");
    if (o.pass) {
        o.detail = "(a) " + std::to_string(label_better) + "/5, (b) " + std::to_string(rmse_better) + "/5, (c) " +
                   std::to_string(std_better) + "/5";
    }
    return o;
}

Outcome detection_separability() {
    Outcome o;
    o.require(g_runs.size() == 5, "label-correction runs missing");
    double min_gap = 1e300;
    std::size_t false_alarms = 0;
    for (const auto& run : g_runs) {
        for (const auto* m : {&run.report.before, &run.report.after}) {
            o.require(m->separation_gap.has_value(), "no calibration noise clips");
            if (m->separation_gap) {
                min_gap = std::min(min_gap, *m->separation_gap);
            }
            false_alarms += m->heldout_false_alarms;
        }
    }
    o.require(min_gap > 0.0, "smallest separation gap " + fmt("%.3f", min_gap));
    o.require(false_alarms == 0, std::to_string(false_alarms) + " held-out false alarms");
    if (o.pass) {
        o.detail = "smallest gap " + fmt("%.3f", min_gap) + ", 0 held-out false alarms over 10 runs";
    }
    return o;
}

// ---- 7: metrics examples ------------------------------------------------------------

Outcome metrics_suite() {
    Outcome o;
    const std::vector<double> e{82.0, 78.0}, t{80.0, 80.0};
    o.require(eval::rmse(e, t) == 2.0, "rmse {82,78} vs {80,80} != 2");
    o.require(eval::speed_to_class(80.0) == 5, "class(80) != 5");
    o.require(eval::speed_to_class(25.0) == 0, "class(25) != 0");
    o.require(eval::speed_to_class(105.0) == 7, "class(105) != 7");
    const std::vector<double> truth{80.0, 80.0, 80.0, 80.0}, est{81.0, 92.0, 63.0, 30.0};
    const auto row = eval::class_row(est, truth);
    o.require(row.exact == 25.0 && row.off_one == 25.0 && row.off_two == 25.0 && row.off_more == 25.0,
              "class offset row of the hand example");
    o.require(row.within_one == 50.0, "within-one share of the hand example");
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(30.0, 105.0), n(-30.0, 30.0);
    std::vector<double> es, ts;
    std::vector<std::string> vs;
    for (int i = 0; i < 500; ++i) {
        ts.push_back(u(rng));
        es.push_back(ts.back() + n(rng));
        vs.push_back("veh" + std::to_string(i % 10));
    }
    const auto table = eval::classification_table(es, ts, vs);
    for (const auto& r : table.rows) {
        o.require(std::abs(r.exact + r.off_one + r.off_two + r.off_more - 100.0) < 1e-9, "row does not sum to 100");
    }
    const std::vector<double> p{4.99, 5.0, 5.01}, l{5.0, 5.0, 5.0};
    const auto s = eval::detection_offset_stats(p, l);
    o.require(std::abs(s.mean) < 1e-12, "offset mean of {-0.01, 0, 0.01}");
    o.require(std::abs(s.std - 0.01) < 1e-12, "offset std of {-0.01, 0, 0.01}");
    const std::vector<double> vm{5.0, 9.0, 7.0}, nm{0.3, 1.1, 0.8};
    o.require(std::abs(eval::separation_gap(vm, nm) - 3.9) < 1e-12, "separation gap 3.9");
    return o;
}

// ---- 8: reproducibility ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("'") + VSPEED_CLI_PATH + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome reproducibility() {
    Outcome o;
    const fs::path dir = fs::temp_directory_path() / "vspeed_acceptance_repro";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto j = config::to_json(config::load(fs::path(VSPEED_PRESET_DIR) / "tiny.json"));
    j["dataset"]["root"] = (dir / "data").string();
    std::vector<std::string> outs;
    for (int k = 0; k < 2; ++k) {
        const fs::path out = dir / ("out" + std::to_string(k));
        j["output"]["dir"] = out.string();
        const fs::path cfg = dir / ("c" + std::to_string(k) + ".json");
        std::ofstream(cfg) << j.dump(2);
        if (k == 0) {
            o.require(run_cli("synth --config '" + cfg.string() + "'") == 0, "synth failed");
        }
        o.require(run_cli("run --config '" + cfg.string() + "' --labels noisy") == 0, "run failed");
        outs.push_back(slurp(out / "predictions_noisy.csv") + slurp(out / "metrics_noisy.json"));
    }
    o.require(!outs[0].empty(), "no output produced");
    o.require(outs[0] == outs[1], "outputs differ between executions");
    if (o.pass) {
        o.detail = std::to_string(outs[0].size()) + " bytes identical";
    }
    fs::remove_all(dir);
    return o;
}

}  // namespace

int main() {
    bool ok = true;
    ok &= criterion(1, "MA exactness", 1.0, ma_exactness);
    ok &= criterion(2, "STFT vs DFT oracle", 30.0, stft_oracle);
    ok &= criterion(3, "gradient check", 30.0, gradient_check);
    ok &= criterion(4, "SVR vs QP oracle", 120.0, svr_oracle);
    ok &= criterion(5, "label-correction efficacy", 1800.0, label_correction);
    ok &= criterion(6, "detection separability", 0.0, detection_separability);
    ok &= criterion(7, "metrics unit suite", 1.0, metrics_suite);
    ok &= criterion(8, "reproducibility", 0.0, reproducibility);
    std::printf("%s\n", ok ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
    return ok ? 0 : 1;
}

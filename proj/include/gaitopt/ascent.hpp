#pragma once

#include <Eigen/Core>
#include <functional>
#include <future>
#include <thread>
#include <utility>
#include <vector>

namespace gaitopt {

/// Derivative-free maximization used for hyperparameter fitting: cyclic
/// coordinate ascent with a fixed-iteration golden-section line search per
/// coordinate, inside a box. Never accepts a step that lowers the objective,
/// so the result is always at least as good as the start point.
struct AscentOptions {
    int max_passes = 6;
    int golden_iters = 20;
    double pass_tol = 1e-7;
};

struct AscentResult {
    Eigen::VectorXd x;
    double value;
};

inline AscentResult coordinate_ascent(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                      Eigen::VectorXd x, const AscentOptions& opt = {}) {
    constexpr double kGolden = 0.6180339887498949;
    const int dim = static_cast<int>(x.size());
    double fx = fn(x);
    for (int pass = 0; pass < opt.max_passes; ++pass) {
        const double before = fx;
        for (int j = 0; j < dim; ++j) {
            double a = lower[j], b = upper[j];
            if (!(b > a)) continue;  // pinned coordinate
            Eigen::VectorXd probe = x;
            auto eval = [&](double v) {
                probe[j] = v;
                return fn(probe);
            };
            double c = b - kGolden * (b - a);
            double d = a + kGolden * (b - a);
            double fc = eval(c), fd = eval(d);
            double best_v = fc > fd ? c : d;
            double best_f = fc > fd ? fc : fd;
            for (int it = 0; it < opt.golden_iters; ++it) {
                if (fc > fd) {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - kGolden * (b - a);
                    fc = eval(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + kGolden * (b - a);
                    fd = eval(d);
                }
                if (fc > best_f) best_f = fc, best_v = c;
                if (fd > best_f) best_f = fd, best_v = d;
            }
            if (best_f > fx) {
                fx = best_f;
                x[j] = best_v;
            }
        }
        if (fx - before < opt.pass_tol) break;
    }
    return AscentResult{std::move(x), fx};
}

/// Runs ascent from each start (rows) and keeps the best result; ties break
/// toward the lower start index so the reduction is deterministic even when
/// starts run concurrently.
inline AscentResult multistart_ascent(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                      const Eigen::MatrixXd& starts, const AscentOptions& opt = {}) {
    const int n = static_cast<int>(starts.rows());
    std::vector<AscentResult> results(n);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (hw > 1 && n > 1) {
        std::vector<std::future<AscentResult>> futs;
        futs.reserve(n);
        for (int i = 0; i < n; ++i)
            futs.push_back(std::async(std::launch::async, [&, i] {
                return coordinate_ascent(fn, lower, upper, starts.row(i).transpose(), opt);
            }));
        for (int i = 0; i < n; ++i) results[i] = futs[i].get();
    } else {
        for (int i = 0; i < n; ++i)
            results[i] = coordinate_ascent(fn, lower, upper, starts.row(i).transpose(), opt);
    }
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (results[i].value > results[best].value) best = i;
    return results[best];
}

}  // namespace gaitopt

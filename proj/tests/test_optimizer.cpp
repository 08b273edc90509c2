#include <catch2/catch_amalgamated.hpp>

#include "gaitopt/optimizer.hpp"

using namespace gaitopt;
using Catch::Approx;

namespace {

Bounds unit_box(int d) {
    Bounds b;
    b.lower = Eigen::VectorXd::Zero(d);
    b.upper = Eigen::VectorXd::Ones(d);
    return b;
}

BoConfig small_config(int d, std::uint64_t seed = 1) {
    BoConfig cfg;
    cfg.bounds = unit_box(d);
    cfg.seed = seed;
    cfg.n_init = 6;
    cfg.i_max = 8;
    cfg.k_max = 5;
    return cfg;
}

}  // namespace

TEST_CASE("expected improvement closed form") {
    SECTION("at the incumbent with unit variance it equals the normal density at zero") {
        CHECK(expected_improvement(1.0, 1.0, 1.0) == Approx(0.398942).margin(1e-6));
    }

    SECTION("deterministic posterior below the incumbent has no value") {
        CHECK(expected_improvement(-1.0, 0.0, 0.0) == 0.0);
        CHECK(expected_improvement(0.5, 0.0, 0.0) == 0.5);
    }

    SECTION("always non-negative") {
        Rng rng(3);
        for (int i = 0; i < 1000; ++i)
            CHECK(expected_improvement(rng.uniform(-3.0, 3.0), rng.uniform(0.0, 4.0),
                                       rng.uniform(-3.0, 3.0)) >= 0.0);
    }
}

TEST_CASE("expected improvement matches its Monte-Carlo definition") {
    Rng rng(1701);
    for (int trial = 0; trial < 20; ++trial) {
        const double mu = rng.uniform(-2.0, 2.0);
        const double sigma = rng.uniform(0.1, 2.0);
        const double jstar = rng.uniform(-2.0, 2.0);
        const int n = 1000000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += std::max(0.0, mu + sigma * rng.gaussian() - jstar);
        const double mc = acc / n;
        CHECK(expected_improvement(mu, sigma * sigma, jstar) == Approx(mc).margin(1e-2));
    }
}

TEST_CASE("acquisition search climbs to a sharp interior optimum") {
    const int d = 3;
    const Eigen::VectorXd c = (Eigen::VectorXd(3) << 0.62, 0.31, 0.55).finished();
    auto predict = [&](const Eigen::MatrixXd& q) {
        Eigen::VectorXd mu(q.rows()), var(q.rows());
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const double r2 = (q.row(i).transpose() - c).squaredNorm();
            mu[i] = std::exp(-r2 / (2.0 * 0.12 * 0.12));
            var[i] = 1e-16;
        }
        return std::make_pair(mu, var);
    };
    BoConfig cfg = small_config(d);
    const Eigen::VectorXd prop = detail::maximize_ei_normalized(predict, d, 0.0, cfg, 7);

    // dense-grid oracle over 1e5 quasi-random points
    HaltonSequence halton(d, 99);
    Eigen::VectorXd grid_best = halton.point(0);
    double grid_best_ei = -1.0;
    for (int i = 0; i < 100000; ++i) {
        const Eigen::VectorXd x = halton.point(i);
        Eigen::MatrixXd q(1, d);
        q.row(0) = x.transpose();
        const auto [mu, var] = predict(q);
        const double ei = expected_improvement(mu[0], var[0], 0.0);
        if (ei > grid_best_ei) {
            grid_best_ei = ei;
            grid_best = x;
        }
    }
    CHECK((prop - grid_best).norm() < 0.05);
    CHECK((prop - c).norm() < 0.05);
}

TEST_CASE("pure-variance acquisition goes to the uncertain corner") {
    const int d = 2;
    const Eigen::VectorXd corner = Eigen::VectorXd::Ones(d);
    auto predict = [&](const Eigen::MatrixXd& q) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(q.rows());
        Eigen::VectorXd var(q.rows());
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const double r2 = (q.row(i).transpose() - corner).squaredNorm();
            var[i] = 1e-12 + std::exp(-r2 / (2.0 * 0.25 * 0.25));
        }
        return std::make_pair(mu, var);
    };
    BoConfig cfg = small_config(d);
    const Eigen::VectorXd prop = detail::maximize_ei_normalized(predict, d, 0.0, cfg, 11);
    CHECK((prop - corner).norm() < 0.1);
}

TEST_CASE("acquisition search is deterministic in its seed") {
    const int d = 4;
    auto predict = [](const Eigen::MatrixXd& q) {
        Eigen::VectorXd mu(q.rows()), var(q.rows());
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            mu[i] = std::sin(5.0 * q(i, 0)) + q(i, 2);
            var[i] = 0.05 + 0.1 * q(i, 3);
        }
        return std::make_pair(mu, var);
    };
    BoConfig cfg = small_config(d);
    const auto a = detail::maximize_ei_normalized(predict, d, 0.4, cfg, 21);
    const auto b = detail::maximize_ei_normalized(predict, d, 0.4, cfg, 21);
    CHECK(a == b);
    const auto other = detail::maximize_ei_normalized(predict, d, 0.4, cfg, 22);
    CHECK(a != other);
}

TEST_CASE("bo budget accounting and monotone running best") {
    auto f = [](const Eigen::VectorXd& x) {
        return -(x.array() - 0.3).square().sum();
    };
    BoConfig cfg = small_config(2);
    cfg.i_max = 1;
    auto res = run_bo(f, cfg);
    CHECK(res.history.records.size() == static_cast<std::size_t>(cfg.n_init + 1));

    cfg.i_max = 6;
    res = run_bo(f, cfg);
    CHECK(res.history.records.size() == static_cast<std::size_t>(cfg.n_init + 6));
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < res.history.records.size(); ++i) {
        const auto& r = res.history.records[i];
        CHECK(r.iteration == static_cast<int>(i) + 1);
        CHECK(r.best >= prev);
        prev = r.best;
        CHECK(r.best == Approx(std::max(prev, r.value)).margin(0));
    }
}

TEST_CASE("bo locates a smooth quadratic optimum") {
    const Eigen::VectorXd c = (Eigen::VectorXd(2) << 0.64, 0.27).finished();
    auto f = [&](const Eigen::VectorXd& x) { return -(x - c).squaredNorm(); };
    BoConfig cfg = small_config(2, 5);
    cfg.i_max = 12;
    const auto res = run_bo(f, cfg);
    CHECK(res.history.best_value() > -0.005);
}

TEST_CASE("bo reruns bit-identically") {
    auto f = [](const Eigen::VectorXd& x) {
        return std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]) + 0.5 * x[1];
    };
    BoConfig cfg = small_config(2, 17);
    const auto a = run_bo(f, cfg);
    const auto b = run_bo(f, cfg);
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        CHECK(a.history.records[i].point == b.history.records[i].point);
        CHECK(a.history.records[i].value == b.history.records[i].value);
    }
}

TEST_CASE("objective failures are recorded as zero-speed penalties") {
    int calls = 0;
    auto f = [&](const Eigen::VectorXd& x) {
        if (++calls % 3 == 0) throw std::runtime_error("fell over");
        return 1.0 + x[0];
    };
    BoConfig cfg = small_config(1, 2);
    cfg.i_max = 4;
    const auto res = run_bo(f, cfg);
    CHECK(res.history.records.size() == static_cast<std::size_t>(cfg.n_init + 4));
    int zeros = 0;
    for (const auto& r : res.history.records)
        if (r.value == 0.0) ++zeros;
    CHECK(zeros >= 2);
}

TEST_CASE("random search performs exactly its budget") {
    auto f = [](const Eigen::VectorXd& x) { return x.sum(); };
    BoConfig cfg = small_config(3, 9);
    cfg.budget = 300;
    const auto hist = run_baseline(BaselineMethod::RandomSearch, f, cfg);
    CHECK(hist.records.size() == 300);
    for (const auto& r : hist.records) CHECK(cfg.bounds.contains(r.point));
}

TEST_CASE("metropolis rule degenerates to hill climbing at zero temperature") {
    CHECK(detail::sa_accept(0.1, 0.0, 0.99));
    CHECK_FALSE(detail::sa_accept(0.0, 0.0, 0.0));
    CHECK_FALSE(detail::sa_accept(-0.1, 0.0, 0.0));
    // positive temperature: acceptance probability exp(delta/T)
    CHECK(detail::sa_accept(-0.1, 1.0, 0.9));        // exp(-0.1) = 0.905
    CHECK_FALSE(detail::sa_accept(-0.1, 1.0, 0.91));
}

TEST_CASE("simulated annealing improves on a smooth landscape within budget") {
    const Eigen::VectorXd c = (Eigen::VectorXd(2) << 0.3, 0.7).finished();
    auto f = [&](const Eigen::VectorXd& x) { return 1.0 - (x - c).squaredNorm(); };
    BoConfig cfg = small_config(2, 23);
    cfg.budget = 300;
    const auto hist = run_baseline(BaselineMethod::SimulatedAnnealing, f, cfg);
    CHECK(hist.records.size() == 300);
    CHECK(hist.best_value() > 0.99);
}

TEST_CASE("adaptive grid search narrows onto a separable bowl") {
    const Eigen::VectorXd c = (Eigen::VectorXd(5) << 0.37, 0.62, 0.11, 0.80, 0.50).finished();
    auto f = [&](const Eigen::VectorXd& x) { return -(x - c).squaredNorm(); };
    BoConfig cfg = small_config(5, 1);
    const auto hist = run_baseline(BaselineMethod::AdaptiveGridSearch, f, cfg);
    CHECK(hist.records.size() == 3 * 1024);
    const auto& best = hist.best_record();
    const double final_cell = (1.0 / 3.0) * (2.0 / 3.0);  // round-3 cell: (4/9)/3
    for (int j = 0; j < 5; ++j) {
        INFO("dim " << j << " best " << best.point[j] << " true " << c[j]);
        CHECK(std::abs(best.point[j] - c[j]) <= final_cell / 2.0 + 1e-12);
    }
}

TEST_CASE("mfbo warm start evaluates the phase-1 best first") {
    auto f = [](const Eigen::VectorXd& x) { return 1.0 - (x.array() - 0.4).square().sum(); };
    BoConfig cfg = small_config(2, 31);
    cfg.n_init = 4;
    cfg.i_max = 4;
    cfg.k_max = 4;
    const auto phase1 = run_bo(f, cfg);
    const auto res = run_mfbo(f, cfg, phase1.history);  // zero reality gap

    REQUIRE(res.history.records.size() == 4);
    CHECK(res.history.records.front().point == phase1.history.best_record().point);
    CHECK(std::abs(res.history.records.front().value - phase1.history.best_value()) <=
          0.02 * std::abs(phase1.history.best_value()));
    for (const auto& r : res.history.records) CHECK(r.tag == Fidelity::Physical);
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& r : res.history.records) {
        CHECK(r.best >= prev);
        prev = r.best;
    }
    CHECK(res.history.provenance.posterior_argmax.has_value());
}

TEST_CASE("mfbo keeps improving under a constant fidelity offset") {
    // the tag-2 incumbent must come from tag-2 observations; a cross-fidelity
    // incumbent would make every phase-2 EI vanish under this offset
    auto low = [](const Eigen::VectorXd& x) { return 1.0 - (x.array() - 0.6).square().sum(); };
    auto high = [&](const Eigen::VectorXd& x) { return low(x) - 10.0; };
    BoConfig cfg = small_config(2, 8);
    cfg.n_init = 5;
    cfg.i_max = 6;
    cfg.k_max = 10;
    const auto phase1 = run_bo(low, cfg);
    const auto res = run_mfbo(high, cfg, phase1.history);
    CHECK(res.history.best_value() > 1.0 - 10.0 - 0.05);
}

TEST_CASE("mfbo requires a warm-start history") {
    auto f = [](const Eigen::VectorXd& x) { return x.sum(); };
    BoConfig cfg = small_config(2);
    OptimizationHistory empty;
    CHECK_THROWS_AS(run_mfbo(f, cfg, empty), std::invalid_argument);
}

TEST_CASE("config validation") {
    BoConfig cfg = small_config(2);
    cfg.n_init = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config(2);
    cfg.bounds.upper[0] = cfg.bounds.lower[0];
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

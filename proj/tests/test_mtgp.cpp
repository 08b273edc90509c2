#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "gaitopt/mtgp.hpp"

using namespace gaitopt;
using Catch::Approx;

namespace {

Kernel base_kernel(int d, double sv = 1.0, double l = 0.3, double nv = 1e-6) {
    Kernel k;
    k.signal_variance = sv;
    k.lengthscales = Eigen::VectorXd::Constant(d, l);
    k.noise_variance = nv;
    return k;
}

Eigen::VectorXd rand_point(Rng& rng, int d) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform01();
    return x;
}

}  // namespace

TEST_CASE("multi-task kernel factorizes into task and input parts") {
    Rng rng(8);
    const auto k = base_kernel(3);
    const auto p = rand_point(rng, 3);
    const auto q = rand_point(rng, 3);

    SECTION("identity K_f decouples the two sources") {
        const auto kf = CoregionalizationMatrix::from_matrix(Eigen::Matrix2d::Identity());
        CHECK(mt_kernel(p, Fidelity::Simulation, q, Fidelity::Physical, kf, k) == 0.0);
        CHECK(mt_kernel(p, Fidelity::Simulation, q, Fidelity::Simulation, kf, k) ==
              Approx(kernel_eval(p, q, k)).margin(1e-15));
    }

    SECTION("cross covariance is the product of the two factors") {
        Eigen::Matrix2d m;
        m << 1.0, 0.6, 0.6, 1.0;
        const auto kf = CoregionalizationMatrix::from_matrix(m);
        // pick points exactly half a covariance apart
        Eigen::VectorXd a = Eigen::VectorXd::Zero(3);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
        b[0] = k.lengthscales[0] * std::sqrt(2.0 * std::log(2.0));  // k(a,b) = 0.5
        CHECK(kernel_eval(a, b, k) == Approx(0.5).margin(1e-12));
        CHECK(mt_kernel(a, Fidelity::Simulation, b, Fidelity::Physical, kf, k) ==
              Approx(0.3).margin(1e-12));
    }
}

TEST_CASE("isotopic element-wise assembly equals the Kronecker product") {
    Rng rng(21);
    const auto k = base_kernel(2, 1.7, 0.4);
    Eigen::Matrix2d kfm;
    kfm << 1.0, 0.45, 0.45, 0.8;
    const auto kf = CoregionalizationMatrix::from_matrix(kfm);
    Eigen::MatrixXd pts(3, 2);
    for (int i = 0; i < 3; ++i) pts.row(i) = rand_point(rng, 2).transpose();

    FidelityDataset data;  // tag-major ordering: all sim, then all phys
    for (int i = 0; i < 3; ++i) data.append(pts.row(i).transpose(), Fidelity::Simulation, 0.0);
    for (int i = 0; i < 3; ++i) data.append(pts.row(i).transpose(), Fidelity::Physical, 0.0);

    const Eigen::MatrixXd assembled = assemble_covariance(data, kf, k);
    const Eigen::MatrixXd kp = covariance_matrix(pts, k);
    const Eigen::Matrix2d kfexact = kf.matrix();
    Eigen::MatrixXd kron(6, 6);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) kron.block(3 * a, 3 * b, 3, 3) = kfexact(a, b) * kp;
    REQUIRE(assembled.rows() == 6);
    CHECK((assembled - kron).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("heterotopic assembly shape, symmetry, diagonal") {
    Rng rng(5);
    const auto k = base_kernel(4, 2.5);
    const auto kf = CoregionalizationMatrix::from_factor(1.0, 0.5, 0.7);
    FidelityDataset data;
    for (int i = 0; i < 4; ++i) data.append(rand_point(rng, 4), Fidelity::Simulation, 0.0);
    data.append(rand_point(rng, 4), Fidelity::Physical, 0.0);
    const Eigen::MatrixXd K = assemble_covariance(data, kf, k);
    REQUIRE(K.rows() == 5);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const auto kfm = kf.matrix();
    for (int i = 0; i < 4; ++i) CHECK(K(i, i) == Approx(kfm(0, 0) * 2.5).margin(1e-14));
    CHECK(K(4, 4) == Approx(kfm(1, 1) * 2.5).margin(1e-14));
}

TEST_CASE("K_f is PSD by construction for arbitrary factors") {
    Rng rng(62);
    for (int trial = 0; trial < 200; ++trial) {
        const auto kf = CoregionalizationMatrix::from_factor(
            rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        const Eigen::Vector2d eig = kf.matrix().selfadjointView<Eigen::Lower>().eigenvalues();
        CHECK(eig.minCoeff() >= -1e-10);
    }
}

TEST_CASE("normalize_kf") {
    SECTION("identity stays identity") {
        const auto out = normalize_kf(Eigen::Matrix2d::Identity());
        CHECK((out - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("rescales by the diagonal") {
        Eigen::Matrix2d in;
        in << 4.0, 1.2, 1.2, 1.0;
        const auto out = normalize_kf(in);
        CHECK(out(0, 0) == 1.0);
        CHECK(out(1, 1) == 1.0);
        CHECK(out(0, 1) == Approx(0.6).margin(1e-14));
        CHECK(out(1, 0) == Approx(0.6).margin(1e-14));
    }

    SECTION("rejects non-positive diagonal") {
        Eigen::Matrix2d bad;
        bad << 0.0, 0.0, 0.0, 1.0;
        CHECK_THROWS_AS(normalize_kf(bad), std::invalid_argument);
    }
}

TEST_CASE("identity K_f on one-tag data reduces to the single-task GP") {
    Rng rng(7);
    const int n = 8, d = 3;
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    FidelityDataset data;
    for (int i = 0; i < n; ++i) {
        const auto p = rand_point(rng, d);
        X.row(i) = p.transpose();
        y[i] = std::sin(4.0 * p[0]) + p[2];
        data.append(p, Fidelity::Simulation, y[i]);
    }
    const auto k = base_kernel(d, 1.3, 0.35, 1e-4);
    const auto kf = CoregionalizationMatrix::from_matrix(Eigen::Matrix2d::Identity());
    const auto mt = MtgpModel::with_params(data, k, kf, 1e-4);
    const auto gp = GpModel::with_kernel(X, y, k);

    for (int q = 0; q < 20; ++q) {
        const auto xq = rand_point(rng, d);
        const auto a = mt.predict(xq, Fidelity::Simulation);
        const auto b = gp.predict(xq);
        CHECK(a.mean == Approx(b.mean).margin(1e-10));
        CHECK(a.variance == Approx(b.variance).margin(1e-10));

        // querying the unobserved tag reverts to the prior
        const auto c = mt.predict(xq, Fidelity::Physical);
        CHECK(c.mean == Approx(0.0).margin(1e-12));
        CHECK(c.variance == Approx(k.signal_variance).margin(1e-10));
    }
}

TEST_CASE("heterotopic prediction matches a dense-inverse oracle") {
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        const int d = 1 + static_cast<int>(rng.below(4));
        const int n1 = 2 + static_cast<int>(rng.below(4));
        const int n2 = 1 + static_cast<int>(rng.below(3));
        FidelityDataset data;
        for (int i = 0; i < n1; ++i)
            data.append(rand_point(rng, d), Fidelity::Simulation, rng.uniform(-1.0, 1.0));
        for (int i = 0; i < n2; ++i)
            data.append(rand_point(rng, d), Fidelity::Physical, rng.uniform(-1.0, 1.0));
        const auto k = base_kernel(d, rng.uniform(0.5, 2.0), rng.uniform(0.2, 0.8),
                                   rng.uniform(1e-4, 0.05));
        const double noise2 = rng.uniform(1e-4, 0.1);
        const auto kf = CoregionalizationMatrix::from_factor(1.0, rng.uniform(-0.9, 0.9),
                                                             rng.uniform(0.3, 1.2));
        const auto model = MtgpModel::with_params(data, k, kf, noise2);

        Eigen::MatrixXd K = assemble_covariance(data, kf, k);
        for (Eigen::Index i = 0; i < data.size(); ++i)
            K(i, i) += data.tags[i] == Fidelity::Simulation ? k.noise_variance : noise2;
        const Eigen::MatrixXd Kinv = K.inverse();
        const auto kfm = kf.matrix();

        for (int q = 0; q < 4; ++q) {
            const auto xq = rand_point(rng, d);
            const Fidelity jq = rng.below(2) == 0 ? Fidelity::Simulation : Fidelity::Physical;
            Eigen::VectorXd kv(data.size());
            for (Eigen::Index i = 0; i < data.size(); ++i)
                kv[i] = mt_kernel(data.x.row(i).transpose(), data.tags[i], xq, jq, kf, k);
            const double mu = kv.dot(Kinv * data.v);
            const double var =
                kfm(fidelity_index(jq), fidelity_index(jq)) * k.signal_variance -
                kv.dot(Kinv * kv);
            const auto pred = model.predict(xq, jq);
            CHECK(pred.mean == Approx(mu).margin(1e-8));
            CHECK(pred.variance == Approx(var).margin(1e-8));
        }
    }
}

TEST_CASE("correlated low-fidelity data reduces high-fidelity variance") {
    Rng rng(99);
    const int d = 2;
    const auto k = base_kernel(d, 1.0, 0.4, 1e-4);
    FidelityDataset phys_only;
    for (int i = 0; i < 3; ++i)
        phys_only.append(rand_point(rng, d), Fidelity::Physical, rng.uniform(-1.0, 1.0));
    FidelityDataset both = phys_only;
    for (int i = 0; i < 10; ++i)
        both.append(rand_point(rng, d), Fidelity::Simulation, rng.uniform(-1.0, 1.0));
    const auto kf = CoregionalizationMatrix::from_factor(1.0, 0.8, 0.6);
    const auto small = MtgpModel::with_params(phys_only, k, kf, 1e-4);
    const auto big = MtgpModel::with_params(both, k, kf, 1e-4);
    for (int q = 0; q < 30; ++q) {
        const auto xq = rand_point(rng, d);
        CHECK(big.predict(xq, Fidelity::Physical).variance <=
              small.predict(xq, Fidelity::Physical).variance + 1e-10);
    }
}

TEST_CASE("fit recovers strong correlation when the tasks coincide") {
    // isotopic design: both sources observed at the same sites, v2 = v1
    Rng rng(42);
    const int d = 2;
    auto f = [](const Eigen::VectorXd& x) {
        return std::sin(5.0 * x[0]) + 0.7 * std::cos(3.0 * x[1]);
    };
    FidelityDataset data;
    std::vector<Eigen::VectorXd> sites;
    for (int i = 0; i < 12; ++i) sites.push_back(rand_point(rng, d));
    for (const auto& p : sites) data.append(p, Fidelity::Simulation, f(p));
    for (const auto& p : sites) data.append(p, Fidelity::Physical, f(p));
    MtgpFitOptions opts;
    opts.seed = 4;
    const auto model = MtgpModel::fit(data, opts);
    REQUIRE(model.cross_identifiable());
    CHECK(model.kf_normalized()(0, 1) > 0.9);
}

TEST_CASE("fit finds little correlation between unrelated tasks") {
    // isotopic design again, but v2 is independent noise
    Rng rng(4242);
    const int d = 2;
    FidelityDataset data;
    std::vector<Eigen::VectorXd> sites;
    for (int i = 0; i < 12; ++i) sites.push_back(rand_point(rng, d));
    for (const auto& p : sites)
        data.append(p, Fidelity::Simulation, std::sin(5.0 * p[0]) + 0.7 * std::cos(3.0 * p[1]));
    for (const auto& p : sites) data.append(p, Fidelity::Physical, rng.gaussian());
    MtgpFitOptions opts;
    opts.seed = 4;
    const auto model = MtgpModel::fit(data, opts);
    CHECK(std::abs(model.kf_normalized()(0, 1)) < 0.3);
}

TEST_CASE("single-tag datasets come back flagged with K_f at the initial guess") {
    Rng rng(3);
    FidelityDataset data;
    for (int i = 0; i < 6; ++i)
        data.append(rand_point(rng, 2), Fidelity::Simulation, rng.uniform(-1.0, 1.0));
    MtgpFitOptions opts;
    opts.seed = 11;
    const auto model = MtgpModel::fit(data, opts);
    CHECK_FALSE(model.cross_identifiable());
    CHECK(model.kf().l21 == Approx(0.5).margin(1e-12));
    CHECK(model.kf_normalized()(0, 1) == Approx(0.5).margin(1e-9));
}

TEST_CASE("mtgp serialization round-trips predictions") {
    Rng rng(17);
    FidelityDataset data;
    for (int i = 0; i < 10; ++i)
        data.append(rand_point(rng, 3), Fidelity::Simulation, rng.uniform(-1.0, 1.0));
    for (int i = 0; i < 4; ++i)
        data.append(rand_point(rng, 3), Fidelity::Physical, rng.uniform(-1.0, 1.0));
    MtgpFitOptions opts;
    opts.seed = 2;
    opts.restarts = 2;
    const auto model = MtgpModel::fit(data, opts);
    const auto restored = MtgpModel::from_json(nlohmann::json::parse(model.to_json().dump()));
    for (int q = 0; q < 20; ++q) {
        const auto xq = rand_point(rng, 3);
        for (Fidelity j : {Fidelity::Simulation, Fidelity::Physical}) {
            CHECK(restored.predict(xq, j).mean == Approx(model.predict(xq, j).mean).margin(1e-12));
            CHECK(restored.predict(xq, j).variance ==
                  Approx(model.predict(xq, j).variance).margin(1e-12));
        }
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "glf/errors.hpp"
#include "glf/kernels.hpp"
#include "glf/rgsm.hpp"

using namespace glf;
using namespace glf::rgsm;

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Objective the proximal operator minimizes: lambda*||v|| + 0.5*||v - w||^2.
double prox_objective(const std::vector<double>& v, const std::vector<double>& w,
                      double lambda) {
    double q = 0;
    for (std::size_t i = 0; i < v.size(); ++i) q += (v[i] - w[i]) * (v[i] - w[i]);
    return lambda * vec_norm(v) + 0.5 * q;
}

// Golden-section minimizer of a unimodal 1-d function on [lo, hi].
double golden_min(const std::function<double(double)>& f, double lo, double hi) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (f(c) < f(d))
            b = d;
        else
            a = c;
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    return 0.5 * (a + b);
}

// Independent 1-d oracle: the group prox solution lies on the ray t*w/||w||,
// so minimizing over t >= 0 gives the optimal objective value.
double prox_gl_oracle_objective(const std::vector<double>& w, double lambda) {
    const double r = vec_norm(w);
    if (r == 0.0) return prox_objective(std::vector<double>(w.size(), 0.0), w, lambda);
    auto along_ray = [&](double t) {
        // v = t * w/r: objective = lambda*t + 0.5*(t - r)^2
        return lambda * t + 0.5 * (t - r) * (t - r);
    };
    const double t_best = golden_min(along_ray, 0.0, r + lambda + 1.0);
    return along_ray(std::max(0.0, t_best));
}

}  // namespace

TEST_CASE("gl_norm oracle cases") {
    Tensor w = Tensor::from({2, 2}, {3, 0, 4, 0});  // columns (3,4) and (0,0)
    CHECK(gl_norm(w) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(gl_norm(Tensor::zeros({4, 7})) == 0.0);

    Rng rng(1);
    Tensor r = Tensor::randn({5, 9}, rng);
    double brute = 0;
    for (std::size_t g = 0; g < 9; ++g) {
        double s = 0;
        for (std::size_t d = 0; d < 5; ++d) s += r.at(d, g) * r.at(d, g);
        brute += std::sqrt(s);
    }
    CHECK(gl_norm(r) == doctest::Approx(brute).epsilon(1e-14));
    CHECK(gl_norm(std::vector<Tensor>{w, w}) == doctest::Approx(10.0));
}

TEST_CASE("prox_gl closed form") {
    SUBCASE("below threshold collapses to zero") {
        auto out = prox_gl({0.003, 0.004}, 0.01);  // norm 0.005 <= lambda
        CHECK(out[0] == 0.0);
        CHECK(out[1] == 0.0);
        auto zero = prox_gl({0.0, 0.0, 0.0}, 0.5);
        for (double v : zero) CHECK(v == 0.0);
    }

    SUBCASE("lambda zero is the identity") {
        std::vector<double> w{1.5, -2.0, 0.25};
        CHECK(prox_gl(w, 0.0) == w);
    }

    SUBCASE("worked case (0.03, 0.04) at lambda 0.01") {
        auto out = prox_gl({0.03, 0.04}, 0.01);
        CHECK(out[0] == doctest::Approx(0.024).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(0.032).epsilon(1e-12));
    }

    SUBCASE("matches the 1-d minimization oracle and beats perturbations") {
        Rng rng(2);
        int oracle_cases = 0;
        for (int rep = 0; rep < 200; ++rep) {
            const std::size_t n = 1 + rng.below(6);
            std::vector<double> w(n);
            for (double& x : w) x = rng.uniform(-1.0, 1.0);
            const double lambda = rng.uniform(0.0, 0.8);
            auto out = prox_gl(w, lambda);

            const double got = prox_objective(out, w, lambda);
            const double want = prox_gl_oracle_objective(w, lambda);
            CHECK(got <= want + 1e-8);
            ++oracle_cases;

            for (int p = 0; p < 20; ++p) {
                std::vector<double> pert = out;
                for (double& x : pert) x += rng.normal(0.0, 0.05);
                CHECK(got <= prox_objective(pert, w, lambda) + 1e-12);
            }
        }
        CHECK(oracle_cases == 200);
    }

    SUBCASE("direction preserved: output is nonnegative multiple of input") {
        Rng rng(3);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> w(4);
            for (double& x : w) x = rng.uniform(-2.0, 2.0);
            auto out = prox_gl(w, rng.uniform(0.0, 1.0));
            // find the implied scalar from the largest-magnitude entry
            std::size_t k = 0;
            for (std::size_t i = 1; i < w.size(); ++i)
                if (std::fabs(w[i]) > std::fabs(w[k])) k = i;
            const double c = out[k] / w[k];
            CHECK(c >= 0.0);
            for (std::size_t i = 0; i < w.size(); ++i)
                CHECK(out[i] == doctest::Approx(c * w[i]).epsilon(1e-10));
        }
    }

    CHECK_THROWS_AS(prox_gl({1.0}, -0.1), ConfigError);
}

TEST_CASE("prox_lasso elementwise shrinkage") {
    CHECK(prox_lasso({0.005}, 0.01)[0] == 0.0);
    std::vector<double> w{1.0, -0.3, 0.0};
    CHECK(prox_lasso(w, 0.0) == w);

    // each coordinate minimizes lambda*|v| + 0.5*(v - w)^2 independently
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const double x = rng.uniform(-2.0, 2.0);
        const double lambda = rng.uniform(0.0, 1.0);
        const double got = prox_lasso({x}, lambda)[0];
        auto f = [&](double v) { return lambda * std::fabs(v) + 0.5 * (v - x) * (v - x); };
        const double t = golden_min(f, -3.0, 3.0);
        CHECK(f(got) <= f(t) + 1e-10);
        CHECK(std::fabs(got - t) < 1e-6);
    }
}

TEST_CASE("prox_apply per penalty kind") {
    Rng rng(5);
    Tensor w = Tensor::randn({3, 4}, rng, 0.02);
    PenaltySpec none{PenaltyKind::None, 0.0};
    CHECK(prox_apply(w, none).data() == w.data());

    PenaltySpec gl{PenaltyKind::GroupLasso, 0.01};
    Tensor out = prox_apply(w, gl);
    for (std::size_t g = 0; g < 4; ++g) {
        std::vector<double> col(3);
        for (std::size_t d = 0; d < 3; ++d) col[d] = w.at(d, g);
        auto want = prox_gl(col, 0.01);
        for (std::size_t d = 0; d < 3; ++d)
            CHECK(out.at(d, g) == doctest::Approx(want[d]).epsilon(1e-14));
    }

    PenaltySpec la{PenaltyKind::Lasso, 0.01};
    Tensor lout = prox_apply(w, la);
    auto lwant = prox_lasso(w.data(), 0.01);
    CHECK(lout.data() == lwant);
}

TEST_CASE("relaxed_loss composition") {
    Rng rng(6);
    Tensor w = Tensor::randn({2, 3}, rng);
    PenaltySpec gl{PenaltyKind::GroupLasso, 0.05};

    SUBCASE("w equals u: split term vanishes") {
        Tensor u = w.clone();
        const double l = relaxed_loss(1.25, {w}, {u}, gl, 0.9);
        CHECK(l == doctest::Approx(1.25 + 0.05 * gl_norm(u)).epsilon(1e-14));
    }

    SUBCASE("zero u and no penalty: f plus beta/2 norm") {
        Tensor u = Tensor::zeros({2, 3});
        PenaltySpec none{PenaltyKind::None, 0.0};
        double sq = 0;
        for (double v : w.data()) sq += v * v;
        CHECK(relaxed_loss(2.0, {w}, {u}, none, 0.9) ==
              doctest::Approx(2.0 + 0.45 * sq).epsilon(1e-14));
    }

    SUBCASE("random state matches term-by-term recomputation") {
        Tensor u = Tensor::randn({2, 3}, rng);
        double split = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = w.data()[i] - u.data()[i];
            split += d * d;
        }
        const double want = 3.5 + 0.05 * gl_norm(u) + 0.45 * split;
        CHECK(relaxed_loss(3.5, {w}, {u}, gl, 0.9) == doctest::Approx(want).epsilon(1e-14));
    }

    CHECK_THROWS_AS(relaxed_loss(0.0, {w}, {}, gl, 0.9), ShapeError);
}

TEST_CASE("rgsm_step hand-checked scalar iteration") {
    // f = w^2/2 so grad f = w; start at 1
    Tensor w = Tensor::from({1, 1}, {1.0});
    w.set_requires_grad(true);
    RgsmState s = RgsmState::make({}, {w}, {PenaltyKind::GroupLasso, 0.01}, 0.9, 0.1,
                                  OptimMode::Gd);
    w.grad()[0] = w.data()[0];
    rgsm_step(s);
    CHECK(s.u[0].at(0, 0) == doctest::Approx(0.99).epsilon(1e-14));
    CHECK(w.at(0, 0) == doctest::Approx(0.8991).epsilon(1e-12));
    CHECK(s.step_count == 1);
}

TEST_CASE("split variable converges to w on a centered quadratic") {
    Rng rng(7);
    Tensor w = Tensor::from({2, 1}, {1.0, 1.0});
    w.set_requires_grad(true);
    RgsmState s = RgsmState::make({}, {w}, {PenaltyKind::GroupLasso, 0.01}, 0.9, 0.5,
                                  OptimMode::Gd);
    for (int t = 0; t < 200; ++t) {
        w.zero_grad();
        for (std::size_t i = 0; i < 2; ++i) w.grad()[i] = w.data()[i];
        rgsm_step(s);
    }
    double gap = 0;
    for (std::size_t i = 0; i < 2; ++i) {
        const double d = w.data()[i] - s.u[0].data()[i];
        gap += d * d;
    }
    CHECK(std::sqrt(gap) < 1e-6);
}

TEST_CASE("lambda zero reduces to the plain update bitwise") {
    Rng rng(8);

    SUBCASE("gd mode") {
        Tensor w = Tensor::randn({3, 2}, rng);
        Tensor ref = w.clone();
        w.set_requires_grad(true);
        RgsmState s =
            RgsmState::make({}, {w}, {PenaltyKind::GroupLasso, 0.0}, 0.9, 0.05, OptimMode::Gd);
        for (int t = 0; t < 25; ++t) {
            Tensor g = Tensor::randn({3, 2}, rng);
            w.zero_grad();
            for (std::size_t i = 0; i < w.size(); ++i) w.grad()[i] = g.data()[i];
            rgsm_step(s);
            kernels::ops().axpy(-0.05, g.data().data(), ref.data().data(), ref.size());
            CHECK(w.data() == ref.data());
        }
    }

    SUBCASE("adam mode matches a reference Adam") {
        Tensor w = Tensor::randn({4}, rng);
        Tensor ref = w.clone();
        w.set_requires_grad(true);
        RgsmState s =
            RgsmState::make({}, {w}, {PenaltyKind::Lasso, 0.0}, 0.9, 0.01, OptimMode::Adam);
        std::vector<double> m(4, 0.0), v(4, 0.0);
        for (int t = 1; t <= 25; ++t) {
            Tensor g = Tensor::randn({4}, rng);
            w.zero_grad();
            for (std::size_t i = 0; i < 4; ++i) w.grad()[i] = g.data()[i];
            rgsm_step(s);
            const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
            std::vector<double> dir(4);
            for (std::size_t i = 0; i < 4; ++i) {
                m[i] = 0.9 * m[i] + (1.0 - 0.9) * g.data()[i];
                v[i] = 0.999 * v[i] + (1.0 - 0.999) * g.data()[i] * g.data()[i];
                dir[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
            }
            kernels::ops().axpy(-0.01, dir.data(), ref.data().data(), 4);
            CHECK(w.data() == ref.data());
        }
    }
}

TEST_CASE("descent monitor on a quadratic toy") {
    // f = ||w||^2/2 has exact Lipschitz constant 1
    const double beta = 0.9, l_ip = 1.0;
    PenaltySpec gl{PenaltyKind::GroupLasso, 0.01};

    auto run = [&](double eta, int steps, bool expect_blowup = false) {
        Tensor w = Tensor::from({2, 1}, {1.0, 1.0});
        w.set_requires_grad(true);
        RgsmState s = RgsmState::make({}, {w}, gl, beta, eta, OptimMode::Gd);
        DescentMonitor mon(beta, l_ip);
        auto f_of = [&] {
            double sq = 0;
            for (double v : w.data()) sq += v * v;
            return 0.5 * sq;
        };
        for (int t = 0; t < steps; ++t) {
            w.zero_grad();
            for (std::size_t i = 0; i < w.size(); ++i) w.grad()[i] = w.data()[i];
            refresh_split(s);
            const double l_before = relaxed_loss(f_of(), s.w, s.u, gl, beta);
            double norm;
            try {
                norm = rgsm_step(s);
            } catch (const NumericError&) {
                CHECK(expect_blowup);
                break;
            }
            const double l_after = relaxed_loss(f_of(), s.w, s.u, gl, beta);
            mon.observe(t, l_before, l_after, norm, eta, OptimMode::Gd);
        }
        return mon;
    };

    SUBCASE("compliant step size: slack never negative, no breaks") {
        const double eta = 0.5;  // bound is 2/(0.9+1) = 1.0526...
        DescentMonitor mon = run(eta, 1000);
        CHECK(mon.compliant(eta));
        CHECK(mon.monotonicity_breaks() == 0);
        CHECK(mon.records().size() == 1000);
        for (const auto& r : mon.records())
            CHECK(r.slack >= -1e-10 * std::max(1.0, std::fabs(r.l_before)));
    }

    SUBCASE("negative control at 10/(beta+L) breaks monotonicity") {
        const double eta = 10.0 / (beta + l_ip);
        DescentMonitor mon = run(eta, 40, true);
        CHECK(!mon.compliant(eta));
        CHECK(mon.monotonicity_breaks() >= 1);
    }

    SUBCASE("step size admitted by the misprint reading still breaks") {
        // 2/beta + L = 3.22 would admit eta = 2.0; the true bound 2/(beta+L)
        // = 1.05 does not, and the run confirms non-monotone behavior
        const double eta = 2.0;
        CHECK(eta < 2.0 / beta + l_ip);
        DescentMonitor mon = run(eta, 60);
        CHECK(!mon.compliant(eta));
        CHECK(mon.monotonicity_breaks() >= 1);
    }

    SUBCASE("zero gradient and converged split: nothing moves, slack zero") {
        Tensor w = Tensor::zeros({2, 1});
        w.set_requires_grad(true);
        RgsmState s = RgsmState::make({}, {w}, gl, beta, 0.5, OptimMode::Gd);
        DescentMonitor mon(beta, l_ip);
        refresh_split(s);
        const double l_before = relaxed_loss(0.0, s.w, s.u, gl, beta);
        const double norm = rgsm_step(s);
        const double l_after = relaxed_loss(0.0, s.w, s.u, gl, beta);
        auto r = mon.observe(0, l_before, l_after, norm, 0.5, OptimMode::Gd);
        CHECK(norm == 0.0);
        CHECK(r.slack == 0.0);
    }
}

TEST_CASE("monitor csv schema") {
    DescentMonitor mon(0.9, 1.0);
    mon.observe(0, 2.0, 1.5, 0.1, 0.5, OptimMode::Gd);
    mon.observe(1, 1.5, 1.2, 0.05, 0.5, OptimMode::Adam);
    std::ostringstream os;
    mon.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,L_beta_before,L_beta_after,slack,step_norm_sq,eta,mode");
    std::getline(is, line);
    CHECK(line.substr(0, 2) == "0,");
    CHECK(line.find(",gd") != std::string::npos);
    std::getline(is, line);
    CHECK(line.find(",adam") != std::string::npos);
}

TEST_CASE("lipschitz estimation") {
    Rng rng(9);

    SUBCASE("identity quadratic estimates exactly 1") {
        Tensor v = Tensor::randn({5}, rng);
        v.set_requires_grad(true);
        auto grad_eval = [&] {
            for (std::size_t i = 0; i < 5; ++i) v.grad()[i] += v.data()[i];
        };
        const double est = estimate_lipschitz(grad_eval, {v}, 50, 0.5, rng);
        CHECK(est == doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("diagonal quadratic: bounded by, and approaching, the top eigenvalue") {
        const std::vector<double> diag{2.0, 1.0, 0.5};
        Tensor v = Tensor::randn({3}, rng);
        v.set_requires_grad(true);
        auto grad_eval = [&] {
            for (std::size_t i = 0; i < 3; ++i) v.grad()[i] += diag[i] * v.data()[i];
        };
        const double est = estimate_lipschitz(grad_eval, {v}, 2000, 0.5, rng);
        CHECK(est <= 2.0 + 1e-9);
        CHECK(est >= 1.85);
    }

    SUBCASE("restores values and grads") {
        Tensor v = Tensor::randn({3}, rng);
        v.set_requires_grad(true);
        const std::vector<double> before = v.data();
        auto grad_eval = [&] {
            for (std::size_t i = 0; i < 3; ++i) v.grad()[i] += v.data()[i];
        };
        estimate_lipschitz(grad_eval, {v}, 10, 0.1, rng);
        CHECK(v.data() == before);
        for (double g : v.grad()) CHECK(g == 0.0);
    }

    CHECK_THROWS_AS(estimate_lipschitz([] {}, {}, 1, 0.1, rng), ConfigError);
}

TEST_CASE("learning rate schedule") {
    CHECK(lr_schedule(0) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(lr_schedule(9) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(lr_schedule(10) == doctest::Approx(8e-5).epsilon(1e-12));
    CHECK(lr_schedule(25) == doctest::Approx(6.4e-5).epsilon(1e-12));
    CHECK(lr_schedule(5, 0.01, 0.5, 2) == doctest::Approx(0.01 * 0.25).epsilon(1e-12));
}

TEST_CASE("state construction guards") {
    Tensor w = Tensor::zeros({2, 2});
    w.set_requires_grad(true);
    CHECK_THROWS_AS(
        RgsmState::make({}, {w}, {PenaltyKind::Lasso, -1.0}, 0.9, 0.1, OptimMode::Gd),
        ConfigError);
    CHECK_THROWS_AS(
        RgsmState::make({}, {w}, {PenaltyKind::Lasso, 0.1}, 0.9, 0.0, OptimMode::Gd),
        ConfigError);

    // NaN gradients are rejected before any movement
    RgsmState s = RgsmState::make({}, {w}, {PenaltyKind::None, 0.0}, 0.9, 0.1, OptimMode::Gd);
    w.grad()[0] = std::nan("");
    CHECK_THROWS_AS(rgsm_step(s), NumericError);
}

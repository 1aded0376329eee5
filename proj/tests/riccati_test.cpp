#include <doctest.h>

#include "mfc/environment.hpp"
#include "mfc/riccati.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace mfc;

namespace {

Vector vec1(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

LqCoefficients trading_coeffs() {
    TradingEnv::Params p;
    return TradingEnv(p, TimeGrid(1.0, 2)).lq_coefficients();
}

LqCoefficients sysrisk_coeffs() {
    SystemicRiskEnv::Params p;
    return SystemicRiskEnv(p, TimeGrid(1.0, 2)).lq_coefficients();
}

Example1Params ex1_params(double lambda) { return {0.6, 0.4, 1.0, 1.0, 1.0, lambda, 1.0}; }
Example2Params ex2_params(double lambda) { return {3.0, 2.0, 1.0, lambda, 1.0}; }

double max_k_error_vs_closed_form(const RiccatiSolution& sol, bool trading, double lambda) {
    double worst = 0.0;
    const TimeGrid& g = sol.grid();
    for (std::size_t k = 0; k <= g.n_steps(); ++k) {
        const double t = g.node(k);
        const double exact = trading ? closed_form_example2(t, ex2_params(lambda)).K
                                     : closed_form_example1(t, ex1_params(lambda)).K;
        worst = std::max(worst, std::abs(sol.K_nodes()[k](0, 0) - exact));
    }
    return worst;
}

double max_r_error_vs_closed_form(const RiccatiSolution& sol, bool trading, double lambda) {
    double worst = 0.0;
    const TimeGrid& g = sol.grid();
    for (std::size_t k = 0; k <= g.n_steps(); ++k) {
        const double t = g.node(k);
        const double exact = trading ? closed_form_example2(t, ex2_params(lambda)).R
                                     : closed_form_example1(t, ex1_params(lambda)).R;
        worst = std::max(worst, std::abs(sol.R_nodes()[k] - exact));
    }
    return worst;
}

} // namespace

TEST_CASE("closed form, example 1") {
    const Example1Params p = ex1_params(0.001);
    CHECK(example1_sqrt_delta(p) == doctest::Approx(oracle::kSqrtDelta).epsilon(1e-14));
    CHECK(std::round(example1_sqrt_delta(p) * 1e4) / 1e4 == 1.8221);

    const auto terminal = closed_form_example1(1.0, p);
    CHECK(terminal.K == doctest::Approx(1.0).epsilon(1e-14)); // K(T) = P
    CHECK(terminal.R == doctest::Approx(0.0));

    const auto at0 = closed_form_example1(0.0, p);
    CHECK(at0.K == doctest::Approx(oracle::kEx1K0).epsilon(1e-14));
    CHECK(at0.R == doctest::Approx(oracle::kEx1R0Lam001).epsilon(1e-14));
    CHECK(at0.phi == doctest::Approx(-2.0 * (oracle::kEx1K0 + 0.4)).epsilon(1e-14));

    Example1Params bad = p;
    bad.Q = 0.1; // < 2 I^2
    CHECK_THROWS_AS(closed_form_example1(0.0, bad), std::invalid_argument);
}

TEST_CASE("closed form, example 2") {
    const Example2Params p = ex2_params(0.001);
    const auto at0 = closed_form_example2(0.0, p);
    CHECK(at0.K == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(at0.R == doctest::Approx(oracle::kEx2R0Lam001).epsilon(1e-13));
    CHECK(at0.phi == doctest::Approx(-0.75).epsilon(1e-14));
    CHECK(at0.phi3 == -2.0);

    const auto terminal = closed_form_example2(1.0, p);
    CHECK(terminal.K == 3.0);
    CHECK(terminal.R == 0.0);

    // paper's reported exact initial value bracketing
    const double value = at0.K * 1.0 + at0.R;
    CHECK(value == doctest::Approx(oracle::kEx2ValueLam001).epsilon(1e-13));
    CHECK(std::abs(value - (-1.861)) < 0.003);
    CHECK(std::abs(value - (-1.863)) < 0.003);
}

TEST_CASE("RK4 matches the trading closed form") {
    const double lambda = 0.001;
    const RiccatiSolution sol = solve_riccati(trading_coeffs(), lambda, TimeGrid(1.0, 2000));
    CHECK(std::abs(sol.K(0.0)(0, 0) - 0.75) < 1e-6);
    CHECK(sol.K_nodes().back()(0, 0) == 3.0); // terminal condition, exact
    CHECK(max_k_error_vs_closed_form(sol, true, lambda) < 1e-6);
    CHECK(max_r_error_vs_closed_form(sol, true, lambda) < 1e-5);
}

TEST_CASE("RK4 matches the systemic-risk closed form") {
    const double lambda = 0.1;
    const RiccatiSolution sol = solve_riccati(sysrisk_coeffs(), lambda, TimeGrid(1.0, 2000));
    CHECK(std::abs(sol.K(0.0)(0, 0) - oracle::kEx1K0) < 1e-6);
    CHECK(max_k_error_vs_closed_form(sol, false, lambda) < 1e-6);
    CHECK(max_r_error_vs_closed_form(sol, false, lambda) < 1e-5);
    CHECK(sol.Lambda(0.37).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sol.Y(0.42).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("RK4 converges at fourth order") {
    const double lambda = 0.01;
    const LqCoefficients coeffs = sysrisk_coeffs();
    const double coarse =
        max_k_error_vs_closed_form(solve_riccati(coeffs, lambda, TimeGrid(1.0, 25)), false,
                                   lambda);
    const double fine =
        max_k_error_vs_closed_form(solve_riccati(coeffs, lambda, TimeGrid(1.0, 50)), false,
                                   lambda);
    CHECK(coarse / fine > 8.0); // ~16x per halving
    CHECK(coarse / fine < 40.0);
}

TEST_CASE("K stays symmetric and positive semidefinite") {
    // a 2x2 model exercising the matrix path
    LqCoefficients c = LqCoefficients::zero(2, 2);
    c.B << 0.1, 0.2, -0.1, 0.05;
    c.B_bar << 0.05, 0.0, 0.0, -0.02;
    c.C << 1.0, 0.1, 0.0, 0.8;
    c.D << 0.1, 0.0, 0.05, 0.1;
    c.F << 0.2, 0.0, 0.0, 0.1;
    c.gamma << 0.3, 0.1;
    c.Q << 1.0, 0.2, 0.2, 0.8;
    c.N << 1.0, 0.1, 0.1, 0.5;
    c.P << 0.5, 0.0, 0.0, 0.5;
    c.H << 0.1, -0.2;
    c.M << 0.05, 0.0;
    c.L << 0.1, 0.0;
    const RiccatiSolution sol = solve_riccati(c, 0.05, TimeGrid(1.0, 500));
    for (const Matrix& K : sol.K_nodes()) {
        CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Matrix> es(K);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
}

TEST_CASE("R can be rebuilt from K by quadrature of the entropy source") {
    // entropy of the optimal Gaussian policy at time t, against the R source
    const double lambda = 0.01;
    const LqCoefficients coeffs = trading_coeffs();
    const RiccatiSolution sol = solve_riccati(coeffs, lambda, TimeGrid(1.0, 2000));
    auto integrand = [&](double t) {
        const double K = sol.K(t)(0, 0);
        const double S = coeffs.N(0, 0) + coeffs.F(0, 0) * K * coeffs.F(0, 0);
        const double Y = sol.Y(t)(0);
        const double O = coeffs.H(0) + coeffs.C(0, 0) * Y + coeffs.F(0, 0) * K * coeffs.gamma(0);
        const double entropy = 0.5 * std::log(2.0 * M_PI * std::exp(1.0)) +
                               0.5 * std::log(0.5 * lambda / S);
        const double gkg = coeffs.gamma(0) * K * coeffs.gamma(0);
        return gkg - O * O / S + 0.5 * lambda - lambda * entropy;
    };
    const double rebuilt = oracle::simpson(integrand, 0.0, 1.0, 4000);
    CHECK(std::abs(rebuilt - sol.R(0.0)) < 1e-5);
}

TEST_CASE("K is independent of lambda; policy covariance is linear in it") {
    const LqCoefficients coeffs = sysrisk_coeffs();
    const RiccatiSolution a = solve_riccati(coeffs, 0.001, TimeGrid(1.0, 400));
    const RiccatiSolution b = solve_riccati(coeffs, 0.3, TimeGrid(1.0, 400));
    for (std::size_t k = 0; k <= 400; ++k)
        CHECK(a.K_nodes()[k](0, 0) == doctest::Approx(b.K_nodes()[k](0, 0)).epsilon(1e-12));

    const GaussianPolicy p1 = optimal_policy(a, coeffs, 0.001);
    const GaussianPolicy p2 = optimal_policy(b, coeffs, 0.3);
    CHECK(p2.covariance(0.5)(0, 0) ==
          doctest::Approx(300.0 * p1.covariance(0.5)(0, 0)).epsilon(1e-12));
}

TEST_CASE("optimal policy specialisations") {
    const double lambda = 0.01;
    const LqCoefficients tc = trading_coeffs();
    const RiccatiSolution tsol = solve_riccati(tc, lambda, TimeGrid(1.0, 2000));
    const GaussianPolicy trading = optimal_policy(tsol, tc, lambda);
    for (double t : {0.0, 0.3, 0.9}) {
        const double K = closed_form_example2(t, ex2_params(lambda)).K;
        const double mean = trading.mean(t, vec1(1.4), vec1(0.4))(0);
        CHECK(mean == doctest::Approx(-K * 1.0 - 2.0).epsilon(1e-5));
        CHECK(trading.covariance(t)(0, 0) == doctest::Approx(0.5 * lambda).epsilon(1e-12));
    }

    const LqCoefficients sc = sysrisk_coeffs();
    const RiccatiSolution ssol = solve_riccati(sc, lambda, TimeGrid(1.0, 2000));
    const GaussianPolicy sysrisk = optimal_policy(ssol, sc, lambda);
    CHECK(sysrisk.mean(0.2, vec1(0.8), vec1(0.8))(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sysrisk.covariance(0.2)(0, 0) == doctest::Approx(lambda).epsilon(1e-6));

    const GaussianPolicy deterministic = optimal_policy(ssol, sc, 0.0);
    CHECK(deterministic.covariance(0.5)(0, 0) == 0.0);
}

TEST_CASE("optimal value examples") {
    const double lambda = 0.001;
    const LqCoefficients tc = trading_coeffs();
    const RiccatiSolution tsol = solve_riccati(tc, lambda, TimeGrid(1.0, 2000));

    // terminal condition: v(T, x, mu) = g(x, mu) at the particle level of the
    // centred representation
    const double vT = optimal_value(tsol, 1.0, vec1(1.7), vec1(0.9));
    CHECK(vT == doctest::Approx(3.0 * 0.8 * 0.8).epsilon(1e-12));

    // initial value against N(1,1): K(0) Var + R(0)
    const double value = tsol.K(0.0)(0, 0) * 1.0 + tsol.R(0.0);
    CHECK(value == doctest::Approx(oracle::kEx2ValueLam001).epsilon(1e-6));

    const LqCoefficients sc = sysrisk_coeffs();
    const RiccatiSolution ssol = solve_riccati(sc, lambda, TimeGrid(1.0, 2000));
    const double value1 = ssol.K(0.0)(0, 0) * 1.0 + ssol.R(0.0);
    CHECK(std::abs(value1 - 0.613) / 0.613 < 0.02); // Table 2 reference
    CHECK(value1 == doctest::Approx(oracle::kEx1ValueLam001).epsilon(1e-6));

    EmpiricalMeasure mu = EmpiricalMeasure::dirac(vec1(0.9));
    CHECK(optimal_value(tsol, 1.0, vec1(1.7), mu) == doctest::Approx(vT));
}

TEST_CASE("degenerate-S configurations are rejected with the failure time") {
    LqCoefficients c = LqCoefficients::zero(1, 1);
    c.N(0, 0) = 0.0; // S = 0 with F = 0: invalid at once
    c.P(0, 0) = 1.0;
    CHECK_THROWS_AS(solve_riccati(c, 0.1, TimeGrid(1.0, 100)), std::domain_error);
}

TEST_CASE("lambda = 0 drops the entropy source") {
    const RiccatiSolution sol = solve_riccati(trading_coeffs(), 0.0, TimeGrid(1.0, 2000));
    const double expected = closed_form_example2(0.0, ex2_params(0.0)).R;
    CHECK(std::abs(sol.R(0.0) - expected) < 1e-5);
    CHECK(sol.R(0.0) + 0.75 == doctest::Approx(oracle::kEx2ValueLam0).epsilon(1e-5));
}

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

SystemicRiskEnv make_sysrisk(double gamma = 1.0, bool oracle = false) {
    SystemicRiskEnv::Params p;
    p.gamma = gamma;
    p.oracle_mean = oracle;
    return SystemicRiskEnv(p, TimeGrid(1.0, 50));
}

TradingEnv make_trading(double gamma = 1.0) {
    TradingEnv::Params p;
    p.gamma = gamma;
    return TradingEnv(p, TimeGrid(1.0, 50));
}

} // namespace

TEST_CASE("initial laws match the configured distributions") {
    const std::size_t draws = 100000;
    RngStream rng(31, 0);

    const SystemicRiskEnv sr = make_sysrisk();
    double mean = 0.0, second = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double x = sr.sample_initial(rng)(0);
        mean += x;
        second += x * x;
    }
    mean /= static_cast<double>(draws);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(second / static_cast<double>(draws) - mean * mean - 1.0) < 0.05);

    const TradingEnv tr = make_trading();
    mean = 0.0;
    for (std::size_t i = 0; i < draws; ++i)
        mean += tr.sample_initial(rng)(0);
    CHECK(std::abs(mean / static_cast<double>(draws) - 1.0) < 0.02);
}

TEST_CASE("a Dirac initial law always returns the same point") {
    LqCoefficients c = LqCoefficients::zero(1, 1);
    c.N(0, 0) = 1.0;
    GenericLqEnv::InitialLaw law{vec1(2.5), vec1(0.0)};
    const GenericLqEnv env(c, law, TimeGrid(1.0, 4));
    RngStream rng(1, 0);
    for (int i = 0; i < 10; ++i)
        CHECK(env.sample_initial(rng)(0) == 2.5);
}

TEST_CASE("trading Euler step, hand-evaluated") {
    const TradingEnv env = make_trading();
    const EnvStep step = env.step_with_noise(0, vec1(0.0), vec1(2.0), vec1(0.0), 0.0);
    CHECK(step.next_state(0) == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(step.running_cost == doctest::Approx(12.0).epsilon(1e-14)); // 2^2 + 2*2*2
}

TEST_CASE("systemic risk fixed point and exponential factor") {
    const SystemicRiskEnv env = make_sysrisk();
    const EnvStep at_mean = env.step_with_noise(3, vec1(0.7), vec1(0.0), vec1(0.7), 0.0);
    CHECK(at_mean.next_state(0) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(at_mean.running_cost == doctest::Approx(0.0));

    const EnvStep unit = env.step_with_noise(0, vec1(1.0), vec1(0.0), vec1(0.0), 0.0);
    CHECK(unit.next_state(0) == doctest::Approx(oracle::kExpMinus0p012).epsilon(1e-12));
}

TEST_CASE("terminal costs") {
    const SystemicRiskEnv sr = make_sysrisk();
    CHECK(sr.terminal_cost(vec1(0.5), vec1(0.0)) == doctest::Approx(0.25));
    CHECK(sr.terminal_cost(vec1(0.3), vec1(0.3)) == 0.0);

    const TradingEnv tr = make_trading();
    CHECK(tr.terminal_cost(vec1(1.0), vec1(1.0)) == 0.0);
    CHECK(tr.terminal_cost(vec1(2.0), vec1(1.0)) == doctest::Approx(3.0));
}

TEST_CASE("noise-free systemic risk contracts by exactly exp(-Bbar dt)") {
    const SystemicRiskEnv env = make_sysrisk(0.0);
    const double factor = std::exp(-0.6 * env.grid().dt());
    double x = 2.0;
    for (std::size_t k = 0; k < 10; ++k) {
        const double next = env.step_with_noise(k, vec1(x), vec1(0.0), vec1(0.0), 0.0).next_state(0);
        CHECK(next == doctest::Approx(factor * x).epsilon(1e-14));
        x = next;
    }
}

TEST_CASE("zero-noise trading dynamics are linear in state and action") {
    const TradingEnv env = make_trading(0.0);
    RngStream rng(5, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const double x1 = rng.gauss(), x2 = rng.gauss();
        const double a1 = rng.gauss(), a2 = rng.gauss();
        const double mu = rng.gauss();
        auto next = [&](double x, double a) {
            return env.step_with_noise(0, vec1(x), vec1(a), vec1(mu), 0.0).next_state(0);
        };
        const double combined = next(x1 + x2, a1 + a2);
        const double parts = next(x1, a1) + next(x2, a2) - next(0.0, 0.0);
        CHECK(combined == doctest::Approx(parts).epsilon(1e-12));
    }
}

TEST_CASE("population mean is stable under the centred optimal policy") {
    const std::size_t agents = 10000;
    const SystemicRiskEnv env = make_sysrisk();
    Example1Params p{0.6, 0.4, 1.0, 1.0, 1.0, 0.001, 1.0};

    RngStream rng(17, 0);
    std::vector<double> x(agents);
    for (auto& xi : x)
        xi = env.sample_initial(rng)(0);

    const double band = 3.0 * 1.0 / std::sqrt(static_cast<double>(agents));
    for (std::size_t k = 0; k < env.grid().n_steps(); ++k) {
        double mu = 0.0;
        for (double xi : x)
            mu += xi;
        mu /= static_cast<double>(agents);
        CHECK(std::abs(mu) < band);
        const double phi = closed_form_example1(env.grid().node(k), p).phi;
        for (auto& xi : x) {
            const double a = phi * (xi - mu);
            const double dw = rng.gauss(0.0, std::sqrt(env.grid().dt()));
            xi = env.step_with_noise(k, vec1(xi), vec1(a), vec1(mu), dw).next_state(0);
        }
    }
}

TEST_CASE("step validates inputs") {
    const TradingEnv env = make_trading();
    RngStream rng(1, 1);
    CHECK_THROWS_AS(env.step(50, vec1(0.0), vec1(0.0), vec1(0.0), rng), std::invalid_argument);
    CHECK_THROWS_AS(
        env.step(0, vec1(std::numeric_limits<double>::quiet_NaN()), vec1(0.0), vec1(0.0), rng),
        std::runtime_error);
}

TEST_CASE("generic LQ environment reproduces the trading step") {
    const TradingEnv reference = make_trading();
    GenericLqEnv::InitialLaw law{vec1(1.0), vec1(1.0)};
    const GenericLqEnv generic(reference.lq_coefficients(), law, TimeGrid(1.0, 50));
    RngStream rng(3, 0);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.gauss(), a = rng.gauss(), mu = rng.gauss(), dw = 0.1 * rng.gauss();
        const EnvStep lhs = reference.step_with_noise(0, vec1(x), vec1(a), vec1(mu), dw);
        const EnvStep rhs = generic.step_with_noise(0, vec1(x), vec1(a), vec1(mu), dw);
        CHECK(lhs.next_state(0) == doctest::Approx(rhs.next_state(0)).epsilon(1e-12));
        CHECK(lhs.running_cost == doctest::Approx(rhs.running_cost).epsilon(1e-12));
    }
}

TEST_CASE("coefficient validation catches assumption violations") {
    LqCoefficients bad = LqCoefficients::zero(1, 1);
    bad.N(0, 0) = 1.0;
    bad.P(0, 0) = -1.0; // violates (H1) P >= 0
    CHECK_THROWS_AS(bad.validate(), std::domain_error);

    LqCoefficients asym = LqCoefficients::zero(2, 1);
    asym.N(0, 0) = 1.0;
    asym.Q(0, 1) = 1.0; // not symmetric
    CHECK_THROWS_AS(asym.validate(), std::domain_error);
}

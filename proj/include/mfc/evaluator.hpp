#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mfc/environment.hpp"
#include "mfc/parametrisation.hpp"
#include "mfc/riccati.hpp"

namespace mfc {

/// Deterministic feedback map used at evaluation time (the policy mean).
using PolicyMeanMap = std::function<double(double t, double x, double mu_bar)>;

struct EvalOptions {
    std::size_t n_agents = 10000;
    std::size_t n_populations = 10;
    std::uint64_t seed = 0;
    double exact_value = 0.0;
    bool stochastic = false; // sample actions instead of applying the mean
    double lambda = 0.0;     // temperature for stochastic evaluation
    std::function<double(double t)> action_variance; // required when stochastic
    std::size_t max_threads = 1;
};

struct EvalReport {
    std::vector<double> population_costs;
    double mean_cost = 0.0;
    double std_dev = 0.0;
    double exact_value = 0.0;
    double relative_error = 0.0;
};

/// Propagates n_agents coupled trajectories per population, the mean-field
/// term being the live empirical mean; the per-agent cost accumulates running
/// plus terminal cost (entropy terms excluded: the evaluation policy is the
/// deterministic mean unless stochastic is set). Populations are independent
/// RngStreams, so results do not depend on the thread count.
EvalReport social_cost(const Environment& env, const PolicyMeanMap& policy,
                       const EvalOptions& opts);

struct TrajectoryComparison {
    std::vector<double> t;            // n+1 nodes
    std::vector<double> control_a, control_b;   // n entries (controls at t_k)
    std::vector<double> cum_cost_a, cum_cost_b; // n+1, terminal cost folded into the last
    std::vector<double> state_a, state_b;       // tracked agent, n+1
    std::vector<double> mean_a, mean_b;         // population means, n+1
};

/// Two populations driven by identical Brownian draws, one per policy; the
/// tracked agent is index 0.
TrajectoryComparison trajectory_compare(const Environment& env, const PolicyMeanMap& policy_a,
                                        const PolicyMeanMap& policy_b, std::size_t n_agents,
                                        std::uint64_t seed);

struct CurveRow {
    double t;
    double K_eta, Lam_eta, Y_eta, R_eta;
    double phi1_theta, phi2_theta, phi3_theta;
    double K_bench, Lam_bench, Y_bench, R_bench;
    double phi1_bench, phi2_bench, phi3_bench;
};

/// Tabulates learnt critic/actor functions against the benchmark solution on
/// the grid nodes (d = m = 1).
std::vector<CurveRow> curve_export(const RiccatiSolution& sol, const LqCoefficients& coeffs,
                                   const Critic& critic, const Actor& actor,
                                   const TimeGrid& grid, double lambda);

} // namespace mfc

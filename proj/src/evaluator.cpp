#include "mfc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace mfc {

namespace {

struct KahanSum {
    double sum = 0.0, carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

Vector scalar_vec(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

double propagate_population(const Environment& env, const PolicyMeanMap& policy,
                            const EvalOptions& opts, RngStream& rng,
                            TrajectoryComparison* track = nullptr) {
    const TimeGrid& grid = env.grid();
    const std::size_t n = grid.n_steps();
    const std::size_t agents = opts.n_agents;
    const double dt = grid.dt();

    std::vector<double> x(agents);
    for (std::size_t i = 0; i < agents; ++i)
        x[i] = env.sample_initial(rng)(0);

    KahanSum total; // sum over agents of (running + terminal) cost
    KahanSum tracked_cum;
    if (track) {
        track->t.resize(n + 1);
        track->state_a.resize(n + 1);
        track->mean_a.resize(n + 1);
        track->control_a.resize(n);
        track->cum_cost_a.resize(n + 1);
    }

    for (std::size_t k = 0; k < n; ++k) {
        const double t_k = grid.node(k);
        KahanSum mean_acc;
        for (double xi : x)
            mean_acc.add(xi);
        const double mu = mean_acc.sum / static_cast<double>(agents);
        const double noise_sd =
            opts.stochastic ? std::sqrt(opts.action_variance(t_k)) : 0.0;
        if (track) {
            track->t[k] = t_k;
            track->state_a[k] = x[0];
            track->mean_a[k] = mu;
            track->cum_cost_a[k] = tracked_cum.sum;
        }
        for (std::size_t i = 0; i < agents; ++i) {
            double a = policy(t_k, x[i], mu);
            if (noise_sd > 0.0)
                a += noise_sd * rng.gauss();
            const double dw = rng.gauss(0.0, std::sqrt(dt));
            const EnvStep step = env.step_with_noise(k, scalar_vec(x[i]), scalar_vec(a),
                                                     scalar_vec(mu), dw);
            total.add(step.running_cost * dt);
            if (track && i == 0) {
                track->control_a[k] = a;
                tracked_cum.add(step.running_cost * dt);
            }
            x[i] = step.next_state(0);
        }
    }

    KahanSum mean_acc;
    for (double xi : x)
        mean_acc.add(xi);
    const double mu_T = mean_acc.sum / static_cast<double>(agents);
    for (std::size_t i = 0; i < agents; ++i) {
        const double g = env.terminal_cost(scalar_vec(x[i]), scalar_vec(mu_T));
        total.add(g);
        if (track && i == 0)
            tracked_cum.add(g);
    }
    if (track) {
        track->t[n] = grid.node(n);
        track->state_a[n] = x[0];
        track->mean_a[n] = mu_T;
        track->cum_cost_a[n] = tracked_cum.sum;
    }
    return total.sum / static_cast<double>(agents);
}

} // namespace

EvalReport social_cost(const Environment& env, const PolicyMeanMap& policy,
                       const EvalOptions& opts) {
    if (opts.n_agents < 2)
        throw std::invalid_argument("social_cost: n_agents must be >= 2");
    if (opts.n_populations < 1)
        throw std::invalid_argument("social_cost: n_populations must be >= 1");
    if (opts.stochastic && !opts.action_variance)
        throw std::invalid_argument("social_cost: stochastic evaluation needs action_variance");

    EvalReport report;
    report.population_costs.resize(opts.n_populations);

    const std::size_t threads =
        std::max<std::size_t>(1, std::min(opts.max_threads, opts.n_populations));
    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            RngStream rng(opts.seed, p);
            report.population_costs[p] = propagate_population(env, policy, opts, rng);
        }
    };
    if (threads == 1) {
        run_range(0, opts.n_populations);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (opts.n_populations + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(opts.n_populations, begin + chunk);
            if (begin < end)
                pool.emplace_back(run_range, begin, end);
        }
        for (auto& th : pool)
            th.join();
    }

    KahanSum mean_acc;
    for (double c : report.population_costs)
        mean_acc.add(c);
    report.mean_cost = mean_acc.sum / static_cast<double>(opts.n_populations);
    double var = 0.0;
    for (double c : report.population_costs)
        var += (c - report.mean_cost) * (c - report.mean_cost);
    report.std_dev = opts.n_populations > 1
                         ? std::sqrt(var / static_cast<double>(opts.n_populations - 1))
                         : 0.0;
    report.exact_value = opts.exact_value;
    report.relative_error = opts.exact_value != 0.0
                                ? std::abs(report.mean_cost - opts.exact_value) /
                                      std::abs(opts.exact_value)
                                : std::abs(report.mean_cost);
    return report;
}

TrajectoryComparison trajectory_compare(const Environment& env, const PolicyMeanMap& policy_a,
                                        const PolicyMeanMap& policy_b, std::size_t n_agents,
                                        std::uint64_t seed) {
    EvalOptions opts;
    opts.n_agents = n_agents;

    TrajectoryComparison out;
    {
        RngStream rng(seed, 0);
        propagate_population(env, policy_a, opts, rng, &out);
    }
    TrajectoryComparison second;
    {
        RngStream rng(seed, 0); // identical draw sequence for the second policy
        propagate_population(env, policy_b, opts, rng, &second);
    }
    out.control_b = second.control_a;
    out.cum_cost_b = second.cum_cost_a;
    out.state_b = second.state_a;
    out.mean_b = second.mean_a;
    return out;
}

std::vector<CurveRow> curve_export(const RiccatiSolution& sol, const LqCoefficients& coeffs,
                                   const Critic& critic, const Actor& actor,
                                   const TimeGrid& grid, double lambda) {
    if (coeffs.state_dim() != 1 || coeffs.action_dim() != 1)
        throw std::invalid_argument("curve_export: d = m = 1 only");
    std::vector<CurveRow> rows;
    rows.reserve(grid.n_steps() + 1);
    for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
        const double t = grid.node(k);
        CurveRow row;
        row.t = t;
        const CriticShell cs = critic.shell(t, lambda);
        row.K_eta = cs.K;
        row.Lam_eta = cs.Lam;
        row.Y_eta = cs.Y;
        row.R_eta = cs.R;
        const ActorShell as = actor.shell(t, lambda);
        row.phi1_theta = as.phi1;
        row.phi2_theta = as.phi2;
        row.phi3_theta = as.phi3;

        const double K = sol.K(t)(0, 0);
        const double Lam = sol.Lambda(t)(0, 0);
        const double Y = sol.Y(t)(0);
        const double S = coeffs.N(0, 0) + coeffs.F(0, 0) * K * coeffs.F(0, 0);
        const double U = coeffs.I(0, 0) + coeffs.C(0, 0) * K + coeffs.F(0, 0) * K * coeffs.D(0, 0);
        const double U_hat = coeffs.I(0, 0) + coeffs.I_bar(0, 0) + coeffs.C(0, 0) * Lam +
                             coeffs.F(0, 0) * K * (coeffs.D(0, 0) + coeffs.D_bar(0, 0));
        const double O = coeffs.H(0) + coeffs.C(0, 0) * Y + coeffs.F(0, 0) * K * coeffs.gamma(0);
        row.K_bench = K;
        row.Lam_bench = Lam;
        row.Y_bench = Y;
        row.R_bench = sol.R(t);
        row.phi1_bench = -U / S;
        row.phi2_bench = -(U_hat - U) / S;
        row.phi3_bench = -O / S;
        rows.push_back(row);
    }
    return rows;
}

} // namespace mfc

#pragma once

#include <cstdint>
#include <vector>

#include "mfc/environment.hpp"
#include "mfc/measure.hpp"
#include "mfc/parametrisation.hpp"
#include "mfc/schedule.hpp"

namespace mfc {

struct TrainConfig {
    std::size_t episodes = 1;      // parameter-update rounds
    Schedule rho_S;                // state-distribution rate
    Schedule rho_E;                // critic rate, scalar or per-component
    Schedule rho_G;                // actor rate, scalar or per-component
    Schedule lambda;               // temperature
    Schedule minibatch;            // episodes per update round, >= 1
    double beta = 0.0;             // discount
    double grad_clip = 0.0;        // L2 cap on updates, 0 disables
    bool terminal_critic_observed = true; // replace J(t_n) by g in the offline PG
    std::uint64_t seed = 0;
    std::size_t report_stride = 1; // record every k-th round
};

struct EpisodeTrace {
    std::vector<double> t;        // n+1 nodes
    std::vector<double> state;    // n+1
    std::vector<double> mu_bar;   // n+1, as seen by the policy at each node
    std::vector<double> action;   // n
    std::vector<double> cost;     // n
    double terminal_cost = 0.0;
    double dt = 0.0;

    std::size_t n_steps() const { return action.size(); }
};

struct TrainReport {
    struct Row {
        std::size_t episode;
        double lambda;
        double episode_cost; // realised regularised cost of the round's first episode
        Vector eta;
        Vector theta;
    };
    std::vector<Row> rows;
    Vector final_eta, final_theta;
    double final_lambda = 0.0;
    bool aborted = false;
    std::size_t aborted_at = 0;
    double wall_seconds = 0.0;
};

/// One episode of Algorithm 1/2's simulation phase: at each node the measure
/// is updated with the current state (rho_S = 0 freezes the measures), the
/// action is sampled at the updated mean, and the environment is stepped with
/// that mean. Throws with episode context on non-finite values.
EpisodeTrace rollout(const Environment& env, const Actor& actor,
                     std::vector<EmpiricalMeasure>& measures, double rho_S, double lambda,
                     RngStream& rng);

/// Offline critic increment: sum over k of
/// (discounted cost-to-go from t_k minus J(t_k)) grad_eta J(t_k) dt, computed
/// with a backward running sum.
Vector offline_critic_delta(const EpisodeTrace& trace, const Critic& critic,
                            const Actor& actor, double lambda, double beta, double dt);

/// Offline policy-gradient estimate; with terminal_observed the critic value
/// at t_n is replaced by the observed terminal cost.
Vector offline_policy_gradient(const EpisodeTrace& trace, const Critic& critic,
                               const Actor& actor, double lambda, double beta, double dt,
                               double drift_gain, bool terminal_observed = true);

struct OnlineDeltas {
    double delta_eta; // scalar temporal-difference residual
    Vector Delta_eta;
    Vector Delta_theta;
};

struct StepRecord {
    double t, state, mu_bar, action, cost;
};

struct NextRecord {
    double t, state, mu_bar;
    bool terminal = false;
    double terminal_cost = 0.0;
};

/// Algorithm 2's per-step residual and parameter increments; at the last step
/// the critic value at t_{k+1} is constrained to the observed terminal cost.
OnlineDeltas online_deltas(const StepRecord& now, const NextRecord& next,
                           const Critic& critic, const Actor& actor, double lambda,
                           double beta, double dt, double drift_gain);

class Trainer {
public:
    Trainer(const Environment& env, Actor& actor, Critic& critic, TrainConfig config,
            double drift_gain);

    TrainReport train_offline();
    TrainReport train_online();

    const std::vector<EmpiricalMeasure>& measures() const { return measures_; }

private:
    void reset_measures();
    void apply_updates(const Vector& delta_eta, const Vector& g_theta, std::size_t round,
                       const std::vector<double>& rho_e, const std::vector<double>& rho_g);
    bool params_finite() const;

    const Environment& env_;
    Actor& actor_;
    Critic& critic_;
    TrainConfig cfg_;
    double drift_gain_;
    std::vector<EmpiricalMeasure> measures_;
};

/// Direction-preserving L2 cap: g * min(1, cap/|g|).
Vector clip_norm(Vector g, double cap);

} // namespace mfc

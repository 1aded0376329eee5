#include "mfc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mfc {

namespace {

Vector scalar_vec(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

struct SharedMeasurePath {
    std::vector<EmpiricalMeasure>* measures;
    double mean_after_update(std::size_t k, double x, double rho) {
        auto& mu = (*measures)[k];
        if (rho > 0.0)
            mu.update(scalar_vec(x), rho);
        return mu.mean()(0);
    }
};

struct PrivateMeanPath {
    std::vector<double> means;
    double mean_after_update(std::size_t k, double x, double rho) {
        if (rho > 0.0)
            means[k] = (1.0 - rho) * means[k] + rho * x;
        return means[k];
    }
};

template <class MeasurePath>
EpisodeTrace rollout_impl(const Environment& env, const Actor& actor, MeasurePath& path,
                          double rho_S, double lambda, RngStream& rng) {
    const TimeGrid& grid = env.grid();
    const std::size_t n = grid.n_steps();
    EpisodeTrace trace;
    trace.dt = grid.dt();
    trace.t.resize(n + 1);
    trace.state.resize(n + 1);
    trace.mu_bar.resize(n + 1);
    trace.action.resize(n);
    trace.cost.resize(n);

    double x = env.sample_initial(rng)(0);
    for (std::size_t k = 0; k < n; ++k) {
        const double t_k = grid.node(k);
        const double mu_k = path.mean_after_update(k, x, rho_S);
        const ActorShell as = actor.shell(t_k, lambda);
        const double a = shell_mean(as, x, mu_k) + std::sqrt(as.var) * rng.gauss();
        EnvStep step;
        try {
            step = env.step(k, scalar_vec(x), scalar_vec(a), scalar_vec(mu_k), rng);
        } catch (const std::exception& e) {
            throw std::runtime_error("rollout: step " + std::to_string(k) + ": " + e.what());
        }
        trace.t[k] = t_k;
        trace.state[k] = x;
        trace.mu_bar[k] = mu_k;
        trace.action[k] = a;
        trace.cost[k] = step.running_cost;
        x = step.next_state(0);
    }
    trace.t[n] = grid.node(n);
    trace.state[n] = x;
    trace.mu_bar[n] = path.mean_after_update(n, x, rho_S);
    trace.terminal_cost = env.terminal_cost(scalar_vec(x), scalar_vec(trace.mu_bar[n]));
    return trace;
}

double regularised_episode_cost(const EpisodeTrace& trace, const Actor& actor, double lambda,
                                double beta) {
    double total = 0.0;
    const std::size_t n = trace.n_steps();
    for (std::size_t k = 0; k < n; ++k) {
        const ActorShell as = actor.shell(trace.t[k], lambda);
        const double logp = shell_log_density(as, trace.state[k], trace.mu_bar[k], trace.action[k]);
        total += std::exp(-beta * trace.t[k]) * (trace.cost[k] + lambda * logp) * trace.dt;
    }
    total += std::exp(-beta * trace.t[n]) * trace.terminal_cost;
    return total;
}

// Parameters are fixed within an update round, so the per-node shells can be
// evaluated once and shared across the whole minibatch.
struct ShellTable {
    std::vector<CriticShell> critic; // n+1 nodes
    std::vector<ActorShell> actor;   // n nodes
    std::vector<Vector> dphi12;      // dphi1 + dphi2 per actor node
    std::vector<double> noise_sd;    // sqrt(action variance) per actor node

    ShellTable(const TimeGrid& grid, const Critic& c, const Actor& a, double lambda) {
        const std::size_t n = grid.n_steps();
        critic.reserve(n + 1);
        actor.reserve(n);
        dphi12.reserve(n);
        noise_sd.reserve(n);
        for (std::size_t k = 0; k <= n; ++k)
            critic.push_back(c.shell(grid.node(k), lambda));
        for (std::size_t k = 0; k < n; ++k) {
            actor.push_back(a.shell(grid.node(k), lambda));
            dphi12.push_back(actor.back().dphi1 + actor.back().dphi2);
            noise_sd.push_back(std::sqrt(actor.back().var));
        }
    }
};

template <class MeasurePath>
EpisodeTrace rollout_with_table(const Environment& env, const ShellTable& table,
                                MeasurePath& path, double rho_S, RngStream& rng) {
    const TimeGrid& grid = env.grid();
    const std::size_t n = grid.n_steps();
    EpisodeTrace trace;
    trace.dt = grid.dt();
    trace.t.resize(n + 1);
    trace.state.resize(n + 1);
    trace.mu_bar.resize(n + 1);
    trace.action.resize(n);
    trace.cost.resize(n);

    const double noise_scale = std::sqrt(grid.dt());
    double x = env.sample_initial_scalar(rng);
    for (std::size_t k = 0; k < n; ++k) {
        const double mu_k = path.mean_after_update(k, x, rho_S);
        const ActorShell& as = table.actor[k];
        const double a = shell_mean(as, x, mu_k) + table.noise_sd[k] * rng.gauss();
        double next, cost;
        env.step_scalar(k, x, a, mu_k, noise_scale * rng.gauss(), next, cost);
        if (!std::isfinite(next) || !std::isfinite(cost))
            throw std::runtime_error("rollout: non-finite state or cost at step " +
                                     std::to_string(k));
        trace.t[k] = grid.node(k);
        trace.state[k] = x;
        trace.mu_bar[k] = mu_k;
        trace.action[k] = a;
        trace.cost[k] = cost;
        x = next;
    }
    trace.t[n] = grid.node(n);
    trace.state[n] = x;
    trace.mu_bar[n] = path.mean_after_update(n, x, rho_S);
    trace.terminal_cost = env.terminal_cost_scalar(x, trace.mu_bar[n]);
    return trace;
}

// Sum of both offline increments over one trace, written against the shared
// shell table; the per-step gradient directions are scalar multiples of the
// tabulated shell gradients.
void accumulate_offline_deltas(const EpisodeTrace& trace, const ShellTable& table,
                               double lambda, double beta, double drift_gain,
                               bool terminal_observed, Vector& delta_eta, Vector& g_theta) {
    const std::size_t n = trace.n_steps();
    const double dt = trace.dt;
    const double disc_step = std::exp(-beta * dt);

    std::vector<double> togo(n + 1);
    togo[n] = trace.terminal_cost;
    for (std::size_t k = n; k-- > 0;) {
        const double logp =
            shell_log_density(table.actor[k], trace.state[k], trace.mu_bar[k], trace.action[k]);
        togo[k] = (trace.cost[k] + lambda * logp) * dt + disc_step * togo[k + 1];
    }

    for (std::size_t k = 0; k < n; ++k) {
        const CriticShell& cs = table.critic[k];
        const ActorShell& as = table.actor[k];
        const double x = trace.state[k];
        const double mu = trace.mu_bar[k];
        const double s = x - mu;

        const double j_now = shell_value(cs, x, mu);
        const double residual = togo[k] - j_now;
        const double w = residual * dt;
        delta_eta += (w * s * s) * cs.dK;
        if (cs.dLam.size() > 0)
            delta_eta += (w * mu * mu) * cs.dLam;
        if (cs.dY.size() > 0)
            delta_eta += (w * 2.0 * x) * cs.dY;
        delta_eta += w * cs.dR;

        const double logp = shell_log_density(as, x, mu, trace.action[k]);
        const double j_next =
            (k + 1 == n && terminal_observed)
                ? trace.terminal_cost
                : shell_value(table.critic[k + 1], trace.state[k + 1], trace.mu_bar[k + 1]);
        const double bracket =
            j_next - j_now + (trace.cost[k] + lambda * logp - beta * j_now) * dt;
        const double disc = std::exp(-beta * trace.t[k]);
        const double r = trace.action[k] - shell_mean(as, x, mu);
        const double score_scale = disc * bracket * r / as.var;
        g_theta += (score_scale * x) * as.dphi1;
        g_theta += (score_scale * mu) * as.dphi2;
        g_theta += score_scale * as.dphi3;
        const double h_weight = disc * dt * 2.0 * drift_gain * (-cs.K * s + cs.Lam * mu);
        g_theta += (h_weight * mu) * table.dphi12[k];
        g_theta += h_weight * as.dphi3;
    }
}

} // namespace

EpisodeTrace rollout(const Environment& env, const Actor& actor,
                     std::vector<EmpiricalMeasure>& measures, double rho_S, double lambda,
                     RngStream& rng) {
    if (measures.size() != env.grid().n_steps() + 1)
        throw std::invalid_argument("rollout: measures must hold n_steps+1 entries");
    SharedMeasurePath path{&measures};
    return rollout_impl(env, actor, path, rho_S, lambda, rng);
}

Vector offline_critic_delta(const EpisodeTrace& trace, const Critic& critic,
                            const Actor& actor, double lambda, double beta, double dt) {
    const std::size_t n = trace.n_steps();
    const double disc = std::exp(-beta * dt);
    Vector delta = Vector::Zero(critic.param_count());
    // backward running sum of the discounted cost-to-go
    std::vector<double> togo(n + 1);
    togo[n] = trace.terminal_cost;
    for (std::size_t k = n; k-- > 0;) {
        const ActorShell as = actor.shell(trace.t[k], lambda);
        const double logp = shell_log_density(as, trace.state[k], trace.mu_bar[k], trace.action[k]);
        togo[k] = (trace.cost[k] + lambda * logp) * dt + disc * togo[k + 1];
    }
    for (std::size_t k = 0; k < n; ++k) {
        const CriticShell cs = critic.shell(trace.t[k], lambda);
        const double residual = togo[k] - shell_value(cs, trace.state[k], trace.mu_bar[k]);
        delta += residual * dt * shell_grad_eta(cs, trace.state[k], trace.mu_bar[k]);
    }
    return delta;
}

Vector offline_policy_gradient(const EpisodeTrace& trace, const Critic& critic,
                               const Actor& actor, double lambda, double beta, double dt,
                               double drift_gain, bool terminal_observed) {
    const std::size_t n = trace.n_steps();
    Vector g = Vector::Zero(actor.param_count());
    CriticShell cs_now = critic.shell(trace.t[0], lambda);
    for (std::size_t k = 0; k < n; ++k) {
        const CriticShell cs_next = critic.shell(trace.t[k + 1], lambda);
        const ActorShell as = actor.shell(trace.t[k], lambda);
        const double j_now = shell_value(cs_now, trace.state[k], trace.mu_bar[k]);
        const double j_next = (k + 1 == n && terminal_observed)
                                  ? trace.terminal_cost
                                  : shell_value(cs_next, trace.state[k + 1], trace.mu_bar[k + 1]);
        const double logp = shell_log_density(as, trace.state[k], trace.mu_bar[k], trace.action[k]);
        const double bracket =
            j_next - j_now + (trace.cost[k] + lambda * logp - beta * j_now) * dt;
        const double disc = std::exp(-beta * trace.t[k]);
        g += disc * bracket *
             shell_grad_log_density(as, trace.state[k], trace.mu_bar[k], trace.action[k]);
        g += disc * dt *
             h_theta_from_shells(as, cs_now, trace.state[k], trace.mu_bar[k], drift_gain);
        cs_now = cs_next;
    }
    return g;
}

OnlineDeltas online_deltas(const StepRecord& now, const NextRecord& next, const Critic& critic,
                           const Actor& actor, double lambda, double beta, double dt,
                           double drift_gain) {
    const CriticShell cs_now = critic.shell(now.t, lambda);
    const ActorShell as = actor.shell(now.t, lambda);
    const double j_now = shell_value(cs_now, now.state, now.mu_bar);
    const double j_next = next.terminal
                              ? next.terminal_cost
                              : critic.value(next.t, next.state, next.mu_bar, lambda);
    const double logp = shell_log_density(as, now.state, now.mu_bar, now.action);
    OnlineDeltas out;
    out.delta_eta = j_next - j_now + (now.cost + lambda * logp - beta * j_now) * dt;
    out.Delta_eta = out.delta_eta * shell_grad_eta(cs_now, now.state, now.mu_bar);
    out.Delta_theta =
        out.delta_eta * shell_grad_log_density(as, now.state, now.mu_bar, now.action) +
        dt * h_theta_from_shells(as, cs_now, now.state, now.mu_bar, drift_gain);
    return out;
}

Vector clip_norm(Vector g, double cap) {
    if (cap > 0.0) {
        const double norm = g.norm();
        if (norm > cap)
            g *= cap / norm;
    }
    return g;
}

Trainer::Trainer(const Environment& env, Actor& actor, Critic& critic, TrainConfig config,
                 double drift_gain)
    : env_(env), actor_(actor), critic_(critic), cfg_(std::move(config)),
      drift_gain_(drift_gain) {
    if (env_.state_dim() != 1 || env_.action_dim() != 1)
        throw std::invalid_argument("Trainer: parametrisations support d = m = 1 only");
    if (cfg_.episodes < 1)
        throw std::invalid_argument("Trainer: episodes must be >= 1");
    reset_measures();
}

void Trainer::reset_measures() {
    measures_.clear();
    const std::size_t n = env_.grid().n_steps();
    measures_.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
        measures_.push_back(EmpiricalMeasure::dirac(Vector::Zero(1)));
}

bool Trainer::params_finite() const {
    return actor_.params().allFinite() && critic_.params().allFinite();
}

namespace {

void apply_rate(Vector& params, const std::vector<double>& rate, const Vector& step,
                double sign, const char* what) {
    if (rate.size() == 1) {
        params += (sign * rate[0]) * step;
        return;
    }
    if (static_cast<Eigen::Index>(rate.size()) != params.size())
        throw std::invalid_argument(std::string(what) +
                                    ": learning-rate vector does not match parameter count");
    for (Eigen::Index i = 0; i < params.size(); ++i)
        params(i) += sign * rate[static_cast<std::size_t>(i)] * step(i);
}

} // namespace

void Trainer::apply_updates(const Vector& delta_eta, const Vector& g_theta, std::size_t,
                            const std::vector<double>& rho_e, const std::vector<double>& rho_g) {
    apply_rate(critic_.params(), rho_e, clip_norm(delta_eta, cfg_.grad_clip), +1.0, "rho_E");
    apply_rate(actor_.params(), rho_g, clip_norm(g_theta, cfg_.grad_clip), -1.0, "rho_G");
    critic_.project_params();
    actor_.project_params();
}

TrainReport Trainer::train_offline() {
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    const std::size_t n = env_.grid().n_steps();
    std::uint64_t stream = 0;

    for (std::size_t i = 1; i <= cfg_.episodes; ++i) {
        const double rho_s = cfg_.rho_S.scalar_at(i);
        const double lambda = cfg_.lambda.scalar_at(i);
        const auto& rho_e = cfg_.rho_E.at(i);
        const auto& rho_g = cfg_.rho_G.at(i);
        const std::size_t batch =
            static_cast<std::size_t>(std::llround(cfg_.minibatch.scalar_at(i)));
        if (batch < 1)
            throw std::invalid_argument("Trainer: minibatch size must be >= 1");

        Vector delta_eta = Vector::Zero(critic_.param_count());
        Vector g_theta = Vector::Zero(actor_.param_count());
        double first_cost = 0.0;

        const Vector eta_before = critic_.params();
        const Vector theta_before = actor_.params();
        const ShellTable table(env_.grid(), critic_, actor_, lambda);

        try {
            if (batch == 1) {
                SharedMeasurePath path{&measures_};
                RngStream rng(cfg_.seed, ++stream);
                const EpisodeTrace trace = rollout_with_table(env_, table, path, rho_s, rng);
                accumulate_offline_deltas(trace, table, lambda, cfg_.beta, drift_gain_,
                                          cfg_.terminal_critic_observed, delta_eta, g_theta);
                first_cost = regularised_episode_cost(trace, actor_, lambda, cfg_.beta);
            } else {
                // batch members roll out against the measures frozen at batch
                // start; the batch empirical measure is folded in afterwards,
                // one (estimmu) update per time node
                PrivateMeanPath base;
                base.means.resize(n + 1);
                for (std::size_t k = 0; k <= n; ++k)
                    base.means[k] = measures_[k].mean()(0);
                std::vector<EpisodeTrace> traces;
                traces.reserve(batch);
                for (std::size_t j = 0; j < batch; ++j) {
                    PrivateMeanPath path = base;
                    RngStream rng(cfg_.seed, ++stream);
                    EpisodeTrace trace = rollout_with_table(env_, table, path, 0.0, rng);
                    accumulate_offline_deltas(trace, table, lambda, cfg_.beta, drift_gain_,
                                              cfg_.terminal_critic_observed, delta_eta, g_theta);
                    if (j == 0)
                        first_cost = regularised_episode_cost(trace, actor_, lambda, cfg_.beta);
                    traces.push_back(std::move(trace));
                }
                delta_eta /= static_cast<double>(batch);
                g_theta /= static_cast<double>(batch);
                if (rho_s > 0.0) {
                    std::vector<Vector> points(batch, Vector(1));
                    for (std::size_t k = 0; k <= n; ++k) {
                        for (std::size_t j = 0; j < batch; ++j)
                            points[j](0) = traces[j].state[k];
                        measures_[k].update_batch(points, rho_s);
                    }
                }
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("episode " + std::to_string(i) + ": " + e.what());
        }

        apply_updates(delta_eta, g_theta, i, rho_e, rho_g);
        if (!params_finite()) {
            critic_.params() = eta_before;
            actor_.params() = theta_before;
            report.aborted = true;
            report.aborted_at = i;
            break;
        }
        if (i % cfg_.report_stride == 0 || i == cfg_.episodes)
            report.rows.push_back(
                {i, lambda, first_cost, critic_.params(), actor_.params()});
    }

    report.final_eta = critic_.params();
    report.final_theta = actor_.params();
    report.final_lambda = cfg_.lambda.scalar_at(report.aborted ? report.aborted_at
                                                               : cfg_.episodes);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

TrainReport Trainer::train_online() {
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    const TimeGrid& grid = env_.grid();
    const std::size_t n = grid.n_steps();
    std::uint64_t stream = 0;

    for (std::size_t i = 1; i <= cfg_.episodes; ++i) {
        const double rho_s = cfg_.rho_S.scalar_at(i);
        const double lambda = cfg_.lambda.scalar_at(i);
        const auto& rho_e = cfg_.rho_E.at(i);
        const auto& rho_g = cfg_.rho_G.at(i);
        const std::size_t batch =
            static_cast<std::size_t>(std::llround(cfg_.minibatch.scalar_at(i)));
        if (batch < 1)
            throw std::invalid_argument("Trainer: minibatch size must be >= 1");

        std::vector<RngStream> rngs;
        rngs.reserve(batch);
        for (std::size_t j = 0; j < batch; ++j)
            rngs.emplace_back(cfg_.seed, ++stream);

        std::vector<double> x(batch);
        for (std::size_t j = 0; j < batch; ++j)
            x[j] = env_.sample_initial(rngs[j])(0);

        double first_cost = 0.0;
        bool aborted = false;

        std::vector<Vector> points(batch, Vector(1));
        for (std::size_t k = 0; k < n && !aborted; ++k) {
            const double t_k = grid.node(k);
            if (rho_s > 0.0) {
                for (std::size_t j = 0; j < batch; ++j)
                    points[j](0) = x[j];
                measures_[k].update_batch(points, rho_s);
            }
            const double mu_k = measures_[k].mean()(0);
            const double mu_next_stale = measures_[k + 1].mean()(0);

            const ActorShell as = actor_.shell(t_k, lambda);
            const CriticShell cs_now = critic_.shell(t_k, lambda);
            const CriticShell cs_next = critic_.shell(grid.node(k + 1), lambda);

            std::vector<double> actions(batch), costs(batch), next_states(batch);
            const double noise_scale = std::sqrt(grid.dt());
            const double action_sd = std::sqrt(as.var);
            for (std::size_t j = 0; j < batch; ++j) {
                const double a = shell_mean(as, x[j], mu_k) + action_sd * rngs[j].gauss();
                double next, cost;
                env_.step_scalar(k, x[j], a, mu_k, noise_scale * rngs[j].gauss(), next, cost);
                if (!std::isfinite(next) || !std::isfinite(cost))
                    throw std::runtime_error("episode " + std::to_string(i) + ", step " +
                                             std::to_string(k) +
                                             ": non-finite state or cost");
                actions[j] = a;
                costs[j] = cost;
                next_states[j] = next;
            }

            std::vector<double> terminal(batch, 0.0);
            if (k + 1 == n) {
                if (rho_s > 0.0) {
                    for (std::size_t j = 0; j < batch; ++j)
                        points[j](0) = next_states[j];
                    measures_[n].update_batch(points, rho_s);
                }
                const double mu_terminal = measures_[n].mean()(0);
                for (std::size_t j = 0; j < batch; ++j)
                    terminal[j] = env_.terminal_cost_scalar(next_states[j], mu_terminal);
            }

            // the shell gradients are shared across the batch at fixed k, so
            // only scalar moments of delta need accumulating
            double sum_d = 0.0, sum_d_s2 = 0.0, sum_d_x = 0.0;
            double sum_dr = 0.0, sum_drx = 0.0, sum_h = 0.0;
            for (std::size_t j = 0; j < batch; ++j) {
                const double j_now = shell_value(cs_now, x[j], mu_k);
                const double logp = shell_log_density(as, x[j], mu_k, actions[j]);
                const double j_next = (k + 1 == n)
                                          ? terminal[j]
                                          : shell_value(cs_next, next_states[j], mu_next_stale);
                const double delta =
                    j_next - j_now + (costs[j] + lambda * logp - cfg_.beta * j_now) * grid.dt();
                const double s = x[j] - mu_k;
                const double r = actions[j] - shell_mean(as, x[j], mu_k);
                sum_d += delta;
                sum_d_s2 += delta * s * s;
                sum_d_x += delta * x[j];
                sum_dr += delta * r;
                sum_drx += delta * r * x[j];
                sum_h += -cs_now.K * s + cs_now.Lam * mu_k;
                if (j == 0) {
                    first_cost +=
                        std::exp(-cfg_.beta * t_k) * (costs[j] + lambda * logp) * grid.dt();
                    if (k + 1 == n)
                        first_cost += std::exp(-cfg_.beta * grid.horizon()) * terminal[j];
                }
            }
            const double inv_b = 1.0 / static_cast<double>(batch);
            Vector delta_eta = (sum_d_s2 * inv_b) * cs_now.dK;
            if (cs_now.dLam.size() > 0)
                delta_eta += (mu_k * mu_k * sum_d * inv_b) * cs_now.dLam;
            if (cs_now.dY.size() > 0)
                delta_eta += (2.0 * sum_d_x * inv_b) * cs_now.dY;
            delta_eta += (sum_d * inv_b) * cs_now.dR;

            Vector delta_theta = (sum_drx / (as.var * static_cast<double>(batch))) * as.dphi1;
            delta_theta += (mu_k * sum_dr / (as.var * static_cast<double>(batch))) * as.dphi2;
            delta_theta += (sum_dr / (as.var * static_cast<double>(batch))) * as.dphi3;
            const double h_weight = 2.0 * drift_gain_ * sum_h * inv_b * grid.dt();
            delta_theta += (h_weight * mu_k) * (as.dphi1 + as.dphi2);
            delta_theta += h_weight * as.dphi3;

            const Vector eta_before = critic_.params();
            const Vector theta_before = actor_.params();
            apply_updates(delta_eta, delta_theta, i, rho_e, rho_g);
            if (!params_finite()) {
                critic_.params() = eta_before;
                actor_.params() = theta_before;
                report.aborted = true;
                report.aborted_at = i;
                aborted = true;
            }
            for (std::size_t j = 0; j < batch; ++j)
                x[j] = next_states[j];
        }

        if (report.aborted)
            break;
        if (i % cfg_.report_stride == 0 || i == cfg_.episodes)
            report.rows.push_back({i, lambda, first_cost, critic_.params(), actor_.params()});
    }

    report.final_eta = critic_.params();
    report.final_theta = actor_.params();
    report.final_lambda = cfg_.lambda.scalar_at(report.aborted ? report.aborted_at
                                                               : cfg_.episodes);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

} // namespace mfc

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "mfc/config.hpp"
#include "mfc/csv.hpp"
#include "mfc/evaluator.hpp"
#include "mfc/riccati.hpp"
#include "mfc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
    std::string config_path;
    std::string snapshot_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> episodes;
    std::optional<std::string> out_dir;
};

std::size_t eval_threads() {
    if (const char* env = std::getenv("MFC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1)
            return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

mfc::RunConfig load_with_overrides(const CliOptions& opts) {
    mfc::RunConfig cfg = mfc::load_config(opts.config_path);
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.train.seed = *opts.seed;
    }
    if (opts.episodes)
        cfg.train.episodes = *opts.episodes;
    if (opts.out_dir)
        cfg.out_dir = *opts.out_dir;
    return cfg;
}

void write_manifest(const mfc::RunConfig& cfg, const CliOptions& opts,
                    const std::string& command, double wall_seconds) {
    json m;
    m["command"] = command;
    m["config"] = opts.config_path;
    m["config_hash"] = mfc::hash_file(opts.config_path);
    m["seed"] = cfg.seed;
    m["version"] = mfc::kVersion;
    m["wall_clock_seconds"] = wall_seconds;
    std::ofstream out(fs::path(cfg.out_dir) / "manifest.json");
    out << m.dump(2) << "\n";
}

json snapshot_json(const mfc::RunConfig& cfg, const mfc::TrainReport& report) {
    json s;
    s["parametrisation"] = cfg.param.kind;
    s["eta"] = std::vector<double>(report.final_eta.data(),
                                   report.final_eta.data() + report.final_eta.size());
    s["theta"] = std::vector<double>(report.final_theta.data(),
                                     report.final_theta.data() + report.final_theta.size());
    s["lambda"] = report.final_lambda;
    s["with_phi3"] = cfg.param.mlp_with_phi3;
    s["variance"] = cfg.param.variance == mfc::VarianceRule::Lambda ? "lambda" : "lambda_half";
    s["seed"] = cfg.seed;
    return s;
}

struct LoadedSnapshot {
    std::unique_ptr<mfc::Critic> critic;
    std::unique_ptr<mfc::Actor> actor;
    double lambda = 0.0;
};

LoadedSnapshot load_snapshot(const mfc::RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw mfc::ConfigError("snapshot: cannot open " + path);
    json s;
    try {
        s = json::parse(in);
    } catch (const json::parse_error& e) {
        throw mfc::ConfigError(std::string("snapshot: ") + e.what());
    }
    if (!s.contains("parametrisation") || s.at("parametrisation") != cfg.param.kind)
        throw mfc::ConfigError("snapshot: parametrisation does not match the config (" +
                               cfg.param.kind + " expected)");
    LoadedSnapshot out;
    mfc::RngStream rng(cfg.seed, 9000);
    out.critic = cfg.make_critic(rng);
    out.actor = cfg.make_actor(rng);
    const auto eta = s.at("eta").get<std::vector<double>>();
    const auto theta = s.at("theta").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(eta.size()) != out.critic->param_count() ||
        static_cast<Eigen::Index>(theta.size()) != out.actor->param_count())
        throw mfc::ConfigError("snapshot: parameter count does not match the parametrisation");
    for (std::size_t i = 0; i < eta.size(); ++i)
        out.critic->params()(static_cast<Eigen::Index>(i)) = eta[i];
    for (std::size_t i = 0; i < theta.size(); ++i)
        out.actor->params()(static_cast<Eigen::Index>(i)) = theta[i];
    out.lambda = s.value("lambda", 0.0);
    return out;
}

mfc::Vector exact_parameter_row(const mfc::RunConfig& cfg) {
    // reference parameters of Tables 1 and 3
    if (cfg.param.kind == "exact_sysrisk") {
        mfc::Example1Params p{cfg.sysrisk.B_bar, cfg.sysrisk.I,     cfg.sysrisk.Q, cfg.sysrisk.P,
                              cfg.sysrisk.gamma, cfg.final_lambda(), cfg.grid.horizon()};
        const double sd = mfc::example1_sqrt_delta(p);
        const double c = (p.B_bar + 2.0 * p.I + 2.0 * p.P) / sd;
        mfc::Vector row(7);
        row << sd, c, p.B_bar + 2.0 * p.I, 0.5 * p.gamma * p.gamma, sd, c, p.B_bar;
        return row;
    }
    if (cfg.param.kind == "exact_trading") {
        mfc::Vector row(5);
        row << cfg.trading.P, cfg.trading.gamma * cfg.trading.gamma,
            cfg.trading.H * cfg.trading.H, cfg.trading.P, cfg.trading.H;
        return row;
    }
    return mfc::Vector();
}

void print_parameter_table(const mfc::RunConfig& cfg, const mfc::TrainReport& report) {
    const mfc::Vector exact = exact_parameter_row(cfg);
    mfc::Vector learnt(report.final_eta.size() + report.final_theta.size());
    learnt << report.final_eta, report.final_theta;
    if (exact.size() != learnt.size()) {
        std::cout << "final parameters: eta = [" << report.final_eta.transpose()
                  << "], theta = [" << report.final_theta.transpose() << "]\n";
        return;
    }
    std::cout << "        ";
    for (Eigen::Index i = 0; i < report.final_eta.size(); ++i)
        std::cout << "eta" << i + 1 << "      ";
    for (Eigen::Index i = 0; i < report.final_theta.size(); ++i)
        std::cout << "theta" << i + 1 << "    ";
    std::cout << "\nexact   ";
    for (Eigen::Index i = 0; i < exact.size(); ++i)
        std::cout << exact(i) << "    ";
    std::cout << "\nlearnt  ";
    for (Eigen::Index i = 0; i < learnt.size(); ++i)
        std::cout << learnt(i) << "    ";
    std::cout << "\n";
}

void write_train_outputs(const mfc::RunConfig& cfg, const mfc::TrainReport& report) {
    fs::create_directories(cfg.out_dir);
    const Eigen::Index etas = report.final_eta.size();
    const Eigen::Index thetas = report.final_theta.size();

    std::vector<std::string> cols = {"episode"};
    for (Eigen::Index i = 0; i < etas; ++i)
        cols.push_back("eta" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < thetas; ++i)
        cols.push_back("theta" + std::to_string(i + 1));
    mfc::CsvWriter params(fs::path(cfg.out_dir) / "params.csv", cols);
    for (const auto& row : report.rows) {
        std::vector<double> values;
        values.reserve(cols.size());
        values.push_back(static_cast<double>(row.episode));
        for (Eigen::Index i = 0; i < etas; ++i)
            values.push_back(row.eta(i));
        for (Eigen::Index i = 0; i < thetas; ++i)
            values.push_back(row.theta(i));
        params.write_row(values);
    }

    mfc::CsvWriter costs(fs::path(cfg.out_dir) / "costs.csv",
                         {"episode", "episode_cost", "lambda"});
    for (const auto& row : report.rows)
        costs.write_row({static_cast<double>(row.episode), row.episode_cost, row.lambda});

    std::ofstream snap(fs::path(cfg.out_dir) / "snapshot.json");
    snap << snapshot_json(cfg, report).dump(2) << "\n";
}

int cmd_train(const CliOptions& opts, bool online) {
    const auto start = std::chrono::steady_clock::now();
    mfc::RunConfig cfg = load_with_overrides(opts);
    if (!cfg.has_train)
        throw mfc::ConfigError("config: a train block is required for training commands");

    auto env = cfg.make_environment();
    mfc::RngStream init_rng(cfg.seed, 8000);
    auto critic = cfg.make_critic(init_rng);
    auto actor = cfg.make_actor(init_rng);

    mfc::Trainer trainer(*env, *actor, *critic, cfg.train, cfg.param.drift_gain);
    const mfc::TrainReport report = online ? trainer.train_online() : trainer.train_offline();

    write_train_outputs(cfg, report);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(cfg, opts, online ? "train-online" : "train-offline", wall);

    if (report.aborted) {
        std::cerr << "training aborted at episode " << report.aborted_at
                  << " (non-finite parameters); last good snapshot: "
                  << (fs::path(cfg.out_dir) / "snapshot.json").string() << "\n";
        return 3;
    }
    print_parameter_table(cfg, report);
    std::cout << "outputs written to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_benchmark(const CliOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    mfc::RunConfig cfg = load_with_overrides(opts);
    const double lambda = cfg.benchmark.lambda.value_or(cfg.final_lambda());
    const mfc::LqCoefficients coeffs = cfg.benchmark_coefficients();
    const mfc::TimeGrid fine(cfg.grid.horizon(), cfg.benchmark.n_nodes);
    const mfc::RiccatiSolution sol = mfc::solve_riccati(coeffs, lambda, fine);

    fs::create_directories(cfg.out_dir);
    mfc::CsvWriter csv(fs::path(cfg.out_dir) / "benchmark.csv",
                       {"t", "K", "Lambda", "Y", "R", "phi_x", "phi_mu", "phi_const"});
    for (std::size_t k = 0; k <= fine.n_steps(); ++k) {
        const double t = fine.node(k);
        const double K = sol.K(t)(0, 0);
        const double Lam = sol.Lambda(t)(0, 0);
        const double Y = sol.Y(t)(0);
        const double S = coeffs.N(0, 0) + coeffs.F(0, 0) * K * coeffs.F(0, 0);
        const double U = coeffs.I(0, 0) + coeffs.C(0, 0) * K + coeffs.F(0, 0) * K * coeffs.D(0, 0);
        const double U_hat = coeffs.I(0, 0) + coeffs.I_bar(0, 0) + coeffs.C(0, 0) * Lam +
                             coeffs.F(0, 0) * K * (coeffs.D(0, 0) + coeffs.D_bar(0, 0));
        const double O = coeffs.H(0) + coeffs.C(0, 0) * Y + coeffs.F(0, 0) * K * coeffs.gamma(0);
        csv.write_row({t, K, Lam, Y, sol.R(t), -U / S, -(U_hat - U) / S, -O / S});
    }

    const double mean0 = cfg.initial_mean();
    const double var0 = cfg.initial_variance();
    const double K0 = sol.K(0.0)(0, 0);
    const double Lam0 = sol.Lambda(0.0)(0, 0);
    const double Y0 = sol.Y(0.0)(0);
    const double R0 = sol.R(0.0);
    const double value = K0 * var0 + Lam0 * mean0 * mean0 + 2.0 * Y0 * mean0 + R0;

    std::cout.precision(10);
    std::cout << "lambda = " << lambda << "\n";
    if (cfg.env_kind == mfc::EnvKind::SystemicRisk) {
        mfc::Example1Params p{cfg.sysrisk.B_bar, cfg.sysrisk.I, cfg.sysrisk.Q,
                              cfg.sysrisk.P,     cfg.sysrisk.gamma, lambda, cfg.grid.horizon()};
        std::cout << "sqrt(Delta) = " << mfc::example1_sqrt_delta(p) << "\n";
    }
    std::cout << "K(0) = " << K0 << "\nLambda(0) = " << Lam0 << "\nY(0) = " << Y0
              << "\nR(0) = " << R0 << "\n";
    std::cout << "optimal initial value (against the configured initial law) = " << value
              << "\n";

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(cfg, opts, "benchmark", wall);
    return 0;
}

int cmd_eval(const CliOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    mfc::RunConfig cfg = load_with_overrides(opts);
    auto env = cfg.make_environment();
    LoadedSnapshot snap = load_snapshot(cfg, opts.snapshot_path);
    const double lambda = cfg.eval.lambda.value_or(snap.lambda);

    const mfc::Actor& actor = *snap.actor;
    mfc::PolicyMeanMap learnt = [&actor, lambda](double t, double x, double mu_bar) {
        return mfc::shell_mean(actor.shell(t, lambda), x, mu_bar);
    };

    const mfc::LqCoefficients coeffs = cfg.benchmark_coefficients();
    const mfc::TimeGrid fine(cfg.grid.horizon(), cfg.benchmark.n_nodes);
    const mfc::RiccatiSolution sol = mfc::solve_riccati(coeffs, lambda, fine);
    const mfc::RiccatiSolution sol0 = mfc::solve_riccati(coeffs, 0.0, fine);
    const double mean0 = cfg.initial_mean();
    const double var0 = cfg.initial_variance();
    auto initial_value = [&](const mfc::RiccatiSolution& s) {
        return s.K(0.0)(0, 0) * var0 + s.Lambda(0.0)(0, 0) * mean0 * mean0 +
               2.0 * s.Y(0.0)(0) * mean0 + s.R(0.0);
    };
    const double exact = initial_value(sol);
    const double exact_lambda0 = initial_value(sol0);

    mfc::EvalOptions eopts;
    eopts.n_agents = cfg.eval.n_agents;
    eopts.n_populations = cfg.eval.n_populations;
    eopts.seed = cfg.seed;
    eopts.exact_value = exact;
    eopts.stochastic = cfg.eval.stochastic_eval;
    eopts.lambda = lambda;
    if (eopts.stochastic) {
        const mfc::Actor* actor_ptr = snap.actor.get();
        eopts.action_variance = [actor_ptr, lambda](double t) {
            return actor_ptr->shell(t, lambda).var;
        };
    }
    eopts.max_threads = eval_threads();
    const mfc::EvalReport report = social_cost(*env, learnt, eopts);

    fs::create_directories(cfg.out_dir);
    mfc::CsvWriter csv(fs::path(cfg.out_dir) / "eval_report.csv",
                       {"population", "social_cost", "mean_cost", "std_dev", "rel_error",
                        "exact_value", "exact_value_lambda0"});
    for (std::size_t p = 0; p < report.population_costs.size(); ++p)
        csv.write_row({static_cast<double>(p), report.population_costs[p], report.mean_cost,
                       report.std_dev, report.relative_error, exact, exact_lambda0});

    const mfc::GaussianPolicy optimal = mfc::optimal_policy(sol, coeffs, lambda);
    mfc::PolicyMeanMap optimal_mean = [&optimal](double t, double x, double mu_bar) {
        mfc::Vector xv(1), mv(1);
        xv(0) = x;
        mv(0) = mu_bar;
        return optimal.mean(t, xv, mv)(0);
    };
    const mfc::TrajectoryComparison compare =
        trajectory_compare(*env, learnt, optimal_mean, cfg.eval.n_agents, cfg.seed + 1);
    mfc::CsvWriter traj(fs::path(cfg.out_dir) / "trajectories.csv",
                        {"t", "control_learnt", "control_optimal", "cum_cost_learnt",
                         "cum_cost_optimal", "state_learnt", "state_optimal", "mean_learnt",
                         "mean_optimal"});
    const std::size_t n = env->grid().n_steps();
    for (std::size_t k = 0; k <= n; ++k) {
        const double ca = k < n ? compare.control_a[k] : compare.control_a[n - 1];
        const double cb = k < n ? compare.control_b[k] : compare.control_b[n - 1];
        traj.write_row({compare.t[k], ca, cb, compare.cum_cost_a[k], compare.cum_cost_b[k],
                        compare.state_a[k], compare.state_b[k], compare.mean_a[k],
                        compare.mean_b[k]});
    }

    std::cout.precision(10);
    std::cout << "learnt policy social cost = " << report.mean_cost << " (std "
              << report.std_dev << ")\n";
    std::cout << "relative error vs exact   = " << 100.0 * report.relative_error << " %\n";
    std::cout << "exact value (lambda = " << lambda << ") = " << exact
              << "; without entropy (lambda = 0) = " << exact_lambda0 << "\n";

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(cfg, opts, "eval", wall);
    return 0;
}

int cmd_export_curves(const CliOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    mfc::RunConfig cfg = load_with_overrides(opts);
    LoadedSnapshot snap = load_snapshot(cfg, opts.snapshot_path);
    const double lambda = cfg.eval.lambda.value_or(snap.lambda);

    const mfc::LqCoefficients coeffs = cfg.benchmark_coefficients();
    const mfc::TimeGrid fine(cfg.grid.horizon(), cfg.benchmark.n_nodes);
    const mfc::RiccatiSolution sol = mfc::solve_riccati(coeffs, lambda, fine);
    const auto rows = mfc::curve_export(sol, coeffs, *snap.critic, *snap.actor, cfg.grid, lambda);

    fs::create_directories(cfg.out_dir);
    mfc::CsvWriter csv(fs::path(cfg.out_dir) / "curves.csv",
                       {"t", "K_eta", "Lam_eta", "Y_eta", "R_eta", "phi1_theta", "phi2_theta",
                        "phi3_theta", "K_bench", "Lam_bench", "Y_bench", "R_bench",
                        "phi1_bench", "phi2_bench", "phi3_bench"});
    for (const auto& r : rows)
        csv.write_row({r.t, r.K_eta, r.Lam_eta, r.Y_eta, r.R_eta, r.phi1_theta, r.phi2_theta,
                       r.phi3_theta, r.K_bench, r.Lam_bench, r.Y_bench, r.R_bench,
                       r.phi1_bench, r.phi2_bench, r.phi3_bench});

    double k_gap = 0.0, r_gap = 0.0, phi_gap = 0.0;
    for (const auto& r : rows) {
        k_gap = std::max(k_gap, std::abs(r.K_eta - r.K_bench));
        r_gap = std::max(r_gap, std::abs(r.R_eta - r.R_bench));
        phi_gap = std::max(phi_gap, std::abs(r.phi1_theta - r.phi1_bench));
    }
    std::cout << "sup-norm gaps on the grid: K " << k_gap << ", R " << r_gap << ", phi "
              << phi_gap << "\n";

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(cfg, opts, "export-curves", wall);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-free actor-critic toolkit for entropy-regularised mean-field control"};
    app.require_subcommand(1);

    CliOptions opts;
    auto add_common = [&](CLI::App* cmd, bool with_snapshot) {
        cmd->add_option("--config", opts.config_path, "JSON configuration file")->required();
        cmd->add_option("--seed", opts.seed, "override the configured seed");
        cmd->add_option("--episodes", opts.episodes, "override the number of episodes");
        cmd->add_option("--out-dir", opts.out_dir, "override the output directory");
        if (with_snapshot)
            cmd->add_option("--snapshot", opts.snapshot_path, "parameter snapshot file")
                ->required();
    };

    CLI::App* train_off = app.add_subcommand("train-offline", "offline actor-critic training");
    add_common(train_off, false);
    CLI::App* train_on = app.add_subcommand("train-online", "online actor-critic training");
    add_common(train_on, false);
    CLI::App* benchmark = app.add_subcommand("benchmark", "solve the Riccati benchmark");
    add_common(benchmark, false);
    CLI::App* evaluate = app.add_subcommand("eval", "Monte Carlo social-cost evaluation");
    add_common(evaluate, true);
    CLI::App* curves = app.add_subcommand("export-curves", "tabulate learnt vs benchmark curves");
    add_common(curves, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train_off))
            return cmd_train(opts, false);
        if (app.got_subcommand(train_on))
            return cmd_train(opts, true);
        if (app.got_subcommand(benchmark))
            return cmd_benchmark(opts);
        if (app.got_subcommand(evaluate))
            return cmd_eval(opts);
        if (app.got_subcommand(curves))
            return cmd_export_curves(opts);
    } catch (const mfc::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "assumption violation: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}

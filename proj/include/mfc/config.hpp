#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "mfc/environment.hpp"
#include "mfc/parametrisation.hpp"
#include "mfc/trainer.hpp"

namespace mfc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EnvKind { SystemicRisk, Trading, GenericLq };

struct ParametrisationConfig {
    std::string kind; // exact_sysrisk | exact_trading | mlp | quadratic_lq
    Vector eta0, theta0;
    double drift_gain = 1.0; // the known C entering H_theta
    bool mlp_with_phi3 = false;
    VarianceRule variance = VarianceRule::HalfLambda;
};

struct EvalConfig {
    std::size_t n_agents = 10000;
    std::size_t n_populations = 10;
    bool stochastic_eval = false;
    std::optional<double> lambda; // defaults to the final training temperature
};

struct BenchmarkConfig {
    std::optional<double> lambda; // defaults as above
    std::size_t n_nodes = 2000;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = ".";

    EnvKind env_kind = EnvKind::Trading;
    TimeGrid grid{1.0, 1};
    SystemicRiskEnv::Params sysrisk;
    TradingEnv::Params trading;
    LqCoefficients lq;
    GenericLqEnv::InitialLaw lq_initial;

    ParametrisationConfig param;
    TrainConfig train;
    EvalConfig eval;
    BenchmarkConfig benchmark;

    bool has_train = false;

    std::unique_ptr<Environment> make_environment() const;
    std::unique_ptr<Critic> make_critic(RngStream& rng) const;
    std::unique_ptr<Actor> make_actor(RngStream& rng) const;

    /// LQ coefficients of the configured environment, for the benchmark.
    LqCoefficients benchmark_coefficients() const;

    double initial_mean() const;
    double initial_variance() const;

    /// Temperature used by benchmark/eval when none is configured: the final
    /// value of the training lambda schedule, or 0 without a train block.
    double final_lambda() const;
};

/// Parses and validates the JSON config; throws ConfigError with the offending
/// field path in the message. Unknown keys are errors.
RunConfig load_config(const std::string& path);

/// FNV-1a of the raw config bytes, for the run manifest.
std::uint64_t hash_file(const std::string& path);

extern const char* const kVersion;

} // namespace mfc

#include "mfc/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace mfc {

using nlohmann::json;

const char* const kVersion = "0.1.0";

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError("config: " + path + ": " + message);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            fail(path + "." + it.key(), "unknown key");
}

const json& require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key))
        fail(path + "." + key, "missing required field");
    return obj.at(key);
}

double get_number(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key);
    if (!v.is_number())
        fail(path + "." + key, "expected a number");
    return v.get<double>();
}

double get_number_or(const json& obj, const std::string& path, const std::string& key,
                     double fallback) {
    if (!obj.contains(key))
        return fallback;
    if (!obj.at(key).is_number())
        fail(path + "." + key, "expected a number");
    return obj.at(key).get<double>();
}

bool get_bool_or(const json& obj, const std::string& path, const std::string& key,
                 bool fallback) {
    if (!obj.contains(key))
        return fallback;
    if (!obj.at(key).is_boolean())
        fail(path + "." + key, "expected a boolean");
    return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key);
    if (!v.is_string())
        fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

Vector get_vector(const json& v, const std::string& path) {
    if (v.is_number())
        return Vector::Constant(1, v.get<double>());
    if (!v.is_array() || v.empty())
        fail(path, "expected a number or a non-empty array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number())
            fail(path, "expected numeric entries");
        out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
}

Matrix get_matrix(const json& v, const std::string& path) {
    if (v.is_number()) {
        Matrix m(1, 1);
        m(0, 0) = v.get<double>();
        return m;
    }
    if (!v.is_array() || v.empty() || !v[0].is_array())
        fail(path, "expected a number or an array of rows");
    const std::size_t rows = v.size();
    const std::size_t cols = v[0].size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!v[r].is_array() || v[r].size() != cols)
            fail(path, "ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!v[r][c].is_number())
                fail(path, "expected numeric entries");
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                v[r][c].get<double>();
        }
    }
    return m;
}

Schedule parse_schedule(const json& v, const std::string& path) {
    if (v.is_number())
        return Schedule::constant(v.get<double>());
    if (!v.is_array() || v.empty())
        fail(path, "expected a number or a list of {from_episode, value} records");
    std::vector<Schedule::Breakpoint> bps;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string bp_path = path + "[" + std::to_string(i) + "]";
        if (!v[i].is_object())
            fail(bp_path, "expected an object");
        check_keys(v[i], bp_path, {"from_episode", "value"});
        const json& from = require(v[i], bp_path, "from_episode");
        if (!from.is_number_unsigned() || from.get<std::uint64_t>() < 1)
            fail(bp_path + ".from_episode", "expected an integer >= 1 (episodes are 1-indexed)");
        const json& val = require(v[i], bp_path, "value");
        Schedule::Breakpoint bp;
        bp.from_episode = from.get<std::size_t>();
        if (val.is_number()) {
            bp.value = {val.get<double>()};
        } else if (val.is_array() && !val.empty()) {
            for (const auto& x : val) {
                if (!x.is_number())
                    fail(bp_path + ".value", "expected numeric entries");
                bp.value.push_back(x.get<double>());
            }
        } else {
            fail(bp_path + ".value", "expected a number or a non-empty array");
        }
        bps.push_back(std::move(bp));
    }
    if (bps.front().from_episode != 1)
        fail(path, "first breakpoint must start at episode 1");
    try {
        return Schedule(std::move(bps));
    } catch (const std::exception& e) {
        fail(path, e.what());
    }
}

void parse_environment(const json& env, RunConfig& cfg) {
    const std::string path = "environment";
    const std::string kind = get_string(env, path, "kind");
    const double T = get_number(env, path, "T");
    const double n_steps = get_number(env, path, "n_steps");
    if (!(T > 0.0))
        fail(path + ".T", "horizon must be > 0");
    if (n_steps < 1.0 || n_steps != std::floor(n_steps))
        fail(path + ".n_steps", "expected an integer >= 1");
    cfg.grid = TimeGrid(T, static_cast<std::size_t>(n_steps));

    if (kind == "systemic_risk") {
        check_keys(env, path,
                   {"kind", "T", "n_steps", "B_bar", "I", "Q", "P", "gamma", "oracle_mean",
                    "initial_mean", "initial_stddev"});
        cfg.env_kind = EnvKind::SystemicRisk;
        auto& p = cfg.sysrisk;
        p.B_bar = get_number(env, path, "B_bar");
        p.I = get_number(env, path, "I");
        p.Q = get_number(env, path, "Q");
        p.P = get_number(env, path, "P");
        p.gamma = get_number(env, path, "gamma");
        p.oracle_mean = get_bool_or(env, path, "oracle_mean", false);
        p.initial_mean = get_number_or(env, path, "initial_mean", 0.0);
        p.initial_stddev = get_number_or(env, path, "initial_stddev", 1.0);
        if (p.Q < 2.0 * p.I * p.I)
            fail(path, "systemic risk requires Q >= 2 I^2");
    } else if (kind == "trading") {
        check_keys(env, path,
                   {"kind", "T", "n_steps", "P", "H", "gamma", "initial_mean",
                    "initial_stddev"});
        cfg.env_kind = EnvKind::Trading;
        auto& p = cfg.trading;
        p.P = get_number(env, path, "P");
        p.H = get_number(env, path, "H");
        p.gamma = get_number(env, path, "gamma");
        p.initial_mean = get_number_or(env, path, "initial_mean", 1.0);
        p.initial_stddev = get_number_or(env, path, "initial_stddev", 1.0);
        if (!(p.P > 0.0))
            fail(path + ".P", "trading requires P > 0");
    } else if (kind == "generic_lq") {
        check_keys(env, path,
                   {"kind", "T", "n_steps", "coefficients", "initial_mean", "initial_stddev"});
        cfg.env_kind = EnvKind::GenericLq;
        const json& co = require(env, path, "coefficients");
        const std::string cpath = path + ".coefficients";
        check_keys(co, cpath,
                   {"B", "B_bar", "C", "F", "D", "D_bar", "gamma", "Q", "Q_bar", "N", "I",
                    "I_bar", "M", "H", "L", "P", "P_bar", "beta"});
        const Matrix B = get_matrix(require(co, cpath, "B"), cpath + ".B");
        const Eigen::Index d = B.rows();
        const Matrix N = get_matrix(require(co, cpath, "N"), cpath + ".N");
        const Eigen::Index m = N.rows();
        LqCoefficients lq = LqCoefficients::zero(d, m);
        lq.B = B;
        lq.N = N;
        auto opt_matrix = [&](const char* key, Matrix& dst) {
            if (co.contains(key))
                dst = get_matrix(co.at(key), cpath + "." + key);
        };
        auto opt_vector = [&](const char* key, Vector& dst) {
            if (co.contains(key))
                dst = get_vector(co.at(key), cpath + "." + key);
        };
        opt_matrix("B_bar", lq.B_bar);
        opt_matrix("C", lq.C);
        opt_matrix("F", lq.F);
        opt_matrix("D", lq.D);
        opt_matrix("D_bar", lq.D_bar);
        opt_matrix("Q", lq.Q);
        opt_matrix("Q_bar", lq.Q_bar);
        opt_matrix("I", lq.I);
        opt_matrix("I_bar", lq.I_bar);
        opt_matrix("P", lq.P);
        opt_matrix("P_bar", lq.P_bar);
        opt_vector("gamma", lq.gamma);
        opt_vector("M", lq.M);
        opt_vector("H", lq.H);
        opt_vector("L", lq.L);
        lq.beta = get_number_or(co, cpath, "beta", 0.0);
        try {
            lq.validate();
        } catch (const std::exception& e) {
            fail(cpath, e.what());
        }
        cfg.lq = lq;
        cfg.lq_initial.mean = env.contains("initial_mean")
                                  ? get_vector(env.at("initial_mean"), path + ".initial_mean")
                                  : Vector::Zero(d);
        cfg.lq_initial.stddev =
            env.contains("initial_stddev")
                ? get_vector(env.at("initial_stddev"), path + ".initial_stddev")
                : Vector::Ones(d);
        if (cfg.lq_initial.mean.size() != d || cfg.lq_initial.stddev.size() != d)
            fail(path, "initial law dimension must match the state dimension");
    } else {
        fail(path + ".kind", "expected one of systemic_risk, trading, generic_lq");
    }
}

void parse_parametrisation(const json& par, RunConfig& cfg) {
    const std::string path = "parametrisation";
    check_keys(par, path, {"kind", "eta0", "theta0", "C", "with_phi3", "variance"});
    auto& p = cfg.param;
    p.kind = get_string(par, path, "kind");
    p.drift_gain = get_number_or(par, path, "C", 1.0);
    if (p.kind == "exact_sysrisk" || p.kind == "exact_trading") {
        const Eigen::Index eta_dim = p.kind == "exact_sysrisk" ? 4 : 3;
        const Eigen::Index theta_dim = p.kind == "exact_sysrisk" ? 3 : 2;
        p.eta0 = par.contains("eta0") ? get_vector(par.at("eta0"), path + ".eta0")
                                      : Vector::Ones(eta_dim);
        p.theta0 = par.contains("theta0") ? get_vector(par.at("theta0"), path + ".theta0")
                                          : Vector::Ones(theta_dim);
        if (p.eta0.size() != eta_dim)
            fail(path + ".eta0", "expected " + std::to_string(eta_dim) + " components");
        if (p.theta0.size() != theta_dim)
            fail(path + ".theta0", "expected " + std::to_string(theta_dim) + " components");
    } else if (p.kind == "mlp" || p.kind == "quadratic_lq") {
        if (par.contains("eta0") || par.contains("theta0"))
            fail(path, "network parametrisations are seeded, not listed in the config");
        p.mlp_with_phi3 = get_bool_or(par, path, "with_phi3", false);
        const std::string variance =
            par.contains("variance") ? get_string(par, path, "variance") : "lambda_half";
        if (variance == "lambda")
            p.variance = VarianceRule::Lambda;
        else if (variance == "lambda_half")
            p.variance = VarianceRule::HalfLambda;
        else
            fail(path + ".variance", "expected lambda or lambda_half");
    } else {
        fail(path + ".kind",
             "expected one of exact_sysrisk, exact_trading, mlp, quadratic_lq");
    }
}

void parse_train(const json& tr, RunConfig& cfg) {
    const std::string path = "train";
    check_keys(tr, path,
               {"episodes", "beta", "grad_clip", "terminal_critic", "report_stride",
                "schedules"});
    auto& t = cfg.train;
    const double episodes = get_number(tr, path, "episodes");
    if (episodes < 1.0 || episodes != std::floor(episodes))
        fail(path + ".episodes", "expected an integer >= 1");
    t.episodes = static_cast<std::size_t>(episodes);
    t.beta = get_number_or(tr, path, "beta", 0.0);
    if (t.beta < 0.0)
        fail(path + ".beta", "discount must be >= 0");
    t.grad_clip = get_number_or(tr, path, "grad_clip", 0.0);
    if (t.grad_clip < 0.0)
        fail(path + ".grad_clip", "clip threshold must be > 0 when present");
    const std::string terminal = tr.contains("terminal_critic")
                                     ? get_string(tr, path, "terminal_critic")
                                     : "observed";
    if (terminal == "observed")
        t.terminal_critic_observed = true;
    else if (terminal == "learned")
        t.terminal_critic_observed = false;
    else
        fail(path + ".terminal_critic", "expected observed or learned");
    const double stride = get_number_or(tr, path, "report_stride", 1.0);
    if (stride < 1.0 || stride != std::floor(stride))
        fail(path + ".report_stride", "expected an integer >= 1");
    t.report_stride = static_cast<std::size_t>(stride);

    const json& sch = require(tr, path, "schedules");
    const std::string spath = path + ".schedules";
    check_keys(sch, spath, {"rho_S", "rho_E", "rho_G", "lambda", "minibatch"});
    t.rho_S = parse_schedule(require(sch, spath, "rho_S"), spath + ".rho_S");
    t.rho_E = parse_schedule(require(sch, spath, "rho_E"), spath + ".rho_E");
    t.rho_G = parse_schedule(require(sch, spath, "rho_G"), spath + ".rho_G");
    t.lambda = parse_schedule(require(sch, spath, "lambda"), spath + ".lambda");
    t.minibatch = sch.contains("minibatch")
                      ? parse_schedule(sch.at("minibatch"), spath + ".minibatch")
                      : Schedule::constant(1.0);
    for (const auto& bp : t.lambda.breakpoints())
        for (double v : bp.value)
            if (!(v > 0.0))
                fail(spath + ".lambda", "temperature must be > 0 during training");
    for (const auto& bp : t.minibatch.breakpoints())
        for (double v : bp.value)
            if (v < 1.0 || v != std::floor(v))
                fail(spath + ".minibatch", "expected integer batch sizes >= 1");
}

void parse_eval(const json& ev, RunConfig& cfg) {
    const std::string path = "eval";
    check_keys(ev, path,
               {"n_agents", "n_populations", "stochastic_eval", "lambda"});
    auto& e = cfg.eval;
    const double agents = get_number_or(ev, path, "n_agents", 10000.0);
    const double pops = get_number_or(ev, path, "n_populations", 10.0);
    if (agents < 2.0 || agents != std::floor(agents))
        fail(path + ".n_agents", "expected an integer >= 2");
    if (pops < 1.0 || pops != std::floor(pops))
        fail(path + ".n_populations", "expected an integer >= 1");
    e.n_agents = static_cast<std::size_t>(agents);
    e.n_populations = static_cast<std::size_t>(pops);
    e.stochastic_eval = get_bool_or(ev, path, "stochastic_eval", false);
    if (ev.contains("lambda"))
        e.lambda = get_number(ev, path, "lambda");
}

} // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    if (!root.is_object())
        throw ConfigError("config: top level must be an object");
    check_keys(root, "",
               {"seed", "out_dir", "environment", "parametrisation", "train", "eval",
                "benchmark"});

    RunConfig cfg;
    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned())
            throw ConfigError("config: .seed: expected a non-negative integer");
        cfg.seed = root.at("seed").get<std::uint64_t>();
    }
    if (root.contains("out_dir"))
        cfg.out_dir = get_string(root, "", "out_dir");

    parse_environment(require(root, "", "environment"), cfg);
    parse_parametrisation(require(root, "", "parametrisation"), cfg);
    if (root.contains("train")) {
        parse_train(root.at("train"), cfg);
        cfg.has_train = true;
        cfg.train.seed = cfg.seed;
    }
    if (root.contains("eval"))
        parse_eval(root.at("eval"), cfg);
    if (root.contains("benchmark")) {
        const json& b = root.at("benchmark");
        check_keys(b, "benchmark", {"lambda", "n_nodes"});
        if (b.contains("lambda")) {
            const double lam = get_number(b, "benchmark", "lambda");
            if (lam < 0.0)
                throw ConfigError("config: benchmark.lambda must be >= 0");
            cfg.benchmark.lambda = lam;
        }
        const double nodes = get_number_or(b, "benchmark", "n_nodes", 2000.0);
        if (nodes < 1.0 || nodes != std::floor(nodes))
            throw ConfigError("config: benchmark.n_nodes: expected an integer >= 1");
        cfg.benchmark.n_nodes = static_cast<std::size_t>(nodes);
    }

    // parametrisation/environment compatibility
    if (cfg.param.kind == "exact_sysrisk" && cfg.env_kind != EnvKind::SystemicRisk)
        throw ConfigError("config: exact_sysrisk parametrisation requires the systemic_risk "
                          "environment");
    if (cfg.param.kind == "exact_trading" && cfg.env_kind != EnvKind::Trading)
        throw ConfigError("config: exact_trading parametrisation requires the trading "
                          "environment");
    if (cfg.env_kind == EnvKind::GenericLq &&
        (cfg.lq.state_dim() != 1 || cfg.lq.action_dim() != 1) && cfg.has_train)
        throw ConfigError("config: training parametrisations support d = m = 1 only");
    return cfg;
}

std::unique_ptr<Environment> RunConfig::make_environment() const {
    switch (env_kind) {
    case EnvKind::SystemicRisk:
        return std::make_unique<SystemicRiskEnv>(sysrisk, grid);
    case EnvKind::Trading:
        return std::make_unique<TradingEnv>(trading, grid);
    case EnvKind::GenericLq:
        return std::make_unique<GenericLqEnv>(lq, lq_initial, grid);
    }
    throw ConfigError("config: unknown environment kind");
}

std::unique_ptr<Critic> RunConfig::make_critic(RngStream& rng) const {
    if (param.kind == "exact_sysrisk")
        return make_exact_sysrisk_critic(param.eta0, grid.horizon());
    if (param.kind == "exact_trading")
        return make_exact_trading_critic(param.eta0, grid.horizon());
    if (param.kind == "mlp")
        return make_mlp_critic(rng);
    if (param.kind == "quadratic_lq")
        return make_quadratic_lq_critic(rng);
    throw ConfigError("config: unknown parametrisation kind " + param.kind);
}

std::unique_ptr<Actor> RunConfig::make_actor(RngStream& rng) const {
    if (param.kind == "exact_sysrisk")
        return make_exact_sysrisk_actor(param.theta0, grid.horizon());
    if (param.kind == "exact_trading")
        return make_exact_trading_actor(param.theta0, grid.horizon());
    if (param.kind == "mlp")
        return make_mlp_actor(rng, param.mlp_with_phi3, param.variance);
    if (param.kind == "quadratic_lq")
        return make_quadratic_lq_actor(rng);
    throw ConfigError("config: unknown parametrisation kind " + param.kind);
}

LqCoefficients RunConfig::benchmark_coefficients() const {
    switch (env_kind) {
    case EnvKind::SystemicRisk:
        return SystemicRiskEnv(sysrisk, grid).lq_coefficients();
    case EnvKind::Trading:
        return TradingEnv(trading, grid).lq_coefficients();
    case EnvKind::GenericLq:
        return lq;
    }
    throw ConfigError("config: unknown environment kind");
}

double RunConfig::initial_mean() const {
    switch (env_kind) {
    case EnvKind::SystemicRisk:
        return sysrisk.initial_mean;
    case EnvKind::Trading:
        return trading.initial_mean;
    case EnvKind::GenericLq:
        return lq_initial.mean(0);
    }
    return 0.0;
}

double RunConfig::initial_variance() const {
    switch (env_kind) {
    case EnvKind::SystemicRisk:
        return sysrisk.initial_stddev * sysrisk.initial_stddev;
    case EnvKind::Trading:
        return trading.initial_stddev * trading.initial_stddev;
    case EnvKind::GenericLq:
        return lq_initial.stddev(0) * lq_initial.stddev(0);
    }
    return 0.0;
}

double RunConfig::final_lambda() const {
    if (!has_train)
        return 0.0;
    return train.lambda.scalar_at(train.episodes);
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace mfc

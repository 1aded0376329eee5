#include "mfc/parametrisation.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mfc {

namespace {
constexpr double kPositiveFloor = 1e-6;
}

// ------------------------------------------------------------ shell assembly

double shell_value(const CriticShell& s, double x, double mu_bar) {
    const double c = x - mu_bar;
    return s.K * c * c + s.Lam * mu_bar * mu_bar + 2.0 * s.Y * x + s.R;
}

Vector shell_grad_eta(const CriticShell& s, double x, double mu_bar) {
    const double c = x - mu_bar;
    Vector g = s.dK * (c * c);
    if (s.dLam.size() > 0)
        g += s.dLam * (mu_bar * mu_bar);
    if (s.dY.size() > 0)
        g += s.dY * (2.0 * x);
    g += s.dR;
    return g;
}

double shell_mean(const ActorShell& s, double x, double mu_bar) {
    return s.phi1 * x + s.phi2 * mu_bar + s.phi3;
}

double shell_log_density(const ActorShell& s, double x, double mu_bar, double action) {
    const double r = action - shell_mean(s, x, mu_bar);
    return -0.5 * std::log(2.0 * M_PI * s.var) - r * r / (2.0 * s.var);
}

Vector shell_grad_log_density(const ActorShell& s, double x, double mu_bar, double action) {
    const double r = action - shell_mean(s, x, mu_bar);
    // d(logp)/d(mean) = r / var; chain through the affine mean map
    Vector g = s.dphi1 * (x * r / s.var);
    g += s.dphi2 * (mu_bar * r / s.var);
    g += s.dphi3 * (r / s.var);
    return g;
}

double Critic::value(double t, double x, double mu_bar, double lambda) const {
    return shell_value(shell(t, lambda), x, mu_bar);
}

Vector Critic::grad_eta(double t, double x, double mu_bar, double lambda) const {
    return shell_grad_eta(shell(t, lambda), x, mu_bar);
}

double Actor::mean(double t, double x, double mu_bar, double lambda) const {
    return shell_mean(shell(t, lambda), x, mu_bar);
}

double Actor::sample(double t, double x, double mu_bar, double lambda, RngStream& rng) const {
    if (!(lambda > 0.0))
        throw std::invalid_argument("Actor::sample: lambda must be > 0");
    const ActorShell s = shell(t, lambda);
    return shell_mean(s, x, mu_bar) + std::sqrt(s.var) * rng.gauss();
}

double Actor::log_density(double t, double x, double mu_bar, double action,
                          double lambda) const {
    if (!(lambda > 0.0))
        throw std::invalid_argument("Actor::log_density: lambda must be > 0");
    return shell_log_density(shell(t, lambda), x, mu_bar, action);
}

Vector Actor::grad_log_density(double t, double x, double mu_bar, double action,
                               double lambda) const {
    if (!(lambda > 0.0))
        throw std::invalid_argument("Actor::grad_log_density: lambda must be > 0");
    return shell_grad_log_density(shell(t, lambda), x, mu_bar, action);
}

Vector h_theta_from_shells(const ActorShell& a, const CriticShell& c, double x, double mu_bar,
                           double drift_gain) {
    // 2 [ (dphi1 + dphi2) mubar + dphi3 ]' C' ( -K (x-mubar) + Lam mubar )
    const double weight = 2.0 * drift_gain * (-c.K * (x - mu_bar) + c.Lam * mu_bar);
    Vector g = (a.dphi1 + a.dphi2) * (mu_bar * weight);
    g += a.dphi3 * weight;
    return g;
}

Vector h_theta(const Actor& actor, const Critic& critic, double t, double x, double mu_bar,
               double drift_gain, double lambda) {
    return h_theta_from_shells(actor.shell(t, lambda), critic.shell(t, lambda), x, mu_bar,
                               drift_gain);
}

// --------------------------------------------------- systemic risk, exact form

namespace {

// r = (sinh(u) + b cosh(u)) / (cosh(u) + b sinh(u)), u = a tau, plus the
// pieces its derivatives need.
struct HyperbolicRatio {
    double ratio, den, sinh_u;
};

HyperbolicRatio hyperbolic_ratio(double a, double b, double tau) {
    const double u = a * tau;
    const double ch = std::cosh(u);
    const double sh = std::sinh(u);
    const double den = ch + b * sh;
    return {(sh + b * ch) / den, den, sh};
}

class ExactSysRiskCritic final : public Critic {
public:
    ExactSysRiskCritic(Vector eta, double horizon) : eta_(std::move(eta)), horizon_(horizon) {
        if (eta_.size() != 4)
            throw std::invalid_argument("exact_sysrisk critic: eta must have 4 components");
        project_params();
    }

    std::string kind() const override { return "exact_sysrisk"; }
    Eigen::Index param_count() const override { return 4; }
    Vector& params() override { return eta_; }
    const Vector& params() const override { return eta_; }

    CriticShell shell(double t, double lambda) const override {
        const double tau = horizon_ - t;
        const auto h = hyperbolic_ratio(eta_(0), eta_(1), tau);
        CriticShell s;
        s.K = -0.5 * (eta_(2) - eta_(0) * h.ratio);
        s.R = eta_(3) * std::log(h.den) - eta_(2) * eta_(3) * tau;
        if (lambda > 0.0)
            s.R -= 0.5 * lambda * tau * std::log(2.0 * M_PI * lambda);
        s.dK = Vector::Zero(4);
        s.dK(0) = -0.5 * (eta_(0) * tau * (h.ratio * h.ratio - 1.0) - h.ratio);
        s.dK(1) = eta_(0) / (2.0 * h.den * h.den);
        s.dK(2) = -0.5;
        s.dR = Vector::Zero(4);
        s.dR(0) = eta_(3) * tau * h.ratio;
        s.dR(1) = eta_(3) * h.sinh_u / h.den;
        s.dR(2) = -eta_(3) * tau;
        s.dR(3) = std::log(h.den) - eta_(2) * tau;
        return s;
    }

    void project_params() override {
        eta_ = eta_.cwiseMax(kPositiveFloor);
    }

private:
    Vector eta_;
    double horizon_;
};

class ExactSysRiskActor final : public Actor {
public:
    ExactSysRiskActor(Vector theta, double horizon)
        : theta_(std::move(theta)), horizon_(horizon) {
        if (theta_.size() != 3)
            throw std::invalid_argument("exact_sysrisk actor: theta must have 3 components");
        project_params();
    }

    std::string kind() const override { return "exact_sysrisk"; }
    Eigen::Index param_count() const override { return 3; }
    Vector& params() override { return theta_; }
    const Vector& params() const override { return theta_; }

    ActorShell shell(double t, double lambda) const override {
        const double tau = horizon_ - t;
        const auto h = hyperbolic_ratio(theta_(0), theta_(1), tau);
        ActorShell s;
        const double phi = theta_(2) - theta_(0) * h.ratio;
        s.phi1 = phi;
        s.phi2 = -phi;
        s.phi3 = 0.0;
        s.var = lambda;
        Vector dphi = Vector::Zero(3);
        dphi(0) = theta_(0) * tau * (h.ratio * h.ratio - 1.0) - h.ratio;
        dphi(1) = -theta_(0) / (h.den * h.den);
        dphi(2) = 1.0;
        s.dphi1 = dphi;
        s.dphi2 = -dphi;
        s.dphi3 = Vector::Zero(3);
        return s;
    }

    void project_params() override {
        theta_ = theta_.cwiseMax(kPositiveFloor);
    }

private:
    Vector theta_;
    double horizon_;
};

// -------------------------------------------------------- trading, exact form

class ExactTradingCritic final : public Critic {
public:
    ExactTradingCritic(Vector eta, double horizon) : eta_(std::move(eta)), horizon_(horizon) {
        if (eta_.size() != 3)
            throw std::invalid_argument("exact_trading critic: eta must have 3 components");
        project_params();
    }

    std::string kind() const override { return "exact_trading"; }
    Eigen::Index param_count() const override { return 3; }
    Vector& params() override { return eta_; }
    const Vector& params() const override { return eta_; }

    CriticShell shell(double t, double lambda) const override {
        const double tau = horizon_ - t;
        const double den = 1.0 + eta_(0) * tau;
        CriticShell s;
        s.K = eta_(0) / den;
        s.R = eta_(1) * std::log(den) - eta_(2) * tau;
        if (lambda > 0.0)
            s.R -= 0.5 * lambda * std::log(M_PI * lambda) * tau;
        s.dK = Vector::Zero(3);
        s.dK(0) = 1.0 / (den * den);
        s.dR = Vector::Zero(3);
        s.dR(0) = eta_(1) * tau / den;
        s.dR(1) = std::log(den);
        s.dR(2) = -tau;
        return s;
    }

    void project_params() override {
        eta_ = eta_.cwiseMax(kPositiveFloor);
    }

private:
    Vector eta_;
    double horizon_;
};

class ExactTradingActor final : public Actor {
public:
    ExactTradingActor(Vector theta, double horizon)
        : theta_(std::move(theta)), horizon_(horizon) {
        if (theta_.size() != 2)
            throw std::invalid_argument("exact_trading actor: theta must have 2 components");
        project_params();
    }

    std::string kind() const override { return "exact_trading"; }
    Eigen::Index param_count() const override { return 2; }
    Vector& params() override { return theta_; }
    const Vector& params() const override { return theta_; }

    ActorShell shell(double t, double lambda) const override {
        const double tau = horizon_ - t;
        const double den = 1.0 + theta_(0) * tau;
        ActorShell s;
        const double phi = -theta_(0) / den;
        s.phi1 = phi;
        s.phi2 = -phi;
        s.phi3 = -theta_(1);
        s.var = 0.5 * lambda;
        Vector dphi = Vector::Zero(2);
        dphi(0) = -1.0 / (den * den);
        s.dphi1 = dphi;
        s.dphi2 = -dphi;
        s.dphi3 = Vector::Zero(2);
        s.dphi3(1) = -1.0;
        return s;
    }

    void project_params() override {
        theta_ = theta_.cwiseMax(kPositiveFloor);
    }

private:
    Vector theta_;
    double horizon_;
};

// ------------------------------------------------------------- network shells

Eigen::VectorXd time_input(double t) {
    Eigen::VectorXd in(1);
    in(0) = t;
    return in;
}

class MlpCritic final : public Critic {
public:
    explicit MlpCritic(RngStream& rng)
        : k_net_(Mlp::standard(1, 1, rng)), r_net_(Mlp::standard(1, 1, rng)) {
        rebuild();
    }

    std::string kind() const override { return "mlp"; }
    Eigen::Index param_count() const override { return params_.size(); }
    Vector& params() override { return params_; }
    const Vector& params() const override { return params_; }

    CriticShell shell(double t, double) const override {
        sync();
        const Eigen::VectorXd in = time_input(t);
        CriticShell s;
        Eigen::VectorXd gk, gr;
        s.K = k_net_.value_and_grad(in, gk);
        s.R = r_net_.value_and_grad(in, gr);
        s.dK = Vector::Zero(params_.size());
        s.dR = Vector::Zero(params_.size());
        s.dK.head(gk.size()) = gk;
        s.dR.tail(gr.size()) = gr;
        return s;
    }

private:
    void rebuild() {
        params_.resize(k_net_.param_count() + r_net_.param_count());
        params_ << k_net_.params(), r_net_.params();
    }
    void sync() const {
        k_net_.params() = params_.head(static_cast<Eigen::Index>(k_net_.param_count()));
        r_net_.params() = params_.tail(static_cast<Eigen::Index>(r_net_.param_count()));
    }

    mutable Mlp k_net_, r_net_;
    Vector params_;
};

class MlpActor final : public Actor {
public:
    MlpActor(RngStream& rng, bool with_phi3, VarianceRule variance)
        : phi_net_(Mlp::standard(1, 1, rng)), with_phi3_(with_phi3), variance_(variance) {
        const Eigen::Index extra = with_phi3_ ? 1 : 0;
        params_.resize(static_cast<Eigen::Index>(phi_net_.param_count()) + extra);
        params_.head(static_cast<Eigen::Index>(phi_net_.param_count())) = phi_net_.params();
        if (with_phi3_)
            params_(params_.size() - 1) = 0.0;
    }

    std::string kind() const override { return "mlp"; }
    Eigen::Index param_count() const override { return params_.size(); }
    Vector& params() override { return params_; }
    const Vector& params() const override { return params_; }

    ActorShell shell(double t, double lambda) const override {
        phi_net_.params() = params_.head(static_cast<Eigen::Index>(phi_net_.param_count()));
        Eigen::VectorXd gphi;
        const double phi = phi_net_.value_and_grad(time_input(t), gphi);
        ActorShell s;
        s.phi1 = phi;
        s.phi2 = -phi;
        s.phi3 = with_phi3_ ? params_(params_.size() - 1) : 0.0;
        s.var = variance_ == VarianceRule::Lambda ? lambda : 0.5 * lambda;
        s.dphi1 = Vector::Zero(params_.size());
        s.dphi1.head(gphi.size()) = gphi;
        s.dphi2 = -s.dphi1;
        s.dphi3 = Vector::Zero(params_.size());
        if (with_phi3_)
            s.dphi3(params_.size() - 1) = 1.0;
        return s;
    }

private:
    mutable Mlp phi_net_;
    bool with_phi3_;
    VarianceRule variance_;
    Vector params_;
};

class QuadraticLqCritic final : public Critic {
public:
    explicit QuadraticLqCritic(RngStream& rng)
        : k_net_(Mlp::standard(1, 1, rng)), lam_net_(Mlp::standard(1, 1, rng)),
          y_net_(Mlp::standard(1, 1, rng)), r_net_(Mlp::standard(1, 1, rng)) {
        const Eigen::Index p = static_cast<Eigen::Index>(k_net_.param_count());
        params_.resize(4 * p);
        params_ << k_net_.params(), lam_net_.params(), y_net_.params(), r_net_.params();
    }

    std::string kind() const override { return "quadratic_lq"; }
    Eigen::Index param_count() const override { return params_.size(); }
    Vector& params() override { return params_; }
    const Vector& params() const override { return params_; }

    CriticShell shell(double t, double) const override {
        const Eigen::Index p = static_cast<Eigen::Index>(k_net_.param_count());
        k_net_.params() = params_.segment(0, p);
        lam_net_.params() = params_.segment(p, p);
        y_net_.params() = params_.segment(2 * p, p);
        r_net_.params() = params_.segment(3 * p, p);
        const Eigen::VectorXd in = time_input(t);
        Eigen::VectorXd gk, gl, gy, gr;
        CriticShell s;
        s.K = k_net_.value_and_grad(in, gk);
        s.Lam = lam_net_.value_and_grad(in, gl);
        s.Y = y_net_.value_and_grad(in, gy);
        s.R = r_net_.value_and_grad(in, gr);
        s.dK = Vector::Zero(params_.size());
        s.dLam = Vector::Zero(params_.size());
        s.dY = Vector::Zero(params_.size());
        s.dR = Vector::Zero(params_.size());
        s.dK.segment(0, p) = gk;
        s.dLam.segment(p, p) = gl;
        s.dY.segment(2 * p, p) = gy;
        s.dR.segment(3 * p, p) = gr;
        return s;
    }

private:
    mutable Mlp k_net_, lam_net_, y_net_, r_net_;
    Vector params_;
};

class QuadraticLqActor final : public Actor {
public:
    explicit QuadraticLqActor(RngStream& rng)
        : phi1_net_(Mlp::standard(1, 1, rng)), phi2_net_(Mlp::standard(1, 1, rng)),
          phi3_net_(Mlp::standard(1, 1, rng)) {
        const Eigen::Index p = static_cast<Eigen::Index>(phi1_net_.param_count());
        params_.resize(3 * p);
        params_ << phi1_net_.params(), phi2_net_.params(), phi3_net_.params();
    }

    std::string kind() const override { return "quadratic_lq"; }
    Eigen::Index param_count() const override { return params_.size(); }
    Vector& params() override { return params_; }
    const Vector& params() const override { return params_; }

    ActorShell shell(double t, double lambda) const override {
        const Eigen::Index p = static_cast<Eigen::Index>(phi1_net_.param_count());
        phi1_net_.params() = params_.segment(0, p);
        phi2_net_.params() = params_.segment(p, p);
        phi3_net_.params() = params_.segment(2 * p, p);
        const Eigen::VectorXd in = time_input(t);
        Eigen::VectorXd g1, g2, g3;
        ActorShell s;
        s.phi1 = phi1_net_.value_and_grad(in, g1);
        s.phi2 = phi2_net_.value_and_grad(in, g2);
        s.phi3 = phi3_net_.value_and_grad(in, g3);
        s.var = 0.5 * lambda;
        s.dphi1 = Vector::Zero(params_.size());
        s.dphi2 = Vector::Zero(params_.size());
        s.dphi3 = Vector::Zero(params_.size());
        s.dphi1.segment(0, p) = g1;
        s.dphi2.segment(p, p) = g2;
        s.dphi3.segment(2 * p, p) = g3;
        return s;
    }

private:
    mutable Mlp phi1_net_, phi2_net_, phi3_net_;
    Vector params_;
};

} // namespace

std::unique_ptr<Critic> make_exact_sysrisk_critic(Vector eta, double horizon) {
    return std::make_unique<ExactSysRiskCritic>(std::move(eta), horizon);
}

std::unique_ptr<Actor> make_exact_sysrisk_actor(Vector theta, double horizon) {
    return std::make_unique<ExactSysRiskActor>(std::move(theta), horizon);
}

std::unique_ptr<Critic> make_exact_trading_critic(Vector eta, double horizon) {
    return std::make_unique<ExactTradingCritic>(std::move(eta), horizon);
}

std::unique_ptr<Actor> make_exact_trading_actor(Vector theta, double horizon) {
    return std::make_unique<ExactTradingActor>(std::move(theta), horizon);
}

std::unique_ptr<Critic> make_mlp_critic(RngStream& rng) {
    return std::make_unique<MlpCritic>(rng);
}

std::unique_ptr<Actor> make_mlp_actor(RngStream& rng, bool with_phi3, VarianceRule variance) {
    return std::make_unique<MlpActor>(rng, with_phi3, variance);
}

std::unique_ptr<Critic> make_quadratic_lq_critic(RngStream& rng) {
    return std::make_unique<QuadraticLqCritic>(rng);
}

std::unique_ptr<Actor> make_quadratic_lq_actor(RngStream& rng) {
    return std::make_unique<QuadraticLqActor>(rng);
}

} // namespace mfc

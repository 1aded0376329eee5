#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>

#include "mfc/mlp.hpp"
#include "mfc/rng.hpp"

namespace mfc {

using Vector = Eigen::VectorXd;

/// Evaluation of the LQ critic shell at one time:
///   J(t,x,mu) = K (x-mubar)^2 + Lam mubar^2 + 2 Y x + R
/// with the gradients of each coefficient in the flat parameter vector.
/// Scalar state; every parametrisation used by the paper's experiments is
/// one-dimensional.
struct CriticShell {
    double K = 0.0, Lam = 0.0, Y = 0.0, R = 0.0;
    Vector dK, dLam, dY, dR; // each |eta|-dimensional (possibly zero)
};

/// Parametric cost value function J^eta. The temperature lambda is supplied
/// per call: exact parametrisations carry explicit lambda terms in R^eta and
/// are always evaluated at the current lambda of the schedule.
class Critic {
public:
    virtual ~Critic() = default;

    virtual std::string kind() const = 0;
    virtual Eigen::Index param_count() const = 0;
    virtual Vector& params() = 0;
    virtual const Vector& params() const = 0;

    virtual CriticShell shell(double t, double lambda) const = 0;

    double value(double t, double x, double mu_bar, double lambda) const;
    Vector grad_eta(double t, double x, double mu_bar, double lambda) const;

    /// Clamp constrained components after a gradient step (no-op by default).
    virtual void project_params() {}
};

/// Evaluation of the Gaussian actor shell at one time:
///   mean = phi1 x + phi2 mubar + phi3,  variance = var (action noise).
struct ActorShell {
    double phi1 = 0.0, phi2 = 0.0, phi3 = 0.0;
    double var = 0.0;
    Vector dphi1, dphi2, dphi3; // each |theta|-dimensional
};

/// Parametric Gaussian randomised policy pi_theta. The variance convention is
/// owned by the implementation (lambda for the systemic-risk family, lambda/2
/// for the trading family) and exposed through the shell.
class Actor {
public:
    virtual ~Actor() = default;

    virtual std::string kind() const = 0;
    virtual Eigen::Index param_count() const = 0;
    virtual Vector& params() = 0;
    virtual const Vector& params() const = 0;

    virtual ActorShell shell(double t, double lambda) const = 0;

    double mean(double t, double x, double mu_bar, double lambda) const;
    double sample(double t, double x, double mu_bar, double lambda, RngStream& rng) const;
    double log_density(double t, double x, double mu_bar, double action, double lambda) const;
    Vector grad_log_density(double t, double x, double mu_bar, double action,
                            double lambda) const;

    virtual void project_params() {}
};

// assembled from precomputed shells, for per-time-node caching in the trainers
double shell_value(const CriticShell& s, double x, double mu_bar);
Vector shell_grad_eta(const CriticShell& s, double x, double mu_bar);
double shell_mean(const ActorShell& s, double x, double mu_bar);
double shell_log_density(const ActorShell& s, double x, double mu_bar, double action);
Vector shell_grad_log_density(const ActorShell& s, double x, double mu_bar, double action);

/// Mean-field correction operator for the LQ parametrisations:
///   H_theta[J^eta](t,x,mu) = 2 [ (dphi1+dphi2) mubar + dphi3 ]' C'
///                              ( -K^eta(t)(x-mubar) + Lam^eta(t) mubar ).
/// Identically zero whenever phi1 = -phi2 and phi3 is parameter-free.
Vector h_theta(const Actor& actor, const Critic& critic, double t, double x, double mu_bar,
               double drift_gain, double lambda);
Vector h_theta_from_shells(const ActorShell& a, const CriticShell& c, double x, double mu_bar,
                           double drift_gain);

// ------------------------------------------------------------------ factories

/// Systemic-risk exact parametrisation. eta = (eta1..eta4) in R_+^4:
///   K = -(eta3 - eta1 r)/2,  r = (sinh+eta2 cosh)/(cosh+eta2 sinh) at eta1(T-t)
///   R = eta4 log(cosh+eta2 sinh) - eta3 eta4 (T-t) - (lambda(T-t)/2)log(2 pi lambda)
std::unique_ptr<Critic> make_exact_sysrisk_critic(Vector eta, double horizon);

/// theta = (theta1..theta3) in R_+^3, phi = theta3 - theta1 r, variance lambda.
std::unique_ptr<Actor> make_exact_sysrisk_actor(Vector theta, double horizon);

/// Trading exact parametrisation. eta = (eta1..eta3) in (0,inf)^3:
///   K = eta1/(1+eta1(T-t))
///   R = eta2 log(1+eta1(T-t)) - (eta3 + (lambda/2)log(pi lambda))(T-t)
std::unique_ptr<Critic> make_exact_trading_critic(Vector eta, double horizon);

/// theta = (theta1, theta2) in (0,inf)^2, phi = -theta1/(1+theta1(T-t)),
/// phi3 = -theta2, variance lambda/2.
std::unique_ptr<Actor> make_exact_trading_actor(Vector theta, double horizon);

enum class VarianceRule { Lambda, HalfLambda };

/// K^eta and R^eta are 3x10 tanh networks of t inside the centred quadratic
/// shell (Lam = Y = 0).
std::unique_ptr<Critic> make_mlp_critic(RngStream& rng);

/// phi^theta is a 3x10 tanh network of t; mean = phi (x - mubar) and, when
/// with_phi3 is set, plus a constant phi3 parameter appended to theta.
std::unique_ptr<Actor> make_mlp_actor(RngStream& rng, bool with_phi3, VarianceRule variance);

/// Full quadratic shell with K, Lam, Y, R networks of t.
std::unique_ptr<Critic> make_quadratic_lq_critic(RngStream& rng);

/// Mean = phi1(t) x + phi2(t) mubar + phi3(t), each a network; variance lambda/2.
std::unique_ptr<Actor> make_quadratic_lq_actor(RngStream& rng);

} // namespace mfc

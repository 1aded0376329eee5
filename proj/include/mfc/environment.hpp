#pragma once

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>

#include "mfc/rng.hpp"
#include "mfc/time_grid.hpp"

namespace mfc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct EnvStep {
    Vector next_state;
    double running_cost;
};

/// Coefficients of the linear-quadratic mean-field model
///   drift      b(x,mu,a)  = B x + Bbar mubar + C a
///   diffusion  sigma(...) = gamma + D x + Dbar mubar + F a   (scalar noise)
///   running    f(x,mu,a)  = x'Qx + mubar'Qbar mubar + a'Na + 2a'Ix
///                           + 2a'Ibar mubar + 2M.x + 2H.a
///   terminal   g(x,mu)    = x'Px + mubar'Pbar mubar + 2L.x
struct LqCoefficients {
    Matrix B, B_bar, D, D_bar; // d x d
    Matrix C, F;               // d x m
    Vector gamma;              // d
    Matrix Q, Q_bar, P, P_bar; // d x d symmetric
    Matrix N;                  // m x m symmetric positive
    Matrix I, I_bar;           // m x d
    Vector M, L;               // d
    Vector H;                  // m
    double beta = 0.0;

    Eigen::Index state_dim() const { return B.rows(); }
    Eigen::Index action_dim() const { return N.rows(); }

    static LqCoefficients zero(Eigen::Index d, Eigen::Index m);

    /// Checks shapes, symmetry of Q/P blocks, discount sign, and the (H1)/(H2)
    /// positivity assumptions of the Riccati system. Throws
    /// std::domain_error naming the violated condition.
    void validate() const;
};

/// Black-box simulator contract: the learner observes states and costs only.
/// step is a pure function of (time index, state, action, measure mean, noise
/// draw); parallel rollouts only need distinct RngStreams.
class Environment {
public:
    virtual ~Environment() = default;

    virtual Eigen::Index state_dim() const = 0;
    virtual Eigen::Index action_dim() const = 0;
    virtual const TimeGrid& grid() const = 0;

    virtual Vector sample_initial(RngStream& rng) const = 0;

    EnvStep step(std::size_t k, const Vector& x, const Vector& a,
                 const Vector& mu_bar, RngStream& rng) const;

    /// Deterministic transition map given the Brownian increment dw
    /// (dw ~ N(0, dt) in step()).
    virtual EnvStep step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                                    const Vector& mu_bar, double dw) const = 0;

    virtual double terminal_cost(const Vector& x_T, const Vector& mu_bar) const = 0;

    /// Allocation-free path for d = m = 1 environments (the training loops).
    virtual void step_scalar(std::size_t k, double x, double a, double mu_bar, double dw,
                             double& next_state, double& running_cost) const;
    virtual double terminal_cost_scalar(double x_T, double mu_bar) const;
    virtual double sample_initial_scalar(RngStream& rng) const;
};

/// Mean-field systemic risk (exact exponential discretisation):
///   X' - m = e^{-Bbar dt}(X - m) + a (1-e^{-Bbar dt})/Bbar + gamma e^{-Bbar dt} dW
///   f = Q (X-m)^2 + a^2/2 + 2 a I (X-m),  g = P (X_T-m)^2
/// where m is the supplied measure mean, or the true initial mean when
/// oracle_mean is set. X_0 ~ N(0,1) in the reference configuration.
class SystemicRiskEnv final : public Environment {
public:
    struct Params {
        double B_bar = 0.6;
        double I = 0.4;
        double Q = 1.0;
        double P = 1.0;
        double gamma = 1.0;
        double initial_mean = 0.0;
        double initial_stddev = 1.0;
        bool oracle_mean = false;
    };

    SystemicRiskEnv(Params params, TimeGrid grid);

    Eigen::Index state_dim() const override { return 1; }
    Eigen::Index action_dim() const override { return 1; }
    const TimeGrid& grid() const override { return grid_; }
    const Params& params() const { return params_; }

    Vector sample_initial(RngStream& rng) const override;
    EnvStep step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                            const Vector& mu_bar, double dw) const override;
    double terminal_cost(const Vector& x_T, const Vector& mu_bar) const override;
    void step_scalar(std::size_t k, double x, double a, double mu_bar, double dw,
                     double& next_state, double& running_cost) const override;
    double terminal_cost_scalar(double x_T, double mu_bar) const override;
    double sample_initial_scalar(RngStream& rng) const override;

    LqCoefficients lq_coefficients() const;

private:
    Params params_;
    TimeGrid grid_;
    double decay_;       // e^{-Bbar dt}
    double drive_;       // (1 - e^{-Bbar dt}) / Bbar
};

/// Optimal trading (Euler-Maruyama):
///   X' = X + a dt + gamma dW,  f = a^2 + 2 H a,  g = P (X_T - mubar_T)^2
/// X_0 ~ N(1,1) in the reference configuration.
class TradingEnv final : public Environment {
public:
    struct Params {
        double P = 3.0;
        double H = 2.0;
        double gamma = 1.0;
        double initial_mean = 1.0;
        double initial_stddev = 1.0;
    };

    TradingEnv(Params params, TimeGrid grid);

    Eigen::Index state_dim() const override { return 1; }
    Eigen::Index action_dim() const override { return 1; }
    const TimeGrid& grid() const override { return grid_; }
    const Params& params() const { return params_; }

    Vector sample_initial(RngStream& rng) const override;
    EnvStep step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                            const Vector& mu_bar, double dw) const override;
    double terminal_cost(const Vector& x_T, const Vector& mu_bar) const override;
    void step_scalar(std::size_t k, double x, double a, double mu_bar, double dw,
                     double& next_state, double& running_cost) const override;
    double terminal_cost_scalar(double x_T, double mu_bar) const override;
    double sample_initial_scalar(RngStream& rng) const override;

    LqCoefficients lq_coefficients() const;

private:
    Params params_;
    TimeGrid grid_;
};

/// Euler-Maruyama simulator of an arbitrary LQ model.
class GenericLqEnv final : public Environment {
public:
    struct InitialLaw {
        Vector mean;
        Vector stddev; // componentwise; zero entries give a Dirac coordinate
    };

    GenericLqEnv(LqCoefficients coeffs, InitialLaw initial, TimeGrid grid);

    Eigen::Index state_dim() const override { return coeffs_.state_dim(); }
    Eigen::Index action_dim() const override { return coeffs_.action_dim(); }
    const TimeGrid& grid() const override { return grid_; }
    const LqCoefficients& coefficients() const { return coeffs_; }

    Vector sample_initial(RngStream& rng) const override;
    EnvStep step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                            const Vector& mu_bar, double dw) const override;
    double terminal_cost(const Vector& x_T, const Vector& mu_bar) const override;

private:
    LqCoefficients coeffs_;
    InitialLaw initial_;
    TimeGrid grid_;
};

} // namespace mfc

#include "mfc/environment.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace mfc {

namespace {

bool is_symmetric(const Matrix& a, double tol = 1e-10) {
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + a.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    return es.eigenvalues().minCoeff();
}

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite())
        throw std::runtime_error(std::string("environment: non-finite ") + what);
}

} // namespace

LqCoefficients LqCoefficients::zero(Eigen::Index d, Eigen::Index m) {
    LqCoefficients c;
    c.B = Matrix::Zero(d, d);
    c.B_bar = Matrix::Zero(d, d);
    c.D = Matrix::Zero(d, d);
    c.D_bar = Matrix::Zero(d, d);
    c.C = Matrix::Zero(d, m);
    c.F = Matrix::Zero(d, m);
    c.gamma = Vector::Zero(d);
    c.Q = Matrix::Zero(d, d);
    c.Q_bar = Matrix::Zero(d, d);
    c.P = Matrix::Zero(d, d);
    c.P_bar = Matrix::Zero(d, d);
    c.N = Matrix::Zero(m, m);
    c.I = Matrix::Zero(m, d);
    c.I_bar = Matrix::Zero(m, d);
    c.M = Vector::Zero(d);
    c.L = Vector::Zero(d);
    c.H = Vector::Zero(m);
    return c;
}

void LqCoefficients::validate() const {
    const Eigen::Index d = state_dim();
    const Eigen::Index m = action_dim();
    auto check_shape = [](const Matrix& a, Eigen::Index r, Eigen::Index c, const char* name) {
        if (a.rows() != r || a.cols() != c)
            throw std::domain_error(std::string("LqCoefficients: bad shape for ") + name);
    };
    check_shape(B, d, d, "B");
    check_shape(B_bar, d, d, "B_bar");
    check_shape(D, d, d, "D");
    check_shape(D_bar, d, d, "D_bar");
    check_shape(C, d, m, "C");
    check_shape(F, d, m, "F");
    check_shape(Q, d, d, "Q");
    check_shape(Q_bar, d, d, "Q_bar");
    check_shape(P, d, d, "P");
    check_shape(P_bar, d, d, "P_bar");
    check_shape(N, m, m, "N");
    check_shape(I, m, d, "I");
    check_shape(I_bar, m, d, "I_bar");
    if (gamma.size() != d || M.size() != d || L.size() != d || H.size() != m)
        throw std::domain_error("LqCoefficients: bad vector size");
    if (!is_symmetric(Q) || !is_symmetric(P) || !is_symmetric(Q_bar) || !is_symmetric(P_bar))
        throw std::domain_error("LqCoefficients: Q, Q_bar, P, P_bar must be symmetric");
    if (!is_symmetric(N))
        throw std::domain_error("LqCoefficients: N must be symmetric");
    if (beta < 0.0)
        throw std::domain_error("LqCoefficients: beta must be >= 0");

    constexpr double kDelta = 1e-12;
    const bool n_pd = min_eigenvalue(N) > kDelta;
    // (H1): N > 0, P >= 0, Q - I' N^{-1} I >= 0; degenerate alternative
    // (H1)(ii): d = m = 1, I = 0, F != 0, Q >= 0, P > 0.
    if (n_pd) {
        if (min_eigenvalue(P) < -1e-10)
            throw std::domain_error("LqCoefficients: (H1) fails, P is not positive semidefinite");
        const Matrix n_inv = N.llt().solve(Matrix::Identity(m, m));
        if (min_eigenvalue(Q - I.transpose() * n_inv * I) < -1e-10)
            throw std::domain_error("LqCoefficients: (H1) fails, Q - I'N^{-1}I is not psd");
        const Matrix i_hat = I + I_bar;
        if (min_eigenvalue(P + P_bar) < -1e-10)
            throw std::domain_error("LqCoefficients: (H2) fails, P + P_bar is not psd");
        if (min_eigenvalue(Q + Q_bar - i_hat.transpose() * n_inv * i_hat) < -1e-10)
            throw std::domain_error(
                "LqCoefficients: (H2) fails, Q+Q_bar - (I+I_bar)'N^{-1}(I+I_bar) is not psd");
    } else {
        const bool degenerate_ok = d == 1 && m == 1 && I.cwiseAbs().maxCoeff() == 0.0 &&
                                   I_bar.cwiseAbs().maxCoeff() == 0.0 &&
                                   F.cwiseAbs().maxCoeff() > 0.0 &&
                                   min_eigenvalue(Q) >= 0.0 && min_eigenvalue(Q + Q_bar) >= 0.0 &&
                                   min_eigenvalue(P) > 0.0 && min_eigenvalue(P + P_bar) >= 0.0;
        if (!degenerate_ok)
            throw std::domain_error(
                "LqCoefficients: N is not positive definite and the (H1)(ii)/(H2)(ii) "
                "degenerate case does not apply");
    }
}

EnvStep Environment::step(std::size_t k, const Vector& x, const Vector& a,
                          const Vector& mu_bar, RngStream& rng) const {
    if (k >= grid().n_steps())
        throw std::invalid_argument("Environment::step: time index out of range");
    require_finite(x, "state");
    require_finite(a, "action");
    const double dw = rng.gauss(0.0, std::sqrt(grid().dt()));
    EnvStep out = step_with_noise(k, x, a, mu_bar, dw);
    require_finite(out.next_state, "next state");
    if (!std::isfinite(out.running_cost))
        throw std::runtime_error("environment: non-finite running cost");
    return out;
}

void Environment::step_scalar(std::size_t k, double x, double a, double mu_bar, double dw,
                              double& next_state, double& running_cost) const {
    Vector xv(1), av(1), mv(1);
    xv(0) = x;
    av(0) = a;
    mv(0) = mu_bar;
    const EnvStep out = step_with_noise(k, xv, av, mv, dw);
    next_state = out.next_state(0);
    running_cost = out.running_cost;
}

double Environment::terminal_cost_scalar(double x_T, double mu_bar) const {
    Vector xv(1), mv(1);
    xv(0) = x_T;
    mv(0) = mu_bar;
    return terminal_cost(xv, mv);
}

double Environment::sample_initial_scalar(RngStream& rng) const {
    return sample_initial(rng)(0);
}

// ---------------------------------------------------------------- systemic risk

SystemicRiskEnv::SystemicRiskEnv(Params params, TimeGrid grid)
    : params_(params), grid_(grid) {
    if (params_.Q < 2.0 * params_.I * params_.I)
        throw std::invalid_argument("SystemicRiskEnv: requires Q >= 2 I^2");
    const double dt = grid_.dt();
    if (params_.B_bar == 0.0) {
        decay_ = 1.0;
        drive_ = dt;
    } else {
        const double u = params_.B_bar * dt;
        decay_ = std::exp(-u);
        drive_ = -std::expm1(-u) / params_.B_bar;
    }
}

double SystemicRiskEnv::effective_mean(const Vector& mu_bar) const {
    return params_.oracle_mean ? params_.initial_mean : mu_bar(0);
}

Vector SystemicRiskEnv::sample_initial(RngStream& rng) const {
    Vector x(1);
    x(0) = sample_initial_scalar(rng);
    return x;
}

EnvStep SystemicRiskEnv::step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                                         const Vector& mu_bar, double dw) const {
    Vector next(1);
    double cost;
    step_scalar(k, x(0), a(0), mu_bar(0), dw, next(0), cost);
    return EnvStep{next, cost};
}

void SystemicRiskEnv::step_scalar(std::size_t, double x, double a, double mu_bar, double dw,
                                  double& next_state, double& running_cost) const {
    const double m = params_.oracle_mean ? params_.initial_mean : mu_bar;
    const double xc = x - m;
    next_state = m + decay_ * xc + a * drive_ + params_.gamma * decay_ * dw;
    running_cost = params_.Q * xc * xc + 0.5 * a * a + 2.0 * a * params_.I * xc;
}

double SystemicRiskEnv::terminal_cost(const Vector& x_T, const Vector& mu_bar) const {
    return terminal_cost_scalar(x_T(0), mu_bar(0));
}

double SystemicRiskEnv::terminal_cost_scalar(double x_T, double mu_bar) const {
    const double xc = x_T - (params_.oracle_mean ? params_.initial_mean : mu_bar);
    return params_.P * xc * xc;
}

double SystemicRiskEnv::sample_initial_scalar(RngStream& rng) const {
    return rng.gauss(params_.initial_mean, params_.initial_stddev);
}

LqCoefficients SystemicRiskEnv::lq_coefficients() const {
    LqCoefficients c = LqCoefficients::zero(1, 1);
    c.B(0, 0) = -params_.B_bar;
    c.B_bar(0, 0) = params_.B_bar;
    c.C(0, 0) = 1.0;
    c.gamma(0) = params_.gamma;
    c.Q(0, 0) = params_.Q;
    c.Q_bar(0, 0) = -params_.Q;
    c.N(0, 0) = 0.5;
    c.I(0, 0) = params_.I;
    c.I_bar(0, 0) = -params_.I;
    c.P(0, 0) = params_.P;
    c.P_bar(0, 0) = -params_.P;
    return c;
}

// --------------------------------------------------------------------- trading

TradingEnv::TradingEnv(Params params, TimeGrid grid) : params_(params), grid_(grid) {
    if (!(params_.P > 0.0))
        throw std::invalid_argument("TradingEnv: requires P > 0");
}

Vector TradingEnv::sample_initial(RngStream& rng) const {
    Vector x(1);
    x(0) = sample_initial_scalar(rng);
    return x;
}

double TradingEnv::sample_initial_scalar(RngStream& rng) const {
    return rng.gauss(params_.initial_mean, params_.initial_stddev);
}

EnvStep TradingEnv::step_with_noise(std::size_t k, const Vector& x, const Vector& a,
                                    const Vector& mu_bar, double dw) const {
    Vector next(1);
    double cost;
    step_scalar(k, x(0), a(0), mu_bar(0), dw, next(0), cost);
    return EnvStep{next, cost};
}

void TradingEnv::step_scalar(std::size_t, double x, double a, double, double dw,
                             double& next_state, double& running_cost) const {
    next_state = x + a * grid_.dt() + params_.gamma * dw;
    running_cost = a * a + 2.0 * params_.H * a;
}

double TradingEnv::terminal_cost(const Vector& x_T, const Vector& mu_bar) const {
    return terminal_cost_scalar(x_T(0), mu_bar(0));
}

double TradingEnv::terminal_cost_scalar(double x_T, double mu_bar) const {
    const double xc = x_T - mu_bar;
    return params_.P * xc * xc;
}

LqCoefficients TradingEnv::lq_coefficients() const {
    LqCoefficients c = LqCoefficients::zero(1, 1);
    c.C(0, 0) = 1.0;
    c.gamma(0) = params_.gamma;
    c.N(0, 0) = 1.0;
    c.H(0) = params_.H;
    c.P(0, 0) = params_.P;
    c.P_bar(0, 0) = -params_.P;
    return c;
}

// ------------------------------------------------------------------ generic LQ

GenericLqEnv::GenericLqEnv(LqCoefficients coeffs, InitialLaw initial, TimeGrid grid)
    : coeffs_(std::move(coeffs)), initial_(std::move(initial)), grid_(grid) {
    coeffs_.validate();
    if (initial_.mean.size() != coeffs_.state_dim() ||
        initial_.stddev.size() != coeffs_.state_dim())
        throw std::invalid_argument("GenericLqEnv: initial law dimension mismatch");
}

Vector GenericLqEnv::sample_initial(RngStream& rng) const {
    Vector x = initial_.mean;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (initial_.stddev(i) > 0.0)
            x(i) += initial_.stddev(i) * rng.gauss();
    return x;
}

EnvStep GenericLqEnv::step_with_noise(std::size_t, const Vector& x, const Vector& a,
                                      const Vector& mu_bar, double dw) const {
    const Vector drift = coeffs_.B * x + coeffs_.B_bar * mu_bar + coeffs_.C * a;
    const Vector diffusion = coeffs_.gamma + coeffs_.D * x + coeffs_.D_bar * mu_bar + coeffs_.F * a;
    Vector next = x + drift * grid_.dt() + diffusion * dw;
    double f = x.dot(coeffs_.Q * x) + mu_bar.dot(coeffs_.Q_bar * mu_bar) + a.dot(coeffs_.N * a) +
               2.0 * a.dot(coeffs_.I * x) + 2.0 * a.dot(coeffs_.I_bar * mu_bar) +
               2.0 * coeffs_.M.dot(x) + 2.0 * coeffs_.H.dot(a);
    return EnvStep{std::move(next), f};
}

double GenericLqEnv::terminal_cost(const Vector& x_T, const Vector& mu_bar) const {
    return x_T.dot(coeffs_.P * x_T) + mu_bar.dot(coeffs_.P_bar * mu_bar) +
           2.0 * coeffs_.L.dot(x_T);
}

} // namespace mfc

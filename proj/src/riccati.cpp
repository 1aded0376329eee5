#include "mfc/riccati.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace mfc {

namespace {

struct State {
    Matrix K, Lambda;
    Vector Y;
    double R;
};

State operator+(const State& a, const State& b) {
    return {a.K + b.K, a.Lambda + b.Lambda, a.Y + b.Y, a.R + b.R};
}
State operator*(double s, const State& a) {
    return {s * a.K, s * a.Lambda, s * a.Y, s * a.R};
}

struct Aggregates {
    Matrix B_hat, D_hat, Q_hat, I_hat;
};

State derivative(const LqCoefficients& c, const Aggregates& agg, double lambda,
                 double t, const State& s) {
    const Eigen::Index m = c.action_dim();
    const Matrix S = c.N + c.F.transpose() * s.K * c.F;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
        throw std::domain_error("solve_riccati: S(t) lost positive definiteness at t = " +
                                std::to_string(t));
    const Matrix U = c.I + c.C.transpose() * s.K + c.F.transpose() * s.K * c.D;
    const Matrix U_hat =
        agg.I_hat + c.C.transpose() * s.Lambda + c.F.transpose() * s.K * agg.D_hat;
    const Vector O = c.H + c.C.transpose() * s.Y + c.F.transpose() * (s.K * c.gamma);

    State d;
    d.K = c.beta * s.K - c.Q - s.K * c.B - c.B.transpose() * s.K -
          c.D.transpose() * s.K * c.D + U.transpose() * llt.solve(U);
    d.Lambda = c.beta * s.Lambda - agg.Q_hat - s.Lambda * agg.B_hat -
               agg.B_hat.transpose() * s.Lambda - agg.D_hat.transpose() * s.K * agg.D_hat +
               U_hat.transpose() * llt.solve(U_hat);
    d.Y = c.beta * s.Y - c.M - agg.B_hat.transpose() * s.Y -
          agg.D_hat.transpose() * (s.K * c.gamma) + U_hat.transpose() * llt.solve(O);
    d.R = c.beta * s.R - c.gamma.dot(s.K * c.gamma) + O.dot(llt.solve(O));
    if (lambda > 0.0) {
        const double log_det_s = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        d.R += 0.5 * lambda * static_cast<double>(m) * std::log(2.0 * M_PI) +
               0.5 * lambda * (static_cast<double>(m) * std::log(0.5 * lambda) - log_det_s);
    }
    return d;
}

void symmetrise(Matrix& a) { a = 0.5 * (a + a.transpose()).eval(); }

} // namespace

RiccatiSolution::RiccatiSolution(TimeGrid grid, std::vector<Matrix> K,
                                 std::vector<Matrix> Lambda, std::vector<Vector> Y,
                                 std::vector<double> R, double lambda)
    : grid_(grid), K_(std::move(K)), Lambda_(std::move(Lambda)), Y_(std::move(Y)),
      R_(std::move(R)), lambda_(lambda) {
    const std::size_t n = grid_.n_steps() + 1;
    if (K_.size() != n || Lambda_.size() != n || Y_.size() != n || R_.size() != n)
        throw std::invalid_argument("RiccatiSolution: node count mismatch");
}

void RiccatiSolution::locate(double t, std::size_t& i, double& w) const {
    const double dt = grid_.dt();
    if (t <= 0.0) {
        i = 0;
        w = 0.0;
        return;
    }
    if (t >= grid_.horizon()) {
        i = grid_.n_steps() - 1;
        w = 1.0;
        return;
    }
    const double pos = t / dt;
    i = std::min(static_cast<std::size_t>(pos), grid_.n_steps() - 1);
    w = pos - static_cast<double>(i);
}

Matrix RiccatiSolution::K(double t) const {
    std::size_t i;
    double w;
    locate(t, i, w);
    return (1.0 - w) * K_[i] + w * K_[i + 1];
}

Matrix RiccatiSolution::Lambda(double t) const {
    std::size_t i;
    double w;
    locate(t, i, w);
    return (1.0 - w) * Lambda_[i] + w * Lambda_[i + 1];
}

Vector RiccatiSolution::Y(double t) const {
    std::size_t i;
    double w;
    locate(t, i, w);
    return (1.0 - w) * Y_[i] + w * Y_[i + 1];
}

double RiccatiSolution::R(double t) const {
    std::size_t i;
    double w;
    locate(t, i, w);
    return (1.0 - w) * R_[i] + w * R_[i + 1];
}

RiccatiSolution solve_riccati(const LqCoefficients& coeffs, double lambda,
                              const TimeGrid& grid) {
    coeffs.validate();
    if (lambda < 0.0)
        throw std::invalid_argument("solve_riccati: lambda must be >= 0");

    Aggregates agg;
    agg.B_hat = coeffs.B + coeffs.B_bar;
    agg.D_hat = coeffs.D + coeffs.D_bar;
    agg.Q_hat = coeffs.Q + coeffs.Q_bar;
    agg.I_hat = coeffs.I + coeffs.I_bar;

    const std::size_t n = grid.n_steps();
    const double h = grid.dt();

    std::vector<Matrix> K(n + 1), Lambda(n + 1);
    std::vector<Vector> Y(n + 1);
    std::vector<double> R(n + 1);

    State s{coeffs.P, coeffs.P + coeffs.P_bar, coeffs.L, 0.0};
    K[n] = s.K;
    Lambda[n] = s.Lambda;
    Y[n] = s.Y;
    R[n] = s.R;

    for (std::size_t j = n; j-- > 0;) {
        const double t1 = grid.node(j + 1);
        const State k1 = derivative(coeffs, agg, lambda, t1, s);
        const State k2 = derivative(coeffs, agg, lambda, t1 - 0.5 * h, s + (-0.5 * h) * k1);
        const State k3 = derivative(coeffs, agg, lambda, t1 - 0.5 * h, s + (-0.5 * h) * k2);
        const State k4 = derivative(coeffs, agg, lambda, t1 - h, s + (-h) * k3);
        s = s + (-h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        symmetrise(s.K);
        symmetrise(s.Lambda);
        K[j] = s.K;
        Lambda[j] = s.Lambda;
        Y[j] = s.Y;
        R[j] = s.R;
    }
    return RiccatiSolution(grid, std::move(K), std::move(Lambda), std::move(Y), std::move(R),
                           lambda);
}

GaussianPolicy optimal_policy(const RiccatiSolution& sol, const LqCoefficients& coeffs,
                              double lambda) {
    if (lambda < 0.0)
        throw std::invalid_argument("optimal_policy: lambda must be >= 0");
    const Eigen::Index m = coeffs.action_dim();
    auto shared = std::make_shared<RiccatiSolution>(sol);
    GaussianPolicy policy;
    policy.mean = [shared, coeffs](double t, const Vector& x, const Vector& mu_bar) {
        const RiccatiSolution& sol = *shared;
        const Matrix K = sol.K(t);
        const Matrix L = sol.Lambda(t);
        const Vector Yt = sol.Y(t);
        const Matrix S = coeffs.N + coeffs.F.transpose() * K * coeffs.F;
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success)
            throw std::domain_error("optimal_policy: singular S(t)");
        const Matrix U = coeffs.I + coeffs.C.transpose() * K + coeffs.F.transpose() * K * coeffs.D;
        const Matrix U_hat = coeffs.I + coeffs.I_bar + coeffs.C.transpose() * L +
                             coeffs.F.transpose() * K * (coeffs.D + coeffs.D_bar);
        const Vector O = coeffs.H + coeffs.C.transpose() * Yt + coeffs.F.transpose() * (K * coeffs.gamma);
        return Vector(-llt.solve(U * x + (U_hat - U) * mu_bar + O));
    };
    policy.covariance = [shared, coeffs, lambda, m](double t) {
        if (lambda == 0.0)
            return Matrix(Matrix::Zero(m, m));
        const Matrix S = coeffs.N + coeffs.F.transpose() * shared->K(t) * coeffs.F;
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success)
            throw std::domain_error("optimal_policy: singular S(t)");
        return Matrix(0.5 * lambda * llt.solve(Matrix::Identity(m, m)));
    };
    return policy;
}

double optimal_value(const RiccatiSolution& sol, double t, const Vector& x,
                     const Vector& mu_bar) {
    const Vector centred = x - mu_bar;
    return centred.dot(sol.K(t) * centred) + mu_bar.dot(sol.Lambda(t) * mu_bar) +
           2.0 * sol.Y(t).dot(x) + sol.R(t);
}

double optimal_value(const RiccatiSolution& sol, double t, const Vector& x,
                     const EmpiricalMeasure& mu) {
    return optimal_value(sol, t, x, mu.mean());
}

double example1_sqrt_delta(const Example1Params& p) {
    const double b2i = p.B_bar + 2.0 * p.I;
    return std::sqrt(b2i * b2i + 2.0 * p.Q - 4.0 * p.I * p.I);
}

Example1ClosedForm closed_form_example1(double t, const Example1Params& p) {
    if (p.Q < 2.0 * p.I * p.I)
        throw std::invalid_argument("closed_form_example1: requires Q >= 2 I^2");
    const double sd = example1_sqrt_delta(p);
    const double c = p.B_bar + 2.0 * p.I + 2.0 * p.P;
    const double tau = p.T - t;
    const double ch = std::cosh(sd * tau);
    const double sh = std::sinh(sd * tau);
    const double num = sd * sh + c * ch;
    const double den = sd * ch + c * sh;

    Example1ClosedForm out;
    out.K = -0.5 * (p.B_bar + 2.0 * p.I - sd * num / den);
    out.R = 0.5 * p.gamma * p.gamma * std::log(ch + (c / sd) * sh) -
            0.5 * p.gamma * p.gamma * (p.B_bar + 2.0 * p.I) * tau;
    if (p.lambda > 0.0)
        out.R -= 0.5 * p.lambda * tau * std::log(2.0 * M_PI * p.lambda);
    out.phi = -2.0 * (out.K + p.I);
    return out;
}

Example2ClosedForm closed_form_example2(double t, const Example2Params& p) {
    if (!(p.P > 0.0))
        throw std::invalid_argument("closed_form_example2: requires P > 0");
    const double tau = p.T - t;
    Example2ClosedForm out;
    out.K = p.P / (1.0 + p.P * tau);
    out.R = p.gamma * p.gamma * std::log1p(p.P * tau) - p.H * p.H * tau;
    if (p.lambda > 0.0)
        out.R -= 0.5 * p.lambda * std::log(M_PI * p.lambda) * tau;
    out.phi = -out.K;
    out.phi3 = -p.H;
    return out;
}

} // namespace mfc

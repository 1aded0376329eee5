#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "mfc/environment.hpp"
#include "mfc/measure.hpp"
#include "mfc/time_grid.hpp"

namespace mfc {

/// Backward solution of the coupled Riccati system
///   K' = beta K - Q - KB - B'K - D'KD + U' S^{-1} U
///   L' = beta L - Qh - L Bh - Bh'L - Dh'K Dh + Uh' S^{-1} Uh
///   Y' = beta Y - M - Bh'Y - Dh'K gamma + Uh' S^{-1} O
///   R' = beta R - g'Kg + O' S^{-1} O
///        + (lam m/2) log(2pi) + (lam/2) log((lam/2)^m / det S)
/// with S = N + F'KF, U = I + C'K + F'KD, Uh = I+Ibar + C'L + F'K Dh,
/// O = H + C'Y + F'K gamma, and terminal data (P, P+Pbar, L, 0). Hatted
/// quantities add the barred coefficient. The entropy source is defined as 0
/// at lam = 0 (its lam->0 limit).
class RiccatiSolution {
public:
    RiccatiSolution(TimeGrid grid, std::vector<Matrix> K, std::vector<Matrix> Lambda,
                    std::vector<Vector> Y, std::vector<double> R, double lambda);

    const TimeGrid& grid() const { return grid_; }
    double lambda() const { return lambda_; }

    Matrix K(double t) const;
    Matrix Lambda(double t) const;
    Vector Y(double t) const;
    double R(double t) const;

    const std::vector<Matrix>& K_nodes() const { return K_; }
    const std::vector<Matrix>& Lambda_nodes() const { return Lambda_; }
    const std::vector<Vector>& Y_nodes() const { return Y_; }
    const std::vector<double>& R_nodes() const { return R_; }

private:
    // linear interpolation weights for t in [0, T]
    void locate(double t, std::size_t& i, double& w) const;

    TimeGrid grid_;
    std::vector<Matrix> K_, Lambda_;
    std::vector<Vector> Y_;
    std::vector<double> R_;
    double lambda_;
};

/// Integrates the system above with classical RK4 on a fixed grid, from T
/// backwards to 0. K and Lambda are symmetrised after every step. Throws
/// std::domain_error naming the failure time if S(t) loses positive
/// definiteness.
RiccatiSolution solve_riccati(const LqCoefficients& coeffs, double lambda,
                              const TimeGrid& grid);

/// Time-dependent Gaussian feedback policy a ~ N(mean(t,x,mubar), cov(t)).
struct GaussianPolicy {
    std::function<Vector(double t, const Vector& x, const Vector& mu_bar)> mean;
    std::function<Matrix(double t)> covariance;
};

/// pi*(.|t,x,mu) = N(-S^{-1}(U x + (Uh-U) mubar + O); (lam/2) S^{-1}).
GaussianPolicy optimal_policy(const RiccatiSolution& sol, const LqCoefficients& coeffs,
                              double lambda);

/// v(t,x,mu) = (x-mubar)'K(t)(x-mubar) + mubar'Lambda(t)mubar + 2Y(t).x + R(t).
double optimal_value(const RiccatiSolution& sol, double t, const Vector& x,
                     const EmpiricalMeasure& mu);
double optimal_value(const RiccatiSolution& sol, double t, const Vector& x,
                     const Vector& mu_bar);

struct Example1ClosedForm {
    double K;
    double R;
    double phi; // optimal feedback gain on (x - mubar)
};

struct Example1Params {
    double B_bar;
    double I;
    double Q;
    double P;
    double gamma;
    double lambda;
    double T;
};

/// Systemic-risk closed form. Requires Q >= 2 I^2; lambda > 0 for the entropy
/// part of R (dropped at lambda = 0).
Example1ClosedForm closed_form_example1(double t, const Example1Params& p);

/// sqrt((Bbar + 2I)^2 + 2Q - 4I^2), the rate appearing in the closed form.
double example1_sqrt_delta(const Example1Params& p);

struct Example2ClosedForm {
    double K;
    double R;
    double phi;  // -K(t)
    double phi3; // -H
};

struct Example2Params {
    double P;
    double H;
    double gamma;
    double lambda;
    double T;
};

/// Trading closed form: K = P/(1+P(T-t)),
/// R = gamma^2 log(1+P(T-t)) - (H^2 + (lam/2) log(pi lam)) (T-t).
Example2ClosedForm closed_form_example2(double t, const Example2Params& p);

} // namespace mfc

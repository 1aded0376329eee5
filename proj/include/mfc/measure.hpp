#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace mfc {

using Vector = Eigen::VectorXd;

/// Weighted-atom estimate of the population law, updated across episodes via
/// mu <- (1-rho) mu + rho delta_x. The mean and the (scalar) second moment are
/// maintained by the exact mixing recurrences, independently of atom storage,
/// so compaction never perturbs them.
///
/// Atom storage uses a lazily applied global decay factor: an update scales
/// every existing weight by (1-rho) by bumping one scalar. Atoms whose
/// effective weight drops below 1e-9 are merged into a single residual atom
/// placed at their weighted mean, which bounds memory for geometric decay
/// schedules.
class EmpiricalMeasure {
public:
    struct Atom {
        Vector point;
        double weight; // effective weight after normalisation
    };

    explicit EmpiricalMeasure(std::size_t dim);

    /// Point mass at x.
    static EmpiricalMeasure dirac(const Vector& x);

    std::size_t dim() const { return dim_; }

    /// mu <- (1-rho) mu + rho delta_x, rho in (0,1].
    void update(const Vector& x, double rho);

    /// Batch form: mu <- (1-rho) mu + rho (1/B) sum_j delta_{x_j}. Reduces to
    /// update() for a single point.
    void update_batch(const std::vector<Vector>& points, double rho);

    const Vector& mean() const { return mean_; }

    /// Cached integral of |x|^2.
    double second_moment() const { return second_moment_; }

    /// Materialised atom list (effective weights, residual atom last when
    /// present). Weights sum to 1 up to accumulated rounding.
    std::vector<Atom> atoms() const;

    std::size_t atom_count() const;
    double weight_sum() const;

private:
    struct RawAtom {
        Vector point;
        double raw; // effective weight = raw * scale_
    };

    void compact_front();

    std::size_t dim_;
    std::vector<RawAtom> live_;
    std::size_t begin_ = 0; // live_[begin_..) are active
    double scale_ = 1.0;

    bool has_residual_ = false;
    double residual_weight_ = 0.0; // effective (scale-free) weight
    Vector residual_point_;

    Vector mean_;
    double second_moment_ = 0.0;

    static constexpr double kMergeThreshold = 1e-9;
};

/// Functional form of the update: returns the mixed measure.
EmpiricalMeasure update_measure(const EmpiricalMeasure& mu, const Vector& x, double rho);

/// Mean of the measure (cached).
Vector measure_mean(const EmpiricalMeasure& mu);

} // namespace mfc

#include "mfc/measure.hpp"

#include <cmath>
#include <stdexcept>

namespace mfc {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim)
    : dim_(dim), residual_point_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      mean_(Vector::Zero(static_cast<Eigen::Index>(dim))) {
    if (dim == 0)
        throw std::invalid_argument("EmpiricalMeasure: dim must be positive");
    live_.push_back(RawAtom{mean_, 1.0});
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Vector& x) {
    EmpiricalMeasure mu(static_cast<std::size_t>(x.size()));
    mu.live_.clear();
    mu.begin_ = 0;
    mu.live_.push_back(RawAtom{x, 1.0});
    mu.mean_ = x;
    mu.second_moment_ = x.squaredNorm();
    return mu;
}

void EmpiricalMeasure::update(const Vector& x, double rho) {
    if (static_cast<std::size_t>(x.size()) != dim_)
        throw std::invalid_argument("EmpiricalMeasure::update: dimension mismatch");
    if (!(rho > 0.0) || rho > 1.0)
        throw std::invalid_argument("EmpiricalMeasure::update: rho must lie in (0,1]");

    if (rho == 1.0) {
        live_.clear();
        begin_ = 0;
        scale_ = 1.0;
        has_residual_ = false;
        residual_weight_ = 0.0;
        live_.push_back(RawAtom{x, 1.0});
        mean_ = x;
        second_moment_ = x.squaredNorm();
        return;
    }

    scale_ *= (1.0 - rho);
    residual_weight_ *= (1.0 - rho);
    if (scale_ < 1e-280) {
        // re-absorb the decay factor into the raw weights
        for (std::size_t i = begin_; i < live_.size(); ++i)
            live_[i].raw *= scale_;
        scale_ = 1.0;
    }
    live_.push_back(RawAtom{x, rho / scale_});

    mean_ = (1.0 - rho) * mean_ + rho * x;
    second_moment_ = (1.0 - rho) * second_moment_ + rho * x.squaredNorm();

    compact_front();
}

void EmpiricalMeasure::update_batch(const std::vector<Vector>& points, double rho) {
    if (points.empty())
        throw std::invalid_argument("EmpiricalMeasure::update_batch: no points");
    if (points.size() == 1) {
        update(points[0], rho);
        return;
    }
    if (!(rho > 0.0) || rho > 1.0)
        throw std::invalid_argument("EmpiricalMeasure::update_batch: rho must lie in (0,1]");
    Vector batch_mean = Vector::Zero(static_cast<Eigen::Index>(dim_));
    double batch_second = 0.0;
    for (const Vector& x : points) {
        if (static_cast<std::size_t>(x.size()) != dim_)
            throw std::invalid_argument("EmpiricalMeasure::update_batch: dimension mismatch");
        batch_mean += x;
        batch_second += x.squaredNorm();
    }
    const double inv_b = 1.0 / static_cast<double>(points.size());
    batch_mean *= inv_b;
    batch_second *= inv_b;

    if (rho == 1.0) {
        live_.clear();
        begin_ = 0;
        scale_ = 1.0;
        has_residual_ = false;
        residual_weight_ = 0.0;
    } else {
        scale_ *= (1.0 - rho);
        residual_weight_ *= (1.0 - rho);
        if (scale_ < 1e-280) {
            for (std::size_t i = begin_; i < live_.size(); ++i)
                live_[i].raw *= scale_;
            scale_ = 1.0;
        }
    }
    const double raw = rho * inv_b / scale_;
    for (const Vector& x : points)
        live_.push_back(RawAtom{x, raw});

    if (rho == 1.0) {
        mean_ = batch_mean;
        second_moment_ = batch_second;
    } else {
        mean_ = (1.0 - rho) * mean_ + rho * batch_mean;
        second_moment_ = (1.0 - rho) * second_moment_ + rho * batch_second;
    }
    compact_front();
}

void EmpiricalMeasure::compact_front() {
    while (begin_ < live_.size() - 1 &&
           live_[begin_].raw * scale_ < kMergeThreshold) {
        const double w = live_[begin_].raw * scale_;
        const double total = residual_weight_ + w;
        if (total > 0.0)
            residual_point_ = (residual_weight_ * residual_point_ + w * live_[begin_].point) / total;
        residual_weight_ = total;
        has_residual_ = true;
        ++begin_;
    }
    if (begin_ > 64 && begin_ * 2 > live_.size()) {
        live_.erase(live_.begin(), live_.begin() + static_cast<std::ptrdiff_t>(begin_));
        begin_ = 0;
    }
}

std::vector<EmpiricalMeasure::Atom> EmpiricalMeasure::atoms() const {
    std::vector<Atom> out;
    out.reserve(live_.size() - begin_ + (has_residual_ ? 1 : 0));
    for (std::size_t i = begin_; i < live_.size(); ++i)
        out.push_back(Atom{live_[i].point, live_[i].raw * scale_});
    if (has_residual_ && residual_weight_ > 0.0)
        out.push_back(Atom{residual_point_, residual_weight_});
    return out;
}

std::size_t EmpiricalMeasure::atom_count() const {
    return live_.size() - begin_ + ((has_residual_ && residual_weight_ > 0.0) ? 1 : 0);
}

double EmpiricalMeasure::weight_sum() const {
    double s = has_residual_ ? residual_weight_ : 0.0;
    for (std::size_t i = begin_; i < live_.size(); ++i)
        s += live_[i].raw * scale_;
    return s;
}

EmpiricalMeasure update_measure(const EmpiricalMeasure& mu, const Vector& x, double rho) {
    EmpiricalMeasure out = mu;
    out.update(x, rho);
    return out;
}

Vector measure_mean(const EmpiricalMeasure& mu) { return mu.mean(); }

} // namespace mfc

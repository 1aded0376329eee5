#pragma once

#include <cstddef>
#include <stdexcept>

namespace mfc {

/// Uniform grid t_k = k*dt on [0,T] with t_n == T exactly.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps)
        : horizon_(horizon), n_steps_(n_steps) {
        if (!(horizon > 0.0))
            throw std::invalid_argument("TimeGrid: horizon must be > 0");
        if (n_steps < 1)
            throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
        dt_ = horizon_ / static_cast<double>(n_steps_);
    }

    double horizon() const { return horizon_; }
    std::size_t n_steps() const { return n_steps_; }
    double dt() const { return dt_; }

    double node(std::size_t k) const {
        return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt_;
    }

private:
    double horizon_;
    std::size_t n_steps_;
    double dt_;
};

} // namespace mfc

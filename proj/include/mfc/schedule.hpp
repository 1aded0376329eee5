#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mfc {

/// Piecewise-constant map from a 1-indexed episode counter to a value vector.
/// Scalar schedules are vectors of size one and broadcast when applied to a
/// parameter vector.
class Schedule {
public:
    struct Breakpoint {
        std::size_t from_episode;
        std::vector<double> value;
    };

    Schedule() = default;

    explicit Schedule(std::vector<Breakpoint> breakpoints)
        : breakpoints_(std::move(breakpoints)) {
        if (breakpoints_.empty())
            throw std::invalid_argument("Schedule: needs at least one breakpoint");
        for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
            if (breakpoints_[i].from_episode >= breakpoints_[i + 1].from_episode)
                throw std::invalid_argument(
                    "Schedule: breakpoints must be strictly increasing in from_episode");
        }
        for (const auto& b : breakpoints_) {
            if (b.value.empty())
                throw std::invalid_argument("Schedule: breakpoint value is empty");
        }
    }

    static Schedule constant(double v) {
        return Schedule({Breakpoint{1, {v}}});
    }

    const std::vector<double>& at(std::size_t episode) const {
        if (breakpoints_.empty() || episode < breakpoints_.front().from_episode)
            throw std::invalid_argument("Schedule: episode precedes first breakpoint");
        std::size_t idx = 0;
        while (idx + 1 < breakpoints_.size() &&
               breakpoints_[idx + 1].from_episode <= episode)
            ++idx;
        return breakpoints_[idx].value;
    }

    /// Scalar view; throws when the active value is not scalar.
    double scalar_at(std::size_t episode) const {
        const auto& v = at(episode);
        if (v.size() != 1)
            throw std::invalid_argument("Schedule: expected a scalar value");
        return v[0];
    }

    const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }
    bool empty() const { return breakpoints_.empty(); }

private:
    std::vector<Breakpoint> breakpoints_;
};

} // namespace mfc

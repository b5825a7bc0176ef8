#pragma once

#include <span>
#include <vector>

namespace tilediff {

/// EDM time discretization t_0 > t_1 > ... > t_{N-1} = sigma_min > t_N = 0.
/// With sigma(t) = t, `sigma(i)` and `time(i)` coincide. Immutable once built.
class NoiseSchedule {
public:
    int num_steps() const noexcept { return num_steps_; }
    double sigma_min() const noexcept { return sigma_min_; }
    double sigma_max() const noexcept { return sigma_max_; }
    double rho() const noexcept { return rho_; }

    /// N+1 values, strictly decreasing, last one exactly zero.
    std::span<const double> times() const noexcept { return times_; }
    double time(int i) const { return times_.at(static_cast<std::size_t>(i)); }
    double sigma(int i) const { return time(i); }

    friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

private:
    friend NoiseSchedule build_schedule(int, double, double, double);

    int num_steps_ = 0;
    double sigma_min_ = 0.0;
    double sigma_max_ = 0.0;
    double rho_ = 0.0;
    std::vector<double> times_;
};

/// t_i = (sigma_max^(1/rho) + i/(N-1) (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho for
/// i < N, then t_N = 0. The endpoints are pinned to sigma_max and sigma_min exactly.
/// Throws InvalidParameter unless N >= 2, 0 < sigma_min < sigma_max, rho > 0.
NoiseSchedule build_schedule(int num_steps, double sigma_min, double sigma_max, double rho);

}  // namespace tilediff

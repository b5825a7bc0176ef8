#include "tilediff/schedule.hpp"

#include "tilediff/error.hpp"

#include <cmath>
#include <string>

namespace tilediff {

NoiseSchedule build_schedule(int num_steps, double sigma_min, double sigma_max, double rho) {
    if (num_steps < 2) throw InvalidParameter("schedule needs at least 2 steps, got " + std::to_string(num_steps));
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max) || !std::isfinite(sigma_max)) {
        throw InvalidParameter("schedule requires 0 < sigma_min < sigma_max");
    }
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidParameter("schedule requires rho > 0");

    NoiseSchedule s;
    s.num_steps_ = num_steps;
    s.sigma_min_ = sigma_min;
    s.sigma_max_ = sigma_max;
    s.rho_ = rho;
    s.times_.resize(static_cast<std::size_t>(num_steps) + 1);

    const double inv_rho = 1.0 / rho;
    const double hi = std::pow(sigma_max, inv_rho);
    const double lo = std::pow(sigma_min, inv_rho);
    const double last = static_cast<double>(num_steps - 1);
    for (int i = 0; i < num_steps; ++i) {
        const double frac = static_cast<double>(i) / last;
        s.times_[static_cast<std::size_t>(i)] = std::pow(hi + frac * (lo - hi), rho);
    }
    // pow(pow(a, 1/rho), rho) is off by a few ulps; the endpoints are exact by definition.
    s.times_.front() = sigma_max;
    s.times_[static_cast<std::size_t>(num_steps - 1)] = sigma_min;
    s.times_.back() = 0.0;

    for (int i = 0; i < num_steps; ++i) {
        if (!(s.times_[static_cast<std::size_t>(i)] > s.times_[static_cast<std::size_t>(i) + 1])) {
            throw InvalidParameter("schedule is not strictly decreasing at step " + std::to_string(i) +
                                   " (parameters too close for double precision)");
        }
    }
    return s;
}

}  // namespace tilediff

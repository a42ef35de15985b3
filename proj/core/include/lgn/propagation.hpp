#pragma once

#include <functional>
#include <vector>

#include "lgn/generators.hpp"
#include "lgn/linalg.hpp"

namespace lgn {

/// Strictly increasing, finite sample times.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> times);

    /// t_start, t_start + dt, ..., t_end (inclusive, count rounded to nearest).
    [[nodiscard]] static TimeGrid uniform(double t_start, double t_end, double dt);

    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] bool empty() const noexcept { return times_.empty(); }
    [[nodiscard]] double operator[](std::size_t i) const { return times_[i]; }
    [[nodiscard]] double step(std::size_t i) const { return times_[i + 1] - times_[i]; }
    [[nodiscard]] double midpoint(std::size_t i) const { return 0.5 * (times_[i] + times_[i + 1]); }

    /// True when every step equals the first to within 1e-9 relative.
    [[nodiscard]] bool is_uniform() const;

    /// Sub-grid of samples [first, last].
    [[nodiscard]] TimeGrid slice(std::size_t first, std::size_t last) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> times_;
};

/// States x_0 ... x_T sampled on a grid.
struct Trajectory {
    TimeGrid grid;
    std::vector<Vec> states;

    [[nodiscard]] int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
    [[nodiscard]] std::size_t size() const noexcept { return states.size(); }
    /// Throws if lengths disagree, dimensions vary, or any entry is non-finite.
    void validate() const;
};

/// Exact LTI rollout: one exponential per distinct step length, x_{k+1} = Phi x_k.
[[nodiscard]] Trajectory propagate_lti(const Mat& a, const TimeGrid& grid, const Vec& x0);
[[nodiscard]] Trajectory propagate_lti(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0);

/// Magnus exponent for one interval [t_n, t_next].
///
///   order 1: A(t_mid) h
///   order 2: h/6 (A(t_n) + 4 A(t_mid) + A(t_next)) + h^2/12 [A(t_next), A(t_n)]
///
/// The order-2 form has local error O(h^5) for smooth A(t).
[[nodiscard]] Mat magnus_step(const GeneratorParams& p, double t_n, double t_next, int order);

/// Generators evaluated at the three nodes of an interval.
struct MagnusNodes {
    Mat start;
    Mat mid;
    Mat end;
};
[[nodiscard]] Mat magnus_exponent(const MagnusNodes& nodes, double h, int order);

/// Cotangents with respect to the three node generators given dL/dOmega.
[[nodiscard]] MagnusNodes magnus_exponent_vjp(const MagnusNodes& nodes, double h, int order,
                                              const Mat& g_omega);

/// x_{n+1} = exp(Omega_n) x_n over the grid.
[[nodiscard]] Trajectory rollout_ltv(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0,
                                     int order);

/// propagate_lti for time-invariant variants, rollout_ltv otherwise.
[[nodiscard]] Trajectory rollout(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0,
                                 int order);

void require_magnus_order(int order);

/// Mean over grid steps of |[A(t_k), A(t_{k+1})]|_F.
[[nodiscard]] double mean_commutator_norm(const std::function<Mat(double)>& a, const TimeGrid& grid);

}  // namespace lgn

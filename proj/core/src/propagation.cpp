#include "lgn/propagation.hpp"

#include <cmath>
#include <map>

#include "lgn/error.hpp"

namespace lgn {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (!std::isfinite(times_[i])) throw ConfigError("time grid: non-finite time");
        if (i > 0 && !(times_[i] > times_[i - 1])) {
            throw ConfigError("time grid: times must be strictly increasing");
        }
    }
}

TimeGrid TimeGrid::uniform(double t_start, double t_end, double dt) {
    if (!(dt > 0.0) || !(t_end >= t_start) || !std::isfinite(t_end) || !std::isfinite(t_start)) {
        throw ConfigError("time grid: need dt > 0 and t_end >= t_start");
    }
    const auto steps = static_cast<std::size_t>(std::llround((t_end - t_start) / dt));
    std::vector<double> t(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) t[i] = t_start + static_cast<double>(i) * dt;
    return TimeGrid(std::move(t));
}

bool TimeGrid::is_uniform() const {
    if (times_.size() < 3) return true;
    const double h = step(0);
    for (std::size_t i = 1; i + 1 < times_.size(); ++i) {
        if (std::abs(step(i) - h) > 1e-9 * std::abs(h)) return false;
    }
    return true;
}

TimeGrid TimeGrid::slice(std::size_t first, std::size_t last) const {
    if (first > last || last >= times_.size()) throw ConfigError("time grid: slice out of range");
    return TimeGrid(std::vector<double>(times_.begin() + static_cast<std::ptrdiff_t>(first),
                                        times_.begin() + static_cast<std::ptrdiff_t>(last) + 1));
}

void Trajectory::validate() const {
    if (states.size() != grid.size()) {
        throw DimensionError("trajectory: " + std::to_string(states.size()) + " states for " +
                             std::to_string(grid.size()) + " grid points");
    }
    const int n = dim();
    for (const auto& x : states) {
        if (x.size() != n) throw DimensionError("trajectory: inconsistent state dimension");
        if (!x.allFinite()) throw NumericError("trajectory: non-finite state entry");
    }
}

void require_magnus_order(int order) {
    if (order != 1 && order != 2) {
        throw ConfigError("Magnus order must be 1 or 2, got " + std::to_string(order));
    }
}

Trajectory propagate_lti(const Mat& a, const TimeGrid& grid, const Vec& x0) {
    require_square_finite(a, "propagate_lti");
    if (grid.empty()) throw ConfigError("propagate_lti: empty time grid");
    if (x0.size() != a.rows()) {
        throw DimensionError("propagate_lti: state has dimension " + std::to_string(x0.size()) +
                             ", generator has " + std::to_string(a.rows()));
    }
    Trajectory out{grid, {}};
    out.states.reserve(grid.size());
    out.states.push_back(x0);
    if (grid.size() == 1) return out;

    if (grid.is_uniform()) {
        const double h = (grid[grid.size() - 1] - grid[0]) / static_cast<double>(grid.size() - 1);
        const Mat phi = expm(a * h);
        for (std::size_t k = 1; k < grid.size(); ++k) out.states.push_back(phi * out.states.back());
        return out;
    }
    std::map<double, Mat> cache;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = grid.step(k);
        auto it = cache.find(h);
        if (it == cache.end()) it = cache.emplace(h, expm(a * h)).first;
        out.states.push_back(it->second * out.states.back());
    }
    return out;
}

Trajectory propagate_lti(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0) {
    if (!is_time_invariant(p.variant)) {
        throw ConfigError("propagate_lti: variant " + std::string(to_string(p.variant)) +
                          " is time-varying");
    }
    return propagate_lti(assemble(p, 0.0), grid, x0);
}

Mat magnus_exponent(const MagnusNodes& nodes, double h, int order) {
    require_magnus_order(order);
    if (order == 1) return h * nodes.mid;
    return (h / 6.0) * (nodes.start + 4.0 * nodes.mid + nodes.end) +
           (h * h / 12.0) * commutator(nodes.end, nodes.start);
}

MagnusNodes magnus_exponent_vjp(const MagnusNodes& nodes, double h, int order, const Mat& g) {
    require_magnus_order(order);
    const auto n = g.rows();
    if (order == 1) return {Mat::Zero(n, n), h * g, Mat::Zero(n, n)};
    // [E, S] = E S - S E; d<G, ES - SE>/dS = E^T G - G E^T, /dE = G S^T - S^T G.
    const double c = h * h / 12.0;
    const Mat et = nodes.end.transpose();
    const Mat st = nodes.start.transpose();
    return {(h / 6.0) * g + c * (et * g - g * et), (4.0 * h / 6.0) * g,
            (h / 6.0) * g + c * (g * st - st * g)};
}

Mat magnus_step(const GeneratorParams& p, double t_n, double t_next, int order) {
    require_magnus_order(order);
    if (!(t_next > t_n)) throw ConfigError("magnus_step: need t_next > t_n");
    const double h = t_next - t_n;
    const double mid = 0.5 * (t_n + t_next);
    if (order == 1) return h * assemble(p, mid);
    return magnus_exponent({assemble(p, t_n), assemble(p, mid), assemble(p, t_next)}, h, order);
}

Trajectory rollout_ltv(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0, int order) {
    require_magnus_order(order);
    if (grid.empty()) throw ConfigError("rollout_ltv: empty time grid");
    if (x0.size() != p.n) {
        throw DimensionError("rollout_ltv: state has dimension " + std::to_string(x0.size()) +
                             ", generator has " + std::to_string(p.n));
    }
    Trajectory out{grid, {}};
    out.states.reserve(grid.size());
    out.states.push_back(x0);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const Mat omega = magnus_step(p, grid[k], grid[k + 1], order);
        out.states.push_back(expm(omega) * out.states.back());
    }
    return out;
}

Trajectory rollout(const GeneratorParams& p, const TimeGrid& grid, const Vec& x0, int order) {
    if (is_time_invariant(p.variant)) return propagate_lti(p, grid, x0);
    return rollout_ltv(p, grid, x0, order);
}

double mean_commutator_norm(const std::function<Mat(double)>& a, const TimeGrid& grid) {
    if (grid.size() < 2) throw ConfigError("mean_commutator_norm: need at least 2 grid points");
    double sum = 0.0;
    Mat prev = a(grid[0]);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        Mat next = a(grid[k]);
        sum += commutator(prev, next).norm();
        prev = std::move(next);
    }
    return sum / static_cast<double>(grid.size() - 1);
}

}  // namespace lgn

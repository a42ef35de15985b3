#include "lgn/systems.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lgn/error.hpp"

namespace lgn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

double ltv_gamma(const LTVOscillator& s, double t) {
    return s.gamma0 * (1.0 + s.gamma_amp * std::sin(s.omega_d * t));
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

double parse_double(std::string_view field, const std::string& path) {
    double out = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    while (first < last && *first == ' ') ++first;
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{}) throw IoError("malformed number '" + std::string(field) + "' in " + path);
    return out;
}

}  // namespace

int state_dim(const SystemSpec& spec) {
    return std::visit(overloaded{[](const RLCLadder& l) { return 2 * l.sections; },
                                 [](const auto&) { return 2; }},
                      spec);
}

bool is_time_invariant(const SystemSpec& spec) { return !std::holds_alternative<LTVOscillator>(spec); }

std::string system_name(const SystemSpec& spec) {
    return std::visit(overloaded{[](const LCSystem&) { return std::string("LC"); },
                                 [](const RLCSystem&) { return std::string("RLC"); },
                                 [](const LTVOscillator&) { return std::string("LTVOscillator"); },
                                 [](const RLCLadder&) { return std::string("RLCLadder"); }},
                      spec);
}

void validate(const SystemSpec& spec) {
    std::visit(overloaded{
                   [](const LCSystem& s) {
                       if (!(s.omega > 0.0)) throw ConfigError("LC: omega must be > 0");
                   },
                   [](const RLCSystem& s) {
                       if (!(s.omega > 0.0) || !(s.gamma >= 0.0))
                           throw ConfigError("RLC: need omega > 0 and gamma >= 0");
                   },
                   [](const LTVOscillator& s) {
                       if (!(s.omega0 > 0.0) || !(s.gamma0 >= 0.0) || !(s.gamma_amp >= 0.0) ||
                           !(s.omega_d >= 0.0))
                           throw ConfigError("LTVOscillator: parameters must be non-negative, omega0 > 0");
                   },
                   [](const RLCLadder& l) {
                       if (l.sections < 1) throw ConfigError("RLCLadder: need at least one section");
                       if (!(l.inductance > 0.0) || !(l.capacitance > 0.0))
                           throw ConfigError("RLCLadder: L and C must be > 0");
                       if (static_cast<int>(l.resistance.size()) != l.sections)
                           throw ConfigError("RLCLadder: need one resistance per section");
                       for (double r : l.resistance)
                           if (!(r >= 0.0)) throw ConfigError("RLCLadder: resistances must be >= 0");
                   }},
               spec);
}

Mat build_ladder(const RLCLadder& ladder) {
    validate(SystemSpec{ladder});
    const int m = ladder.sections;
    const double k = 1.0 / std::sqrt(ladder.inductance * ladder.capacitance);
    Mat a = Mat::Zero(2 * m, 2 * m);
    for (int i = 0; i < m; ++i) {
        // Capacitor i sits between inductor i-1 (current in) and inductor i (current out).
        a(i, m + i) = k;
        a(m + i, i) = -k;
        if (i > 0) {
            a(i, m + i - 1) = -k;
            a(m + i - 1, i) = k;
        }
        a(m + i, m + i) = -ladder.resistance[static_cast<std::size_t>(i)] / ladder.inductance;
    }
    return a;
}

RLCLadder uniform_ladder(int sections, double r, double l, double c) {
    return RLCLadder{sections, l, c, std::vector<double>(static_cast<std::size_t>(std::max(sections, 0)), r)};
}

Mat generator_of(const SystemSpec& spec, double t) {
    return std::visit(overloaded{[](const LCSystem& s) {
                                     Mat a(2, 2);
                                     a << 0.0, s.omega, -s.omega, 0.0;
                                     return a;
                                 },
                                 [](const RLCSystem& s) {
                                     Mat a(2, 2);
                                     a << 0.0, 1.0, -s.omega * s.omega, -s.gamma;
                                     return a;
                                 },
                                 [t](const LTVOscillator& s) {
                                     Mat a(2, 2);
                                     a << 0.0, 1.0, -s.omega0 * s.omega0, -ltv_gamma(s, t);
                                     return a;
                                 },
                                 [](const RLCLadder& l) { return build_ladder(l); }},
                      spec);
}

Trajectory reference_integrate(const SystemSpec& spec, const TimeGrid& grid, const Vec& x0,
                               double rel_tol, int max_halvings) {
    if (grid.empty()) throw ConfigError("reference_integrate: empty grid");
    auto run = [&](int substeps) {
        Trajectory out{grid, {x0}};
        Vec x = x0;
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            const double h = grid.step(k) / substeps;
            for (int s = 0; s < substeps; ++s) {
                const double t = grid[k] + s * h;
                const Mat a0 = generator_of(spec, t);
                const Mat ah = generator_of(spec, t + 0.5 * h);
                const Mat a1 = generator_of(spec, t + h);
                const Vec k1 = a0 * x;
                const Vec k2 = ah * (x + 0.5 * h * k1);
                const Vec k3 = ah * (x + 0.5 * h * k2);
                const Vec k4 = a1 * (x + h * k3);
                x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            out.states.push_back(x);
        }
        return out;
    };

    double max_step = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) max_step = std::max(max_step, grid.step(k));
    int substeps = std::max(1, static_cast<int>(std::ceil(max_step / 0.01)));
    Trajectory coarse = run(substeps);
    for (int halving = 0; halving < max_halvings; ++halving) {
        substeps *= 2;
        Trajectory fine = run(substeps);
        double diff = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < fine.size(); ++i) {
            diff = std::max(diff, (fine.states[i] - coarse.states[i]).norm());
            scale = std::max(scale, fine.states[i].norm());
        }
        if (diff <= rel_tol * scale) return fine;
        coarse = std::move(fine);
    }
    throw NumericError("reference_integrate: no agreement to " + format_double(rel_tol) + " after " +
                       std::to_string(max_halvings) + " step halvings");
}

Trajectory simulate_truth(const SystemSpec& spec, const TimeGrid& grid, const Vec& x0) {
    validate(spec);
    if (x0.size() != state_dim(spec)) {
        throw DimensionError("simulate_truth: initial state has dimension " + std::to_string(x0.size()) +
                             ", system " + system_name(spec) + " has " + std::to_string(state_dim(spec)));
    }
    if (is_time_invariant(spec)) return propagate_lti(generator_of(spec, 0.0), grid, x0);
    return reference_integrate(spec, grid, x0);
}

double rms_amplitude(const Trajectory& traj) {
    if (traj.states.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& x : traj.states) sum += x.squaredNorm();
    return std::sqrt(sum / static_cast<double>(traj.states.size()));
}

std::vector<Vec> noise_realization(const Trajectory& traj, double level, std::uint64_t seed) {
    if (!(level >= 0.0)) throw ConfigError("add_noise: level must be >= 0");
    const double sigma = level * rms_amplitude(traj);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> out;
    out.reserve(traj.size());
    for (const auto& x : traj.states) {
        Vec e(x.size());
        for (auto& v : e) v = sigma * normal(rng);
        out.push_back(std::move(e));
    }
    return out;
}

Trajectory add_noise(const Trajectory& traj, double level, std::uint64_t seed) {
    if (level == 0.0) return traj;
    const auto noise = noise_realization(traj, level, seed);
    Trajectory out = traj;
    for (std::size_t i = 0; i < out.size(); ++i) out.states[i] += noise[i];
    return out;
}

std::vector<Vec> random_initial_states(int n, int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("random_initial_states: count must be >= 1");
    if (n < 1) throw ConfigError("random_initial_states: dimension must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> out;
    for (int c = 0; c < count; ++c) {
        Vec v(n);
        do {
            for (auto& x : v) x = normal(rng);
        } while (v.norm() == 0.0);
        out.push_back(v / v.norm());
    }
    return out;
}

int Dataset::dim() const { return trajectories.empty() ? 0 : trajectories.front().dim(); }

void Dataset::validate() const {
    if (!(noise_level >= 0.0)) throw ConfigError("dataset: noise level must be >= 0");
    for (const auto& tr : trajectories) {
        tr.validate();
        if (tr.dim() != dim()) throw DimensionError("dataset: trajectories have different dimensions");
    }
}

Dataset make_dataset(const SystemSpec& spec, const TimeGrid& grid, const std::vector<Vec>& initial_states,
                     double noise_level, std::uint64_t seed) {
    Dataset data;
    data.noise_level = noise_level;
    data.seed = seed;
    data.provenance = spec;
    for (std::size_t k = 0; k < initial_states.size(); ++k) {
        data.trajectories.push_back(
            add_noise(simulate_truth(spec, grid, initial_states[k]), noise_level, seed + k));
    }
    return data;
}

void to_json(nlohmann::json& j, const SystemSpec& spec) {
    j = std::visit(
        overloaded{[](const LCSystem& s) { return nlohmann::json{{"type", "LC"}, {"omega", s.omega}}; },
                   [](const RLCSystem& s) {
                       return nlohmann::json{{"type", "RLC"}, {"omega", s.omega}, {"gamma", s.gamma}};
                   },
                   [](const LTVOscillator& s) {
                       return nlohmann::json{{"type", "LTVOscillator"},
                                             {"omega0", s.omega0},
                                             {"gamma0", s.gamma0},
                                             {"gamma_amp", s.gamma_amp},
                                             {"omega_d", s.omega_d}};
                   },
                   [](const RLCLadder& l) {
                       return nlohmann::json{{"type", "RLCLadder"},
                                             {"sections", l.sections},
                                             {"L", l.inductance},
                                             {"C", l.capacitance},
                                             {"R", l.resistance}};
                   }},
        spec);
}

void from_json(const nlohmann::json& j, SystemSpec& spec) {
    try {
        const auto type = j.at("type").get<std::string>();
        if (type == "LC") {
            spec = LCSystem{j.value("omega", 1.0)};
        } else if (type == "RLC") {
            spec = RLCSystem{j.value("omega", 1.0), j.value("gamma", 0.1)};
        } else if (type == "LTVOscillator") {
            spec = LTVOscillator{j.value("omega0", 1.0), j.value("gamma0", 0.3), j.value("gamma_amp", 0.15),
                                 j.value("omega_d", 1.0)};
        } else if (type == "RLCLadder") {
            RLCLadder l;
            l.sections = j.at("sections").get<int>();
            l.inductance = j.value("L", 1.0);
            l.capacitance = j.value("C", 1.0);
            const auto& r = j.at("R");
            if (r.is_number()) {
                l.resistance.assign(static_cast<std::size_t>(std::max(l.sections, 0)), r.get<double>());
            } else {
                l.resistance = r.get<std::vector<double>>();
            }
            spec = l;
        } else {
            throw ConfigError("unknown system type '" + type + "' (expected LC, RLC, LTVOscillator, RLCLadder)");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("system spec: ") + e.what());
    }
    validate(spec);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    traj.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "t";
    for (int i = 0; i < traj.dim(); ++i) out << ",x" << i;
    out << '\n';
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << format_double(traj.grid[k]);
        for (const double v : traj.states[k]) out << ',' << format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty trajectory file '" + path + "'");
    const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2 || line.rfind("t", 0) != 0) throw IoError("bad trajectory header in '" + path + "'");
    std::vector<double> times;
    std::vector<Vec> states;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(parse_double(std::string_view(line).substr(start, comma - start), path));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (static_cast<int>(fields.size()) != columns) {
            throw IoError("row with " + std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(columns) + " in '" + path + "'");
        }
        times.push_back(fields[0]);
        states.emplace_back(Eigen::Map<const Vec>(fields.data() + 1, columns - 1));
    }
    Trajectory traj{TimeGrid(std::move(times)), std::move(states)};
    traj.validate();
    return traj;
}

void write_dataset(const Dataset& data, const std::string& dir) {
    data.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%03zu.csv", k);
        write_trajectory_csv(data.trajectories[k], (std::filesystem::path(dir) / name).string());
        files.push_back(name);
    }
    nlohmann::json manifest{{"spec", data.provenance},
                            {"seed", data.seed},
                            {"noise_level", data.noise_level},
                            {"dim", data.dim()},
                            {"files", files}};
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + manifest_path + "': " + e.what());
    }
    Dataset data;
    try {
        data.provenance = manifest.at("spec").get<SystemSpec>();
        data.seed = manifest.value("seed", std::uint64_t{0});
        data.noise_level = manifest.value("noise_level", 0.0);
        const auto base = std::filesystem::path(manifest_path).parent_path();
        for (const auto& f : manifest.at("files")) {
            data.trajectories.push_back(read_trajectory_csv((base / f.get<std::string>()).string()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest '" + manifest_path + "': " + e.what());
    }
    data.validate();
    return data;
}

}  // namespace lgn

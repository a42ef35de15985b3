#include "lgn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "lgn/baselines.hpp"
#include "lgn/error.hpp"
#include "lgn/propagation.hpp"

namespace lgn {

namespace fs = std::filesystem;

const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids{"exp1-lc",    "exp1-rlc", "exp2-ltv", "exp3-ladder",
                                              "exp4-noise", "a1-magnus", "a2-stiff", "custom"};
    return ids;
}

namespace {

const std::vector<std::string> kModels{"lgn",       "lgn-sd",    "lgn-fa",    "lgn-tv-sd",
                                       "lgn-tv-fa", "lgn-param", "linear-id", "ph-window"};

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

// Protocol shared by every LGN fit: Adam at lr 1e-2, 3000 epochs, clipping at
// 1, plateau patience 200 / factor 0.5, and the horizon curriculum.
TrainConfig lgn_protocol() {
    TrainConfig t;
    t.lr = 1e-2;
    t.epochs = 3000;
    t.clip_norm = 1.0;
    t.scheduler_patience = 200;
    t.scheduler_factor = 0.5;
    t.curriculum_stages = 6;
    t.curriculum_start = 0.1;
    return t;
}

}  // namespace

ExperimentConfig default_config(const std::string& id) {
    ExperimentConfig c;
    c.id = id;
    c.train = lgn_protocol();
    c.init.scale = 0.1;
    if (id == "exp1-lc" || id == "exp1-rlc") {
        const bool rlc = id == "exp1-rlc";
        c.system = rlc ? SystemSpec{RLCSystem{1.0, 0.1}} : SystemSpec{LCSystem{1.0}};
        c.train_grid = {0.0, rlc ? 20.0 : 10.0, 0.1};
        c.x0 = {1.0, 0.0};
        c.models = {"lgn", "linear-id"};
    } else if (id == "exp2-ltv") {
        c.system = LTVOscillator{};
        c.train_grid = {0.0, 20.0, 0.1};
        c.x0 = {1.0, 0.0};
        c.models = {"lgn-tv-sd", "lgn-tv-fa", "linear-id"};
        c.expected_divergence = {"lgn-tv-fa"};
        c.restarts = 4;
    } else if (id == "exp3-ladder") {
        c.system = uniform_ladder(10, 0.1);
        c.train_grid = {0.0, 30.0, 0.1};
        c.trajectories = 3;
        c.train.epochs = 1000;
        c.init.scale = 0.3;
        c.restarts = 5;
        c.models = {"lgn-sd", "lgn-fa", "linear-id"};
    } else if (id == "exp4-noise") {
        c.system = uniform_ladder(3, 0.1);
        c.train_grid = {0.0, 30.0, 0.1};
        c.trajectories = 3;
        c.init.scale = 0.3;
        c.restarts = 3;
        c.noise_levels = {0.01, 0.05, 0.10};
        c.models = {"lgn-sd", "linear-id"};
    } else if (id == "a1-magnus") {
        c.system = LTVOscillator{};
        c.train_grid = {0.0, 20.0, 0.1};
        c.x0 = {1.0, 0.0};
        c.models = {"lgn-param"};
        c.dt_sweep = {0.4, 0.2, 0.1, 0.05};
    } else if (id == "a2-stiff") {
        c.system = RLCLadder{3, 1.0, 1.0, {0.01, 0.1, 1.0}};
        c.control_system = RLCLadder{3, 1.0, 1.0, {0.5, 0.5, 0.5}};
        c.train_grid = {0.0, 50.0, 0.1};
        c.trajectories = 5;
        c.init.scale = 0.3;
        c.restarts = 3;
        c.models = {"lgn-sd", "ph-window"};
    } else if (id == "custom") {
        c.models = {"lgn-sd", "linear-id"};
    } else {
        throw ConfigError("unknown experiment id '" + id + "'; valid ids: " + join(experiment_ids()));
    }
    return c;
}

void ExperimentConfig::validate() const {
    if (std::find(experiment_ids().begin(), experiment_ids().end(), id) == experiment_ids().end()) {
        throw ConfigError("unknown experiment id '" + id + "'; valid ids: " + join(experiment_ids()));
    }
    lgn::validate(system);
    train.validate();
    (void)train_grid.make();
    (void)test_grid.make();
    if (models.empty()) throw ConfigError("experiment config: no models listed");
    for (const auto& m : models) {
        if (std::find(kModels.begin(), kModels.end(), m) == kModels.end()) {
            throw ConfigError("experiment config: unknown model '" + m + "'; valid models: " + join(kModels));
        }
    }
    if (!x0.empty() && static_cast<int>(x0.size()) != state_dim(system)) {
        throw ConfigError("experiment config: x0 has " + std::to_string(x0.size()) + " entries, system has dimension " +
                          std::to_string(state_dim(system)));
    }
    if (trajectories < 1) throw ConfigError("experiment config: trajectories must be >= 1");
    if (!(noise >= 0.0)) throw ConfigError("experiment config: noise must be >= 0");
    for (double lvl : noise_levels) {
        if (!(lvl >= 0.0)) throw ConfigError("experiment config: noise levels must be >= 0");
    }
    if (restarts < 1 || ph_restarts < 1) throw ConfigError("experiment config: restarts must be >= 1");
    for (double dt : dt_sweep) {
        if (!(dt > 0.0)) throw ConfigError("experiment config: dt_sweep entries must be > 0");
    }
    if (tau < 1) throw ConfigError("experiment config: tau must be >= 1");
    if (ph_optimizer != "lbfgs" && ph_optimizer != "adam") {
        throw ConfigError("experiment config: ph_optimizer must be 'lbfgs' or 'adam'");
    }
    if (control_system) lgn::validate(*control_system);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json::object();
    j["id"] = c.id;
    j["system"] = c.system;
    j["train"] = c.train;
    j["init"] = {{"scale", c.init.scale},           {"skew_offset", c.init.skew_offset},
                 {"dissipation", c.init.dissipation}, {"fourier_k", c.init.fourier_k},
                 {"freq_lo", c.init.freq_lo},       {"freq_hi", c.init.freq_hi}};
    j["train_grid"] = {{"t_start", c.train_grid.t_start}, {"t_end", c.train_grid.t_end}, {"dt", c.train_grid.dt}};
    j["test_grid"] = {{"t_start", c.test_grid.t_start}, {"t_end", c.test_grid.t_end}, {"dt", c.test_grid.dt}};
    j["models"] = c.models;
    j["expected_divergence"] = c.expected_divergence;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["x0"] = c.x0;
    j["trajectories"] = c.trajectories;
    j["noise"] = c.noise;
    j["restarts"] = c.restarts;
    j["noise_levels"] = c.noise_levels;
    j["dt_sweep"] = c.dt_sweep;
    j["order_horizon"] = c.order_horizon;
    j["tau"] = c.tau;
    j["ph_restarts"] = c.ph_restarts;
    j["ph_optimizer"] = c.ph_optimizer;
    j["control_system"] = c.control_system ? nlohmann::json(*c.control_system) : nlohmann::json(nullptr);
    j["tau_ablation"] = c.tau_ablation;
}

namespace {

GridSpec grid_from_json(const nlohmann::json& j, GridSpec g) {
    g.t_start = j.value("t_start", g.t_start);
    g.t_end = j.value("t_end", g.t_end);
    g.dt = j.value("dt", g.dt);
    return g;
}

}  // namespace

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    try {
        c.id = j.value("id", c.id);
        if (j.contains("system")) c.system = j.at("system").get<SystemSpec>();
        if (j.contains("train")) from_json(j.at("train"), c.train);
        if (j.contains("init")) {
            const auto& i = j.at("init");
            c.init.scale = i.value("scale", c.init.scale);
            c.init.skew_offset = i.value("skew_offset", c.init.skew_offset);
            c.init.dissipation = i.value("dissipation", c.init.dissipation);
            c.init.fourier_k = i.value("fourier_k", c.init.fourier_k);
            c.init.freq_lo = i.value("freq_lo", c.init.freq_lo);
            c.init.freq_hi = i.value("freq_hi", c.init.freq_hi);
        }
        if (j.contains("train_grid")) c.train_grid = grid_from_json(j.at("train_grid"), c.train_grid);
        if (j.contains("test_grid")) c.test_grid = grid_from_json(j.at("test_grid"), c.test_grid);
        c.models = j.value("models", c.models);
        c.expected_divergence = j.value("expected_divergence", c.expected_divergence);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.seed = j.value("seed", c.seed);
        c.x0 = j.value("x0", c.x0);
        c.trajectories = j.value("trajectories", c.trajectories);
        c.noise = j.value("noise", c.noise);
        c.restarts = j.value("restarts", c.restarts);
        c.noise_levels = j.value("noise_levels", c.noise_levels);
        c.dt_sweep = j.value("dt_sweep", c.dt_sweep);
        c.order_horizon = j.value("order_horizon", c.order_horizon);
        c.tau = j.value("tau", c.tau);
        c.ph_restarts = j.value("ph_restarts", c.ph_restarts);
        c.ph_optimizer = j.value("ph_optimizer", c.ph_optimizer);
        if (j.contains("control_system")) {
            const auto& cs = j.at("control_system");
            if (cs.is_null()) {
                c.control_system.reset();
            } else {
                c.control_system = cs.get<SystemSpec>();
            }
        }
        c.tau_ablation = j.value("tau_ablation", c.tau_ablation);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
}

namespace {

/// Every key of `patch` names an existing field of `target`, recursively.
void require_known_keys(const nlohmann::json& target, const nlohmann::json& patch, const std::string& where) {
    for (const auto& [key, value] : patch.items()) {
        if (!target.contains(key)) throw ConfigError("experiment config: unknown field '" + where + key + "'");
        if (value.is_object() && target[key].is_object()) require_known_keys(target[key], value, where + key + ".");
    }
}

}  // namespace

ExperimentConfig apply_overrides(const ExperimentConfig& base, const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw ConfigError("experiment config: overrides must be a JSON object");
    nlohmann::json j = base;
    for (const auto& [key, value] : overrides.items()) {
        if (key == "system" || key == "control_system") {
            // A system is replaced whole so stale fields of another type cannot leak in.
            j[key] = value;
            continue;
        }
        if (key == "id") {
            j[key] = value;
            continue;
        }
        if (key.find('.') != std::string::npos) {
            std::string pointer = "/" + key;
            std::replace(pointer.begin(), pointer.end(), '.', '/');
            const nlohmann::json::json_pointer ptr(pointer);
            if (!j.contains(ptr)) throw ConfigError("experiment config: unknown field '" + key + "'");
            j[ptr] = value;
        } else if (!j.contains(key)) {
            throw ConfigError("experiment config: unknown field '" + key + "'");
        } else if (value.is_object() && j[key].is_object()) {
            require_known_keys(j[key], value, key + ".");
            j[key].merge_patch(value);
        } else {
            j[key] = value;
        }
    }
    ExperimentConfig out = base;
    from_json(j, out);
    return out;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write to '" + path + "' failed");
}

void set_ladder_sections(ExperimentConfig& cfg, int sections) {
    auto* ladder = std::get_if<RLCLadder>(&cfg.system);
    if (ladder == nullptr) throw ConfigError("--sections applies only to ladder experiments");
    if (sections < 1) throw ConfigError("--sections must be >= 1");
    const double r = ladder->resistance.empty() ? 0.1 : ladder->resistance.front();
    ladder->sections = sections;
    ladder->resistance.assign(static_cast<std::size_t>(sections), r);
}

// ---------------------------------------------------------------------------
// Models

bool FittedModel::time_invariant() const { return matrix.has_value() || is_time_invariant(params->variant); }

Mat FittedModel::generator(double t) const { return matrix ? *matrix : assemble(*params, t); }

Trajectory FittedModel::predict(const TimeGrid& grid, const Vec& x0) const {
    if (matrix) return propagate_lti(*matrix, grid, x0);
    return rollout(*params, grid, x0, magnus_order);
}

namespace {

std::vector<Vec> initial_states(const ExperimentConfig& cfg) {
    const int n = state_dim(cfg.system);
    if (!cfg.x0.empty()) {
        return {Eigen::Map<const Vec>(cfg.x0.data(), static_cast<Eigen::Index>(cfg.x0.size()))};
    }
    return random_initial_states(n, cfg.trajectories, cfg.seed);
}

// Seeds derived from the master seed; each purpose gets its own offset.
std::uint64_t noise_seed(const ExperimentConfig& cfg) { return cfg.seed * 7919 + 1000; }
std::uint64_t init_seed(const ExperimentConfig& cfg, int restart) {
    return cfg.seed * 7919 + 100 + static_cast<std::uint64_t>(restart);
}

GeneratorParams exp1_init(const ExperimentConfig& cfg, std::uint64_t seed) {
    const bool rlc = std::holds_alternative<RLCSystem>(cfg.system);
    if (!rlc && !std::holds_alternative<LCSystem>(cfg.system)) {
        throw ConfigError("model 'lgn' (masked S - D oscillator) needs an LC or RLC system");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(3);
    v(0) = cfg.init.skew_offset + cfg.init.scale * normal(rng);
    v(1) = softplus_inverse(cfg.init.dissipation);
    v(2) = softplus_inverse(cfg.init.dissipation) + cfg.init.scale * normal(rng);
    return masked_skew_diag(2, {0}, rlc ? std::vector<int>{1} : std::vector<int>{}, v);
}

GeneratorParams model_init(const std::string& name, const ExperimentConfig& cfg, std::uint64_t seed) {
    const int n = state_dim(cfg.system);
    if (name == "lgn") return exp1_init(cfg, seed);
    if (name == "lgn-sd") return init_params(Variant::SkewDiag, n, seed, cfg.init);
    if (name == "lgn-fa") return init_params(Variant::FullA, n, seed, cfg.init);
    if (name == "lgn-tv-sd") return init_params(Variant::TimeVaryingSD, n, seed, cfg.init);
    if (name == "lgn-tv-fa") return init_params(Variant::TimeVaryingFull, n, seed, cfg.init);
    if (name == "lgn-param") return init_params(Variant::ParametricLTV, n, seed, cfg.init);
    throw ConfigError("model '" + name + "' is not a gradient-trained generator");
}

}  // namespace

FittedModel fit_model(const std::string& name, const ExperimentConfig& cfg, const Dataset& data) {
    FittedModel m;
    m.name = name;
    m.magnus_order = cfg.train.magnus_order;
    if (name == "linear-id") {
        m.matrix = linear_id(data);
        m.param_count = m.matrix->size();
        m.optimizer = "least-squares";
        return m;
    }
    if (name == "ph-window") {
        PortHamiltonianOptions opt;
        opt.restarts = cfg.ph_restarts;
        opt.optimizer = cfg.ph_optimizer == "adam" ? PhOptimizer::Adam : PhOptimizer::Lbfgs;
        opt.init = cfg.init;
        TrainConfig t = cfg.train;
        t.seed = init_seed(cfg, 0);
        auto fit = fit_port_hamiltonian(data, cfg.tau, t, opt);
        m.param_count = param_count(fit.params);
        m.params = std::move(fit.params);
        m.restart_losses = std::move(fit.restart_losses);
        m.optimizer = fit.optimizer;
        return m;
    }
    auto make = [&](int r) { return model_init(name, cfg, init_seed(cfg, r)); };
    auto res = fit_best_of(make, data, cfg.train, cfg.restarts);
    m.param_count = param_count(res.best.params);
    m.params = std::move(res.best.params);
    m.history = std::move(res.best.history);
    m.restart_losses = std::move(res.losses);
    m.optimizer = "adam";
    return m;
}

double mean_relative_error(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth) {
    if (pred.size() != truth.size() || truth.empty()) throw DimensionError("mean_relative_error: size mismatch");
    double total = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < truth[t].size(); ++i) {
            const double norm = truth[t].states[i].norm();
            if (norm == 0.0) continue;
            sum += (pred[t].states[i] - truth[t].states[i]).norm() / norm;
            ++count;
        }
        if (count == 0) throw NumericError("mean_relative_error: truth is identically zero");
        total += sum / static_cast<double>(count);
    }
    return total / static_cast<double>(truth.size());
}

double loglog_slope(const std::vector<double>& dt, const std::vector<double>& err) {
    if (dt.size() != err.size() || dt.size() < 2) throw DimensionError("loglog_slope: need >= 2 matching points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        mx += std::log(dt[i]);
        my += std::log(err[i]);
    }
    mx /= static_cast<double>(dt.size());
    my /= static_cast<double>(dt.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        const double dx = std::log(dt[i]) - mx;
        sxy += dx * (std::log(err[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace {

struct Evaluation {
    MetricsReport report;
    std::vector<Trajectory> predictions;
};

Evaluation evaluate_full(const FittedModel& model, const SystemSpec& system, const std::vector<Trajectory>& truth,
                         double divergence_threshold) {
    Evaluation ev;
    std::vector<double> nrmses, viols;
    for (const auto& tr : truth) {
        Trajectory pred = model.predict(tr.grid, tr.states[0]);
        double sq = 0.0;
        for (std::size_t i = 0; i < tr.size(); ++i) sq += (pred.states[i] - tr.states[i]).squaredNorm();
        if (!std::isfinite(sq) || sq > divergence_threshold) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: test rollout diverged (squared error %.6g, threshold %.3g)",
                          model.name.c_str(), sq, divergence_threshold);
            throw DivergenceError(buf, 0, sq);
        }
        nrmses.push_back(nrmse(pred, tr));
        viols.push_back(energy_violation_rate(pred));
        ev.predictions.push_back(std::move(pred));
    }
    auto& r = ev.report;
    r.nrmse = mean(nrmses);
    r.energy_violation = mean(viols);
    r.extras["relative_error"] = mean_relative_error(ev.predictions, truth);
    r.extras["param_count"] = static_cast<double>(model.param_count);
    if (model.time_invariant()) {
        const auto spec = eig(model.generator(0.0));
        const auto s = spectral_summary(spec);
        r.mean_re = s.mean_re;
        r.unstable_count = s.unstable_count;
        if (is_time_invariant(system)) {
            const auto truth_spec = eig(generator_of(system, 0.0));
            r.eig_errors = eig_recovery_error(spec, truth_spec);
            r.extras["relative_eig_error"] = relative_eig_error(spec, truth_spec);
        }
    } else {
        // Time-varying models: spectra sampled on the first test grid.
        double sum = 0.0;
        int worst = 0;
        const auto& grid = truth.front().grid;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto s = spectral_summary(eig(model.generator(grid[i])));
            sum += s.mean_re;
            worst = std::max(worst, s.unstable_count);
        }
        r.mean_re = sum / static_cast<double>(grid.size());
        r.unstable_count = worst;
    }
    return ev;
}

}  // namespace

MetricsReport evaluate_model(const FittedModel& model, const SystemSpec& system, const std::vector<Trajectory>& truth,
                             double divergence_threshold) {
    return evaluate_full(model, system, truth, divergence_threshold).report;
}

void save_model(const FittedModel& model, const std::string& path) {
    nlohmann::json j;
    if (model.matrix) {
        const Mat& a = *model.matrix;
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(a.rows()));
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index k = 0; k < a.cols(); ++k) rows[static_cast<std::size_t>(i)].push_back(a(i, k));
        }
        j = {{"model", model.name}, {"kind", "matrix"}, {"n", a.rows()}, {"A", rows}};
    } else {
        j = *model.params;
        j["model"] = model.name;
        j["kind"] = "generator";
        j["magnus_order"] = model.magnus_order;
        j["optimizer"] = model.optimizer;
    }
    write_json_file(j, path);
}

FittedModel load_model(const std::string& path) {
    const auto j = read_json_file(path);
    FittedModel m;
    try {
        m.name = j.value("model", std::string("checkpoint"));
        if (j.value("kind", std::string("generator")) == "matrix") {
            const auto rows = j.at("A").get<std::vector<std::vector<double>>>();
            const auto n = static_cast<Eigen::Index>(rows.size());
            Mat a(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
                    throw ConfigError("checkpoint '" + path + "': matrix A is not square");
                }
                for (Eigen::Index k = 0; k < n; ++k) a(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
            }
            m.matrix = a;
            m.param_count = a.size();
        } else {
            m.params = j.get<GeneratorParams>();
            m.param_count = param_count(*m.params);
            m.magnus_order = j.value("magnus_order", 1);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------
// Runners

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
    void write(const fs::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out << join_row(header_) << "\n";
        for (const auto& r : rows_) out << join_row(r) << "\n";
    }

private:
    static std::string join_row(const std::vector<std::string>& r) {
        std::string s;
        for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
        return s;
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

const std::vector<std::string> kResultColumns{"model",          "params",           "status",
                                              "nrmse",          "energy_violation", "mean_re",
                                              "unstable_count", "eig_error_median", "relative_eig_error",
                                              "relative_error"};

std::vector<std::string> result_row(const std::string& model, const nlohmann::json& m) {
    auto num = [&](const char* key) -> std::string {
        if (!m.contains(key) || !m[key].is_number()) return "";
        return fmt(m[key].get<double>());
    };
    return {model,     num("param_count"),    m.value("status", std::string("ok")),
            num("nrmse"), num("energy_violation"), num("mean_re"),
            num("unstable_count"), num("eig_error_median"), num("relative_eig_error"),
            num("relative_error")};
}

struct ModelRun {
    std::optional<FittedModel> model;
    std::optional<Evaluation> eval;
    nlohmann::json json;  ///< metrics plus status
    bool diverged = false;
};

class Runner {
public:
    explicit Runner(const ExperimentConfig& cfg) : cfg_(cfg), root_(cfg.out_dir) {
        ensure_dir(root_);
        ensure_dir(root_ / "plots");
        write_json_file(nlohmann::json(cfg_), (root_ / "config.json").string());
    }

    ExperimentOutcome& outcome() { return outcome_; }
    const fs::path& root() const { return root_; }

    std::vector<Trajectory> truth_rollouts(const SystemSpec& system, const std::vector<Vec>& x0s) const {
        std::vector<Trajectory> out;
        const TimeGrid grid = cfg_.test_grid.make();
        for (const auto& x0 : x0s) out.push_back(simulate_truth(system, grid, x0));
        return out;
    }

    void write_data(const Dataset& train, const std::vector<Trajectory>& test, const fs::path& dir) const {
        ensure_dir(dir / "train");
        ensure_dir(dir / "test");
        write_dataset(train, (dir / "train").string());
        Dataset t;
        t.trajectories = test;
        t.provenance = train.provenance;
        t.seed = train.seed;
        write_dataset(t, (dir / "test").string());
    }

    /// Fits and evaluates one model; divergence is recorded rather than thrown.
    ModelRun run_model(const std::string& name, const SystemSpec& system, const Dataset& data,
                       const std::vector<Trajectory>& truth, const fs::path& dir, const ExperimentConfig& cfg) {
        ModelRun run;
        ensure_dir(dir);
        const bool expected =
            std::find(cfg.expected_divergence.begin(), cfg.expected_divergence.end(), name) != cfg.expected_divergence.end();
        std::string stage = "training";
        try {
            run.model = fit_model(name, cfg, data);
            save_model(*run.model, (dir / "checkpoint.json").string());
            if (!run.model->history.empty()) write_history_csv(run.model->history, (dir / "loss_history.csv").string());
            stage = "evaluation";
            run.eval = evaluate_full(*run.model, system, truth, cfg.train.divergence_threshold);
            run.json = run.eval->report;
            if (!run.eval->report.eig_errors.empty()) {
                run.json["eig_error_median"] = median(run.eval->report.eig_errors);
                run.json["eig_error_mean"] = mean(run.eval->report.eig_errors);
            }
            run.json["status"] = "ok";
            run.json["optimizer"] = run.model->optimizer;
            if (!run.model->restart_losses.empty()) run.json["restart_losses"] = finite_or_null(run.model->restart_losses);
        } catch (const DivergenceError& e) {
            run.diverged = true;
            run.json = nlohmann::json::object();
            run.json["status"] = "diverged";
            run.json["divergence_stage"] = stage;
            run.json["divergence_epoch"] = e.epoch();
            run.json["divergence_message"] = e.what();
            if (run.model) run.json["param_count"] = run.model->param_count;
            outcome_.messages.push_back(std::string(expected ? "expected divergence: " : "unexpected divergence: ") +
                                        e.what());
            if (!expected) outcome_.unexpected_divergence = true;
        }
        run.json["expected_divergence"] = expected;
        write_json_file(run.json, (dir / "metrics.json").string());
        return run;
    }

    static nlohmann::json finite_or_null(const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
        return a;
    }

    void write_error_vs_time(const std::map<std::string, std::vector<Trajectory>>& preds,
                             const std::vector<Trajectory>& truth, const fs::path& path) const {
        CsvTable t({"model", "trajectory", "t", "error", "relative_error"});
        for (const auto& [name, p] : preds) {
            for (std::size_t k = 0; k < truth.size(); ++k) {
                for (std::size_t i = 0; i < truth[k].size(); ++i) {
                    const double e = (p[k].states[i] - truth[k].states[i]).norm();
                    const double nrm = truth[k].states[i].norm();
                    t.add({name, std::to_string(k), fmt(truth[k].grid[i]), fmt(e), nrm > 0 ? fmt(e / nrm) : ""});
                }
            }
        }
        t.write(path);
    }

    void write_eigenvalues(const std::map<std::string, ComplexSpectrum>& spectra, const fs::path& path) const {
        CsvTable t({"model", "re", "im"});
        for (const auto& [name, s] : spectra) {
            for (const auto& z : s.values) t.add({name, fmt(z.real()), fmt(z.imag())});
        }
        t.write(path);
    }

    void finish(nlohmann::json summary, const CsvTable& table) {
        summary["experiment"] = cfg_.id;
        summary["seed"] = cfg_.seed;
        summary["messages"] = outcome_.messages;
        summary["unexpected_divergence"] = outcome_.unexpected_divergence;
        write_json_file(summary, (root_ / "summary.json").string());
        table.write(root_ / "results.csv");
        outcome_.summary = std::move(summary);
    }

private:
    const ExperimentConfig& cfg_;
    fs::path root_;
    ExperimentOutcome outcome_;
};

// Fits every configured model on one dataset and evaluates on `truth`.
struct StandardRun {
    nlohmann::json models = nlohmann::json::object();
    std::map<std::string, ModelRun> runs;
};

StandardRun run_models(Runner& runner, const ExperimentConfig& cfg, const SystemSpec& system, const Dataset& data,
                       const std::vector<Trajectory>& truth, const fs::path& dir) {
    StandardRun out;
    for (const auto& name : cfg.models) {
        auto run = runner.run_model(name, system, data, truth, dir / name, cfg);
        out.models[name] = run.json;
        out.runs.emplace(name, std::move(run));
    }
    return out;
}

void add_rows(CsvTable& table, const StandardRun& sr, const std::vector<std::string>& order) {
    for (const auto& name : order) table.add(result_row(name, sr.models.at(name)));
}

void write_standard_plots(Runner& runner, const StandardRun& sr, const std::vector<Trajectory>& truth,
                          const SystemSpec& system, const fs::path& dir) {
    ensure_dir(dir);
    std::map<std::string, std::vector<Trajectory>> preds;
    std::map<std::string, ComplexSpectrum> spectra;
    for (const auto& [name, run] : sr.runs) {
        if (!run.eval) continue;
        preds[name] = run.eval->predictions;
        if (run.model->time_invariant()) spectra[name] = eig(run.model->generator(0.0));
    }
    runner.write_error_vs_time(preds, truth, dir / "error_vs_time.csv");
    if (is_time_invariant(system)) spectra["truth"] = eig(generator_of(system, 0.0));
    if (!spectra.empty()) runner.write_eigenvalues(spectra, dir / "eigenvalues.csv");
}

ExperimentOutcome run_standard(const ExperimentConfig& cfg) {
    Runner runner(cfg);
    const auto x0s = initial_states(cfg);
    Dataset data = make_dataset(cfg.system, cfg.train_grid.make(), x0s, cfg.noise, noise_seed(cfg));
    const auto truth = runner.truth_rollouts(cfg.system, x0s);
    runner.write_data(data, truth, runner.root() / "data");

    auto sr = run_models(runner, cfg, cfg.system, data, truth, runner.root());
    write_standard_plots(runner, sr, truth, cfg.system, runner.root() / "plots");

    nlohmann::json summary;
    summary["system"] = cfg.system;
    summary["models"] = sr.models;
    if (is_time_invariant(cfg.system)) {
        const auto s = spectral_summary(eig(generator_of(cfg.system, 0.0)));
        summary["truth_mean_re"] = s.mean_re;
        summary["truth_unstable_count"] = s.unstable_count;
    }
    if (cfg.id == "exp1-lc" || cfg.id == "exp1-rlc") {
        const auto it = sr.runs.find("lgn");
        if (it != sr.runs.end() && it->second.model) {
            const Mat a = it->second.model->generator(0.0);
            const double omega = a(0, 1);
            summary["omega_hat"] = omega;
            summary["omega_sq_hat"] = omega * omega;
            summary["gamma_hat"] = -a(1, 1);
            summary["omega_error"] = std::abs(omega - 1.0);
            if (const auto* rlc = std::get_if<RLCSystem>(&cfg.system)) {
                summary["omega_sq_error"] = std::abs(omega * omega - rlc->omega * rlc->omega);
                summary["gamma_error"] = std::abs(-a(1, 1) - rlc->gamma);
            } else if (const auto* lc = std::get_if<LCSystem>(&cfg.system)) {
                summary["omega_error"] = std::abs(omega - lc->omega);
            }
        }
    }
    if (!is_time_invariant(cfg.system)) {
        const SystemSpec sys = cfg.system;
        const TimeGrid grid = cfg.train_grid.make();
        summary["truth_commutator_mean"] = mean_commutator_norm([&](double t) { return generator_of(sys, t); }, grid);
        for (const auto& [name, run] : sr.runs) {
            if (run.model && !run.model->time_invariant()) {
                const FittedModel& m = *run.model;
                summary["models"][name]["commutator_mean"] =
                    mean_commutator_norm([&](double t) { return m.generator(t); }, grid);
            }
        }
    }
    CsvTable table(kResultColumns);
    add_rows(table, sr, cfg.models);
    runner.finish(std::move(summary), table);
    return runner.outcome();
}

ExperimentOutcome run_noise_sweep(const ExperimentConfig& cfg) {
    Runner runner(cfg);
    const auto x0s = initial_states(cfg);
    const auto truth = runner.truth_rollouts(cfg.system, x0s);
    std::vector<std::string> header{"noise"};
    header.insert(header.end(), kResultColumns.begin(), kResultColumns.end());
    CsvTable table(header);
    CsvTable plot({"noise", "model", "relative_eig_error", "eig_error_median"});
    nlohmann::json levels = nlohmann::json::array();
    const auto levels_list = cfg.noise_levels.empty() ? std::vector<double>{cfg.noise} : cfg.noise_levels;
    for (double level : levels_list) {
        const std::string tag = "noise_" + fmt(level);
        Dataset data = make_dataset(cfg.system, cfg.train_grid.make(), x0s, level, noise_seed(cfg));
        runner.write_data(data, truth, runner.root() / tag / "data");
        auto sr = run_models(runner, cfg, cfg.system, data, truth, runner.root() / tag);
        nlohmann::json entry{{"noise", level}, {"models", sr.models}};
        for (const auto& name : cfg.models) {
            auto row = result_row(name, sr.models.at(name));
            row.insert(row.begin(), fmt(level));
            table.add(row);
            const auto& m = sr.models.at(name);
            plot.add({fmt(level), name,
                      m.contains("relative_eig_error") ? fmt(m["relative_eig_error"].get<double>()) : "",
                      m.contains("eig_error_median") ? fmt(m["eig_error_median"].get<double>()) : ""});
        }
        levels.push_back(entry);
    }
    plot.write(runner.root() / "plots" / "error_vs_noise.csv");
    const auto truth_spec = eig(generator_of(cfg.system, 0.0));
    double radius = 0.0;
    for (const auto& z : truth_spec.values) radius = std::max(radius, std::abs(z));
    nlohmann::json summary{{"system", cfg.system}, {"levels", levels}, {"spectral_radius", radius}};
    runner.finish(std::move(summary), table);
    return runner.outcome();
}

ExperimentOutcome run_magnus(const ExperimentConfig& cfg) {
    const auto* sys = std::get_if<LTVOscillator>(&cfg.system);
    if (sys == nullptr) throw ConfigError("a1-magnus needs an LTVOscillator system");
    Runner runner(cfg);
    const auto x0s = initial_states(cfg);
    Dataset data = make_dataset(cfg.system, cfg.train_grid.make(), x0s, cfg.noise, noise_seed(cfg));
    const auto truth = runner.truth_rollouts(cfg.system, x0s);
    runner.write_data(data, truth, runner.root() / "data");

    std::vector<std::string> header{"magnus_order"};
    header.insert(header.end(), kResultColumns.begin(), kResultColumns.end());
    CsvTable table(header);
    nlohmann::json orders = nlohmann::json::object();
    std::map<std::string, std::vector<Trajectory>> preds;
    std::map<int, FittedModel> fitted;
    for (int order : {1, 2}) {
        ExperimentConfig c = cfg;
        c.train.magnus_order = order;
        const std::string tag = "m" + std::to_string(order);
        for (const auto& name : cfg.models) {
            auto run = runner.run_model(name, cfg.system, data, truth, runner.root() / tag / name, c);
            if (run.model) {
                const auto& v = run.model->params->values;
                run.json["learned"] = {{"w0_sq", v(0)}, {"gamma0", v(1)}, {"gamma_amp", v(2)}, {"omega_d", v(3)}};
            }
            orders[tag][name] = run.json;
            auto row = result_row(name, run.json);
            row.insert(row.begin(), std::to_string(order));
            table.add(row);
            if (run.eval) preds[tag + "/" + name] = run.eval->predictions;
            if (run.model && name == cfg.models.front()) fitted.emplace(order, *run.model);
        }
    }
    runner.write_error_vs_time(preds, truth, runner.root() / "plots" / "error_vs_time.csv");

    // Order study at the true parameters: global error against the reference.
    const GeneratorParams exact = parametric_ltv(sys->omega0 * sys->omega0, sys->gamma0, sys->gamma_amp, sys->omega_d);
    std::vector<double> e1, e2;
    CsvTable order_table({"dt", "m1_error", "m2_error"});
    for (double dt : cfg.dt_sweep) {
        const TimeGrid grid = TimeGrid::uniform(0.0, cfg.order_horizon, dt);
        const Trajectory ref = reference_integrate(cfg.system, grid, x0s.front());
        double err[2] = {0.0, 0.0};
        for (int order : {1, 2}) {
            const Trajectory r = rollout_ltv(exact, grid, x0s.front(), order);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                err[order - 1] = std::max(err[order - 1], (r.states[i] - ref.states[i]).norm());
            }
        }
        e1.push_back(err[0]);
        e2.push_back(err[1]);
        order_table.add({fmt(dt), fmt(err[0]), fmt(err[1])});
    }
    order_table.write(runner.root() / "plots" / "order_study.csv");

    nlohmann::json summary{{"system", cfg.system}, {"orders", orders}};
    auto test_error = [&](const char* tag) -> std::optional<double> {
        const auto& m = orders[tag][cfg.models.front()];
        if (m.value("status", std::string()) != "ok") return std::nullopt;
        return m["nrmse"].get<double>();
    };
    const auto m1 = test_error("m1");
    const auto m2 = test_error("m2");
    if (m1) summary["m1_test_error"] = *m1;
    if (m2) summary["m2_test_error"] = *m2;
    if (m1 && m2 && *m2 > 0.0) summary["m1_over_m2"] = *m1 / *m2;
    if (cfg.dt_sweep.size() >= 2) {
        summary["dt_sweep"] = cfg.dt_sweep;
        summary["order_errors_m1"] = e1;
        summary["order_errors_m2"] = e2;
        summary["slope_m1"] = loglog_slope(cfg.dt_sweep, e1);
        summary["slope_m2"] = loglog_slope(cfg.dt_sweep, e2);
    }
    const TimeGrid train_grid = cfg.train_grid.make();
    const SystemSpec system = cfg.system;
    summary["commutator_mean_truth"] =
        mean_commutator_norm([&](double t) { return generator_of(system, t); }, train_grid);
    if (auto it = fitted.find(2); it != fitted.end()) {
        const FittedModel& m = it->second;
        summary["commutator_mean_trained"] = mean_commutator_norm([&](double t) { return m.generator(t); }, train_grid);
    }
    runner.finish(std::move(summary), table);
    return runner.outcome();
}

// Error of the recovered slowest mode (smallest |Re| of the truth).
double slow_mode_error(const FittedModel& m, const SystemSpec& system) {
    const auto truth = eig(generator_of(system, 0.0));
    const auto pred = eig(m.generator(0.0));
    const auto perm = match_eigenvalues(pred, truth);
    std::size_t slow = 0;
    for (std::size_t i = 1; i < truth.size(); ++i) {
        if (std::abs(truth.values[i].real()) < std::abs(truth.values[slow].real())) slow = i;
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (perm[i] == slow) return std::abs(pred.values[i].real() - truth.values[slow].real());
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double stiffness_ratio(const SystemSpec& system) {
    const auto s = eig(generator_of(system, 0.0));
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& z : s.values) {
        lo = std::min(lo, std::abs(z.real()));
        hi = std::max(hi, std::abs(z.real()));
    }
    return hi / lo;
}

ExperimentOutcome run_stiff(const ExperimentConfig& cfg) {
    Runner runner(cfg);
    const auto x0s = initial_states(cfg);
    std::vector<std::string> header{"case"};
    header.insert(header.end(), kResultColumns.begin(), kResultColumns.end());
    header.push_back("slow_mode_error");
    CsvTable table(header);
    nlohmann::json summary{{"system", cfg.system}};
    std::vector<std::pair<std::string, SystemSpec>> cases{{"stiff", cfg.system}};
    if (cfg.control_system) cases.emplace_back("control", *cfg.control_system);

    for (const auto& [tag, system] : cases) {
        Dataset data = make_dataset(system, cfg.train_grid.make(), x0s, cfg.noise, noise_seed(cfg));
        const auto truth = runner.truth_rollouts(system, x0s);
        runner.write_data(data, truth, runner.root() / tag / "data");
        ExperimentConfig c = cfg;
        std::vector<std::string> models = cfg.models;
        auto sr = run_models(runner, c, system, data, truth, runner.root() / tag);
        if (cfg.tau_ablation) {
            c.tau = static_cast<int>(data.trajectories.front().size()) - 1;
            auto run = runner.run_model("ph-window", system, data, truth, runner.root() / tag / "ph-full", c);
            sr.models["ph-full"] = run.json;
            sr.runs.emplace("ph-full", std::move(run));
            models.push_back("ph-full");
        }
        for (auto& [name, run] : sr.runs) {
            if (run.model && run.model->time_invariant()) {
                sr.models[name]["slow_mode_error"] = slow_mode_error(*run.model, system);
            }
        }
        write_standard_plots(runner, sr, truth, system, runner.root() / "plots" / tag);
        for (const auto& name : models) {
            auto row = result_row(name, sr.models.at(name));
            row.insert(row.begin(), tag);
            const auto& m = sr.models.at(name);
            row.push_back(m.contains("slow_mode_error") ? fmt(m["slow_mode_error"].get<double>()) : "");
            table.add(row);
        }
        nlohmann::json entry{{"system", system}, {"models", sr.models}, {"stiffness_ratio", stiffness_ratio(system)}};
        const auto& ms = sr.models;
        auto get = [&](const char* model, const char* key) -> std::optional<double> {
            if (!ms.contains(model) || !ms[model].contains(key) || !ms[model][key].is_number()) return std::nullopt;
            return ms[model][key].get<double>();
        };
        const auto lgn_rel = get("lgn-sd", "relative_error");
        const auto ph_rel = get("ph-window", "relative_error");
        if (lgn_rel && ph_rel) entry["relative_error_ratio_ph_over_lgn"] = *ph_rel / *lgn_rel;
        const auto lgn_med = get("lgn-sd", "eig_error_median");
        const auto ph_med = get("ph-window", "eig_error_median");
        if (lgn_med && ph_med) {
            entry["eig_median_ratio"] = std::max(*lgn_med, *ph_med) / std::max(std::min(*lgn_med, *ph_med), 1e-300);
        }
        summary[tag] = entry;
    }
    runner.finish(std::move(summary), table);
    return runner.outcome();
}

}  // namespace

Dataset experiment_dataset(const ExperimentConfig& cfg) {
    cfg.validate();
    return make_dataset(cfg.system, cfg.train_grid.make(), initial_states(cfg), cfg.noise, noise_seed(cfg));
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.id == "exp4-noise") return run_noise_sweep(cfg);
    if (cfg.id == "a1-magnus") return run_magnus(cfg);
    if (cfg.id == "a2-stiff") return run_stiff(cfg);
    return run_standard(cfg);
}

}  // namespace lgn

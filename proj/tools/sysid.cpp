// sysid: simulate, fit, evaluate and reproduce the experiments from JSON configs.
//
// Exit codes: 0 success, 2 configuration error, 3 unexpected numeric
// divergence, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lgn/error.hpp"
#include "lgn/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Options {
    std::string id;
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> sections;
    bool full_scale = false;
    std::string data;        // fit / eval: dataset manifest
    std::string checkpoint;  // eval
    std::string model;       // fit
};

// CLI-only keys that are not part of ExperimentConfig.
const char* const kCliKeys[] = {"data", "checkpoint", "model"};

lgn::ExperimentConfig resolve(const Options& o, nlohmann::json& file) {
    lgn::ExperimentConfig cfg = lgn::default_config(o.id);
    if (!o.config.empty()) {
        file = lgn::read_json_file(o.config);
        if (!file.is_object()) throw lgn::ConfigError("config '" + o.config + "' must be a JSON object");
        nlohmann::json overrides = file;
        for (const char* k : kCliKeys) overrides.erase(k);
        overrides.erase("id");
        cfg = lgn::apply_overrides(cfg, overrides);
    }
    cfg.id = o.id;
    cfg.out_dir = o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.full_scale && o.id == "exp3-ladder") lgn::set_ladder_sections(cfg, 50);
    if (o.sections) lgn::set_ladder_sections(cfg, *o.sections);
    cfg.validate();
    return cfg;
}

std::string pick(const std::string& flag, const nlohmann::json& file, const char* key) {
    if (!flag.empty()) return flag;
    if (file.contains(key) && file[key].is_string()) return file[key].get<std::string>();
    return {};
}

void ensure_out(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw lgn::IoError("cannot create directory '" + dir + "': " + ec.message());
}

int cmd_simulate(const Options& o) {
    nlohmann::json file;
    const auto cfg = resolve(o, file);
    const lgn::Dataset data = lgn::experiment_dataset(cfg);
    ensure_out(cfg.out_dir);
    lgn::write_dataset(data, cfg.out_dir);
    std::printf("wrote %zu trajectories to %s\n", data.trajectories.size(), cfg.out_dir.c_str());
    return 0;
}

int cmd_fit(const Options& o) {
    nlohmann::json file;
    const auto cfg = resolve(o, file);
    const std::string manifest = pick(o.data, file, "data");
    const lgn::Dataset data = manifest.empty() ? lgn::experiment_dataset(cfg) : lgn::read_dataset(manifest);
    std::string model = pick(o.model, file, "model");
    if (model.empty()) model = cfg.models.front();
    ensure_out(cfg.out_dir);
    const auto dir = std::filesystem::path(cfg.out_dir);
    try {
        const lgn::FittedModel m = lgn::fit_model(model, cfg, data);
        lgn::save_model(m, (dir / "checkpoint.json").string());
        if (!m.history.empty()) lgn::write_history_csv(m.history, (dir / "loss_history.csv").string());
        nlohmann::json info{{"model", model}, {"param_count", m.param_count}, {"optimizer", m.optimizer}};
        if (!m.history.empty()) info["final_loss"] = m.history.back().loss;
        lgn::write_json_file(info, (dir / "fit.json").string());
        std::cout << info.dump(2) << "\n";
    } catch (const lgn::DivergenceError& e) {
        const bool expected = std::find(cfg.expected_divergence.begin(), cfg.expected_divergence.end(), model) !=
                              cfg.expected_divergence.end();
        std::fprintf(stderr, "%s divergence of %s: %s\n", expected ? "expected" : "unexpected", model.c_str(),
                     e.what());
        return expected ? 0 : kExitDivergence;
    }
    return 0;
}

int cmd_eval(const Options& o) {
    nlohmann::json file;
    const auto cfg = resolve(o, file);
    const std::string checkpoint = pick(o.checkpoint, file, "checkpoint");
    const std::string manifest = pick(o.data, file, "data");
    if (checkpoint.empty()) throw lgn::ConfigError("eval needs --checkpoint (or \"checkpoint\" in the config)");
    if (manifest.empty()) throw lgn::ConfigError("eval needs --data (or \"data\" in the config)");
    const lgn::FittedModel m = lgn::load_model(checkpoint);
    const lgn::Dataset data = lgn::read_dataset(manifest);
    if (data.dim() != (m.matrix ? static_cast<int>(m.matrix->rows()) : m.params->n)) {
        throw lgn::DimensionError("checkpoint has dimension " +
                                  std::to_string(m.matrix ? m.matrix->rows() : m.params->n) +
                                  " but the dataset has dimension " + std::to_string(data.dim()));
    }
    const lgn::MetricsReport r =
        lgn::evaluate_model(m, data.provenance, data.trajectories, cfg.train.divergence_threshold);
    ensure_out(cfg.out_dir);
    nlohmann::json j = r;
    lgn::write_json_file(j, (std::filesystem::path(cfg.out_dir) / "metrics.json").string());
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_experiment(const Options& o) {
    nlohmann::json file;
    const auto cfg = resolve(o, file);
    const lgn::ExperimentOutcome out = lgn::run_experiment(cfg);
    for (const auto& msg : out.messages) std::fprintf(stderr, "%s\n", msg.c_str());
    std::printf("results written to %s\n", cfg.out_dir.c_str());
    return out.unexpected_divergence ? kExitDivergence : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identify linear-system generators through matrix exponentials"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("id", o.id, "Experiment id")->required();
        sub->add_option("--config", o.config, "JSON file overriding the experiment defaults");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Master seed");
        sub->add_option("--sections", o.sections, "Ladder sections (ladder experiments)");
        sub->add_flag("--full-scale", o.full_scale, "Full-scale run (50-section ladder for exp3)");
    };
    auto* simulate = app.add_subcommand("simulate", "Synthesize an experiment's training dataset");
    auto* fit = app.add_subcommand("fit", "Fit one model and write its checkpoint");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    auto* experiment = app.add_subcommand("experiment", "Run an experiment end to end");
    for (auto* sub : {simulate, fit, eval, experiment}) add_common(sub);
    fit->add_option("--data", o.data, "Dataset manifest to fit instead of synthesizing");
    fit->add_option("--model", o.model, "Model name (default: first model of the experiment)");
    eval->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON");
    eval->add_option("--data", o.data, "Dataset manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(o);
        if (*fit) return cmd_fit(o);
        if (*eval) return cmd_eval(o);
        return cmd_experiment(o);
    } catch (const lgn::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const lgn::DimensionError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const lgn::IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const lgn::NumericError& e) {
        std::fprintf(stderr, "numeric divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    }
}

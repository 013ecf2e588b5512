// fdialab command line: episode simulation, table recipes and detector
// hyperparameter search. Exit codes: 0 success, 1 runtime failure, 2 usage,
// 3 check-gate failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "fdialab/detect.hpp"
#include "fdialab/experiment.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/predictor.hpp"
#include "fdialab/tuning.hpp"

namespace fs = std::filesystem;
using namespace fdialab;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string scale;
};

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = load_experiment_config(opts.config_path, opts.scale);
    } else if (!opts.scale.empty()) {
        cfg.scale = opts.scale;
        cfg.profile = opts.scale == "full" ? ScaleProfile::full() : ScaleProfile::desk();
    }
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

int cmd_simulate(const CommonOpts& common, int episodes, int t_ep, int attack_bus,
                 double attack_value, int attack_from, double sigma,
                 const std::string& integrator) {
    Integrator method = integrator == "euler" ? Integrator::euler : Integrator::rk4;
    ExperimentConfig cfg = resolve_config(common);
    fs::create_directories(cfg.out_dir);
    const GridModel& grid = cfg.grid;

    json manifest;
    manifest["grid_digest"] = grid.digest();
    manifest["seed"] = cfg.seed;
    manifest["episodes"] = json::array();

    for (int e = 0; e < episodes; ++e) {
        std::uint64_t ep_seed = derive_seed(cfg.seed, "episode", static_cast<std::uint64_t>(e));
        auto rng = make_rng(ep_seed);
        SystemState init = sample_initial_state(rng, grid.n_buses);
        AttackSchedule schedule;
        if (attack_bus >= 0) {
            schedule.attack_value = attack_value;
            for (int t = std::max(1, attack_from); t < t_ep; ++t) schedule.add(t, attack_bus);
        }
        Episode ep = simulate_episode(init, grid, schedule, t_ep, 0.01, ep_seed, method);
        if (sigma > 0.0)
            ep = add_noise(ep, NoiseSpec{sigma, derive_seed(cfg.seed, "noise",
                                                            static_cast<std::uint64_t>(e))});
        char name[64];
        std::snprintf(name, sizeof(name), "episode_%04d.csv", e);
        fs::path path = fs::path(cfg.out_dir) / name;
        write_episode_csv(ep, path.string());
        manifest["episodes"].push_back({{"file", name},
                                        {"seed", ep_seed},
                                        {"schedule_digest", schedule.digest()},
                                        {"sigma", sigma},
                                        {"integrator", integrator}});
    }
    auto out = open_for_write((fs::path(cfg.out_dir) / "manifest.json").string(), false);
    out << manifest.dump(2) << '\n';
    std::printf("wrote %d episode(s) to %s\n", episodes, cfg.out_dir.c_str());
    return 0;
}

int cmd_run_table(const CommonOpts& common, const std::string& table_id, bool check) {
    ExperimentConfig cfg = resolve_config(common);
    cfg.run_checks = check;
    ExperimentRunner runner(cfg);
    TableResult res = runner.run_table(table_id);
    std::printf("== table %s (scale %s, seed %llu, %.1fs) ==\n", res.table_id.c_str(),
                cfg.scale.c_str(), static_cast<unsigned long long>(cfg.seed), res.seconds);
    std::fputs(res.text_table.c_str(), stdout);
    for (const auto& c : res.checks)
        std::printf("[%s] %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.empty() ? "" : ": ", c.detail.c_str());
    if (check && !res.checks_passed()) return 3;
    return 0;
}

int cmd_tune(const CommonOpts& common, int trials) {
    ExperimentConfig cfg = resolve_config(common);
    if (trials > 0) cfg.profile.tune_trials = trials;
    ExperimentRunner runner(cfg);
    const auto& p = runner.config().profile;

    PredictorModel predictor = runner.obtain_predictor(
        PredictorKind::lstm_ae, p.big_units, p.predictor_episodes, 0.0, p.predictor_epochs);
    WindowSetSpec spec = runner.base_window_spec(DeploymentMode::sliding);
    spec.n_benign = p.detect_train_per_class / 2;
    spec.n_adversarial = spec.n_benign;
    auto windows = build_detection_dataset(cfg.grid, spec, derive_seed(cfg.seed, "tune-windows"));
    MatrixXd errors = error_matrix(predictor, windows);
    std::vector<int> labels;
    for (const auto& w : windows) labels.push_back(w.adversarial ? 1 : 0);

    // objective: cross-entropy-driven error rate on the held-out 20%
    auto objective = [&](const Trial& t, std::uint64_t trial_seed) {
        DetectorHyper hyper;
        hyper.hidden = t.hidden;
        hyper.lr = t.lr;
        hyper.epochs = p.detector_epochs;
        TrainedDetector cand = train_binary_detector(errors, labels, hyper, trial_seed);
        return 1.0 - cand.test_accuracy;
    };
    SearchSpace space;
    SearchResult res = random_search(space, p.tune_trials, objective,
                                     derive_seed(cfg.seed, "tune"));

    std::string dir = runner.table_dir("tune");
    write_trial_history(res.history, dir + "/history.jsonl");
    bool have_importance = false;
    ImportanceReport imp;
    int finished = 0;
    for (const auto& t : res.history)
        if (!t.diverged) ++finished;
    if (finished >= 10) {
        imp = importance_report(res.history);
        have_importance = true;
    }

    std::printf("%-6s %-14s %-10s %-10s\n", "trial", "hidden", "lr", "objective");
    for (const auto& t : res.history) {
        std::string hidden;
        for (std::size_t i = 0; i < t.hidden.size(); ++i)
            hidden += (i ? "x" : "") + std::to_string(t.hidden[i]);
        std::printf("%-6d %-14s %-10.5f %-10.5f%s\n", t.index, hidden.c_str(), t.lr,
                    t.objective, t.diverged ? " (diverged)" : "");
    }
    const Trial& best = res.best();
    std::string best_hidden;
    for (std::size_t i = 0; i < best.hidden.size(); ++i)
        best_hidden += (i ? "x" : "") + std::to_string(best.hidden[i]);
    std::printf("best: trial %d hidden %s lr %.5f objective %.5f\n", best.index,
                best_hidden.c_str(), best.lr, best.objective);
    if (have_importance)
        std::printf("importance: n_layers %.3f n_units %.3f lr %.3f\n", imp.n_layers,
                    imp.n_units, imp.lr);
    else
        std::printf("importance: skipped (needs >= 10 finished trials)\n");

    json summary = {{"best",
                     {{"trial", best.index},
                      {"hidden", best.hidden},
                      {"lr", best.lr},
                      {"objective", best.objective}}}};
    if (have_importance)
        summary["importance"] = {{"n_layers", imp.n_layers},
                                 {"n_units", imp.n_units},
                                 {"lr", imp.lr}};
    auto out = open_for_write(dir + "/summary.json", false);
    out << summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fdialab: droop-tamper detection laboratory for swing dynamics"};
    app.require_subcommand(1);

    CommonOpts common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "experiment config JSON")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "master seed")
            ->each([&](const std::string&) { common.seed_set = true; });
        sub->add_option("--scale", common.scale, "profile: desk or full")
            ->check(CLI::IsMember({"desk", "full"}));
    };

    auto* sim = app.add_subcommand("simulate", "integrate episodes and export CSVs");
    int episodes = 2, t_ep = 500, attack_bus = -1, attack_from = 1;
    double attack_value = -1.0, sigma = 0.0;
    add_common(sim);
    sim->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
    sim->add_option("--t-ep", t_ep, "steps per episode")->check(CLI::PositiveNumber);
    sim->add_option("--attack-bus", attack_bus, "bus whose droop is tampered");
    sim->add_option("--attack-value", attack_value, "tampered droop coefficient");
    sim->add_option("--attack-from", attack_from, "first tampered timestep");
    sim->add_option("--sigma", sigma, "additive measurement noise level");
    std::string integrator = "rk4";
    sim->add_option("--integrator", integrator, "rk4 (default) or euler, for ablation")
        ->check(CLI::IsMember({"rk4", "euler"}));

    auto* table = app.add_subcommand("run-table", "run one experiment table");
    std::string table_id;
    bool check = false;
    add_common(table);
    table->add_option("table", table_id, "table id")
        ->required()
        ->check(CLI::IsMember(table_ids()));
    table->add_flag("--check", check, "evaluate gate thresholds; exit 3 on failure");

    auto* tune = app.add_subcommand("tune", "random search over detector hyperparameters");
    int trials = 0;
    add_common(tune);
    tune->add_option("--trials", trials, "number of trials (default from profile)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help exits 0, any parse problem is usage
    }

    try {
        if (sim->parsed())
            return cmd_simulate(common, episodes, t_ep, attack_bus, attack_value,
                                attack_from, sigma, integrator);
        if (table->parsed()) return cmd_run_table(common, table_id, check);
        if (tune->parsed()) return cmd_tune(common, trials);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fdialab/experiment.hpp"

using namespace fdialab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string src_dir() { return FDIALAB_SOURCE_DIR; }
std::string cli_path() { return FDIALAB_CLI_PATH; }

int run_cli(const std::string& args, const std::string& log) {
    std::string cmd = cli_path() + " " + args + " > " + log + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("experiment config loads the shipped defaults") {
    ExperimentConfig cfg = load_experiment_config(src_dir() + "/configs/default.json");
    CHECK(cfg.seed == 20240809);
    CHECK(cfg.scale == "desk");
    CHECK(cfg.profile.predictor_episodes == 1500);
    CHECK(cfg.profile.start_max == 130);
    CHECK(cfg.checks.sliding_m0_min == 0.95);
    CHECK(cfg.grid.n_buses == 10);
    CHECK(cfg.grid.digest() == default_grid().digest());

    ExperimentConfig full = load_experiment_config(src_dir() + "/configs/default.json", "full");
    CHECK(full.scale == "full");
    CHECK(full.profile.predictor_episodes == 10000);
    CHECK(full.profile.detect_train_per_class == 100000);
}

TEST_CASE("experiment config rejects malformed input") {
    auto dir = fs::temp_directory_path();
    auto bad = dir / "fdialab_bad_config.json";
    {
        std::ofstream out(bad);
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_experiment_config(bad.string()), FormatError);
    fs::remove(bad);
    CHECK_THROWS_AS(load_experiment_config((dir / "missing_config.json").string()), IoError);
}

TEST_CASE("cli: usage errors exit 2, help exits 0") {
    auto dir = fs::temp_directory_path() / "fdialab_cli_test";
    fs::create_directories(dir);
    CHECK(run_cli("--help", (dir / "help.log").string()) == 0);
    CHECK(run_cli("run-table no-such-table --out " + (dir / "x").string(),
                  (dir / "bad.log").string()) == 2);
    CHECK(run_cli("frobnicate", (dir / "unknown.log").string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli simulate: deterministic output, manifest records schedules") {
    auto dir = fs::temp_directory_path() / "fdialab_sim_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string out1 = (dir / "a").string();
    std::string out2 = (dir / "b").string();

    REQUIRE(run_cli("simulate --episodes 2 --t-ep 80 --seed 99 --out " + out1,
                    (dir / "sim1.log").string()) == 0);
    REQUIRE(run_cli("simulate --episodes 2 --t-ep 80 --seed 99 --out " + out2,
                    (dir / "sim2.log").string()) == 0);

    CHECK(fs::exists(fs::path(out1) / "episode_0000.csv"));
    CHECK(fs::exists(fs::path(out1) / "episode_0001.csv"));
    CHECK(slurp(fs::path(out1) / "episode_0000.csv") ==
          slurp(fs::path(out2) / "episode_0000.csv"));

    json manifest = json::parse(slurp(fs::path(out1) / "manifest.json"));
    REQUIRE(manifest.at("episodes").size() == 2);
    std::string clean_digest = manifest.at("episodes")[0].at("schedule_digest");

    std::string out3 = (dir / "c").string();
    REQUIRE(run_cli("simulate --episodes 1 --t-ep 80 --seed 99 --attack-bus 7 --out " + out3,
                    (dir / "sim3.log").string()) == 0);
    json m3 = json::parse(slurp(fs::path(out3) / "manifest.json"));
    CHECK(m3.at("episodes")[0].at("schedule_digest") != clean_digest);

    Episode ep = read_episode_csv((fs::path(out1) / "episode_0000.csv").string());
    CHECK(ep.length() == 80);
    CHECK(ep.n_buses() == 10);
    fs::remove_all(dir);
}

TEST_CASE("table runner persists metrics, table text and check lines") {
    // micro profile: exercises the plumbing, not the acceptance thresholds
    ExperimentConfig cfg;
    cfg.seed = 424242;
    cfg.out_dir = (fs::temp_directory_path() / "fdialab_table_test").string();
    fs::remove_all(cfg.out_dir);
    cfg.profile.mae_noise_episodes = 30;
    cfg.profile.noise_levels = {0.0, 0.001};
    cfg.profile.small_units = 8;
    cfg.profile.small_epochs = 3;

    ExperimentRunner runner(cfg);
    TableResult res = runner.run_table("mae-noise");
    CHECK(res.table_id == "mae-noise");
    CHECK(res.metrics.at("rows").size() == 2);
    CHECK_FALSE(res.text_table.empty());
    CHECK_FALSE(res.checks.empty());

    json doc = json::parse(slurp(fs::path(cfg.out_dir) / "mae-noise" / "metrics.json"));
    CHECK(doc.at("table") == "mae-noise");
    CHECK(doc.at("seed") == 424242);
    CHECK(doc.at("metrics").at("rows").size() == 2);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "mae-noise" / "table.txt"));

    CHECK_THROWS_AS(runner.run_table("bogus"), std::invalid_argument);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("predictor cache is reused across runner instances") {
    ExperimentConfig cfg;
    cfg.seed = 5150;
    cfg.out_dir = (fs::temp_directory_path() / "fdialab_cache_test").string();
    fs::remove_all(cfg.out_dir);
    cfg.profile.predictor_episodes = 20;
    cfg.profile.predictor_epochs = 2;

    ExperimentRunner a(cfg);
    PredictorModel m1 = a.obtain_predictor(PredictorKind::lstm_ae, 6, 20, 0.0, 2);
    auto cache_dir = fs::path(cfg.out_dir) / "cache";
    auto count_ckpts = [&] {
        int n = 0;
        for (auto& e : fs::directory_iterator(cache_dir))
            if (e.path().extension() == ".ckpt") ++n;
        return n;
    };
    CHECK(count_ckpts() == 1);

    ExperimentRunner b(cfg);
    PredictorModel m2 = b.obtain_predictor(PredictorKind::lstm_ae, 6, 20, 0.0, 2);
    CHECK(count_ckpts() == 1);  // loaded, not retrained
    CHECK(m1.id() == m2.id());
    MatrixXd obs = MatrixXd::Constant(5, 20, 0.05);
    CHECK(m1.predict(obs) == m2.predict(obs));
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("table metrics are reproducible from config and seed") {
    ExperimentConfig cfg;
    cfg.seed = 606060;
    cfg.profile.mae_noise_episodes = 25;
    cfg.profile.noise_levels = {0.0};
    cfg.profile.small_units = 6;
    cfg.profile.small_epochs = 2;

    cfg.out_dir = (fs::temp_directory_path() / "fdialab_repro_a").string();
    fs::remove_all(cfg.out_dir);
    TableResult a = ExperimentRunner(cfg).run_table("mae-noise");

    cfg.out_dir = (fs::temp_directory_path() / "fdialab_repro_b").string();
    fs::remove_all(cfg.out_dir);
    TableResult b = ExperimentRunner(cfg).run_table("mae-noise");

    CHECK(a.metrics == b.metrics);  // values identical; only wall time may differ
    fs::remove_all(fs::temp_directory_path() / "fdialab_repro_a");
    fs::remove_all(fs::temp_directory_path() / "fdialab_repro_b");
}

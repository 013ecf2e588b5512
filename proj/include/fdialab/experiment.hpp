#pragma once

// Experiment recipes: each study is a named table with a runner that builds
// (or loads from cache) the artifacts it needs, emits machine-readable
// metrics plus an aligned text table, and evaluates its check gates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdialab/detect.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/predictor.hpp"
#include "fdialab/tuning.hpp"

namespace fdialab {

using nlohmann::json;

inline const std::vector<std::string>& table_ids() {
    static const std::vector<std::string> ids = {
        "mae-noise", "aggregation", "sample-size", "sliding",
        "cyclic",    "position",    "noisy-detection", "multiclass"};
    return ids;
}

struct ScaleProfile {
    // predictor training
    int t_ep = 500;
    double dt = 0.01;
    int window_stride = 6;  // training windows advance by N_p + 1 steps
    int small_units = 25;
    int small_epochs = 25;
    int big_units = 100;
    int mid_units = 50;
    int predictor_episodes = 1500;  // detection-stage predictors
    int predictor_epochs = 30;
    // mae-noise study
    int mae_noise_episodes = 1500;
    std::vector<double> noise_levels = {0.0, 0.001, 0.005};
    // aggregation study
    int aggregation_episodes = 800;
    // sample-size study
    std::vector<int> sample_sizes = {500, 1000, 1500};
    bool sample_size_noisy_columns = true;
    double sample_size_sigma = 0.001;
    // detection window sets
    int detect_train_per_class = 8000;
    int eval_per_class = 1000;
    int start_min = 10;
    int start_max = 130;
    int detector_epochs = 40;
    // noisy-detection study
    int noisy_seeds = 5;
    int noisy_train_per_class = 3000;
    int noisy_eval_per_class = 1000;
    double noisy_sigma = 0.001;
    // multiclass study
    int multiclass_per_bus = 1000;
    int multiclass_benign = 2000;
    int localizer_epochs = 60;
    // tuning
    int tune_trials = 30;

    static ScaleProfile desk() { return {}; }

    static ScaleProfile full() {
        ScaleProfile p;
        p.predictor_episodes = 10000;
        p.mae_noise_episodes = 10000;
        p.aggregation_episodes = 10000;
        p.detect_train_per_class = 100000;
        p.eval_per_class = 10000;
        p.noisy_train_per_class = 20000;
        p.noisy_eval_per_class = 5000;
        p.multiclass_per_bus = 10000;
        p.multiclass_benign = 20000;
        p.tune_trials = 100;
        return p;
    }
};

// Gate thresholds; defaults mirror the acceptance bands and can be
// overridden from the experiment config file.
struct CheckThresholds {
    double mae_clean_max = 1e-3;
    double mae_band_lo = 0.5;
    double mae_band_hi = 2.0;
    double mae_noise_gap = 10.0;  // clean MAE at least this factor below sigma=0.001 MAE
    double aggregation_mae_max = 0.01;
    double sliding_m0_min = 0.95;
    double sliding_m5_min = 0.80;
    double cyclic_m5_min = 0.95;
    double cyclic_m1_max = 0.85;
    double step_tol = 0.03;
    double position_t1_min = 0.90;
    double position_t5_max = 0.60;
    double coupling_tol = 0.01;
    double baseline_lo = 0.45;
    double baseline_hi = 0.55;
    double multiclass_overall_min = 0.70;
};

struct ExperimentConfig {
    GridModel grid = default_grid();
    std::string grid_path;  // empty = built-in defaults
    std::uint64_t seed = 20240809;
    std::string out_dir = "out";
    std::string scale = "desk";
    ScaleProfile profile = ScaleProfile::desk();
    CheckThresholds checks;
    bool run_checks = false;
};

namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void apply_profile_overrides(const json& j, ScaleProfile& p) {
    maybe(j, "t_ep", p.t_ep);
    maybe(j, "dt", p.dt);
    maybe(j, "window_stride", p.window_stride);
    maybe(j, "small_units", p.small_units);
    maybe(j, "small_epochs", p.small_epochs);
    maybe(j, "big_units", p.big_units);
    maybe(j, "mid_units", p.mid_units);
    maybe(j, "predictor_episodes", p.predictor_episodes);
    maybe(j, "predictor_epochs", p.predictor_epochs);
    maybe(j, "mae_noise_episodes", p.mae_noise_episodes);
    maybe(j, "noise_levels", p.noise_levels);
    maybe(j, "aggregation_episodes", p.aggregation_episodes);
    maybe(j, "sample_sizes", p.sample_sizes);
    maybe(j, "sample_size_noisy_columns", p.sample_size_noisy_columns);
    maybe(j, "sample_size_sigma", p.sample_size_sigma);
    maybe(j, "detect_train_per_class", p.detect_train_per_class);
    maybe(j, "eval_per_class", p.eval_per_class);
    maybe(j, "start_min", p.start_min);
    maybe(j, "start_max", p.start_max);
    maybe(j, "detector_epochs", p.detector_epochs);
    maybe(j, "noisy_seeds", p.noisy_seeds);
    maybe(j, "noisy_train_per_class", p.noisy_train_per_class);
    maybe(j, "noisy_eval_per_class", p.noisy_eval_per_class);
    maybe(j, "noisy_sigma", p.noisy_sigma);
    maybe(j, "multiclass_per_bus", p.multiclass_per_bus);
    maybe(j, "multiclass_benign", p.multiclass_benign);
    maybe(j, "localizer_epochs", p.localizer_epochs);
    maybe(j, "tune_trials", p.tune_trials);
}

inline void apply_check_overrides(const json& j, CheckThresholds& c) {
    maybe(j, "mae_clean_max", c.mae_clean_max);
    maybe(j, "mae_band_lo", c.mae_band_lo);
    maybe(j, "mae_band_hi", c.mae_band_hi);
    maybe(j, "mae_noise_gap", c.mae_noise_gap);
    maybe(j, "aggregation_mae_max", c.aggregation_mae_max);
    maybe(j, "sliding_m0_min", c.sliding_m0_min);
    maybe(j, "sliding_m5_min", c.sliding_m5_min);
    maybe(j, "cyclic_m5_min", c.cyclic_m5_min);
    maybe(j, "cyclic_m1_max", c.cyclic_m1_max);
    maybe(j, "step_tol", c.step_tol);
    maybe(j, "position_t1_min", c.position_t1_min);
    maybe(j, "position_t5_max", c.position_t5_max);
    maybe(j, "coupling_tol", c.coupling_tol);
    maybe(j, "baseline_lo", c.baseline_lo);
    maybe(j, "baseline_hi", c.baseline_hi);
    maybe(j, "multiclass_overall_min", c.multiclass_overall_min);
}

}  // namespace detail

// Loads the experiment config JSON. `scale_override`, when non-empty, wins
// over the file's scale. Relative grid paths resolve against the config
// file's parent directory.
inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::string& scale_override = "") {
    auto in = open_for_read(path, /*binary=*/false);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("experiment config: " + std::string(e.what()));
    }
    ExperimentConfig cfg;
    detail::maybe(j, "seed", cfg.seed);
    detail::maybe(j, "out", cfg.out_dir);
    detail::maybe(j, "scale", cfg.scale);
    if (!scale_override.empty()) cfg.scale = scale_override;
    if (cfg.scale != "desk" && cfg.scale != "full")
        throw FormatError("experiment config: scale must be 'desk' or 'full'");
    if (j.contains("grid")) {
        std::filesystem::path gp = j.at("grid").get<std::string>();
        if (gp.is_relative()) gp = std::filesystem::path(path).parent_path() / gp;
        cfg.grid_path = gp.string();
        cfg.grid = load_grid_config(cfg.grid_path);
    }
    cfg.profile = cfg.scale == "full" ? ScaleProfile::full() : ScaleProfile::desk();
    if (j.contains("profiles") && j.at("profiles").contains(cfg.scale))
        detail::apply_profile_overrides(j.at("profiles").at(cfg.scale), cfg.profile);
    if (j.contains("checks")) detail::apply_check_overrides(j.at("checks"), cfg.checks);
    return cfg;
}

struct CheckLine {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct TableResult {
    std::string table_id;
    json metrics;
    std::string text_table;
    std::vector<CheckLine> checks;
    double seconds = 0.0;

    bool checks_passed() const {
        return std::all_of(checks.begin(), checks.end(),
                           [](const CheckLine& c) { return c.passed; });
    }
};

class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        namespace fs = std::filesystem;
        fs::create_directories(fs::path(cfg_.out_dir) / "cache");
    }

    const ExperimentConfig& config() const { return cfg_; }

    TableResult run_table(const std::string& table_id) {
        auto t0 = std::chrono::steady_clock::now();
        TableResult res;
        if (table_id == "mae-noise") res = table_mae_noise();
        else if (table_id == "aggregation") res = table_aggregation();
        else if (table_id == "sample-size") res = table_sample_size();
        else if (table_id == "sliding") res = table_detection(DeploymentMode::sliding);
        else if (table_id == "cyclic") res = table_detection(DeploymentMode::cyclic);
        else if (table_id == "position") res = table_position();
        else if (table_id == "noisy-detection") res = table_noisy_detection();
        else if (table_id == "multiclass") res = table_multiclass();
        else throw std::invalid_argument("unknown table id '" + table_id + "'");
        res.table_id = table_id;
        res.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        persist(res);
        return res;
    }

    // -- shared artifact access ---------------------------------------------

    PredictionDataset training_data(int episodes, double sigma) {
        DatasetRecipe recipe;
        recipe.n_episodes = episodes;
        recipe.t_ep = cfg_.profile.t_ep;
        recipe.dt = cfg_.profile.dt;
        recipe.window_stride = cfg_.profile.window_stride;
        recipe.sigma = sigma;
        return generate_dataset(cfg_.grid, recipe, derive_seed(cfg_.seed, "episodes"));
    }

    // Trains or loads from the on-disk cache.
    PredictorModel obtain_predictor(PredictorKind kind, int units, int episodes,
                                    double sigma, int epochs) {
        PredictorConfig pc;
        pc.kind = kind;
        pc.units = units;
        pc.epochs = epochs;
        pc.n_f = 2 * cfg_.grid.n_buses;
        pc.lr = 0.001;
        pc.seed = derive_seed(cfg_.seed, std::string("predictor-init-") + to_string(kind),
                              static_cast<std::uint64_t>(units));
        std::string key = pc.descriptor() + "|grid=" + cfg_.grid.digest() + "|eps=" +
                          std::to_string(episodes) + "|sigma=" + format_double(sigma) +
                          "|stride=" + std::to_string(cfg_.profile.window_stride) +
                          "|dseed=" + std::to_string(derive_seed(cfg_.seed, "episodes"));
        char digest[17];
        std::snprintf(digest, sizeof(digest), "%016llx",
                      static_cast<unsigned long long>(hash_tag(key)));
        namespace fs = std::filesystem;
        fs::path path = fs::path(cfg_.out_dir) / "cache" / ("pred_" + std::string(digest) + ".ckpt");
        if (fs::exists(path)) return load_predictor(path.string());
        PredictionDataset ds = training_data(episodes, sigma);
        PredictorModel model = train_predictor(pc, ds, cfg_.grid);
        save_predictor(model, path.string());
        return model;
    }

    WindowSetSpec base_window_spec(DeploymentMode mode) const {
        WindowSetSpec spec;
        spec.mode = mode;
        spec.start_min = cfg_.profile.start_min;
        spec.start_max = cfg_.profile.start_max;
        spec.dt = cfg_.profile.dt;
        return spec;
    }

    DetectorHyper detector_hyper_for(int units) const {
        DetectorHyper h;  // published tuning results per predictor
        if (units == cfg_.profile.mid_units) {
            h.hidden = {20};
            h.lr = 0.00376;
        } else {
            h.hidden = {30};
            h.lr = 0.0034;
        }
        h.epochs = cfg_.profile.detector_epochs;
        return h;
    }

    // -- tables ---------------------------------------------------------------

    TableResult table_mae_noise() {
        TableResult res;
        const auto& p = cfg_.profile;
        json rows = json::array();
        std::vector<double> mae_by_level;
        for (std::size_t i = 0; i < p.noise_levels.size(); ++i) {
            double sigma = p.noise_levels[i];
            PredictionDataset ds = training_data(p.mae_noise_episodes, sigma);
            PredictorConfig pc;
            pc.kind = PredictorKind::lstm_ae;
            pc.units = p.small_units;
            pc.epochs = p.small_epochs;
            pc.seed = derive_seed(cfg_.seed, "mae-noise", i);
            PredictorModel model = train_predictor(pc, ds, cfg_.grid);
            PredictionMetrics m = evaluate_predictor(model, ds.samples, ds.val_indices);
            mae_by_level.push_back(m.mae_theta);
            rows.push_back({{"sigma", sigma},
                            {"mae_theta", m.mae_theta},
                            {"mre_theta", m.mre_theta},
                            {"mae_omega", m.mae_omega},
                            {"mre_omega", m.mre_omega},
                            {"skipped_mre", m.skipped_mre},
                            {"val_loss", model.history_val.back()},
                            {"episodes", p.mae_noise_episodes},
                            {"units", p.small_units}});
        }
        res.metrics = {{"rows", rows}};
        std::ostringstream table;
        table << format_row({"sigma", "MAE(theta)", "MRE(theta)", "MAE(omega)", "MRE(omega)"});
        for (const auto& r : rows)
            table << format_row({format_double(r.at("sigma").get<double>()),
                                 format_sci(r.at("mae_theta").get<double>()),
                                 format_sci(r.at("mre_theta").get<double>()),
                                 format_sci(r.at("mae_omega").get<double>()),
                                 format_sci(r.at("mre_omega").get<double>())});
        res.text_table = table.str();

        const auto& c = cfg_.checks;
        for (std::size_t i = 0; i < p.noise_levels.size(); ++i) {
            double sigma = p.noise_levels[i];
            double mae = mae_by_level[i];
            if (sigma == 0.0) {
                add_check(res, "mae_theta(sigma=0) <= " + format_double(c.mae_clean_max),
                          mae <= c.mae_clean_max, format_sci(mae));
            } else {
                bool ok = mae >= c.mae_band_lo * sigma && mae <= c.mae_band_hi * sigma;
                add_check(res,
                          "mae_theta(sigma=" + format_double(sigma) + ") in [" +
                              format_double(c.mae_band_lo) + "s, " +
                              format_double(c.mae_band_hi) + "s]",
                          ok, format_sci(mae));
            }
        }
        if (p.noise_levels.size() >= 2 && p.noise_levels[0] == 0.0 && p.noise_levels[1] > 0.0)
            add_check(res, "clean MAE at least " + format_double(cfg_.checks.mae_noise_gap) +
                               "x below sigma=" + format_double(p.noise_levels[1]),
                      mae_by_level[0] * cfg_.checks.mae_noise_gap <= mae_by_level[1],
                      format_sci(mae_by_level[0]) + " vs " + format_sci(mae_by_level[1]));
        return res;
    }

    TableResult table_aggregation() {
        TableResult res;
        const auto& p = cfg_.profile;
        PredictionDataset ds = training_data(p.aggregation_episodes, 0.0);
        json rows = json::array();
        for (auto agg : {Aggregation::mean, Aggregation::sum, Aggregation::max}) {
            PredictorConfig pc;
            pc.kind = PredictorKind::gnn_lstm;
            pc.units = p.small_units;
            pc.epochs = p.small_epochs;
            pc.aggregation = agg;
            pc.seed = derive_seed(cfg_.seed, "aggregation", static_cast<std::uint64_t>(agg));
            PredictorModel model = train_predictor(pc, ds, cfg_.grid);
            PredictionMetrics m = evaluate_predictor(model, ds.samples, ds.val_indices);
            double mae = 0.5 * (m.mae_theta + m.mae_omega);
            rows.push_back({{"aggregation", to_string(agg)},
                            {"mae", mae},
                            {"mae_theta", m.mae_theta},
                            {"mae_omega", m.mae_omega},
                            {"mse", model.history_val.back()},
                            {"val_loss", model.history_val.back()}});
        }
        res.metrics = {{"rows", rows}};
        std::ostringstream table;
        table << format_row({"aggregation", "MAE", "MSE", "val loss"});
        for (const auto& r : rows)
            table << format_row({r.at("aggregation").get<std::string>(),
                                 format_sci(r.at("mae").get<double>()),
                                 format_sci(r.at("mse").get<double>()),
                                 format_sci(r.at("val_loss").get<double>())});
        res.text_table = table.str();
        for (const auto& r : rows)
            add_check(res, r.at("aggregation").get<std::string>() + " MAE below bound",
                      r.at("mae").get<double>() <= cfg_.checks.aggregation_mae_max,
                      format_sci(r.at("mae").get<double>()));
        return res;
    }

    TableResult table_sample_size() {
        TableResult res;
        const auto& p = cfg_.profile;
        json rows = json::array();
        std::map<int, double> lstm_mae, gnn_mae;
        for (int n : p.sample_sizes) {
            json row{{"sample", n}};
            for (bool noisy : {false, true}) {
                if (noisy && !p.sample_size_noisy_columns) continue;
                double sigma = noisy ? p.sample_size_sigma : 0.0;
                PredictionDataset ds = training_data(n, sigma);
                for (auto kind : {PredictorKind::lstm_ae, PredictorKind::gnn_lstm}) {
                    PredictorConfig pc;
                    pc.kind = kind;
                    pc.units = p.small_units;
                    pc.epochs = p.small_epochs;
                    pc.aggregation = Aggregation::max;
                    pc.seed = derive_seed(cfg_.seed, "sample-size",
                                          static_cast<std::uint64_t>(n) * 4 +
                                              (noisy ? 2 : 0) + (kind == PredictorKind::gnn_lstm));
                    PredictorModel model = train_predictor(pc, ds, cfg_.grid);
                    PredictionMetrics m = evaluate_predictor(model, ds.samples, ds.val_indices);
                    double mae = 0.5 * (m.mae_theta + m.mae_omega);
                    std::string col = std::string(kind == PredictorKind::lstm_ae ? "lstm" : "gnn") +
                                      (noisy ? "_noisy" : "");
                    row[col] = mae;
                    if (!noisy && kind == PredictorKind::lstm_ae) lstm_mae[n] = mae;
                    if (!noisy && kind == PredictorKind::gnn_lstm) gnn_mae[n] = mae;
                }
            }
            rows.push_back(row);
        }
        res.metrics = {{"rows", rows}};
        std::ostringstream table;
        table << format_row({"sample", "LSTM", "LSTM(N)", "GNN-LSTM", "GNN-LSTM(N)"});
        for (const auto& r : rows) {
            auto cell = [&](const char* k) {
                return r.contains(k) ? format_sci(r.at(k).get<double>()) : std::string("-");
            };
            table << format_row({std::to_string(r.at("sample").get<int>()), cell("lstm"),
                                 cell("lstm_noisy"), cell("gnn"), cell("gnn_noisy")});
        }
        res.text_table = table.str();

        for (int n : p.sample_sizes)
            add_check(res, "gnn < lstm at " + std::to_string(n) + " episodes (noiseless)",
                      gnn_mae[n] < lstm_mae[n],
                      format_sci(gnn_mae[n]) + " vs " + format_sci(lstm_mae[n]));
        bool monotone = true;
        for (std::size_t i = 1; i < p.sample_sizes.size(); ++i)
            monotone &= gnn_mae[p.sample_sizes[i]] < gnn_mae[p.sample_sizes[i - 1]];
        add_check(res, "gnn MAE decreases with sample size", monotone, "");
        return res;
    }

    struct DetectionArtifacts {
        std::vector<std::string> names;  // per predictor column
        std::vector<int> units;
        std::vector<PredictorModel> predictors;
        std::vector<TrainedDetector> detectors;
    };

    // Shared by the sliding and cyclic tables; the cyclic detector for the
    // big predictor is additionally cached for the position study. Column 0
    // is the big LSTM, column 1 the mid LSTM, column 2 the GNN-LSTM.
    DetectionArtifacts detection_artifacts(DeploymentMode mode) {
        const auto& p = cfg_.profile;
        DetectionArtifacts art;
        art.units = {p.big_units, p.mid_units, p.small_units};
        art.names = {"lstm" + std::to_string(p.big_units),
                     "lstm" + std::to_string(p.mid_units),
                     "gnn" + std::to_string(p.small_units)};
        art.predictors.push_back(obtain_predictor(PredictorKind::lstm_ae, p.big_units,
                                                  p.predictor_episodes, 0.0,
                                                  p.predictor_epochs));
        art.predictors.push_back(obtain_predictor(PredictorKind::lstm_ae, p.mid_units,
                                                  p.predictor_episodes, 0.0,
                                                  p.predictor_epochs));
        art.predictors.push_back(obtain_predictor(PredictorKind::gnn_lstm, p.small_units,
                                                  p.predictor_episodes, 0.0,
                                                  p.predictor_epochs));

        WindowSetSpec train_spec = base_window_spec(mode);
        train_spec.n_benign = p.detect_train_per_class;
        train_spec.n_adversarial = p.detect_train_per_class;
        auto train_windows = build_detection_dataset(
            cfg_.grid, train_spec, derive_seed(cfg_.seed, "detect-train", static_cast<int>(mode)));
        std::vector<int> labels;
        labels.reserve(train_windows.size());
        for (const auto& w : train_windows) labels.push_back(w.adversarial ? 1 : 0);

        for (std::size_t i = 0; i < art.predictors.size(); ++i) {
            MatrixXd errors = error_matrix(art.predictors[i], train_windows);
            TrainedDetector det = train_binary_detector(
                errors, labels, detector_hyper_for(art.units[i]),
                derive_seed(cfg_.seed, "detector", static_cast<std::uint64_t>(art.units[i]) * 2 +
                                                       static_cast<int>(mode)),
                art.predictors[i].id());
            if (mode == DeploymentMode::cyclic && i == 0)
                save_detector(det.model, cyclic_detector_path());
            art.detectors.push_back(std::move(det));
        }
        return art;
    }

    TableResult table_detection(DeploymentMode mode) {
        TableResult res;
        const auto& p = cfg_.profile;
        DetectionArtifacts art = detection_artifacts(mode);

        const int m_lo = mode == DeploymentMode::sliding ? 0 : 1;
        json rows = json::array();
        std::map<int, std::vector<double>> acc;  // m -> per-predictor accuracy
        for (int m = m_lo; m <= 5; ++m) {
            WindowSetSpec es = base_window_spec(mode);
            es.n_benign = p.eval_per_class;
            es.n_adversarial = p.eval_per_class;
            es.m_fixed = m;
            auto windows = build_detection_dataset(
                cfg_.grid, es,
                derive_seed(cfg_.seed, "detect-eval", static_cast<std::uint64_t>(m) * 2 +
                                                          static_cast<int>(mode)));
            json row{{"m", m}};
            for (std::size_t i = 0; i < art.predictors.size(); ++i) {
                auto metrics =
                    evaluate_detector(art.detectors[i].model, art.predictors[i], windows,
                                      GroupBy::none);
                const DetectionMetrics& dm = metrics.at(0);
                acc[m].push_back(dm.accuracy);
                const std::string& col = art.names[i];
                row[col] = {{"accuracy", dm.accuracy},
                            {"f1", dm.f1},
                            {"precision", dm.precision},
                            {"recall", dm.recall},
                            {"counts",
                             {{"tp", dm.counts.tp},
                              {"fp", dm.counts.fp},
                              {"fn", dm.counts.fn},
                              {"tn", dm.counts.tn}}}};
            }
            rows.push_back(row);

            if (mode == DeploymentMode::sliding && m == 1)
                export_error_vectors(windows, art.predictors[0], table_dir("sliding") + "/errors.csv");
        }

        // label-shuffle baseline on the big predictor (random-guess sanity)
        double baseline_acc;
        {
            WindowSetSpec bs = base_window_spec(mode);
            bs.n_benign = std::min(p.detect_train_per_class, 3000);
            bs.n_adversarial = bs.n_benign;
            auto windows = build_detection_dataset(cfg_.grid, bs,
                                                   derive_seed(cfg_.seed, "baseline-windows"));
            MatrixXd errors = error_matrix(art.predictors[0], windows);
            std::vector<int> labels;
            for (const auto& w : windows) labels.push_back(w.adversarial ? 1 : 0);
            auto rng = make_rng(derive_seed(cfg_.seed, "baseline-shuffle"));
            std::shuffle(labels.begin(), labels.end(), rng);
            TrainedDetector shuffled =
                train_binary_detector(errors, labels, detector_hyper_for(p.big_units),
                                      derive_seed(cfg_.seed, "baseline-det"));
            baseline_acc = shuffled.test_accuracy;
        }

        json records = json::array();
        for (const auto& r : rows)
            for (std::size_t i = 0; i < art.names.size(); ++i) {
                const json& cell = r.at(art.names[i]);
                records.push_back({{"predictor", art.names[i]},
                                   {"mode", to_string(mode)},
                                   {"m", r.at("m")},
                                   {"accuracy", cell.at("accuracy")},
                                   {"f1", cell.at("f1")},
                                   {"precision", cell.at("precision")},
                                   {"recall", cell.at("recall")},
                                   {"counts", cell.at("counts")}});
            }
        res.metrics = {{"mode", to_string(mode)},
                       {"rows", rows},
                       {"records", records},
                       {"baseline_shuffled_accuracy", baseline_acc},
                       {"columns", art.names}};

        std::ostringstream table;
        {
            std::vector<std::string> header{"m"};
            header.insert(header.end(), art.names.begin(), art.names.end());
            table << format_row(header);
        }
        for (const auto& r : rows) {
            std::vector<std::string> cells{std::to_string(r.at("m").get<int>())};
            for (const auto& name : art.names)
                cells.push_back(format_fixed(r.at(name).at("accuracy").get<double>()));
            table << format_row(cells);
        }
        res.text_table = table.str();

        const auto& c = cfg_.checks;
        auto big0 = [&](int m) { return acc.at(m)[0]; };
        if (mode == DeploymentMode::sliding) {
            add_check(res, "accuracy(m=0) >= " + format_double(c.sliding_m0_min),
                      big0(0) >= c.sliding_m0_min, format_fixed(big0(0)));
            add_check(res, "accuracy(m=5) >= " + format_double(c.sliding_m5_min),
                      big0(5) >= c.sliding_m5_min, format_fixed(big0(5)));
            bool steps_ok = true;
            for (int m = m_lo + 1; m <= 5; ++m)
                steps_ok &= big0(m) <= big0(m - 1) + c.step_tol;
            add_check(res, "non-increasing in m within " + format_double(c.step_tol),
                      steps_ok, "");
        } else {
            add_check(res, "accuracy(m=5) >= " + format_double(c.cyclic_m5_min),
                      big0(5) >= c.cyclic_m5_min, format_fixed(big0(5)));
            add_check(res, "accuracy(m=1) <= " + format_double(c.cyclic_m1_max),
                      big0(1) <= c.cyclic_m1_max, format_fixed(big0(1)));
            bool steps_ok = true;
            for (int m = m_lo + 1; m <= 5; ++m)
                steps_ok &= big0(m) >= big0(m - 1) - c.step_tol;
            add_check(res, "non-decreasing in m within " + format_double(c.step_tol),
                      steps_ok, "");
        }
        {
            double mean_big = 0.0, mean_mid = 0.0;
            for (const auto& [m, v] : acc) {
                mean_big += v[0];
                mean_mid += v[1];
            }
            mean_big /= static_cast<double>(acc.size());
            mean_mid /= static_cast<double>(acc.size());
            add_check(res, "bigger predictor helps: mean acc within " +
                               format_double(c.coupling_tol),
                      mean_big >= mean_mid - c.coupling_tol,
                      format_fixed(mean_big) + " vs " + format_fixed(mean_mid));
        }
        add_check(res, "label-shuffled baseline near 0.5",
                  baseline_acc >= c.baseline_lo && baseline_acc <= c.baseline_hi,
                  format_fixed(baseline_acc));
        return res;
    }

    TableResult table_position() {
        TableResult res;
        const auto& p = cfg_.profile;
        PredictorModel predictor = obtain_predictor(PredictorKind::lstm_ae, p.big_units,
                                                    p.predictor_episodes, 0.0,
                                                    p.predictor_epochs);
        DetectorModel detector;
        namespace fs = std::filesystem;
        if (fs::exists(cyclic_detector_path())) {
            detector = load_detector(cyclic_detector_path());
        } else {
            DetectionArtifacts art = detection_artifacts(DeploymentMode::cyclic);
            detector = art.detectors[0].model;
        }

        json rows = json::array();
        std::map<int, double> acc;
        for (int k = 1; k <= 5; ++k) {
            WindowSetSpec es = base_window_spec(DeploymentMode::cyclic);
            es.n_benign = p.eval_per_class;
            es.n_adversarial = p.eval_per_class;
            es.position_fixed = k;
            auto windows = build_detection_dataset(
                cfg_.grid, es, derive_seed(cfg_.seed, "position-eval", static_cast<std::uint64_t>(k)));
            auto metrics = evaluate_detector(detector, predictor, windows, GroupBy::position);
            const DetectionMetrics& dm = metrics.at(k);
            acc[k] = dm.accuracy;
            rows.push_back({{"position", "t-" + std::to_string(k)},
                            {"accuracy", dm.accuracy},
                            {"f1", dm.f1},
                            {"precision", dm.precision},
                            {"recall", dm.recall},
                            {"counts",
                             {{"tp", dm.counts.tp},
                              {"fp", dm.counts.fp},
                              {"fn", dm.counts.fn},
                              {"tn", dm.counts.tn}}}});
        }
        json records = json::array();
        for (const auto& r : rows)
            records.push_back({{"predictor", "lstm" + std::to_string(p.big_units)},
                               {"mode", "cyclic"},
                               {"position", r.at("position")},
                               {"accuracy", r.at("accuracy")},
                               {"f1", r.at("f1")},
                               {"precision", r.at("precision")},
                               {"recall", r.at("recall")},
                               {"counts", r.at("counts")}});
        res.metrics = {{"rows", rows}, {"records", records}};
        std::ostringstream table;
        table << format_row({"position", "accuracy", "F1", "precision", "recall"});
        for (const auto& r : rows)
            table << format_row({r.at("position").get<std::string>(),
                                 format_fixed(r.at("accuracy").get<double>()),
                                 format_fixed(r.at("f1").get<double>()),
                                 format_fixed(r.at("precision").get<double>()),
                                 format_fixed(r.at("recall").get<double>())});
        res.text_table = table.str();

        const auto& c = cfg_.checks;
        add_check(res, "accuracy(t-1) >= " + format_double(c.position_t1_min),
                  acc[1] >= c.position_t1_min, format_fixed(acc[1]));
        add_check(res, "accuracy(t-5) <= " + format_double(c.position_t5_max),
                  acc[5] <= c.position_t5_max, format_fixed(acc[5]));
        add_check(res, "strictly decreasing over {t-1, t-3, t-5}",
                  acc[1] > acc[3] && acc[3] > acc[5],
                  format_fixed(acc[1]) + " > " + format_fixed(acc[3]) + " > " +
                      format_fixed(acc[5]));
        return res;
    }

    TableResult table_noisy_detection() {
        TableResult res;
        const auto& p = cfg_.profile;
        PredictorModel clean_pred = obtain_predictor(PredictorKind::lstm_ae, p.big_units,
                                                     p.predictor_episodes, 0.0,
                                                     p.predictor_epochs);
        PredictorModel noisy_pred = obtain_predictor(PredictorKind::lstm_ae, p.big_units,
                                                     p.predictor_episodes, p.noisy_sigma,
                                                     p.predictor_epochs);

        json rows = json::array();
        std::map<std::pair<int, int>, std::vector<double>> acc;  // (mode, noisy) -> runs
        for (auto mode : {DeploymentMode::sliding, DeploymentMode::cyclic}) {
            for (int noisy = 0; noisy <= 1; ++noisy) {
                const PredictorModel& pred = noisy ? noisy_pred : clean_pred;
                for (int run = 0; run < p.noisy_seeds; ++run) {
                    // the base simulations stay fixed; the randomness is the
                    // noise realization and the detector training
                    WindowSetSpec ts = base_window_spec(mode);
                    ts.n_benign = p.noisy_train_per_class;
                    ts.n_adversarial = p.noisy_train_per_class;
                    ts.sigma = noisy ? p.noisy_sigma : 0.0;
                    ts.noise_master = derive_seed(cfg_.seed, "noisy-train-noise",
                                                  static_cast<std::uint64_t>(run));
                    auto train_windows = build_detection_dataset(
                        cfg_.grid, ts,
                        derive_seed(cfg_.seed, "noisy-train", static_cast<int>(mode)));
                    MatrixXd errors = error_matrix(pred, train_windows);
                    std::vector<int> labels;
                    for (const auto& w : train_windows) labels.push_back(w.adversarial ? 1 : 0);
                    TrainedDetector det = train_binary_detector(
                        errors, labels, detector_hyper_for(p.big_units),
                        derive_seed(cfg_.seed, "noisy-det",
                                    static_cast<std::uint64_t>(run) * 4 +
                                        static_cast<std::uint64_t>(mode) * 2 + noisy),
                        pred.id());

                    WindowSetSpec es = base_window_spec(mode);
                    es.n_benign = p.noisy_eval_per_class;
                    es.n_adversarial = p.noisy_eval_per_class;
                    es.sigma = ts.sigma;
                    es.noise_master = derive_seed(cfg_.seed, "noisy-eval-noise",
                                                  static_cast<std::uint64_t>(run));
                    auto eval_windows = build_detection_dataset(
                        cfg_.grid, es,
                        derive_seed(cfg_.seed, "noisy-eval", static_cast<int>(mode)));
                    auto metrics = evaluate_detector(det.model, pred, eval_windows, GroupBy::none);
                    double a = metrics.at(0).accuracy;
                    acc[{static_cast<int>(mode), noisy}].push_back(a);
                    rows.push_back({{"mode", to_string(mode)},
                                    {"sigma", noisy ? p.noisy_sigma : 0.0},
                                    {"run", run},
                                    {"accuracy", a}});
                }
            }
        }

        json aggregates = json::array();
        std::map<std::pair<int, int>, std::pair<double, double>> stats;
        for (const auto& [key, runs] : acc) {
            double mean = std::accumulate(runs.begin(), runs.end(), 0.0) /
                          static_cast<double>(runs.size());
            double var = 0.0;
            for (double a : runs) var += (a - mean) * (a - mean);
            double sd = std::sqrt(var / static_cast<double>(runs.size()));
            stats[key] = {mean, sd};
            aggregates.push_back(
                {{"mode", to_string(static_cast<DeploymentMode>(key.first))},
                 {"sigma", key.second ? p.noisy_sigma : 0.0},
                 {"mean_accuracy", mean},
                 {"std_accuracy", sd}});
        }
        res.metrics = {{"rows", rows}, {"aggregates", aggregates}};

        std::ostringstream table;
        table << format_row({"mode", "sigma", "mean acc", "std"});
        for (const auto& a : aggregates)
            table << format_row({a.at("mode").get<std::string>(),
                                 format_double(a.at("sigma").get<double>()),
                                 format_fixed(a.at("mean_accuracy").get<double>()),
                                 format_fixed(a.at("std_accuracy").get<double>())});
        res.text_table = table.str();

        for (auto mode : {DeploymentMode::sliding, DeploymentMode::cyclic}) {
            auto clean = stats[{static_cast<int>(mode), 0}];
            auto noisy = stats[{static_cast<int>(mode), 1}];
            add_check(res, std::string(to_string(mode)) + ": noisy mean below clean mean",
                      noisy.first < clean.first,
                      format_fixed(noisy.first) + " vs " + format_fixed(clean.first));
            add_check(res, std::string(to_string(mode)) + ": noisy std above clean std",
                      noisy.second > clean.second,
                      format_sci(noisy.second) + " vs " + format_sci(clean.second));
        }
        return res;
    }

    TableResult table_multiclass() {
        TableResult res;
        const auto& p = cfg_.profile;
        PredictorModel predictor = obtain_predictor(PredictorKind::lstm_ae, p.big_units,
                                                    p.predictor_episodes, 0.0,
                                                    p.predictor_epochs);
        const int n_buses = cfg_.grid.n_buses;
        const int none_class = n_buses;

        std::vector<DetectionWindow> windows;
        std::vector<int> labels;
        {
            WindowSetSpec bs = base_window_spec(DeploymentMode::cyclic);
            bs.n_benign = p.multiclass_benign;
            bs.n_adversarial = 0;
            auto benign = build_detection_dataset(cfg_.grid, bs,
                                                  derive_seed(cfg_.seed, "multiclass-benign"));
            for (auto& w : benign) {
                windows.push_back(std::move(w));
                labels.push_back(none_class);
            }
        }
        for (int bus = 0; bus < n_buses; ++bus) {
            WindowSetSpec as = base_window_spec(DeploymentMode::cyclic);
            as.n_benign = 0;
            as.n_adversarial = p.multiclass_per_bus;
            as.m_fixed = 5;  // five adversarial timesteps in the window
            as.attacked_buses = {bus};
            auto hit = build_detection_dataset(
                cfg_.grid, as, derive_seed(cfg_.seed, "multiclass-bus", static_cast<std::uint64_t>(bus)));
            for (auto& w : hit) {
                windows.push_back(std::move(w));
                labels.push_back(bus);
            }
        }

        MatrixXd errors = error_matrix(predictor, windows);
        DetectorHyper hyper;
        hyper.hidden = {100};
        hyper.lr = 0.0005;
        hyper.epochs = p.localizer_epochs;
        TrainedDetector localizer = train_multiclass_localizer(
            errors, labels, n_buses + 1, hyper, derive_seed(cfg_.seed, "localizer"),
            predictor.id());

        // held-out evaluation
        std::vector<int> actual, predicted;
        MatrixXd test_err(static_cast<Eigen::Index>(localizer.test_idx.size()), errors.cols());
        for (std::size_t i = 0; i < localizer.test_idx.size(); ++i) {
            test_err.row(static_cast<Eigen::Index>(i)) =
                errors.row(static_cast<Eigen::Index>(localizer.test_idx[i]));
            actual.push_back(labels[localizer.test_idx[i]]);
        }
        predicted = localizer.model.localize_batch(test_err);
        MulticlassMetrics mm = multiclass_metrics(actual, predicted, n_buses + 1);

        json rows = json::array();
        for (int bus = 0; bus < n_buses; ++bus) {
            const auto& cm = mm.per_class[static_cast<std::size_t>(bus)];
            rows.push_back({{"bus", bus},
                            {"f1", cm.f1},
                            {"precision", cm.precision},
                            {"recall", cm.recall},
                            {"support", cm.support}});
        }
        const auto& none = mm.per_class[static_cast<std::size_t>(none_class)];
        json records = json::array();
        for (const auto& r : rows)
            records.push_back({{"predictor", "lstm" + std::to_string(p.big_units)},
                               {"mode", "cyclic"},
                               {"bus", r.at("bus")},
                               {"f1", r.at("f1")},
                               {"precision", r.at("precision")},
                               {"recall", r.at("recall")}});
        res.metrics = {{"rows", rows},
                       {"records", records},
                       {"overall_accuracy", mm.accuracy},
                       {"no_attack_f1", none.f1}};
        std::ostringstream table;
        table << format_row({"bus", "F1", "precision", "recall"});
        for (const auto& r : rows)
            table << format_row({std::to_string(r.at("bus").get<int>()),
                                 format_fixed(r.at("f1").get<double>()),
                                 format_fixed(r.at("precision").get<double>()),
                                 format_fixed(r.at("recall").get<double>())});
        table << "overall accuracy " << format_fixed(mm.accuracy) << "\n";
        res.text_table = table.str();

        const auto& c = cfg_.checks;
        add_check(res, "overall accuracy >= " + format_double(c.multiclass_overall_min),
                  mm.accuracy >= c.multiclass_overall_min, format_fixed(mm.accuracy));
        double f1_9 = mm.per_class[9].f1;
        bool min9 = true;
        std::vector<double> bus_f1;
        for (int bus = 0; bus < n_buses; ++bus) {
            bus_f1.push_back(mm.per_class[static_cast<std::size_t>(bus)].f1);
            if (bus != 9) min9 &= f1_9 < mm.per_class[static_cast<std::size_t>(bus)].f1;
        }
        add_check(res, "bus 9 has the minimum F1", min9, format_fixed(f1_9));
        std::vector<double> sorted = bus_f1;
        std::sort(sorted.begin(), sorted.end());
        double median = 0.5 * (sorted[4] + sorted[5]);
        add_check(res, "bus 7 F1 at or above the median", bus_f1[7] >= median,
                  format_fixed(bus_f1[7]) + " vs median " + format_fixed(median));
        return res;
    }

    std::string table_dir(const std::string& table_id) const {
        namespace fs = std::filesystem;
        fs::path dir = fs::path(cfg_.out_dir) / table_id;
        fs::create_directories(dir);
        return dir.string();
    }

private:
    ExperimentConfig cfg_;

    std::string cyclic_detector_path() const {
        return (std::filesystem::path(cfg_.out_dir) / "cache" / "detector_cyclic_big.ckpt")
            .string();
    }

    static void add_check(TableResult& res, const std::string& name, bool passed,
                          const std::string& detail) {
        res.checks.push_back({name, passed, detail});
    }

    static std::string format_sci(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3e", v);
        return buf;
    }
    static std::string format_fixed(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return buf;
    }
    static std::string format_row(const std::vector<std::string>& cells) {
        std::ostringstream os;
        for (const auto& c : cells) {
            os << c;
            for (std::size_t i = c.size(); i < 14; ++i) os << ' ';
        }
        os << '\n';
        return os.str();
    }

    void persist(const TableResult& res) {
        std::string dir = table_dir(res.table_id);
        {
            auto out = open_for_write(dir + "/metrics.json", /*binary=*/false);
            json doc = {{"table", res.table_id},
                        {"seed", cfg_.seed},
                        {"scale", cfg_.scale},
                        {"grid_digest", cfg_.grid.digest()},
                        {"seconds", res.seconds},
                        {"metrics", res.metrics}};
            json checks = json::array();
            for (const auto& c : res.checks)
                checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
            doc["checks"] = checks;
            out << doc.dump(2) << '\n';
        }
        {
            auto out = open_for_write(dir + "/table.txt", /*binary=*/false);
            out << res.text_table;
        }
    }
};

}  // namespace fdialab

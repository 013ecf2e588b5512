#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "fdialab/detect.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/metrics.hpp"
#include "fdialab/predictor.hpp"

using namespace fdialab;

namespace {

// Small but real predictor shared by the end-to-end detection tests.
const PredictorModel& test_predictor() {
    static PredictorModel model = [] {
        GridModel g = default_grid();
        DatasetRecipe recipe;
        recipe.n_episodes = 150;
        recipe.t_ep = 500;
        recipe.window_stride = 6;
        PredictionDataset ds = generate_dataset(g, recipe, 4242);
        PredictorConfig cfg;
        cfg.kind = PredictorKind::lstm_ae;
        cfg.units = 25;
        cfg.epochs = 25;
        cfg.seed = 7;
        return train_predictor(cfg, ds, g);
    }();
    return model;
}

DetectorModel fixed_logit_detector(double logit_bias) {
    DetectorModel d;
    d.mlp = Mlp(20, {}, 1, 0);
    d.mlp.layers[0].w.setZero();
    d.mlp.layers[0].b(0, 0) = logit_bias;
    d.feat_mean = VectorXd::Zero(20);
    d.feat_scale = VectorXd::Ones(20);
    return d;
}

}  // namespace

TEST_CASE("window sets honor counts, labels and mode constraints") {
    GridModel g = default_grid();
    WindowSetSpec spec;
    spec.mode = DeploymentMode::sliding;
    spec.n_benign = 100;
    spec.n_adversarial = 100;
    auto windows = build_detection_dataset(g, spec, 11);
    REQUIRE(windows.size() == 200);

    int benign = 0, adversarial = 0;
    for (const auto& w : windows) {
        CHECK(w.consistent(5));
        if (!w.adversarial) {
            ++benign;
            CHECK(w.adversarial_positions.empty());
            CHECK(w.m == 0);
        } else {
            ++adversarial;
            REQUIRE_FALSE(w.adversarial_positions.empty());
            // sliding: the inference step is always perturbed
            CHECK(w.adversarial_positions.back() == 5);
            CHECK(w.attacked_bus == 7);
            CHECK(w.m >= 0);
            CHECK(w.m <= 5);
        }
    }
    CHECK(benign == 100);
    CHECK(adversarial == 100);
}

TEST_CASE("cyclic windows never flag the inference step") {
    GridModel g = default_grid();
    WindowSetSpec spec;
    spec.mode = DeploymentMode::cyclic;
    spec.n_benign = 0;
    spec.n_adversarial = 150;
    auto windows = build_detection_dataset(g, spec, 12);
    bool saw_m5 = false;
    for (const auto& w : windows) {
        REQUIRE(w.adversarial);
        CHECK(w.m >= 1);
        CHECK(w.m <= 5);
        for (int p : w.adversarial_positions) CHECK(p < 5);
        if (w.m == 5) {
            saw_m5 = true;
            CHECK(w.adversarial_positions == std::vector<int>{0, 1, 2, 3, 4});
        }
    }
    CHECK(saw_m5);
}

TEST_CASE("fixed m and fixed position are honored; infeasible specs rejected") {
    GridModel g = default_grid();
    WindowSetSpec spec;
    spec.mode = DeploymentMode::cyclic;
    spec.n_adversarial = 30;
    spec.m_fixed = 5;
    for (const auto& w : build_detection_dataset(g, spec, 13)) {
        CHECK(w.m == 5);
        CHECK(w.adversarial_positions == std::vector<int>{0, 1, 2, 3, 4});
    }

    spec.m_fixed = -1;
    spec.position_fixed = 3;  // one adversarial step at t-3
    for (const auto& w : build_detection_dataset(g, spec, 14)) {
        CHECK(w.m == 1);
        CHECK(w.adversarial_positions == std::vector<int>{2});
    }

    WindowSetSpec bad = spec;
    bad.position_fixed = -1;
    bad.m_fixed = 0;  // cyclic window with no adversarial step is infeasible
    CHECK_THROWS_AS(build_detection_dataset(g, bad, 15), std::invalid_argument);

    WindowSetSpec bad2;
    bad2.n_benign = 0;
    bad2.n_adversarial = 0;
    CHECK_THROWS_AS(build_detection_dataset(g, bad2, 16), std::invalid_argument);
}

TEST_CASE("window construction is deterministic in the master seed") {
    GridModel g = default_grid();
    WindowSetSpec spec;
    spec.n_benign = 20;
    spec.n_adversarial = 20;
    auto a = build_detection_dataset(g, spec, 77);
    auto b = build_detection_dataset(g, spec, 77);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].observation == b[i].observation);
        CHECK(a[i].inference == b[i].inference);
        CHECK(a[i].adversarial_positions == b[i].adversarial_positions);
    }
}

TEST_CASE("prediction error basics") {
    GridModel g = default_grid();
    PredictorConfig cfg;
    cfg.units = 4;
    PredictorModel zero = PredictorModel::make(cfg, g);
    for (auto& p : zero.params()) p.value->setZero();

    DetectionWindow w;
    w.observation = MatrixXd::Zero(5, 20);
    w.inference = VectorXd::Zero(20);
    ErrorVector e = prediction_error(zero, w);
    CHECK(e.e.cwiseAbs().maxCoeff() == 0.0);  // predictor exactly right

    w.inference[0] = 1.0;  // unit difference on one feature
    e = prediction_error(zero, w);
    CHECK(e.e[0] == 1.0);
    CHECK(e.e.tail(19).cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.e.minCoeff() >= 0.0);
}

TEST_CASE("detection metrics hand values and exact naive-oracle agreement") {
    ConfusionCounts hand{3, 1, 1, 5};
    DetectionMetrics m = metrics_from_confusion(hand);
    CHECK(m.precision == 0.75);
    CHECK(m.recall == 0.75);
    CHECK(m.f1 == Catch::Approx(0.75).epsilon(1e-15));
    CHECK(m.accuracy == 0.8);

    DetectionMetrics perfect = metrics_from_confusion({4, 0, 0, 6});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1 == 1.0);

    auto rng = make_rng(5);
    for (int c = 0; c < 100; ++c) {
        ConfusionCounts counts{rng() % 50, rng() % 50, rng() % 50, rng() % 50 + 1};
        DetectionMetrics got = metrics_from_confusion(counts);
        // independent naive computation
        double tp = static_cast<double>(counts.tp), fp = static_cast<double>(counts.fp);
        double fn = static_cast<double>(counts.fn), tn = static_cast<double>(counts.tn);
        double acc = (tp + tn) / (tp + fp + fn + tn);
        double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        CHECK(got.accuracy == acc);
        CHECK(got.precision == prec);
        CHECK(got.recall == rec);
        CHECK(got.f1 == f1);
    }
}

TEST_CASE("multiclass metrics match a small hand-checked case") {
    std::vector<int> actual{0, 0, 1, 1, 2, 2};
    std::vector<int> predicted{0, 1, 1, 1, 2, 0};
    MulticlassMetrics m = multiclass_metrics(actual, predicted, 3);
    CHECK(m.accuracy == Catch::Approx(4.0 / 6.0));
    CHECK(m.per_class[0].recall == Catch::Approx(0.5));
    CHECK(m.per_class[0].precision == Catch::Approx(0.5));
    CHECK(m.per_class[1].recall == Catch::Approx(1.0));
    CHECK(m.per_class[1].precision == Catch::Approx(2.0 / 3.0));
    CHECK(m.per_class[2].recall == Catch::Approx(0.5));
    CHECK(m.per_class[2].precision == Catch::Approx(1.0));
    CHECK(m.confusion[0][1] == 1);
}

TEST_CASE("binary detector separates a linearly separable toy set") {
    auto rng = make_rng(31);
    std::normal_distribution<double> lo(1e-6, 2e-7), hi(1e-3, 2e-4);
    MatrixXd errors(400, 20);
    std::vector<int> labels(400);
    for (int i = 0; i < 400; ++i) {
        bool adv = i % 2;
        for (int j = 0; j < 20; ++j)
            errors(i, j) = std::abs(adv && j == 7 ? hi(rng) : lo(rng));
        labels[static_cast<std::size_t>(i)] = adv;
    }
    DetectorHyper hyper;
    hyper.epochs = 60;
    TrainedDetector trained = train_binary_detector(errors, labels, hyper, 5);
    CHECK(trained.test_accuracy == 1.0);

    std::vector<int> ones(10, 1);
    CHECK_THROWS_AS(train_binary_detector(errors.topRows(10), ones, hyper, 5),
                    std::invalid_argument);
}

TEST_CASE("detect() thresholds: 0.5 ties alarm, mismatched pairing rejected") {
    GridModel g = default_grid();
    PredictorConfig cfg;
    cfg.units = 4;
    PredictorModel pred = PredictorModel::make(cfg, g);

    DetectionWindow w;
    w.observation = MatrixXd::Zero(5, 20);
    w.inference = VectorXd::Zero(20);

    DetectorModel tie = fixed_logit_detector(0.0);  // sigmoid(0) = 0.5 exactly
    CHECK(detect(tie, pred, w).adversarial);

    DetectorModel high = fixed_logit_detector(std::log(0.7 / 0.3));
    DetectResult r = detect(high, pred, w);
    CHECK(r.adversarial);
    CHECK(r.score == Catch::Approx(0.7).epsilon(1e-9));

    DetectorModel low = fixed_logit_detector(std::log(0.49 / 0.51));
    DetectResult r2 = detect(low, pred, w);
    CHECK_FALSE(r2.adversarial);
    CHECK(r2.score == Catch::Approx(0.49).epsilon(1e-9));

    DetectorModel paired = fixed_logit_detector(0.0);
    paired.predictor_id = "someone-else";
    CHECK_THROWS_AS(detect(paired, pred, w), std::invalid_argument);
}

TEST_CASE("deployment schedules") {
    auto sliding = deployment_schedule(DeploymentMode::sliding, 1, 500, 5);
    CHECK(sliding.size() == 495);
    CHECK(sliding.front() == 5);
    CHECK(sliding.back() == 499);

    auto cyclic5 = deployment_schedule(DeploymentMode::cyclic, 5, 500, 5);
    CHECK(cyclic5.size() == 99);
    CHECK(cyclic5.front() == 5);
    CHECK(cyclic5.back() == 495);

    auto cyclic4 = deployment_schedule(DeploymentMode::cyclic, 4, 500, 5);
    CHECK(cyclic4[0] == 5);
    CHECK(cyclic4[1] == 9);
    CHECK(cyclic4[2] == 13);

    CHECK_THROWS_AS(deployment_schedule(DeploymentMode::cyclic, 0, 500, 5),
                    std::invalid_argument);
}

TEST_CASE("trained predictor separates benign from attacked windows") {
    const PredictorModel& pred = test_predictor();
    GridModel g = default_grid();

    WindowSetSpec spec;
    spec.mode = DeploymentMode::sliding;
    spec.n_benign = 150;
    spec.n_adversarial = 150;
    spec.m_fixed = 1;
    auto windows = build_detection_dataset(g, spec, 900);
    MatrixXd errors = error_matrix(pred, windows);

    double benign_mean = 0.0, adv_mean = 0.0;
    int nb = 0, na = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        double e = errors.row(static_cast<Eigen::Index>(i)).mean();
        if (windows[i].adversarial) { adv_mean += e; ++na; }
        else { benign_mean += e; ++nb; }
    }
    benign_mean /= nb;
    adv_mean /= na;
    INFO("benign " << benign_mean << " adversarial " << adv_mean);
    CHECK(adv_mean > benign_mean);  // the separation the detector feeds on
}

TEST_CASE("detect is a pure function and deployment traces are consistent") {
    const PredictorModel& pred = test_predictor();
    GridModel g = default_grid();

    // quick detector on a mixed sliding set
    WindowSetSpec spec;
    spec.n_benign = 400;
    spec.n_adversarial = 400;
    auto windows = build_detection_dataset(g, spec, 901);
    MatrixXd errors = error_matrix(pred, windows);
    std::vector<int> labels;
    for (const auto& w : windows) labels.push_back(w.adversarial ? 1 : 0);
    DetectorHyper hyper;
    hyper.epochs = 30;
    TrainedDetector trained = train_binary_detector(errors, labels, hyper, 6, pred.id());

    DetectionWindow probe = windows[5];
    DetectResult a = detect(trained.model, pred, probe);
    DetectResult b = detect(trained.model, pred, probe);
    CHECK(a.score == b.score);
    CHECK(a.adversarial == b.adversarial);

    auto rng = make_rng(33);
    SystemState init = sample_initial_state(rng, g.n_buses);
    Episode ep = simulate_episode(init, g, AttackSchedule{}, 120, 0.01, 33);
    auto schedule = deployment_schedule(DeploymentMode::cyclic, 5, ep.length());
    auto trace = run_deployment(ep, pred, trained.model, schedule);
    CHECK(trace.size() == schedule.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        CHECK(trace[i].timestep == schedule[i]);
        CHECK((trace[i].alarm == (trace[i].score >= 0.5)));
    }
}

TEST_CASE("grouped evaluation splits adversarial windows by key") {
    const PredictorModel& pred = test_predictor();
    GridModel g = default_grid();

    WindowSetSpec spec;
    spec.mode = DeploymentMode::cyclic;
    spec.n_benign = 60;
    spec.n_adversarial = 120;
    auto windows = build_detection_dataset(g, spec, 902);

    DetectorModel everything = fixed_logit_detector(4.0);  // always alarms
    auto by_m = evaluate_detector(everything, pred, windows, GroupBy::m);
    std::uint64_t adv_total = 0;
    for (const auto& [m, metrics] : by_m) {
        CHECK(m >= 1);
        CHECK(m <= 5);
        CHECK(metrics.recall == 1.0);       // every adversarial window alarmed
        CHECK(metrics.counts.tn == 0);      // every benign window alarmed too
        CHECK(metrics.counts.fp == 60);
        adv_total += metrics.counts.tp;
    }
    CHECK(adv_total == 120);

    DetectorModel nothing = fixed_logit_detector(-4.0);  // never alarms
    auto quiet = evaluate_detector(nothing, pred, windows, GroupBy::none);
    REQUIRE(quiet.size() == 1);
    CHECK(quiet[0].counts.fn == 120);
    CHECK(quiet[0].counts.tn == 60);
    CHECK(quiet[0].accuracy == Catch::Approx(60.0 / 180.0));
}

TEST_CASE("error-vector CSV round-trips") {
    const PredictorModel& pred = test_predictor();
    GridModel g = default_grid();
    WindowSetSpec spec;
    spec.n_benign = 5;
    spec.n_adversarial = 5;
    auto windows = build_detection_dataset(g, spec, 903);

    std::stringstream buf;
    export_error_vectors(windows, pred, buf);
    std::string text = buf.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 11);  // header + 10 rows

    std::stringstream in(text);
    auto rows = read_error_vectors(in);
    REQUIRE(rows.size() == 10);
    MatrixXd errors = error_matrix(pred, windows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].adversarial == windows[i].adversarial);
        CHECK(rows[i].m == windows[i].m);
        CHECK(rows[i].positions == windows[i].adversarial_positions);
        CHECK(rows[i].e == errors.row(static_cast<Eigen::Index>(i)).transpose());
    }
}

TEST_CASE("detector checkpoints reproduce scores bitwise") {
    auto rng = make_rng(8);
    std::normal_distribution<double> gauss(5e-4, 1e-4);
    MatrixXd errors(60, 20);
    std::vector<int> labels(60);
    for (int i = 0; i < 60; ++i) {
        for (int j = 0; j < 20; ++j) errors(i, j) = std::abs(gauss(rng)) + (i % 2) * 1e-3;
        labels[static_cast<std::size_t>(i)] = i % 2;
    }
    DetectorHyper hyper;
    hyper.epochs = 10;
    TrainedDetector trained = train_binary_detector(errors, labels, hyper, 9, "pred-id");

    namespace fs = std::filesystem;
    auto path = fs::temp_directory_path() / "fdialab_detector.bin";
    save_detector(trained.model, path.string());
    DetectorModel back = load_detector(path.string());
    CHECK(back.predictor_id == "pred-id");
    CHECK(back.scores(errors) == trained.model.scores(errors));
    fs::remove(path);
}

TEST_CASE("multiclass localizer trains and rejects single-class input") {
    auto rng = make_rng(10);
    std::normal_distribution<double> base(1e-6, 2e-7);
    const int per_class = 80;
    MatrixXd errors(3 * per_class, 20);
    std::vector<int> labels(3 * per_class);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per_class; ++i) {
            int row = c * per_class + i;
            for (int j = 0; j < 20; ++j) errors(row, j) = std::abs(base(rng));
            if (c > 0) errors(row, c) += 1e-3;  // class signature feature
            labels[static_cast<std::size_t>(row)] = c;
        }
    DetectorHyper hyper;
    hyper.hidden = {100};
    hyper.lr = 0.0005;
    hyper.epochs = 80;
    TrainedDetector trained = train_multiclass_localizer(errors, labels, 3, hyper, 11);
    CHECK(trained.test_accuracy > 0.9);
    CHECK(trained.model.localize_batch(errors).size() == static_cast<std::size_t>(errors.rows()));

    std::vector<int> same(labels.size(), 1);
    CHECK_THROWS_AS(train_multiclass_localizer(errors, same, 3, hyper, 11),
                    std::invalid_argument);
}

TEST_CASE("grouped evaluation by attacked bus") {
    const PredictorModel& pred = test_predictor();
    GridModel g = default_grid();

    WindowSetSpec spec;
    spec.mode = DeploymentMode::cyclic;
    spec.n_benign = 40;
    spec.n_adversarial = 120;
    spec.m_fixed = 5;
    spec.attacked_buses = {2, 7};
    auto windows = build_detection_dataset(g, spec, 905);

    DetectorModel everything = fixed_logit_detector(4.0);
    auto by_bus = evaluate_detector(everything, pred, windows, GroupBy::bus);
    REQUIRE(by_bus.size() == 2);
    REQUIRE(by_bus.count(2) == 1);
    REQUIRE(by_bus.count(7) == 1);
    CHECK(by_bus[2].counts.tp + by_bus[7].counts.tp == 120);
    CHECK(by_bus[2].counts.fp == 40);
    CHECK(by_bus[7].counts.fp == 40);
}

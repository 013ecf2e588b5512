// Acceptance suite: one pass/fail line per criterion. Criteria 1-3 run in
// process; 4-13 drive the CLI end to end at desk scale and assert on the
// emitted metrics. Exit code is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "fdialab/detect.hpp"
#include "fdialab/experiment.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/metrics.hpp"
#include "fdialab/predictor.hpp"

using namespace fdialab;
using nlohmann::json;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int n, const std::string& name, bool passed, const std::string& detail) {
    std::printf("criterion %2d [%s] %s%s%s\n", n, passed ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!passed) ++g_failures;
}

double seconds_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

std::string fmt(double v, const char* f = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// ---- criterion 1: integrator vs closed form --------------------------------

void criterion_integrator() {
    auto t0 = clk::now();
    VectorXd m(1), d(1), k(1), p(1);
    m << 1.0;
    d << 0.5;
    k << 0.5;
    p << 0.0;
    GridModel bus = make_grid(1, m, d, k, p, MatrixXd::Zero(1, 1));
    SystemState s;
    s.theta = VectorXd::Zero(1);
    s.omega = VectorXd::Constant(1, 0.3);
    double max_rel = 0.0;
    SystemState cur = s;
    for (int t = 1; t <= 500; ++t) {
        cur = step(cur, bus, AttackSchedule{}, t, 0.01);
        double expect = 0.3 * std::exp(-0.01 * t);
        max_rel = std::max(max_rel, std::abs(cur.omega[0] - expect) / expect);
    }
    double secs = seconds_since(t0);
    report(1, "integrator matches closed-form decay over 500 steps",
           max_rel <= 1e-6 && secs < 1.0,
           "max rel err " + fmt(max_rel, "%.2e") + ", " + fmt(secs, "%.2f") + "s");
}

// ---- criterion 2: gradient checks ------------------------------------------

GradCheckReport check_predictor_instance(PredictorKind kind, std::uint64_t seed) {
    GridModel g = default_grid();
    PredictorConfig cfg;
    cfg.kind = kind;
    cfg.units = 4;
    cfg.seed = seed;
    PredictorModel model = PredictorModel::make(cfg, g);
    auto rng = make_rng(seed + 1);
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::vector<MatrixXd> steps;
    for (int t = 0; t < cfg.n_p; ++t) {
        MatrixXd x(2, cfg.n_f);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
        steps.push_back(std::move(x));
    }
    MatrixXd target(2, cfg.n_f);
    for (int i = 0; i < target.size(); ++i) target.data()[i] = gauss(rng);

    ParamSet params = model.params();
    auto loss_fn = [&]() { return mse_loss(model.predict_batch(steps), target).value; };
    zero_grads(params);
    PredictorModel::TrainCache cache;
    MatrixXd pred = model.forward_train(steps, cache);
    model.backward(mse_loss(pred, target).grad, cache);
    return grad_check(params, loss_fn);
}

GradCheckReport check_mlp_instance(std::uint64_t seed) {
    Mlp mlp(20, {12}, 2, seed);
    auto rng = make_rng(seed + 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixXd x(4, 20);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    std::vector<int> labels{0, 1, 1, 0};
    ParamSet params = mlp.params();
    auto loss_fn = [&]() { return softmax_cross_entropy(mlp.forward(x), labels).value; };
    zero_grads(params);
    MatrixXd logits = mlp.forward_train(x);
    mlp.backward(softmax_cross_entropy(logits, labels).grad);
    return grad_check(params, loss_fn);
}

void criterion_gradients() {
    auto t0 = clk::now();
    double worst = 0.0;
    std::string where;
    for (std::uint64_t i = 0; i < 10; ++i) {
        auto a = check_predictor_instance(PredictorKind::lstm_ae, 100 + i);
        auto b = check_predictor_instance(PredictorKind::gnn_lstm, 200 + i);
        auto c = check_mlp_instance(300 + i);
        if (a.max_rel_error > worst) { worst = a.max_rel_error; where = "lstm_ae"; }
        if (b.max_rel_error > worst) { worst = b.max_rel_error; where = "gnn_lstm"; }
        if (c.max_rel_error > worst) { worst = c.max_rel_error; where = "mlp"; }
    }
    double secs = seconds_since(t0);
    report(2, "gradient checks on lstm-ae, gnn-lstm and detector mlp (10 instances each)",
           worst <= 1e-4 && secs < 60.0,
           "worst rel err " + fmt(worst, "%.2e") + " (" + where + "), " + fmt(secs, "%.1f") + "s");
}

// ---- criterion 3: metric oracles -------------------------------------------

void criterion_metric_oracles() {
    auto rng = make_rng(777);
    std::normal_distribution<double> gauss(0.0, 1.0);
    bool all_equal = true;
    for (int c = 0; c < 100 && all_equal; ++c) {
        int rows = 1 + static_cast<int>(rng() % 9);
        MatrixXd act(rows, 20), pred(rows, 20);
        for (int i = 0; i < act.size(); ++i) {
            act.data()[i] = gauss(rng);
            pred.data()[i] = gauss(rng);
        }
        if (c % 4 == 0) act(0, 0) = 0.0;
        PredictionMetrics pm = compute_prediction_metrics(act, pred);

        double mae_t = 0, mre_t = 0, mae_o = 0, mre_o = 0;
        std::uint64_t skip = 0, ct = 0, co = 0;
        for (int r = 0; r < rows; ++r) {
            for (int j = 0; j < 10; ++j) {
                mae_t += std::abs(act(r, j) - pred(r, j));
                if (std::abs(act(r, j)) < 1e-12) ++skip;
                else { mre_t += std::abs(act(r, j) - pred(r, j)) / std::abs(act(r, j)); ++ct; }
            }
            for (int j = 10; j < 20; ++j) {
                mae_o += std::abs(act(r, j) - pred(r, j));
                if (std::abs(act(r, j)) < 1e-12) ++skip;
                else { mre_o += std::abs(act(r, j) - pred(r, j)) / std::abs(act(r, j)); ++co; }
            }
        }
        all_equal &= pm.mae_theta == mae_t / (rows * 10.0);
        all_equal &= pm.mae_omega == mae_o / (rows * 10.0);
        all_equal &= pm.mre_theta == (ct ? mre_t / double(ct) : 0.0);
        all_equal &= pm.mre_omega == (co ? mre_o / double(co) : 0.0);
        all_equal &= pm.skipped_mre == skip;

        ConfusionCounts counts{rng() % 40, rng() % 40, rng() % 40, rng() % 40 + 1};
        DetectionMetrics dm = metrics_from_confusion(counts);
        double tp = double(counts.tp), fp = double(counts.fp), fn = double(counts.fn),
               tn = double(counts.tn);
        double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        all_equal &= dm.accuracy == (tp + tn) / (tp + fp + fn + tn);
        all_equal &= dm.precision == prec;
        all_equal &= dm.recall == rec;
        all_equal &= dm.f1 == (prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);
    }
    report(3, "MAE/MRE and accuracy/F1/precision/recall equal brute-force oracles exactly",
           all_equal, "100 random cases");
}

// ---- criteria 4-13: the desk-scale pipeline through the CLI ----------------

struct TableRun {
    std::string id;
    int exit_code = -1;
    double seconds = 0.0;
    json doc;
    bool ok() const { return exit_code == 0; }
};

json load_metrics(const fs::path& out_dir, const std::string& id) {
    std::ifstream in(out_dir / id / "metrics.json");
    if (!in) return {};
    json j;
    in >> j;
    return j;
}

bool check_passed(const json& doc, const std::string& name_substr) {
    if (!doc.contains("checks")) return false;
    for (const auto& c : doc.at("checks"))
        if (c.at("name").get<std::string>().find(name_substr) != std::string::npos)
            return c.at("passed").get<bool>();
    return false;
}

}  // namespace

int main() {
    std::printf("fdialab acceptance suite\n");
    criterion_integrator();
    criterion_gradients();
    criterion_metric_oracles();

    const std::string cli = FDIALAB_CLI_PATH;
    const std::string config = std::string(FDIALAB_SOURCE_DIR) + "/configs/default.json";
    const fs::path out_dir = fs::absolute("acceptance_out");
    fs::create_directories(out_dir);

    std::vector<std::string> order = {"sliding",        "cyclic",      "position",
                                      "multiclass",     "mae-noise",   "aggregation",
                                      "sample-size",    "noisy-detection"};
    std::vector<TableRun> runs;
    double total_seconds = 0.0;
    for (const auto& id : order) {
        TableRun run;
        run.id = id;
        fs::create_directories(out_dir / id);
        std::string cmd = cli + " run-table " + id + " --config " + config + " --out " +
                          out_dir.string() + " --scale desk --check > " +
                          (out_dir / id / "log.txt").string() + " 2>&1";
        auto t0 = clk::now();
        int rc = std::system(cmd.c_str());
        run.exit_code = WEXITSTATUS(rc);
        run.seconds = seconds_since(t0);
        total_seconds += run.seconds;
        run.doc = load_metrics(out_dir, id);
        std::printf("  table %-16s exit %d  %.1fs\n", id.c_str(), run.exit_code, run.seconds);
        std::fflush(stdout);
        runs.push_back(std::move(run));
    }
    auto find = [&](const std::string& id) -> TableRun& {
        for (auto& r : runs)
            if (r.id == id) return r;
        throw std::logic_error("missing run " + id);
    };

    // 4: noise tracking
    {
        TableRun& r = find("mae-noise");
        bool ok = r.ok();
        std::string detail;
        if (!r.doc.is_null() && r.doc.contains("metrics")) {
            for (const auto& row : r.doc.at("metrics").at("rows")) {
                double sigma = row.at("sigma").get<double>();
                double mae = row.at("mae_theta").get<double>();
                bool in_band = sigma == 0.0 ? mae <= 1e-3
                                            : (mae >= 0.5 * sigma && mae <= 2.0 * sigma);
                ok &= in_band;
                detail += "s=" + fmt(sigma, "%.3g") + ":" + fmt(mae, "%.2e") + " ";
            }
            ok &= r.seconds < 3 * 600.0;  // < 10 min per level
        } else {
            ok = false;
        }
        report(4, "noise-tracking MAE bands (sigma 0 / 0.001 / 0.005)", ok, detail);
    }

    // 5: GNN-vs-LSTM sample-size ordering
    {
        TableRun& r = find("sample-size");
        bool ok = r.ok();
        std::string detail;
        if (!r.doc.is_null() && r.doc.contains("metrics")) {
            double prev_gnn = 1e300;
            for (const auto& row : r.doc.at("metrics").at("rows")) {
                double lstm = row.at("lstm").get<double>();
                double gnn = row.at("gnn").get<double>();
                ok &= gnn < lstm;
                ok &= gnn < prev_gnn;
                prev_gnn = gnn;
                detail += std::to_string(row.at("sample").get<int>()) + ":" +
                          fmt(gnn, "%.2e") + "<" + fmt(lstm, "%.2e") + " ";
            }
        } else {
            ok = false;
        }
        report(5, "gnn-lstm beats lstm at every sample size and improves monotonically", ok,
               detail);
    }

    auto accuracy_of = [](const json& doc, const std::string& col, int m) -> double {
        for (const auto& row : doc.at("metrics").at("rows"))
            if (row.at("m").get<int>() == m) return row.at(col).at("accuracy").get<double>();
        return -1.0;
    };

    // 6: sliding-window trend
    {
        TableRun& r = find("sliding");
        bool ok = r.ok() && !r.doc.is_null();
        std::string detail;
        if (ok) {
            double m0 = accuracy_of(r.doc, "lstm100", 0);
            double m5 = accuracy_of(r.doc, "lstm100", 5);
            bool steps = check_passed(r.doc, "non-increasing");
            ok = m0 >= 0.95 && m5 >= 0.80 && steps && r.seconds < 900.0;
            detail = "m0 " + fmt(m0) + ", m5 " + fmt(m5) + ", " + fmt(r.seconds, "%.0f") + "s";
        }
        report(6, "sliding detection: m0 >= 0.95, m5 >= 0.80, monotone within 0.03", ok, detail);
    }

    // 7: cyclic trend
    {
        TableRun& r = find("cyclic");
        bool ok = r.ok() && !r.doc.is_null();
        std::string detail;
        if (ok) {
            double m1 = accuracy_of(r.doc, "lstm100", 1);
            double m5 = accuracy_of(r.doc, "lstm100", 5);
            bool steps = check_passed(r.doc, "non-decreasing");
            ok = m5 >= 0.95 && m1 <= 0.85 && steps;
            detail = "m1 " + fmt(m1) + ", m5 " + fmt(m5);
        }
        report(7, "cyclic detection: m5 >= 0.95, m1 <= 0.85, monotone within 0.03", ok, detail);
    }

    // 8: position study
    {
        TableRun& r = find("position");
        bool ok = r.ok() && !r.doc.is_null();
        std::string detail;
        if (ok) {
            std::map<std::string, double> acc;
            for (const auto& row : r.doc.at("metrics").at("rows"))
                acc[row.at("position").get<std::string>()] =
                    row.at("accuracy").get<double>();
            ok = acc["t-1"] >= 0.9 && acc["t-5"] <= 0.6 && acc["t-1"] > acc["t-3"] &&
                 acc["t-3"] > acc["t-5"];
            detail = "t-1 " + fmt(acc["t-1"]) + ", t-3 " + fmt(acc["t-3"]) + ", t-5 " +
                     fmt(acc["t-5"]);
        }
        report(8, "position study: t-1 >= 0.9, t-5 <= 0.6, strictly decreasing", ok, detail);
    }

    // 9: predictor-quality coupling, averaged over m, both modes
    {
        bool ok = true;
        std::string detail;
        for (const char* mode : {"sliding", "cyclic"}) {
            TableRun& r = find(mode);
            if (r.doc.is_null()) { ok = false; break; }
            double big = 0, mid = 0;
            int n = 0;
            for (const auto& row : r.doc.at("metrics").at("rows")) {
                big += row.at("lstm100").at("accuracy").get<double>();
                mid += row.at("lstm50").at("accuracy").get<double>();
                ++n;
            }
            big /= n;
            mid /= n;
            ok &= big >= mid - 0.01;
            detail += std::string(mode) + ": " + fmt(big) + " vs " + fmt(mid) + "  ";
        }
        report(9, "lstm100-backed detector within 0.01 of lstm50-backed (mean over m)", ok,
               detail);
    }

    // 10: noisy detection (mean lower, std higher, both modes)
    {
        TableRun& r = find("noisy-detection");
        bool ok = r.ok() && !r.doc.is_null();
        std::string detail;
        if (ok) {
            std::map<std::pair<std::string, bool>, std::pair<double, double>> agg;
            for (const auto& a : r.doc.at("metrics").at("aggregates"))
                agg[{a.at("mode").get<std::string>(), a.at("sigma").get<double>() > 0.0}] = {
                    a.at("mean_accuracy").get<double>(), a.at("std_accuracy").get<double>()};
            for (const std::string mode : {"sliding", "cyclic"}) {
                auto clean = agg[{mode, false}];
                auto noisy = agg[{mode, true}];
                ok &= noisy.first < clean.first && noisy.second > clean.second;
                detail += mode + ": mean " + fmt(noisy.first) + "<" + fmt(clean.first) +
                          " std " + fmt(noisy.second, "%.3f") + ">" +
                          fmt(clean.second, "%.3f") + "  ";
            }
        }
        report(10, "noise lowers mean detection accuracy and raises run-to-run std", ok, detail);
    }

    // 11: multiclass localization
    {
        TableRun& r = find("multiclass");
        bool ok = r.ok() && !r.doc.is_null();
        std::string detail;
        if (ok) {
            double overall = r.doc.at("metrics").at("overall_accuracy").get<double>();
            std::vector<double> f1(10, 0.0);
            for (const auto& row : r.doc.at("metrics").at("rows"))
                f1[static_cast<std::size_t>(row.at("bus").get<int>())] =
                    row.at("f1").get<double>();
            bool min9 = true;
            for (int b = 0; b < 9; ++b) min9 &= f1[9] < f1[b];
            std::vector<double> sorted = f1;
            std::sort(sorted.begin(), sorted.end());
            double median = 0.5 * (sorted[4] + sorted[5]);
            ok = overall >= 0.70 && min9 && f1[7] >= median;
            detail = "acc " + fmt(overall) + ", f1[9] " + fmt(f1[9]) + ", f1[7] " + fmt(f1[7]) +
                     " (median " + fmt(median) + ")";
        }
        report(11, "localization: accuracy >= 0.70, bus 9 weakest, bus 7 above median", ok,
               detail);
    }

    // 12: random-guess baseline
    {
        TableRun& r = find("sliding");
        bool ok = !r.doc.is_null();
        std::string detail;
        if (ok) {
            double acc = r.doc.at("metrics").at("baseline_shuffled_accuracy").get<double>();
            ok = acc >= 0.45 && acc <= 0.55;
            detail = fmt(acc);
        }
        report(12, "label-shuffled detector scores 0.5 +/- 0.05", ok, detail);
    }

    // 13: end-to-end pipeline within budget, all gates green
    {
        bool all_green = true;
        for (const auto& r : runs) all_green &= r.ok();
        bool ok = all_green && total_seconds < 45.0 * 60.0;
        report(13, "all desk-scale tables complete with --check green under 45 min", ok,
               fmt(total_seconds / 60.0, "%.1f") + " min");
    }

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}

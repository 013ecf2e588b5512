#pragma once

// FDIA detection as a composition of a state predictor and an error
// classifier: window-set construction under sliding/cyclic deployment
// constraints, prediction-error computation, binary and multiclass MLP
// detectors, grouped evaluation, deployment schedules and the error-vector
// CSV export.
//
// Window positions are window-local offsets 0..N_p: offset i is timestep
// s + i of the source simulation, offset N_p is the inference step t. A
// flag at offset i means the measurement at that offset carries the tamper
// (see the schedule convention in dynamics.hpp).

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdialab/data.hpp"
#include "fdialab/dynamics.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/io.hpp"
#include "fdialab/metrics.hpp"
#include "fdialab/nn.hpp"
#include "fdialab/parallel.hpp"
#include "fdialab/predictor.hpp"
#include "fdialab/rng.hpp"

namespace fdialab {

enum class DeploymentMode { sliding, cyclic };

inline const char* to_string(DeploymentMode m) {
    return m == DeploymentMode::sliding ? "sliding" : "cyclic";
}
inline DeploymentMode deployment_mode_from_string(const std::string& s) {
    if (s == "sliding") return DeploymentMode::sliding;
    if (s == "cyclic") return DeploymentMode::cyclic;
    throw std::invalid_argument("unknown deployment mode '" + s + "'");
}

struct DetectionWindow {
    MatrixXd observation;  // N_p x N_f
    VectorXd inference;    // measurement at the inference step t
    bool adversarial = false;
    int attacked_bus = -1;                  // -1 for benign
    std::vector<int> adversarial_positions;  // sorted window-local offsets
    int m = 0;  // adversarial timesteps inside the observation window

    bool consistent(int n_p) const {
        if (adversarial != !adversarial_positions.empty()) return false;
        int obs = 0;
        for (int p : adversarial_positions) {
            if (p < 0 || p > n_p) return false;
            if (p < n_p) ++obs;
        }
        return obs == m;
    }
};

struct ErrorVector {
    VectorXd e;  // per-feature squared prediction error, all entries >= 0
};

// e_t = (x_hat - x_t)^2, elementwise.
inline ErrorVector prediction_error(const PredictorModel& predictor,
                                    const DetectionWindow& window) {
    VectorXd pred = predictor.predict(window.observation);
    if (pred.size() != window.inference.size())
        throw std::invalid_argument("prediction_error: shape mismatch");
    return ErrorVector{(pred - window.inference).cwiseAbs2()};
}

// Batched error vectors for a whole window set, rows aligned with input.
inline MatrixXd error_matrix(const PredictorModel& predictor,
                             const std::vector<DetectionWindow>& windows) {
    const int n_p = predictor.config.n_p;
    const int n_f = predictor.config.n_f;
    MatrixXd out(static_cast<Eigen::Index>(windows.size()), n_f);
    const std::size_t chunk = 2048;
    std::size_t done = 0;
    while (done < windows.size()) {
        std::size_t n = std::min(chunk, windows.size() - done);
        std::vector<MatrixXd> steps(static_cast<std::size_t>(n_p),
                                    MatrixXd(static_cast<Eigen::Index>(n), n_f));
        MatrixXd actual(static_cast<Eigen::Index>(n), n_f);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& w = windows[done + r];
            for (int t = 0; t < n_p; ++t)
                steps[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(r)) =
                    w.observation.row(t);
            actual.row(static_cast<Eigen::Index>(r)) = w.inference.transpose();
        }
        MatrixXd pred = predictor.predict_batch(steps);
        out.middleRows(static_cast<Eigen::Index>(done), static_cast<Eigen::Index>(n)) =
            (pred - actual).cwiseAbs2();
        done += n;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Window-set construction. Every window is cut from a fresh simulation whose
// schedule matches the window's flags, so pre-window dynamics are clean.

struct WindowSetSpec {
    DeploymentMode mode = DeploymentMode::sliding;
    int n_benign = 0;
    int n_adversarial = 0;
    std::vector<int> attacked_buses = {7};
    int n_p = 5;
    // -1 draws m uniformly from the mode-feasible range; otherwise the exact
    // number of adversarial steps in the observation window.
    int m_fixed = -1;
    // 1..n_p places exactly one adversarial step at t - position_fixed
    // (cyclic-style study); overrides m_fixed.
    int position_fixed = -1;
    int start_min = 10;   // window start s; inference is at t = s + n_p
    int start_max = 150;  // exclusive
    double dt = 0.01;
    double sigma = 0.0;  // measurement noise on the cut window
    // when nonzero, noise realizations derive from this instead of the
    // dataset master seed, so reruns can share simulations but not noise
    std::uint64_t noise_master = 0;

    void validate() const {
        if (n_benign < 0 || n_adversarial < 0 || n_benign + n_adversarial == 0)
            throw std::invalid_argument("window spec: no windows requested");
        if (n_adversarial > 0 && attacked_buses.empty())
            throw std::invalid_argument("window spec: no attacked buses");
        if (start_min < 1 || start_max <= start_min)
            throw std::invalid_argument("window spec: bad start range (start_min >= 1)");
        if (position_fixed != -1 && (position_fixed < 1 || position_fixed > n_p))
            throw std::invalid_argument("window spec: position must be in [1, n_p]");
        if (position_fixed == -1 && m_fixed != -1) {
            int lo = mode == DeploymentMode::sliding ? 0 : 1;
            if (m_fixed < lo || m_fixed > n_p)
                throw std::invalid_argument(
                    "window spec: infeasible m for this deployment mode");
        }
    }
};

inline std::vector<DetectionWindow> build_detection_dataset(const GridModel& grid,
                                                            const WindowSetSpec& spec,
                                                            std::uint64_t master_seed) {
    spec.validate();
    const int n_p = spec.n_p;
    const int total = spec.n_benign + spec.n_adversarial;
    std::vector<DetectionWindow> out(static_cast<std::size_t>(total));

    parallel_for(static_cast<std::size_t>(total), [&](std::size_t w) {
        auto rng = make_rng(derive_seed(master_seed, "window", w));
        const bool adversarial = static_cast<int>(w) >= spec.n_benign;

        SystemState init = sample_initial_state(rng, grid.n_buses);
        std::uniform_int_distribution<int> start_dist(spec.start_min, spec.start_max - 1);
        const int s = start_dist(rng);
        const int t_inference = s + n_p;

        DetectionWindow win;
        AttackSchedule schedule;
        if (adversarial) {
            int bus = spec.attacked_buses[std::uniform_int_distribution<std::size_t>(
                0, spec.attacked_buses.size() - 1)(rng)];
            std::vector<int> positions;
            if (spec.position_fixed != -1) {
                positions = {n_p - spec.position_fixed};
            } else if (spec.mode == DeploymentMode::sliding) {
                // inference step always perturbed, plus m steps in the window
                int m = spec.m_fixed != -1
                            ? spec.m_fixed
                            : std::uniform_int_distribution<int>(0, n_p)(rng);
                std::vector<int> obs_slots(static_cast<std::size_t>(n_p));
                std::iota(obs_slots.begin(), obs_slots.end(), 0);
                std::shuffle(obs_slots.begin(), obs_slots.end(), rng);
                positions.assign(obs_slots.begin(), obs_slots.begin() + m);
                positions.push_back(n_p);
            } else {
                // cyclic: inference step clean, at least one window step hit
                int m = spec.m_fixed != -1
                            ? spec.m_fixed
                            : std::uniform_int_distribution<int>(1, n_p)(rng);
                std::vector<int> obs_slots(static_cast<std::size_t>(n_p));
                std::iota(obs_slots.begin(), obs_slots.end(), 0);
                std::shuffle(obs_slots.begin(), obs_slots.end(), rng);
                positions.assign(obs_slots.begin(), obs_slots.begin() + m);
            }
            std::sort(positions.begin(), positions.end());
            for (int p : positions) schedule.add(s + p, bus);
            win.adversarial = true;
            win.attacked_bus = bus;
            win.adversarial_positions = std::move(positions);
            win.m = static_cast<int>(std::count_if(win.adversarial_positions.begin(),
                                                   win.adversarial_positions.end(),
                                                   [&](int p) { return p < n_p; }));
        }

        Episode ep = simulate_episode(init, grid, schedule, t_inference + 1, spec.dt,
                                      derive_seed(master_seed, "window", w));
        win.observation.resize(n_p, 2 * grid.n_buses);
        for (int r = 0; r < n_p; ++r)
            win.observation.row(r) = flatten_state(ep.states[s + r]).transpose();
        win.inference = flatten_state(ep.states[t_inference]);

        if (spec.sigma > 0.0) {
            std::mt19937_64 noise_rng(derive_seed(
                spec.noise_master ? spec.noise_master : master_seed, "window-noise", w));
            std::normal_distribution<double> gauss(0.0, spec.sigma);
            for (int i = 0; i < win.observation.size(); ++i)
                win.observation.data()[i] += gauss(noise_rng);
            for (int i = 0; i < win.inference.size(); ++i)
                win.inference[i] += gauss(noise_rng);
        }
        out[w] = std::move(win);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Detector model: an MLP over standardized log-errors with a sigmoid score
// (binary) or an 11-way softmax (localizer).

struct DetectorHyper {
    std::vector<int> hidden = {30};
    double lr = 0.0034;
    int epochs = 40;
    int batch = 64;

    std::string describe() const {
        std::ostringstream os;
        os << "hidden=";
        for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "x" : "") << hidden[i];
        os << ",lr=" << format_double(lr) << ",epochs=" << epochs << ",batch=" << batch;
        return os.str();
    }
};

class DetectorModel {
public:
    Mlp mlp;
    bool multiclass = false;
    int n_classes = 2;
    double threshold = 0.5;
    VectorXd feat_mean, feat_scale;  // standardization of log(e + eps)
    std::string predictor_id;
    DetectorHyper hyper;
    std::uint64_t seed = 0;

    // log-space standardization keeps decade-spanning squared errors in a
    // range the MLP can learn from
    MatrixXd transform(const MatrixXd& errors) const {
        MatrixXd z = (errors.array() + 1e-12).log().matrix();
        z.rowwise() -= feat_mean.transpose();
        for (Eigen::Index c = 0; c < z.cols(); ++c) z.col(c) /= feat_scale[c];
        return z;
    }

    void fit_transform_stats(const MatrixXd& errors) {
        MatrixXd z = (errors.array() + 1e-12).log().matrix();
        feat_mean = z.colwise().mean().transpose();
        feat_scale.resize(z.cols());
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            double var = (z.col(c).array() - feat_mean[c]).square().mean();
            feat_scale[c] = std::sqrt(std::max(var, 1e-12));
        }
    }

    // Binary score in [0, 1].
    double score(const VectorXd& error) const {
        if (multiclass)
            throw std::invalid_argument("score: detector is a multiclass localizer");
        MatrixXd logit = mlp.forward(transform(error.transpose()));
        return 1.0 / (1.0 + std::exp(-logit(0, 0)));
    }

    VectorXd scores(const MatrixXd& errors) const {
        MatrixXd logits = mlp.forward(transform(errors));
        return (1.0 / (1.0 + (-logits.col(0).array()).exp())).matrix();
    }

    // Multiclass argmax over the 11 classes.
    int localize(const VectorXd& error) const {
        MatrixXd logits = mlp.forward(transform(error.transpose()));
        Eigen::Index best;
        logits.row(0).maxCoeff(&best);
        return static_cast<int>(best);
    }

    std::vector<int> localize_batch(const MatrixXd& errors) const {
        MatrixXd logits = mlp.forward(transform(errors));
        std::vector<int> out(static_cast<std::size_t>(logits.rows()));
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            Eigen::Index best;
            logits.row(r).maxCoeff(&best);
            out[static_cast<std::size_t>(r)] = static_cast<int>(best);
        }
        return out;
    }
};

struct TrainedDetector {
    DetectorModel model;
    std::vector<std::uint64_t> train_idx, test_idx;  // the 80/20 split
    double test_accuracy = 0.0;
};

namespace detail {

inline std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> split_80_20(
    std::size_t n, std::uint64_t seed) {
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_train = n - n / 5;
    return {{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)},
            {idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end()}};
}

}  // namespace detail

// Binary detector: Adam on cross-entropy, 80/20 train/test, deterministic
// given the seed. Both classes must be present.
inline TrainedDetector train_binary_detector(const MatrixXd& errors,
                                             const std::vector<int>& labels,
                                             const DetectorHyper& hyper,
                                             std::uint64_t seed,
                                             const std::string& predictor_id = "") {
    if (static_cast<std::size_t>(errors.rows()) != labels.size() || labels.empty())
        throw std::invalid_argument("train_binary_detector: bad inputs");
    bool has0 = false, has1 = false;
    for (int l : labels) (l ? has1 : has0) = true;
    if (!has0 || !has1)
        throw std::invalid_argument("train_binary_detector: both classes required");

    TrainedDetector out;
    DetectorModel& model = out.model;
    model.multiclass = false;
    model.n_classes = 2;
    model.hyper = hyper;
    model.seed = seed;
    model.predictor_id = predictor_id;

    auto [train_idx, test_idx] = detail::split_80_20(labels.size(), derive_seed(seed, "split"));
    out.train_idx = train_idx;
    out.test_idx = test_idx;

    MatrixXd train_err(static_cast<Eigen::Index>(train_idx.size()), errors.cols());
    VectorXd train_y(static_cast<Eigen::Index>(train_idx.size()));
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
        train_err.row(static_cast<Eigen::Index>(i)) = errors.row(static_cast<Eigen::Index>(train_idx[i]));
        train_y[static_cast<Eigen::Index>(i)] = labels[train_idx[i]];
    }
    model.fit_transform_stats(train_err);
    MatrixXd x = model.transform(train_err);

    model.mlp = Mlp(static_cast<int>(errors.cols()), hyper.hidden, 1, derive_seed(seed, "init"));
    ParamSet params = model.mlp.params();
    AdamOptimizer opt(hyper.lr);
    opt.reset(params);

    std::vector<std::uint64_t> order(train_idx.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto rng = make_rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(hyper.batch)) {
            std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(hyper.batch),
                                                  order.size() - at);
            MatrixXd bx(static_cast<Eigen::Index>(n), x.cols());
            VectorXd by(static_cast<Eigen::Index>(n));
            for (std::size_t r = 0; r < n; ++r) {
                bx.row(static_cast<Eigen::Index>(r)) =
                    x.row(static_cast<Eigen::Index>(order[at + r]));
                by[static_cast<Eigen::Index>(r)] =
                    train_y[static_cast<Eigen::Index>(order[at + r])];
            }
            zero_grads(params);
            MatrixXd logits = model.mlp.forward_train(bx);
            LossResult loss = bce_with_logits(logits, by);
            if (!std::isfinite(loss.value))
                throw TrainingDivergence(epoch, static_cast<int>(at / hyper.batch));
            model.mlp.backward(loss.grad);
            opt.step(params);
        }
    }

    // held-out accuracy at the 0.5 threshold
    std::uint64_t correct = 0;
    for (std::uint64_t i : test_idx) {
        double sc = model.score(errors.row(static_cast<Eigen::Index>(i)).transpose());
        int pred = sc >= model.threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    out.test_accuracy = test_idx.empty()
                            ? 0.0
                            : static_cast<double>(correct) / static_cast<double>(test_idx.size());
    return out;
}

// 11-way localizer: class n_buses means "no attack".
inline TrainedDetector train_multiclass_localizer(const MatrixXd& errors,
                                                  const std::vector<int>& class_labels,
                                                  int n_classes, const DetectorHyper& hyper,
                                                  std::uint64_t seed,
                                                  const std::string& predictor_id = "") {
    if (static_cast<std::size_t>(errors.rows()) != class_labels.size() || class_labels.empty())
        throw std::invalid_argument("train_multiclass_localizer: bad inputs");
    {
        std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
        int distinct = 0;
        for (int l : class_labels) {
            if (l < 0 || l >= n_classes)
                throw std::invalid_argument("train_multiclass_localizer: label out of range");
            if (!seen[static_cast<std::size_t>(l)]) {
                seen[static_cast<std::size_t>(l)] = true;
                ++distinct;
            }
        }
        if (distinct < 2)
            throw std::invalid_argument("train_multiclass_localizer: need >= 2 classes");
    }

    TrainedDetector out;
    DetectorModel& model = out.model;
    model.multiclass = true;
    model.n_classes = n_classes;
    model.hyper = hyper;
    model.seed = seed;
    model.predictor_id = predictor_id;

    auto [train_idx, test_idx] = detail::split_80_20(class_labels.size(), derive_seed(seed, "split"));
    out.train_idx = train_idx;
    out.test_idx = test_idx;

    MatrixXd train_err(static_cast<Eigen::Index>(train_idx.size()), errors.cols());
    std::vector<int> train_y(train_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
        train_err.row(static_cast<Eigen::Index>(i)) =
            errors.row(static_cast<Eigen::Index>(train_idx[i]));
        train_y[i] = class_labels[train_idx[i]];
    }
    model.fit_transform_stats(train_err);
    MatrixXd x = model.transform(train_err);

    model.mlp = Mlp(static_cast<int>(errors.cols()), hyper.hidden, n_classes,
                    derive_seed(seed, "init"));
    ParamSet params = model.mlp.params();
    AdamOptimizer opt(hyper.lr);
    opt.reset(params);

    std::vector<std::uint64_t> order(train_idx.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto rng = make_rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(hyper.batch)) {
            std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(hyper.batch),
                                                  order.size() - at);
            MatrixXd bx(static_cast<Eigen::Index>(n), x.cols());
            std::vector<int> by(n);
            for (std::size_t r = 0; r < n; ++r) {
                bx.row(static_cast<Eigen::Index>(r)) =
                    x.row(static_cast<Eigen::Index>(order[at + r]));
                by[r] = train_y[order[at + r]];
            }
            zero_grads(params);
            MatrixXd logits = model.mlp.forward_train(bx);
            LossResult loss = softmax_cross_entropy(logits, by);
            if (!std::isfinite(loss.value))
                throw TrainingDivergence(epoch, static_cast<int>(at / hyper.batch));
            model.mlp.backward(loss.grad);
            opt.step(params);
        }
    }

    std::uint64_t correct = 0;
    for (std::uint64_t i : test_idx)
        if (model.localize(errors.row(static_cast<Eigen::Index>(i)).transpose()) ==
            class_labels[i])
            ++correct;
    out.test_accuracy = test_idx.empty()
                            ? 0.0
                            : static_cast<double>(correct) / static_cast<double>(test_idx.size());
    return out;
}

// ---------------------------------------------------------------------------

struct DetectResult {
    bool adversarial = false;
    double score = 0.0;  // h(e_t)
};

// D = h . g : score the window's prediction error; ties at the threshold
// alarm (fail toward alarm).
inline DetectResult detect(const DetectorModel& detector, const PredictorModel& predictor,
                           const DetectionWindow& window) {
    if (!detector.predictor_id.empty() && detector.predictor_id != predictor.id())
        throw std::invalid_argument("detect: detector is paired with a different predictor");
    ErrorVector e = prediction_error(predictor, window);
    double sc = detector.score(e.e);
    return {sc >= detector.threshold, sc};
}

enum class GroupBy { none, m, position, bus };

// Grouped confusion metrics. Benign windows participate in every group;
// adversarial windows fall into the group given by the key (their m, the
// position t-k of the single flagged step, or the attacked bus).
inline std::map<int, DetectionMetrics> evaluate_detector(
    const DetectorModel& detector, const PredictorModel& predictor,
    const std::vector<DetectionWindow>& windows, GroupBy group_by) {
    if (windows.empty()) throw std::invalid_argument("evaluate_detector: empty test set");
    MatrixXd errors = error_matrix(predictor, windows);
    VectorXd scores = detector.scores(errors);

    const int n_p = predictor.config.n_p;
    std::map<int, ConfusionCounts> groups;
    ConfusionCounts benign_counts;  // shared across groups
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        bool alarm = scores[static_cast<Eigen::Index>(i)] >= detector.threshold;
        if (!w.adversarial) {
            alarm ? ++benign_counts.fp : ++benign_counts.tn;
            continue;
        }
        int key = 0;
        switch (group_by) {
            case GroupBy::none: key = 0; break;
            case GroupBy::m: key = w.m; break;
            case GroupBy::position:
                key = n_p - w.adversarial_positions.front();  // t-k
                break;
            case GroupBy::bus: key = w.attacked_bus; break;
        }
        auto& c = groups[key];
        alarm ? ++c.tp : ++c.fn;
    }
    std::map<int, DetectionMetrics> out;
    if (groups.empty()) {
        out[0] = metrics_from_confusion(benign_counts);
        return out;
    }
    for (auto& [key, counts] : groups) {
        counts.fp = benign_counts.fp;
        counts.tn = benign_counts.tn;
        out[key] = metrics_from_confusion(counts);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deployment schedules over an episode.

// sliding: every timestep with a full observation window; cyclic: every
// `interval` timesteps starting from the first full window.
inline std::vector<int> deployment_schedule(DeploymentMode mode, int interval, int t_ep,
                                            int n_p = 5) {
    if (interval < 1) throw std::invalid_argument("deployment_schedule: interval must be >= 1");
    std::vector<int> out;
    if (mode == DeploymentMode::sliding) {
        for (int t = n_p; t < t_ep; ++t) out.push_back(t);
    } else {
        for (int t = n_p; t < t_ep; t += interval) out.push_back(t);
    }
    return out;
}

struct AlarmEvent {
    int timestep = 0;
    double score = 0.0;
    bool alarm = false;
};

// Run the composed detector over an episode at the scheduled timesteps.
inline std::vector<AlarmEvent> run_deployment(const Episode& episode,
                                              const PredictorModel& predictor,
                                              const DetectorModel& detector,
                                              const std::vector<int>& timesteps) {
    const int n_p = predictor.config.n_p;
    std::vector<AlarmEvent> trace;
    trace.reserve(timesteps.size());
    for (int t : timesteps) {
        if (t < n_p || t >= episode.length())
            throw std::invalid_argument("run_deployment: timestep without a full window");
        DetectionWindow w;
        w.observation.resize(n_p, 2 * episode.n_buses());
        for (int r = 0; r < n_p; ++r)
            w.observation.row(r) = flatten_state(episode.states[t - n_p + r]).transpose();
        w.inference = flatten_state(episode.states[t]);
        DetectResult res = detect(detector, predictor, w);
        trace.push_back({t, res.score, res.adversarial});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Error-vector CSV: rows `label,m,positions,e_0..e_{nf-1}`; positions are
// window-local offsets joined by '|' or '-' when benign.

inline void export_error_vectors(const std::vector<DetectionWindow>& windows,
                                 const PredictorModel& predictor, std::ostream& out) {
    MatrixXd errors = error_matrix(predictor, windows);
    out << "label,m,positions";
    for (int i = 0; i < predictor.config.n_f; ++i) out << ",e_" << i;
    out << '\n';
    for (std::size_t r = 0; r < windows.size(); ++r) {
        const auto& w = windows[r];
        out << (w.adversarial ? "adversarial" : "benign") << ',' << w.m << ',';
        if (w.adversarial_positions.empty()) out << '-';
        else
            for (std::size_t i = 0; i < w.adversarial_positions.size(); ++i)
                out << (i ? "|" : "") << w.adversarial_positions[i];
        for (int c = 0; c < errors.cols(); ++c)
            out << ',' << format_double(errors(static_cast<Eigen::Index>(r), c));
        out << '\n';
    }
}

inline void export_error_vectors(const std::vector<DetectionWindow>& windows,
                                 const PredictorModel& predictor, const std::string& path) {
    auto out = open_for_write(path, /*binary=*/false);
    export_error_vectors(windows, predictor, out);
}

struct ErrorVectorRow {
    bool adversarial = false;
    int m = 0;
    std::vector<int> positions;
    VectorXd e;
};

inline std::vector<ErrorVectorRow> read_error_vectors(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("label,m,positions", 0) != 0)
        throw FormatError("error-vector CSV: bad header");
    int n_f = 0;
    for (char c : line)
        if (c == ',') ++n_f;
    n_f -= 2;
    std::vector<ErrorVectorRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        ErrorVectorRow row;
        std::getline(ss, field, ',');
        row.adversarial = field == "adversarial";
        std::getline(ss, field, ',');
        row.m = std::stoi(field);
        std::getline(ss, field, ',');
        if (field != "-") {
            std::istringstream ps(field);
            std::string p;
            while (std::getline(ps, p, '|')) row.positions.push_back(std::stoi(p));
        }
        row.e.resize(n_f);
        for (int i = 0; i < n_f; ++i) {
            if (!std::getline(ss, field, ',')) throw CorruptFileError("error-vector CSV: short row");
            row.e[i] = std::stod(field);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Detector checkpoints (same container as predictor checkpoints).

inline void save_detector(DetectorModel& model, const std::string& path) {
    auto out = open_for_write(path);
    HeaderWriter h(kCheckpointMagic);
    h.field("model", "detector");
    h.field("multiclass", model.multiclass ? 1 : 0);
    h.field("n_classes", model.n_classes);
    h.field("threshold", model.threshold);
    h.field("predictor_id", model.predictor_id.empty() ? "-" : model.predictor_id);
    h.field("seed", model.seed);
    h.field("lr", model.hyper.lr);
    h.field("epochs", model.hyper.epochs);
    h.field("batch", model.hyper.batch);
    {
        std::ostringstream os;
        for (std::size_t i = 0; i < model.hyper.hidden.size(); ++i)
            os << (i ? "," : "") << model.hyper.hidden[i];
        h.field("hidden", os.str());
    }
    h.field("in_size", model.mlp.in_size());
    ParamSet params = model.mlp.params();
    h.field("n_params", static_cast<std::uint64_t>(param_count(params)));
    h.write(out);
    write_doubles(out, model.feat_mean.data(), static_cast<std::size_t>(model.feat_mean.size()));
    write_doubles(out, model.feat_scale.data(), static_cast<std::size_t>(model.feat_scale.size()));
    for (const auto& p : params) {
        Tensor t = Tensor::from_matrix(*p.value);
        write_doubles(out, t.data.data(), t.data.size());
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

inline DetectorModel load_detector(const std::string& path) {
    auto in = open_for_read(path);
    HeaderReader h(in, kCheckpointMagic);
    if (h.get("model") != "detector")
        throw FormatError("checkpoint is not a detector: " + h.get("model"));
    DetectorModel model;
    model.multiclass = h.get_i64("multiclass") != 0;
    model.n_classes = static_cast<int>(h.get_i64("n_classes"));
    model.threshold = h.get_double("threshold");
    model.predictor_id = h.get("predictor_id") == "-" ? "" : h.get("predictor_id");
    model.seed = h.get_u64("seed");
    model.hyper.lr = h.get_double("lr");
    model.hyper.epochs = static_cast<int>(h.get_i64("epochs"));
    model.hyper.batch = static_cast<int>(h.get_i64("batch"));
    model.hyper.hidden.clear();
    {
        std::istringstream ss(h.get("hidden"));
        std::string item;
        while (std::getline(ss, item, ',')) model.hyper.hidden.push_back(std::stoi(item));
    }
    const int in_size = static_cast<int>(h.get_i64("in_size"));
    const int out_size = model.multiclass ? model.n_classes : 1;
    model.mlp = Mlp(in_size, model.hyper.hidden, out_size, 0);
    model.feat_mean.resize(in_size);
    model.feat_scale.resize(in_size);
    read_doubles(in, model.feat_mean.data(), static_cast<std::size_t>(in_size), "feat_mean");
    read_doubles(in, model.feat_scale.data(), static_cast<std::size_t>(in_size), "feat_scale");
    ParamSet params = model.mlp.params();
    if (param_count(params) != h.get_u64("n_params"))
        throw CorruptFileError("detector checkpoint parameter count mismatch");
    for (const auto& p : params) {
        Tensor t({static_cast<std::size_t>(p.value->rows()),
                  static_cast<std::size_t>(p.value->cols())});
        read_doubles(in, t.data.data(), t.data.size(), p.name.c_str());
        *p.value = t.to_matrix();
    }
    return model;
}

}  // namespace fdialab

#pragma once

// The two state predictors. Both share the autoencoder trunk: an encoder
// LSTM consumes the N_p-step observation, its final hidden state is
// repeated N_p times into a decoder LSTM, and a dense head shared across
// decoder steps (identity activation) emits per-step vectors of which the
// last is the prediction. The GNN variant first passes each timestep's
// state through a graph convolution over the bus topology.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fdialab/data.hpp"
#include "fdialab/gcn.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/io.hpp"
#include "fdialab/nn.hpp"
#include "fdialab/rng.hpp"
#include "fdialab/tensor.hpp"

namespace fdialab {

enum class PredictorKind { lstm_ae, gnn_lstm };

inline const char* to_string(PredictorKind k) {
    return k == PredictorKind::lstm_ae ? "lstm_ae" : "gnn_lstm";
}
inline PredictorKind predictor_kind_from_string(const std::string& s) {
    if (s == "lstm_ae") return PredictorKind::lstm_ae;
    if (s == "gnn_lstm") return PredictorKind::gnn_lstm;
    throw std::invalid_argument("unknown predictor kind '" + s + "'");
}

struct TrainingDivergence : std::runtime_error {
    int epoch, batch;
    TrainingDivergence(int e, int b)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(e) + ", batch " + std::to_string(b)),
          epoch(e), batch(b) {}
};

struct PredictorConfig {
    PredictorKind kind = PredictorKind::lstm_ae;
    int units = 25;  // L_u for both encoder and decoder
    int epochs = 25;
    int n_p = 5;
    int n_f = 20;
    Aggregation aggregation = Aggregation::max;  // gnn_lstm only
    UpdateOp update_op = UpdateOp::concat;       // gnn_lstm only
    int gcn_out_features = 2;                    // gnn_lstm only
    int gcn_rounds = 1;                          // gnn_lstm only
    int batch_size = 32;
    double lr = 0.001;
    std::uint64_t seed = 0;

    void validate() const {
        if (units < 1) throw std::invalid_argument("predictor config: units must be >= 1");
        if (n_p < 1 || n_f < 1) throw std::invalid_argument("predictor config: bad window shape");
        if (batch_size < 1) throw std::invalid_argument("predictor config: bad batch size");
        if (kind == PredictorKind::gnn_lstm) {
            if (gcn_out_features < 1)
                throw std::invalid_argument("predictor config: bad gcn output width");
            if (gcn_rounds < 1)
                throw std::invalid_argument("predictor config: gcn rounds must be >= 1");
            if (gcn_rounds > 1 && gcn_out_features != 2)
                throw std::invalid_argument(
                    "predictor config: repeated gcn rounds need out features == node features");
        }
    }

    std::string descriptor() const {
        std::ostringstream os;
        os << to_string(kind) << ":u=" << units << ":np=" << n_p << ":nf=" << n_f
           << ":bs=" << batch_size << ":lr=" << format_double(lr) << ":seed=" << seed
           << ":ep=" << epochs;
        if (kind == PredictorKind::gnn_lstm)
            os << ":agg=" << to_string(aggregation) << ":up=" << to_string(update_op)
               << ":go=" << gcn_out_features << ":gr=" << gcn_rounds;
        return os.str();
    }
};

class PredictorModel {
public:
    PredictorConfig config;
    LstmCell encoder;
    DenseLayer head;
    GcnLayer gcn;  // inert for lstm_ae
    GraphOperators graph;
    std::vector<double> history_train, history_val;
    int epochs_trained = 0;
    std::string grid_digest;
    std::string dataset_tag;

    LstmCell decoder;

    static PredictorModel make(const PredictorConfig& cfg, const GridModel& grid) {
        cfg.validate();
        PredictorModel m;
        m.config = cfg;
        m.grid_digest = grid.digest();
        int lstm_in = cfg.n_f;
        if (cfg.kind == PredictorKind::gnn_lstm) {
            if (cfg.n_f != 2 * grid.n_buses)
                throw std::invalid_argument("gnn predictor: N_f must be 2 * n_buses");
            m.gcn = GcnLayer(2, cfg.gcn_out_features, cfg.aggregation, cfg.update_op);
            m.graph = GraphOperators(grid.adjacency_weights);
            lstm_in = grid.n_buses * cfg.gcn_out_features;
        }
        m.encoder = LstmCell(lstm_in, cfg.units);
        m.decoder = LstmCell(cfg.units, cfg.units);
        m.head = DenseLayer(cfg.units, cfg.n_f, Activation::identity);
        auto rng = make_rng(derive_seed(cfg.seed, "init"));
        if (cfg.kind == PredictorKind::gnn_lstm) m.gcn.init(rng);
        m.encoder.init(rng);
        m.decoder.init(rng);
        m.head.init(rng);
        return m;
    }

    std::string id() const {
        std::string key = config.descriptor() + "|grid=" + grid_digest +
                          "|data=" + dataset_tag + "|trained=" + std::to_string(epochs_trained);
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(hash_tag(key)));
        return buf;
    }

    ParamSet params() {
        ParamSet out;
        if (config.kind == PredictorKind::gnn_lstm) gcn.collect_params(out, "gcn");
        encoder.collect_params(out, "enc");
        decoder.collect_params(out, "dec");
        head.collect_params(out, "head");
        return out;
    }

    // -- inference (const, thread-safe) -------------------------------------

    // steps: N_p matrices of shape batch x N_f. Returns batch x N_f.
    MatrixXd predict_batch(const std::vector<MatrixXd>& steps) const {
        check_steps(steps);
        const Eigen::Index batch = steps[0].rows();
        MatrixXd h = MatrixXd::Zero(batch, config.units);
        MatrixXd c = MatrixXd::Zero(batch, config.units);
        LstmCell::StepCache scratch;
        for (const auto& x : steps) {
            MatrixXd in = transform_step(x);
            h = encoder.step(in, h, c, &scratch);
            c = scratch.c;
        }
        MatrixXd z = h;
        MatrixXd hd = MatrixXd::Zero(batch, config.units);
        MatrixXd cd = MatrixXd::Zero(batch, config.units);
        for (int t = 0; t < config.n_p; ++t) {
            hd = decoder.step(z, hd, cd, &scratch);
            cd = scratch.c;
        }
        return head.forward(hd);
    }

    // observation: N_p x N_f (rows are timesteps). Returns the N_f vector.
    VectorXd predict(const MatrixXd& observation) const {
        if (observation.rows() != config.n_p || observation.cols() != config.n_f)
            throw std::invalid_argument("predict: observation must be N_p x N_f");
        std::vector<MatrixXd> steps;
        steps.reserve(static_cast<std::size_t>(config.n_p));
        for (int t = 0; t < config.n_p; ++t)
            steps.push_back(observation.row(t));
        return predict_batch(steps).row(0).transpose();
    }

    // -- training path -------------------------------------------------------

    struct TrainCache {
        std::vector<std::vector<GcnLayer::Cache>> gcn;  // [step][round]
        std::vector<MatrixXd> enc_in;                   // encoder inputs per step
        std::vector<LstmCell::StepCache> enc_steps, dec_steps;
        MatrixXd z_summary;
        Eigen::Index batch = 0;
    };

    MatrixXd forward_train(const std::vector<MatrixXd>& steps, TrainCache& cache) {
        check_steps(steps);
        const Eigen::Index batch = steps[0].rows();
        cache.batch = batch;
        cache.enc_in.clear();
        cache.gcn.clear();
        cache.enc_steps.assign(static_cast<std::size_t>(config.n_p), {});
        cache.dec_steps.assign(static_cast<std::size_t>(config.n_p), {});

        MatrixXd h = MatrixXd::Zero(batch, config.units);
        MatrixXd c = MatrixXd::Zero(batch, config.units);
        for (int t = 0; t < config.n_p; ++t) {
            MatrixXd in;
            if (config.kind == PredictorKind::gnn_lstm) {
                std::vector<GcnLayer::Cache> round_caches(
                    static_cast<std::size_t>(config.gcn_rounds));
                MatrixXd cur = steps[static_cast<std::size_t>(t)];
                for (int r = 0; r < config.gcn_rounds; ++r)
                    cur = gcn.forward_blocks(cur, graph, &round_caches[static_cast<std::size_t>(r)]);
                cache.gcn.push_back(std::move(round_caches));
                in = std::move(cur);
            } else {
                in = steps[static_cast<std::size_t>(t)];
            }
            cache.enc_in.push_back(in);
            h = encoder.step(in, h, c, &cache.enc_steps[static_cast<std::size_t>(t)]);
            c = cache.enc_steps[static_cast<std::size_t>(t)].c;
        }
        cache.z_summary = h;

        MatrixXd hd = MatrixXd::Zero(batch, config.units);
        MatrixXd cd = MatrixXd::Zero(batch, config.units);
        for (int t = 0; t < config.n_p; ++t) {
            hd = decoder.step(cache.z_summary, hd, cd,
                              &cache.dec_steps[static_cast<std::size_t>(t)]);
            cd = cache.dec_steps[static_cast<std::size_t>(t)].c;
        }
        return head.forward_train(hd);
    }

    void backward(const MatrixXd& dpred, TrainCache& cache) {
        const Eigen::Index batch = cache.batch;
        MatrixXd zero = MatrixXd::Zero(batch, config.units);

        MatrixXd dh = head.backward(dpred);
        MatrixXd dc = MatrixXd::Zero(batch, config.units);
        MatrixXd dz_summary = MatrixXd::Zero(batch, config.units);
        for (int t = config.n_p - 1; t >= 0; --t) {
            const auto& sc = cache.dec_steps[static_cast<std::size_t>(t)];
            const MatrixXd& c_prev =
                t > 0 ? cache.dec_steps[static_cast<std::size_t>(t - 1)].c : zero;
            MatrixXd dx, dh_prev;
            decoder.step_backward(sc, c_prev, dh, dc, dx, dh_prev);
            dz_summary += dx;
            dh = dh_prev;
        }

        dh = dz_summary;  // encoder's final hidden state feeds every decoder step
        dc.setZero();
        for (int t = config.n_p - 1; t >= 0; --t) {
            const auto& sc = cache.enc_steps[static_cast<std::size_t>(t)];
            const MatrixXd& c_prev =
                t > 0 ? cache.enc_steps[static_cast<std::size_t>(t - 1)].c : zero;
            MatrixXd dx, dh_prev;
            encoder.step_backward(sc, c_prev, dh, dc, dx, dh_prev);
            if (config.kind == PredictorKind::gnn_lstm) {
                MatrixXd cur = dx;
                auto& rounds = cache.gcn[static_cast<std::size_t>(t)];
                for (int r = config.gcn_rounds - 1; r >= 0; --r)
                    cur = gcn.backward_blocks(cur, rounds[static_cast<std::size_t>(r)], graph);
            }
            dh = dh_prev;
        }
    }

private:
    void check_steps(const std::vector<MatrixXd>& steps) const {
        if (static_cast<int>(steps.size()) != config.n_p)
            throw std::invalid_argument("predictor: expected N_p step matrices");
        for (const auto& s : steps)
            if (s.cols() != config.n_f || s.rows() != steps[0].rows())
                throw std::invalid_argument("predictor: step matrix shape mismatch");
    }

    MatrixXd transform_step(const MatrixXd& x) const {
        if (config.kind != PredictorKind::gnn_lstm) return x;
        MatrixXd cur = x;
        for (int r = 0; r < config.gcn_rounds; ++r)
            cur = gcn.forward_blocks(cur, graph);
        return cur;
    }
};

// ---------------------------------------------------------------------------
// Batch assembly from window samples.

inline std::vector<MatrixXd> stack_observations(const std::vector<WindowSample>& samples,
                                                const std::vector<std::uint64_t>& indices,
                                                int n_p, int n_f) {
    std::vector<MatrixXd> steps(static_cast<std::size_t>(n_p),
                                MatrixXd(static_cast<Eigen::Index>(indices.size()), n_f));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& w = samples[indices[r]];
        for (int t = 0; t < n_p; ++t)
            steps[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(r)) =
                w.observation.row(t);
    }
    return steps;
}

inline MatrixXd stack_targets(const std::vector<WindowSample>& samples,
                              const std::vector<std::uint64_t>& indices, int n_f) {
    MatrixXd y(static_cast<Eigen::Index>(indices.size()), n_f);
    for (std::size_t r = 0; r < indices.size(); ++r)
        y.row(static_cast<Eigen::Index>(r)) = samples[indices[r]].target.transpose();
    return y;
}

// Mean MSE over a sample set, evaluated in inference mode.
inline double dataset_loss(const PredictorModel& model, const std::vector<WindowSample>& samples,
                           const std::vector<std::uint64_t>& indices, int chunk = 1024) {
    if (indices.empty()) return 0.0;
    double acc = 0.0;
    std::size_t done = 0;
    while (done < indices.size()) {
        std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(chunk),
                                              indices.size() - done);
        std::vector<std::uint64_t> part(indices.begin() + static_cast<std::ptrdiff_t>(done),
                                        indices.begin() + static_cast<std::ptrdiff_t>(done + n));
        auto steps = stack_observations(samples, part, model.config.n_p, model.config.n_f);
        MatrixXd pred = model.predict_batch(steps);
        MatrixXd tgt = stack_targets(samples, part, model.config.n_f);
        acc += (pred - tgt).squaredNorm();
        done += n;
    }
    return acc / (static_cast<double>(indices.size()) * model.config.n_f);
}

// N_e epochs of shuffled mini-batch Adam on MSE. history[0] holds the
// pre-training loss, then one entry per epoch. Deterministic given seeds.
inline PredictorModel train_predictor(const PredictorConfig& cfg,
                                      const PredictionDataset& ds, const GridModel& grid) {
    if (ds.samples.empty() || ds.train_indices.empty())
        throw std::invalid_argument("train_predictor: empty dataset or missing split");
    PredictorModel model = PredictorModel::make(cfg, grid);
    {
        std::ostringstream tag;
        tag << "sigma=" << format_double(ds.noise.sigma) << ",n=" << ds.samples.size()
            << ",nseed=" << ds.noise.seed;
        model.dataset_tag = tag.str();
    }
    ParamSet params = model.params();
    AdamOptimizer opt(cfg.lr);
    opt.reset(params);

    model.history_train.push_back(dataset_loss(model, ds.samples, ds.train_indices));
    model.history_val.push_back(dataset_loss(model, ds.samples, ds.val_indices));

    std::vector<std::uint64_t> order = ds.train_indices;
    PredictorModel::TrainCache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        int batch_idx = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size),
                         ++batch_idx) {
            std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                  order.size() - at);
            std::vector<std::uint64_t> part(order.begin() + static_cast<std::ptrdiff_t>(at),
                                            order.begin() + static_cast<std::ptrdiff_t>(at + n));
            auto steps = stack_observations(ds.samples, part, cfg.n_p, cfg.n_f);
            MatrixXd targets = stack_targets(ds.samples, part, cfg.n_f);
            zero_grads(params);
            MatrixXd pred = model.forward_train(steps, cache);
            LossResult loss = mse_loss(pred, targets);
            if (!std::isfinite(loss.value)) throw TrainingDivergence(epoch, batch_idx);
            model.backward(loss.grad, cache);
            opt.step(params);
            epoch_loss += loss.value * static_cast<double>(n);
            seen += n;
        }
        model.history_train.push_back(epoch_loss / static_cast<double>(seen));
        model.history_val.push_back(dataset_loss(model, ds.samples, ds.val_indices));
        ++model.epochs_trained;
    }
    return model;
}

// ---------------------------------------------------------------------------
// MAE / MRE evaluation, split into theta and omega feature groups. Relative
// errors use |actual| in the denominator; entries with |actual| < 1e-12 are
// skipped and counted.

struct PredictionMetrics {
    double mae_theta = 0.0, mre_theta = 0.0;
    double mae_omega = 0.0, mre_omega = 0.0;
    std::uint64_t skipped_mre = 0;
};

// actual/predicted: D x N_f matrices, theta features first then omega.
inline PredictionMetrics compute_prediction_metrics(const MatrixXd& actual,
                                                    const MatrixXd& predicted) {
    if (actual.rows() != predicted.rows() || actual.cols() != predicted.cols())
        throw std::invalid_argument("prediction metrics: shape mismatch");
    if (actual.rows() == 0) throw std::invalid_argument("prediction metrics: empty test set");
    const int n_b = static_cast<int>(actual.cols()) / 2;
    PredictionMetrics out;
    double mae_t = 0.0, mre_t = 0.0, mae_o = 0.0, mre_o = 0.0;
    std::uint64_t cnt_t = 0, cnt_o = 0;
    for (Eigen::Index r = 0; r < actual.rows(); ++r) {
        for (int bus = 0; bus < n_b; ++bus) {
            double a = actual(r, bus), p = predicted(r, bus);
            mae_t += std::abs(a - p);
            if (std::abs(a) < 1e-12) ++out.skipped_mre;
            else { mre_t += std::abs(a - p) / std::abs(a); ++cnt_t; }
        }
        for (int bus = 0; bus < n_b; ++bus) {
            double a = actual(r, n_b + bus), p = predicted(r, n_b + bus);
            mae_o += std::abs(a - p);
            if (std::abs(a) < 1e-12) ++out.skipped_mre;
            else { mre_o += std::abs(a - p) / std::abs(a); ++cnt_o; }
        }
    }
    const double d = static_cast<double>(actual.rows()) * n_b;
    out.mae_theta = mae_t / d;
    out.mae_omega = mae_o / d;
    out.mre_theta = cnt_t ? mre_t / static_cast<double>(cnt_t) : 0.0;
    out.mre_omega = cnt_o ? mre_o / static_cast<double>(cnt_o) : 0.0;
    return out;
}

inline PredictionMetrics evaluate_predictor(const PredictorModel& model,
                                            const std::vector<WindowSample>& samples,
                                            const std::vector<std::uint64_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate_predictor: empty test set");
    const int n_f = model.config.n_f;
    MatrixXd actual(static_cast<Eigen::Index>(indices.size()), n_f);
    MatrixXd predicted(static_cast<Eigen::Index>(indices.size()), n_f);
    const std::size_t chunk = 1024;
    std::size_t done = 0;
    while (done < indices.size()) {
        std::size_t n = std::min(chunk, indices.size() - done);
        std::vector<std::uint64_t> part(indices.begin() + static_cast<std::ptrdiff_t>(done),
                                        indices.begin() + static_cast<std::ptrdiff_t>(done + n));
        auto steps = stack_observations(samples, part, model.config.n_p, n_f);
        predicted.middleRows(static_cast<Eigen::Index>(done), static_cast<Eigen::Index>(n)) =
            model.predict_batch(steps);
        actual.middleRows(static_cast<Eigen::Index>(done), static_cast<Eigen::Index>(n)) =
            stack_targets(samples, part, n_f);
        done += n;
    }
    return compute_prediction_metrics(actual, predicted);
}

// ---------------------------------------------------------------------------
// Checkpoints: text header + parameter payload (+ adjacency for gnn).

inline constexpr const char* kCheckpointMagic = "FDIALAB-CKPT v1";

inline std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out.empty() ? "-" : out;
}

inline std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    if (s == "-") return out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

inline void save_predictor(PredictorModel& model, const std::string& path) {
    auto out = open_for_write(path);
    const auto& cfg = model.config;
    HeaderWriter h(kCheckpointMagic);
    h.field("model", "predictor");
    h.field("kind", to_string(cfg.kind));
    h.field("units", cfg.units);
    h.field("epochs", cfg.epochs);
    h.field("n_p", cfg.n_p);
    h.field("n_f", cfg.n_f);
    h.field("aggregation", to_string(cfg.aggregation));
    h.field("update_op", to_string(cfg.update_op));
    h.field("gcn_out", cfg.gcn_out_features);
    h.field("gcn_rounds", cfg.gcn_rounds);
    h.field("batch_size", cfg.batch_size);
    h.field("lr", cfg.lr);
    h.field("seed", cfg.seed);
    h.field("epochs_trained", model.epochs_trained);
    h.field("grid_digest", model.grid_digest);
    h.field("dataset_tag", model.dataset_tag.empty() ? "-" : model.dataset_tag);
    h.field("history_train", join_doubles(model.history_train));
    h.field("history_val", join_doubles(model.history_val));
    ParamSet params = model.params();
    h.field("n_params", static_cast<std::uint64_t>(param_count(params)));
    int nb = cfg.kind == PredictorKind::gnn_lstm ? model.graph.n_nodes() : 0;
    h.field("graph_nodes", nb);
    h.write(out);
    for (const auto& p : params) {
        Tensor t = Tensor::from_matrix(*p.value);
        write_doubles(out, t.data.data(), t.data.size());
    }
    if (nb > 0) {
        Tensor t = Tensor::from_matrix(model.graph.w_adj);
        write_doubles(out, t.data.data(), t.data.size());
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

inline PredictorModel load_predictor(const std::string& path) {
    auto in = open_for_read(path);
    HeaderReader h(in, kCheckpointMagic);
    if (h.get("model") != "predictor")
        throw FormatError("checkpoint is not a predictor: " + h.get("model"));
    PredictorConfig cfg;
    cfg.kind = predictor_kind_from_string(h.get("kind"));
    cfg.units = static_cast<int>(h.get_i64("units"));
    cfg.epochs = static_cast<int>(h.get_i64("epochs"));
    cfg.n_p = static_cast<int>(h.get_i64("n_p"));
    cfg.n_f = static_cast<int>(h.get_i64("n_f"));
    cfg.aggregation = aggregation_from_string(h.get("aggregation"));
    cfg.update_op = update_op_from_string(h.get("update_op"));
    cfg.gcn_out_features = static_cast<int>(h.get_i64("gcn_out"));
    cfg.gcn_rounds = static_cast<int>(h.get_i64("gcn_rounds"));
    cfg.batch_size = static_cast<int>(h.get_i64("batch_size"));
    cfg.lr = h.get_double("lr");
    cfg.seed = h.get_u64("seed");

    PredictorModel model;
    model.config = cfg;
    model.grid_digest = h.get("grid_digest");
    model.dataset_tag = h.get("dataset_tag") == "-" ? "" : h.get("dataset_tag");
    model.epochs_trained = static_cast<int>(h.get_i64("epochs_trained"));
    model.history_train = split_doubles(h.get("history_train"));
    model.history_val = split_doubles(h.get("history_val"));

    const int nb = static_cast<int>(h.get_i64("graph_nodes"));
    int lstm_in = cfg.n_f;
    if (cfg.kind == PredictorKind::gnn_lstm) {
        model.gcn = GcnLayer(2, cfg.gcn_out_features, cfg.aggregation, cfg.update_op);
        lstm_in = nb * cfg.gcn_out_features;
    }
    model.encoder = LstmCell(lstm_in, cfg.units);
    model.decoder = LstmCell(cfg.units, cfg.units);
    model.head = DenseLayer(cfg.units, cfg.n_f, Activation::identity);

    ParamSet params = model.params();
    if (param_count(params) != h.get_u64("n_params"))
        throw CorruptFileError("checkpoint parameter count mismatch");
    for (const auto& p : params) {
        Tensor t({static_cast<std::size_t>(p.value->rows()),
                  static_cast<std::size_t>(p.value->cols())});
        read_doubles(in, t.data.data(), t.data.size(), p.name.c_str());
        if (!t.finite()) throw CorruptFileError("non-finite parameter in checkpoint");
        *p.value = t.to_matrix();
    }
    if (nb > 0) {
        Tensor t({static_cast<std::size_t>(nb), static_cast<std::size_t>(nb)});
        read_doubles(in, t.data.data(), t.data.size(), "adjacency");
        model.graph = GraphOperators(t.to_matrix());
    }
    return model;
}

}  // namespace fdialab

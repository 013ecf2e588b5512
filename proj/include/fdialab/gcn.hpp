#pragma once

// Single-round graph convolution: weighted neighbor messages, a choice of
// mean/sum/max aggregation, concat-or-add update with the self
// representation, then a shared per-node dense transform.
//
// Two entry points: a node-major forward matching the per-graph semantics
// (N_b x features in, N_b x out per graph), and a batched block-layout path
// used during training where a column block f holds node-feature f for all
// nodes, matching the theta-block/omega-block state flattening.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdialab/grid.hpp"
#include "fdialab/nn.hpp"

namespace fdialab {

enum class Aggregation { mean, sum, max };
enum class UpdateOp { concat, add };

inline const char* to_string(Aggregation a) {
    switch (a) {
        case Aggregation::mean: return "mean";
        case Aggregation::sum: return "sum";
        case Aggregation::max: return "max";
    }
    return "?";
}
inline Aggregation aggregation_from_string(const std::string& s) {
    if (s == "mean") return Aggregation::mean;
    if (s == "sum") return Aggregation::sum;
    if (s == "max") return Aggregation::max;
    throw std::invalid_argument("unknown aggregation '" + s + "'");
}
inline const char* to_string(UpdateOp u) {
    return u == UpdateOp::concat ? "concat" : "add";
}
inline UpdateOp update_op_from_string(const std::string& s) {
    if (s == "concat") return UpdateOp::concat;
    if (s == "add") return UpdateOp::add;
    throw std::invalid_argument("unknown update op '" + s + "'");
}

// Message-passing operators precomputed from the adjacency weights. The
// weight matrix is interpreted row-wise: w_adj(i, j) scales the message
// node j sends to node i; the diagonal never carries messages.
struct GraphOperators {
    MatrixXd w_adj;    // as provided
    MatrixXd s_sum;    // agg_f = x_f * s_sum^T implements weighted sums
    MatrixXd s_mean;   // row-normalized by neighbor count
    std::vector<std::vector<int>> neighbors;

    GraphOperators() = default;
    explicit GraphOperators(const MatrixXd& adj) : w_adj(adj) {
        const int nb = static_cast<int>(adj.rows());
        s_sum = MatrixXd::Zero(nb, nb);
        s_mean = MatrixXd::Zero(nb, nb);
        neighbors.resize(static_cast<std::size_t>(nb));
        for (int i = 0; i < nb; ++i) {
            for (int j = 0; j < nb; ++j) {
                if (i == j || adj(i, j) <= 0.0) continue;
                s_sum(i, j) = adj(i, j);
                neighbors[static_cast<std::size_t>(i)].push_back(j);
            }
            std::size_t deg = neighbors[static_cast<std::size_t>(i)].size();
            if (deg > 0) s_mean.row(i) = s_sum.row(i) / static_cast<double>(deg);
        }
    }

    int n_nodes() const { return static_cast<int>(w_adj.rows()); }
};

class GcnLayer {
public:
    MatrixXd w;  // combined_features x out_features
    MatrixXd b;  // 1 x out_features
    MatrixXd dw, db;
    Aggregation aggregation = Aggregation::max;
    UpdateOp update = UpdateOp::concat;
    Activation act = Activation::tanh;

    GcnLayer() = default;
    GcnLayer(int node_features, int out_features, Aggregation agg, UpdateOp up,
             Activation a = Activation::tanh)
        : aggregation(agg), update(up), act(a), fin_(node_features), fout_(out_features) {
        int comb = combined_features();
        w = MatrixXd::Zero(comb, fout_);
        b = MatrixXd::Zero(1, fout_);
        dw = MatrixXd::Zero(comb, fout_);
        db = MatrixXd::Zero(1, fout_);
    }

    int node_features() const { return fin_; }
    int out_features() const { return fout_; }
    int combined_features() const { return update == UpdateOp::concat ? 2 * fin_ : fin_; }

    void init(std::mt19937_64& rng) { glorot_init(w, rng, w.rows(), w.cols()); }

    void collect_params(ParamSet& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w, &dw});
        out.push_back({prefix + ".b", &b, &db});
    }

    // -- node-major, single graph ------------------------------------------
    // x: N_b x fin, w_adj(i, j) > 0 iff node j messages node i.
    MatrixXd forward_nodes(const MatrixXd& x, const MatrixXd& w_adj) const {
        const int nb = static_cast<int>(x.rows());
        if (x.cols() != fin_ || w_adj.rows() != nb || w_adj.cols() != nb)
            throw std::invalid_argument("gcn forward: shape mismatch");
        MatrixXd agg = MatrixXd::Zero(nb, fin_);
        for (int i = 0; i < nb; ++i) {
            int count = 0;
            for (int j = 0; j < nb; ++j) {
                double wij = w_adj(i, j);
                if (wij <= 0.0 || j == i) continue;
                Eigen::RowVectorXd msg = wij * x.row(j);
                if (aggregation == Aggregation::max)
                    agg.row(i) = count == 0 ? msg : agg.row(i).cwiseMax(msg);
                else
                    agg.row(i) += msg;
                ++count;
            }
            // isolated node: aggregate stays the zero vector
            if (aggregation == Aggregation::mean && count > 0) agg.row(i) /= count;
        }
        MatrixXd comb;
        if (update == UpdateOp::concat) {
            comb.resize(nb, 2 * fin_);
            comb << x, agg;
        } else {
            comb = x + agg;
        }
        MatrixXd pre = comb * w;
        pre.rowwise() += b.row(0);
        return apply_activation(act, pre);
    }

    // -- batched block layout ----------------------------------------------
    // x: R x (N_b * fin), column block f spans [f*N_b, (f+1)*N_b).

    struct Cache {
        std::vector<MatrixXd> comb;           // combined blocks, R x N_b each
        MatrixXd y;                           // R x (N_b * fout), block layout
        std::vector<Eigen::MatrixXi> argmax;  // per feature, R x N_b (max agg)
    };

    MatrixXd forward_blocks(const MatrixXd& x, const GraphOperators& ops,
                            Cache* cache = nullptr) const {
        const int nb = ops.n_nodes();
        if (x.cols() != static_cast<Eigen::Index>(nb) * fin_)
            throw std::invalid_argument("gcn forward_blocks: shape mismatch");
        const Eigen::Index rows = x.rows();

        std::vector<MatrixXd> aggf(static_cast<std::size_t>(fin_));
        std::vector<Eigen::MatrixXi> argmax;
        for (int f = 0; f < fin_; ++f) {
            auto xf = x.middleCols(static_cast<Eigen::Index>(f) * nb, nb);
            if (aggregation == Aggregation::sum)
                aggf[f] = xf * ops.s_sum.transpose();
            else if (aggregation == Aggregation::mean)
                aggf[f] = xf * ops.s_mean.transpose();
            else {
                MatrixXd a = MatrixXd::Zero(rows, nb);
                Eigen::MatrixXi am = Eigen::MatrixXi::Constant(rows, nb, -1);
                for (int i = 0; i < nb; ++i) {
                    const auto& nbr = ops.neighbors[static_cast<std::size_t>(i)];
                    for (Eigen::Index r = 0; r < rows; ++r) {
                        double best = 0.0;
                        int best_j = -1;
                        for (int j : nbr) {
                            double m = ops.w_adj(i, j) * xf(r, j);
                            if (best_j < 0 || m > best) { best = m; best_j = j; }
                        }
                        if (best_j >= 0) { a(r, i) = best; am(r, i) = best_j; }
                    }
                }
                aggf[f] = std::move(a);
                argmax.push_back(std::move(am));
            }
        }

        const int comb_n = combined_features();
        std::vector<MatrixXd> comb(static_cast<std::size_t>(comb_n));
        for (int f = 0; f < fin_; ++f) {
            auto xf = x.middleCols(static_cast<Eigen::Index>(f) * nb, nb);
            if (update == UpdateOp::concat) {
                comb[f] = xf;
                comb[fin_ + f] = aggf[f];
            } else {
                comb[f] = xf + aggf[f];
            }
        }

        MatrixXd pre = MatrixXd::Zero(rows, static_cast<Eigen::Index>(nb) * fout_);
        for (int o = 0; o < fout_; ++o) {
            auto block = pre.middleCols(static_cast<Eigen::Index>(o) * nb, nb);
            for (int c = 0; c < comb_n; ++c) block += w(c, o) * comb[c];
            block.array() += b(0, o);
        }
        MatrixXd y = apply_activation(act, pre);
        if (cache) {
            cache->comb = std::move(comb);
            cache->y = y;
            cache->argmax = std::move(argmax);
        }
        return y;
    }

    // Accumulates dw/db, returns dL/dx in the same block layout.
    MatrixXd backward_blocks(const MatrixXd& dy, const Cache& cache,
                             const GraphOperators& ops) {
        const int nb = ops.n_nodes();
        const Eigen::Index rows = dy.rows();
        MatrixXd dpre = dy.cwiseProduct(activation_derivative_from_output(act, cache.y));

        const int comb_n = combined_features();
        std::vector<MatrixXd> dcomb(static_cast<std::size_t>(comb_n),
                                    MatrixXd::Zero(rows, nb));
        for (int o = 0; o < fout_; ++o) {
            auto dpo = dpre.middleCols(static_cast<Eigen::Index>(o) * nb, nb);
            db(0, o) += dpo.sum();
            for (int c = 0; c < comb_n; ++c) {
                dw(c, o) += cache.comb[static_cast<std::size_t>(c)].cwiseProduct(dpo).sum();
                dcomb[static_cast<std::size_t>(c)] += w(c, o) * dpo;
            }
        }

        MatrixXd dx = MatrixXd::Zero(rows, static_cast<Eigen::Index>(nb) * fin_);
        for (int f = 0; f < fin_; ++f) {
            auto dxf = dx.middleCols(static_cast<Eigen::Index>(f) * nb, nb);
            const MatrixXd& dself = dcomb[static_cast<std::size_t>(f)];
            dxf += dself;  // self path (add: combined block; concat: x block)
            const MatrixXd& dagg =
                update == UpdateOp::concat ? dcomb[static_cast<std::size_t>(fin_ + f)] : dself;
            if (aggregation == Aggregation::sum)
                dxf += dagg * ops.s_sum;
            else if (aggregation == Aggregation::mean)
                dxf += dagg * ops.s_mean;
            else {
                const auto& am = cache.argmax[static_cast<std::size_t>(f)];
                for (int i = 0; i < nb; ++i)
                    for (Eigen::Index r = 0; r < rows; ++r) {
                        int j = am(r, i);
                        if (j >= 0) dxf(r, j) += dagg(r, i) * ops.w_adj(i, j);
                    }
            }
        }
        return dx;
    }

private:
    int fin_ = 0;
    int fout_ = 0;
};

// Per-graph convenience matching the spec-level operation: aggregation over
// grid.adjacency_weights.
inline MatrixXd gcn_forward(const GcnLayer& layer, const GridModel& grid,
                            const MatrixXd& node_features) {
    return layer.forward_nodes(node_features, grid.adjacency_weights);
}

}  // namespace fdialab

#pragma once

// Dataset pipeline for the state predictors: initial-condition sampling,
// additive measurement noise, windowing into (observation, target) pairs,
// train/validation splitting and the binary dataset container.
//
// Flattening order is fixed everywhere: theta_0..theta_{n-1} followed by
// omega_0..omega_{n-1}. Predictors and the detector rely on it.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fdialab/dynamics.hpp"
#include "fdialab/grid.hpp"
#include "fdialab/io.hpp"
#include "fdialab/parallel.hpp"
#include "fdialab/rng.hpp"

namespace fdialab {

inline VectorXd flatten_state(const SystemState& s) {
    VectorXd x(s.theta.size() + s.omega.size());
    x << s.theta, s.omega;
    return x;
}

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const NoiseSpec&) const = default;
};

struct WindowSample {
    MatrixXd observation;  // N_p x N_f, rows are consecutive timesteps
    VectorXd target;       // flattened state at the step after the window
    std::uint64_t episode_id = 0;
    std::uint64_t start_index = 0;

    bool operator==(const WindowSample& o) const {
        return episode_id == o.episode_id && start_index == o.start_index &&
               observation == o.observation && target == o.target;
    }
};

struct PredictionDataset {
    std::vector<WindowSample> samples;
    NoiseSpec noise;
    std::vector<std::uint64_t> train_indices;
    std::vector<std::uint64_t> val_indices;
    int n_p = 0;
    int n_f = 0;

    bool operator==(const PredictionDataset&) const = default;
};

// omega_i ~ U(0, 0.3), theta_i ~ U(-0.03, 0.03), i.i.d. across buses.
inline SystemState sample_initial_state(std::mt19937_64& rng, int n_buses = 10) {
    std::uniform_real_distribution<double> u_theta(-0.03, 0.03);
    std::uniform_real_distribution<double> u_omega(0.0, 0.3);
    SystemState s;
    s.theta.resize(n_buses);
    s.omega.resize(n_buses);
    for (int i = 0; i < n_buses; ++i) s.theta[i] = u_theta(rng);
    for (int i = 0; i < n_buses; ++i) s.omega[i] = u_omega(rng);
    s.time = 0.0;
    return s;
}

// Independent N(0, sigma) perturbation on every theta and omega entry.
// sigma = 0 returns the episode unchanged.
inline Episode add_noise(const Episode& episode, const NoiseSpec& spec) {
    if (spec.sigma == 0.0) return episode;
    Episode out = episode;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, spec.sigma);
    for (auto& s : out.states) {
        for (int i = 0; i < s.theta.size(); ++i) s.theta[i] += gauss(rng);
        for (int i = 0; i < s.omega.size(); ++i) s.omega[i] += gauss(rng);
    }
    return out;
}

// Sample j observes steps [j, j+N_p) and targets step j+N_p. With the
// default stride of 1 an episode of length T yields T - N_p samples.
inline std::vector<WindowSample> make_windows(const Episode& episode, int n_p,
                                              int stride = 1) {
    const int t_ep = episode.length();
    if (t_ep <= n_p) throw std::invalid_argument("make_windows: episode shorter than N_p + 1");
    if (stride < 1) throw std::invalid_argument("make_windows: stride must be >= 1");
    const int n_f = 2 * episode.n_buses();
    std::vector<WindowSample> out;
    for (int j = 0; j + n_p < t_ep; j += stride) {
        WindowSample w;
        w.observation.resize(n_p, n_f);
        for (int r = 0; r < n_p; ++r)
            w.observation.row(r) = flatten_state(episode.states[j + r]).transpose();
        w.target = flatten_state(episode.states[j + n_p]);
        w.episode_id = episode.seed;
        w.start_index = static_cast<std::uint64_t>(j);
        out.push_back(std::move(w));
    }
    return out;
}

// Disjoint, exhaustive, deterministically shuffled split. The train side
// gets round(ratio * n) samples.
inline void split_dataset(PredictionDataset& ds, double ratio, std::uint64_t seed) {
    const std::size_t n = ds.samples.size();
    if (n == 0) throw std::invalid_argument("split_dataset: empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split_dataset: ratio must be in (0, 1)");
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    ds.train_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.val_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
}

// End-to-end generation: per-episode derived seeds, noise applied to the
// whole trajectory before windowing (targets are noisy too), 70/30 split.
struct DatasetRecipe {
    int n_episodes = 100;
    int t_ep = 500;
    double dt = 0.01;
    int n_p = 5;
    int window_stride = 1;
    double sigma = 0.0;
    double split_ratio = 0.7;
};

inline PredictionDataset generate_dataset(const GridModel& grid, const DatasetRecipe& recipe,
                                          std::uint64_t master_seed) {
    std::vector<std::vector<WindowSample>> per_episode(
        static_cast<std::size_t>(recipe.n_episodes));
    parallel_for(per_episode.size(), [&](std::size_t e) {
        std::uint64_t ep_seed = derive_seed(master_seed, "episode", e);
        auto rng = make_rng(ep_seed);
        SystemState init = sample_initial_state(rng, grid.n_buses);
        Episode ep = simulate_episode(init, grid, AttackSchedule{}, recipe.t_ep,
                                      recipe.dt, ep_seed);
        ep = add_noise(ep, NoiseSpec{recipe.sigma, derive_seed(master_seed, "noise", e)});
        per_episode[e] = make_windows(ep, recipe.n_p, recipe.window_stride);
    });
    PredictionDataset ds;
    ds.noise = NoiseSpec{recipe.sigma, derive_seed(master_seed, "noise", 0)};
    ds.n_p = recipe.n_p;
    for (auto& block : per_episode)
        for (auto& w : block) ds.samples.push_back(std::move(w));
    if (!ds.samples.empty()) ds.n_f = static_cast<int>(ds.samples[0].target.size());
    split_dataset(ds, recipe.split_ratio, derive_seed(master_seed, "split"));
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset container: text header + little-endian f64/u64 payload.

inline constexpr const char* kDatasetMagic = "FDIALAB-DATASET v1";

inline void save_dataset(const PredictionDataset& ds, const std::string& path) {
    auto out = open_for_write(path);
    HeaderWriter h(kDatasetMagic);
    h.field("n_samples", static_cast<std::uint64_t>(ds.samples.size()));
    h.field("n_p", ds.n_p);
    h.field("n_f", ds.n_f);
    h.field("sigma", ds.noise.sigma);
    h.field("noise_seed", ds.noise.seed);
    h.field("n_train", static_cast<std::uint64_t>(ds.train_indices.size()));
    h.field("n_val", static_cast<std::uint64_t>(ds.val_indices.size()));
    h.write(out);
    write_u64s(out, ds.train_indices.data(), ds.train_indices.size());
    write_u64s(out, ds.val_indices.data(), ds.val_indices.size());
    for (const auto& s : ds.samples) {
        std::uint64_t meta[2] = {s.episode_id, s.start_index};
        write_u64s(out, meta, 2);
        write_doubles(out, s.observation.data(), static_cast<std::size_t>(s.observation.size()));
        write_doubles(out, s.target.data(), static_cast<std::size_t>(s.target.size()));
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

inline PredictionDataset load_dataset(const std::string& path) {
    auto in = open_for_read(path);
    HeaderReader h(in, kDatasetMagic);
    PredictionDataset ds;
    const std::uint64_t n_samples = h.get_u64("n_samples");
    ds.n_p = static_cast<int>(h.get_i64("n_p"));
    ds.n_f = static_cast<int>(h.get_i64("n_f"));
    ds.noise.sigma = h.get_double("sigma");
    ds.noise.seed = h.get_u64("noise_seed");
    ds.train_indices.resize(h.get_u64("n_train"));
    ds.val_indices.resize(h.get_u64("n_val"));
    read_u64s(in, ds.train_indices.data(), ds.train_indices.size(), "train indices");
    read_u64s(in, ds.val_indices.data(), ds.val_indices.size(), "validation indices");
    ds.samples.resize(n_samples);
    for (auto& s : ds.samples) {
        std::uint64_t meta[2];
        read_u64s(in, meta, 2, "sample metadata");
        s.episode_id = meta[0];
        s.start_index = meta[1];
        s.observation.resize(ds.n_p, ds.n_f);
        s.target.resize(ds.n_f);
        read_doubles(in, s.observation.data(), static_cast<std::size_t>(s.observation.size()),
                     "observation");
        read_doubles(in, s.target.data(), static_cast<std::size_t>(s.target.size()), "target");
    }
    return ds;
}

}  // namespace fdialab

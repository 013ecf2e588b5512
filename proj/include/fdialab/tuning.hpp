#pragma once

// Seeded random search over the detector hyperparameter space, with a
// binned-variance importance report and JSON-lines trial persistence.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdialab/io.hpp"
#include "fdialab/parallel.hpp"
#include "fdialab/rng.hpp"

namespace fdialab {

struct SearchSpace {
    int n_layers_min = 1, n_layers_max = 3;
    int n_units_min = 10, n_units_max = 150;
    double lr_min = 1e-4, lr_max = 1e-1;  // sampled log-uniformly
};

struct Trial {
    int index = 0;
    std::vector<int> hidden;  // per-layer unit counts, sampled independently
    double lr = 0.0;
    double objective = 0.0;  // validation loss
    bool diverged = false;
    std::uint64_t seed = 0;
    double duration_seconds = 0.0;

    bool operator==(const Trial&) const = default;
};

inline Trial sample_trial(const SearchSpace& space, std::mt19937_64& rng) {
    Trial t;
    std::uniform_int_distribution<int> layers(space.n_layers_min, space.n_layers_max);
    std::uniform_int_distribution<int> units(space.n_units_min, space.n_units_max);
    std::uniform_real_distribution<double> log_lr(std::log(space.lr_min),
                                                  std::log(space.lr_max));
    int n_layers = layers(rng);
    for (int l = 0; l < n_layers; ++l) t.hidden.push_back(units(rng));
    t.lr = std::exp(log_lr(rng));
    return t;
}

struct SearchResult {
    std::vector<Trial> history;  // in trial order
    std::size_t best_index = 0;

    const Trial& best() const { return history[best_index]; }
};

// objective(trial, trial_seed) returns the validation loss; non-finite
// results (or exceptions) mark the trial diverged. Trials are independent
// and run in parallel; sampling uses per-trial derived seeds so the history
// does not depend on scheduling.
inline SearchResult random_search(const SearchSpace& space, int n_trials,
                                  const std::function<double(const Trial&, std::uint64_t)>& objective,
                                  std::uint64_t seed) {
    if (n_trials < 1) throw std::invalid_argument("random_search: n_trials must be >= 1");
    SearchResult res;
    res.history.resize(static_cast<std::size_t>(n_trials));
    parallel_for(static_cast<std::size_t>(n_trials), [&](std::size_t i) {
        std::uint64_t trial_seed = derive_seed(seed, "trial", i);
        auto rng = make_rng(trial_seed);
        Trial t = sample_trial(space, rng);
        t.index = static_cast<int>(i);
        t.seed = trial_seed;
        auto t0 = std::chrono::steady_clock::now();
        try {
            t.objective = objective(t, trial_seed);
            if (!std::isfinite(t.objective)) t.diverged = true;
        } catch (const std::exception&) {
            t.diverged = true;
            t.objective = 0.0;
        }
        t.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.history[i] = std::move(t);
    });

    bool found = false;
    for (std::size_t i = 0; i < res.history.size(); ++i) {
        const Trial& t = res.history[i];
        if (t.diverged) continue;
        if (!found || t.objective < res.history[res.best_index].objective) {
            res.best_index = i;  // ties keep the earliest trial
            found = true;
        }
    }
    if (!found) throw std::runtime_error("random_search: every trial diverged");
    return res;
}

// ---------------------------------------------------------------------------
// Importance: between-bin variance of the objective, per hyperparameter,
// normalized to sum to 1. A constant objective yields uniform scores.

struct ImportanceReport {
    double n_layers = 0.0;
    double n_units = 0.0;  // first hidden layer width
    double lr = 0.0;
};

namespace detail {

inline double binned_variance(const std::vector<double>& key, const std::vector<double>& obj,
                              int n_bins) {
    std::vector<std::size_t> order(key.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    double overall = 0.0;
    for (double o : obj) overall += o;
    overall /= static_cast<double>(obj.size());

    double var = 0.0;
    std::size_t n = key.size();
    for (int bin = 0; bin < n_bins; ++bin) {
        std::size_t lo = n * static_cast<std::size_t>(bin) / static_cast<std::size_t>(n_bins);
        std::size_t hi = n * static_cast<std::size_t>(bin + 1) / static_cast<std::size_t>(n_bins);
        if (hi <= lo) continue;
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) mean += obj[order[i]];
        mean /= static_cast<double>(hi - lo);
        var += static_cast<double>(hi - lo) * (mean - overall) * (mean - overall);
    }
    return var / static_cast<double>(n);
}

}  // namespace detail

inline ImportanceReport importance_report(const std::vector<Trial>& history) {
    std::vector<double> layers, units, lr, obj;
    for (const auto& t : history) {
        if (t.diverged || t.hidden.empty()) continue;
        layers.push_back(static_cast<double>(t.hidden.size()));
        units.push_back(static_cast<double>(t.hidden.front()));
        lr.push_back(std::log(t.lr));
        obj.push_back(t.objective);
    }
    if (obj.size() < 10)
        throw std::invalid_argument("importance_report: need at least 10 finished trials");

    const int bins = 5;
    ImportanceReport rep;
    rep.n_layers = detail::binned_variance(layers, obj, 3);
    rep.n_units = detail::binned_variance(units, obj, bins);
    rep.lr = detail::binned_variance(lr, obj, bins);
    double total = rep.n_layers + rep.n_units + rep.lr;
    if (total <= 1e-18) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    rep.n_layers /= total;
    rep.n_units /= total;
    rep.lr /= total;
    return rep;
}

// ---------------------------------------------------------------------------
// JSON-lines persistence, one trial per line.

inline void write_trial_history(const std::vector<Trial>& history, std::ostream& out) {
    for (const auto& t : history) {
        nlohmann::json j{{"trial", t.index},     {"hidden", t.hidden},
                         {"lr", t.lr},           {"objective", t.objective},
                         {"diverged", t.diverged}, {"seed", t.seed},
                         {"duration_seconds", t.duration_seconds}};
        out << j.dump() << '\n';
    }
}

inline void write_trial_history(const std::vector<Trial>& history, const std::string& path) {
    auto out = open_for_write(path, /*binary=*/false);
    write_trial_history(history, out);
}

inline std::vector<Trial> read_trial_history(std::istream& in) {
    std::vector<Trial> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Trial t;
        t.index = j.at("trial").get<int>();
        t.hidden = j.at("hidden").get<std::vector<int>>();
        t.lr = j.at("lr").get<double>();
        t.objective = j.at("objective").get<double>();
        t.diverged = j.at("diverged").get<bool>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.duration_seconds = j.at("duration_seconds").get<double>();
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<Trial> read_trial_history(const std::string& path) {
    auto in = open_for_read(path, /*binary=*/false);
    return read_trial_history(in);
}

}  // namespace fdialab

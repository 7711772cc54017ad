#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aggregation.hpp"
#include "client_update.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace fedcyte {

enum class Paradigm { Federated, LocalPerClient, Centralized };

inline std::string to_string(Paradigm p) {
    switch (p) {
    case Paradigm::Federated: return "federated";
    case Paradigm::LocalPerClient: return "local";
    case Paradigm::Centralized: return "centralized";
    }
    return "?";
}

/// Synthetic generation settings shared by every built-in profile source.
struct SyntheticSettings {
    std::size_t dim = 16;
    double class_sep = 4.0;
    double count_scale = 0.1;
    std::uint64_t seed = 42;

    friend bool operator==(const SyntheticSettings&, const SyntheticSettings&) = default;
};

/// Where a client's data comes from: a CSV file or a built-in profile.
struct DatasetSource {
    std::string name;
    std::string csv;      ///< path, when loading from disk
    std::string profile;  ///< built-in profile name, when generating

    friend bool operator==(const DatasetSource&, const DatasetSource&) = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    Paradigm paradigm = Paradigm::Federated;
    ModelSpec model{};
    AggregationStrategy strategy{};
    std::int64_t rounds = 5;
    std::int64_t kfold = 4;
    TrainerConfig trainer{};
    double focal_gamma = 2.5;
    AlphaClip alpha_clip{};
    std::vector<DatasetSource> clients;
    std::optional<DatasetSource> holdout;
    SyntheticSettings synthetic{};
    std::uint64_t master_seed = 42;

    void validate() const {
        model.validate();
        strategy.validate();
        trainer.validate();
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (kfold < 2) throw ConfigError("kfold must be >= 2");
        if (clients.empty()) throw ConfigError("at least one client is required");
        if (!(focal_gamma >= 0.0) || !std::isfinite(focal_gamma)) throw ConfigError("focal gamma must be >= 0");
        if (!(alpha_clip.lo > 0.0 && alpha_clip.lo <= alpha_clip.hi)) throw ConfigError("alpha clip must satisfy 0 < lo <= hi");
    }
};

/// Loaded datasets, in config order.
struct ExperimentData {
    std::vector<std::string> client_ids;
    std::vector<LabeledDataset> clients;
    std::optional<LabeledDataset> holdout;
};

/// Resolves every source. Built-in profiles are generated together so they share class prototypes.
inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    std::vector<DatasetSource> sources = cfg.clients;
    if (cfg.holdout) sources.push_back(*cfg.holdout);

    std::vector<ClientProfile> profiles;
    for (const auto& s : sources) {
        if (s.csv.empty() == s.profile.empty())
            throw ConfigError("data source '" + s.name + "' needs exactly one of 'csv' or 'profile'");
        if (!s.profile.empty())
            profiles.push_back(builtin_profile(s.profile, cfg.synthetic.dim, cfg.synthetic.count_scale));
    }
    auto generated = generate_synthetic(profiles, cfg.synthetic.dim, cfg.synthetic.class_sep, cfg.synthetic.seed);

    std::vector<LabeledDataset> loaded;
    std::size_t g = 0;
    for (const auto& s : sources) loaded.push_back(s.profile.empty() ? load_csv(s.csv) : std::move(generated[g++]));

    ExperimentData data;
    for (std::size_t i = 0; i < cfg.clients.size(); ++i) {
        data.client_ids.push_back(cfg.clients[i].name);
        data.clients.push_back(std::move(loaded[i]));
    }
    if (cfg.holdout) data.holdout = std::move(loaded.back());
    for (const auto& ds : data.clients)
        if (ds.dim() != data.clients[0].dim() || ds.class_names() != data.clients[0].class_names())
            throw DimensionError("clients disagree on feature dimension or class list");
    if (data.holdout &&
        (data.holdout->dim() != data.clients[0].dim() || data.holdout->class_names() != data.clients[0].class_names()))
        throw DimensionError("holdout disagrees with clients on feature dimension or class list");
    return data;
}

/// Per-(client, round) training seed; independent of scheduling order.
inline std::uint64_t client_round_seed(std::uint64_t master_seed, std::string_view client_id, std::int64_t round) {
    return derive_seed(master_seed, client_id, static_cast<std::uint64_t>(round));
}

struct ClientMetrics {
    std::string client_id;
    MetricsReport local_test;
};

struct RoundRecord {
    std::int64_t round = 0;
    std::vector<ClientMetrics> clients;
    MetricsReport global_test;
};

struct RunResult {
    std::string label;
    Paradigm paradigm = Paradigm::Federated;
    ParamVector final_params;
    std::vector<RoundRecord> per_round;
    MetricsReport combined_test;
    std::optional<MetricsReport> holdout_test;
    std::vector<double> fold_validation_bacc;  ///< centralized only
    std::int64_t selected_fold = -1;           ///< centralized only
};

struct RunOptions {
    std::size_t threads = 1;
    /// Sees exactly what crosses the client/server boundary each round.
    std::function<void(std::int64_t round, std::span<const ClientUpdate>)> on_client_updates;
};

namespace detail {

struct PreparedClients {
    std::vector<std::string> ids;
    std::vector<SplitSet> splits;
    LabeledDataset global_test;
};

inline PreparedClients prepare(const ExperimentConfig& cfg, const ExperimentData& data) {
    if (data.clients.empty()) throw DataError("no client datasets");
    PreparedClients p;
    p.ids = data.client_ids;
    std::vector<LabeledDataset> global_parts;
    for (std::size_t i = 0; i < data.clients.size(); ++i) {
        p.splits.push_back(split(data.clients[i], derive_seed(cfg.master_seed, "split:" + p.ids[i])));
        global_parts.push_back(p.splits.back().global_test);
    }
    p.global_test = concat(global_parts);
    return p;
}

inline ModelSpec resolved_model(const ExperimentConfig& cfg, const ExperimentData& data) {
    ModelSpec m = cfg.model;
    if (m.input_dim != data.clients[0].dim() || m.num_classes != data.clients[0].num_classes())
        throw DimensionError("model shape (" + std::to_string(m.input_dim) + " inputs, " +
                             std::to_string(m.num_classes) + " classes) does not match data (" +
                             std::to_string(data.clients[0].dim()) + ", " +
                             std::to_string(data.clients[0].num_classes()) + ")");
    return m;
}

inline FocalConfig focal_for(const ExperimentConfig& cfg, const LabeledDataset& train) {
    const auto counts = train.class_counts();
    return {cfg.focal_gamma, alpha_weights(counts, cfg.alpha_clip), cfg.alpha_clip};
}

inline TrainerConfig client_trainer(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainerConfig t = cfg.trainer;
    if (cfg.strategy.kind == StrategyKind::FedProx) t.prox_mu = cfg.strategy.fedprox_mu;
    t.seed = seed;
    return t;
}

inline void finish(RunResult& r, const ModelSpec& spec, const PreparedClients& p, const ExperimentData& data) {
    r.combined_test = evaluate(spec, r.final_params, p.global_test);
    if (data.holdout) r.holdout_test = evaluate(spec, r.final_params, *data.holdout);
}

} // namespace detail

/**
 * Synchronous federated training. Each round broadcasts the global model,
 * trains every client on its own training split (possibly concurrently) and
 * aggregates the returned ClientUpdates in config order.
 */
inline RunResult run_federated(const ExperimentConfig& cfg, const ExperimentData& data, const RunOptions& opts = {}) {
    cfg.validate();
    const auto spec = detail::resolved_model(cfg, data);
    const auto prepared = detail::prepare(cfg, data);
    const auto n_clients = prepared.ids.size();
    std::vector<FocalConfig> focal;
    for (const auto& s : prepared.splits) focal.push_back(detail::focal_for(cfg, s.train));

    Aggregator server(cfg.strategy);
    RunResult result;
    result.label = "Federated (" + to_string(cfg.strategy.kind) + ")";
    result.paradigm = Paradigm::Federated;
    ParamVector global = init_params(spec, cfg.master_seed);

    for (std::int64_t round = 1; round <= cfg.rounds; ++round) {
        std::vector<ClientUpdate> updates(n_clients);
        parallel_for(n_clients, opts.threads, [&](std::size_t i) {
            const auto seed = client_round_seed(cfg.master_seed, prepared.ids[i], round);
            updates[i] = local_train(spec, global, prepared.splits[i].train, detail::client_trainer(cfg, seed),
                                     focal[i], prepared.ids[i]);
        });
        if (opts.on_client_updates) opts.on_client_updates(round, updates);
        global = server.aggregate(global, updates);

        RoundRecord rec{round, {}, evaluate(spec, global, prepared.global_test)};
        for (std::size_t i = 0; i < n_clients; ++i)
            rec.clients.push_back({prepared.ids[i], evaluate(spec, global, prepared.splits[i].local_test)});
        result.per_round.push_back(std::move(rec));
    }
    result.final_params = std::move(global);
    detail::finish(result, spec, prepared, data);
    return result;
}

/// One independent model per client, trained for rounds x local_epochs epochs
/// with the same per-round seeds a federated run would use.
inline std::vector<RunResult> run_local(const ExperimentConfig& cfg, const ExperimentData& data,
                                        const RunOptions& opts = {}) {
    cfg.validate();
    const auto spec = detail::resolved_model(cfg, data);
    const auto prepared = detail::prepare(cfg, data);
    std::vector<RunResult> results(prepared.ids.size());
    parallel_for(prepared.ids.size(), opts.threads, [&](std::size_t i) {
        const auto& id = prepared.ids[i];
        const auto& s = prepared.splits[i];
        const auto focal = detail::focal_for(cfg, s.train);
        RunResult r;
        r.label = "Local - " + id;
        r.paradigm = Paradigm::LocalPerClient;
        ParamVector w = init_params(spec, cfg.master_seed);
        for (std::int64_t round = 1; round <= cfg.rounds; ++round) {
            auto tcfg = detail::client_trainer(cfg, client_round_seed(cfg.master_seed, id, round));
            w = local_train(spec, w, s.train, tcfg, focal, id).params;
            RoundRecord rec{round, {{id, evaluate(spec, w, s.local_test)}}, evaluate(spec, w, prepared.global_test)};
            r.per_round.push_back(std::move(rec));
        }
        r.final_params = std::move(w);
        detail::finish(r, spec, prepared, data);
        results[i] = std::move(r);
    });
    return results;
}

/// Fold index per sample: a seeded shuffle cut into k near-equal folds
/// (the first n mod k folds hold one extra sample).
inline std::vector<std::size_t> kfold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold must be >= 2");
    if (n < k) throw DataError("kfold: " + std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "kfold"));
    rng.shuffle(order.begin(), order.end());
    std::vector<std::size_t> fold(n);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) fold[order[pos++]] = f;
    }
    return fold;
}

/**
 * Pools every client's train and validation buckets and runs k-fold cross
 * validation, each fold model trained for rounds x local_epochs epochs. The
 * reported model is the fold model with the best held-out-fold balanced
 * accuracy (lowest fold index on ties).
 */
inline RunResult run_centralized(const ExperimentConfig& cfg, const ExperimentData& data,
                                 const RunOptions& opts = {}) {
    cfg.validate();
    const auto spec = detail::resolved_model(cfg, data);
    const auto prepared = detail::prepare(cfg, data);
    std::vector<LabeledDataset> parts;
    for (const auto& s : prepared.splits) {
        parts.push_back(s.train);
        parts.push_back(s.validation);
    }
    const auto pooled = concat(parts);
    const auto k = static_cast<std::size_t>(cfg.kfold);
    const auto fold = kfold_assignment(pooled.size(), k, cfg.master_seed);

    std::vector<ParamVector> models(k);
    std::vector<double> bacc(k);
    parallel_for(k, opts.threads, [&](std::size_t f) {
        std::vector<std::size_t> train_idx, val_idx;
        for (std::size_t i = 0; i < pooled.size(); ++i) (fold[i] == f ? val_idx : train_idx).push_back(i);
        const auto train = pooled.subset(train_idx);
        const auto val = pooled.subset(val_idx);
        auto tcfg = detail::client_trainer(cfg, derive_seed(cfg.master_seed, "centralized", f));
        tcfg.local_epochs = cfg.rounds * cfg.trainer.local_epochs;
        models[f] = local_train(spec, init_params(spec, cfg.master_seed), train, tcfg, detail::focal_for(cfg, train),
                                "centralized")
                        .params;
        bacc[f] = evaluate(spec, models[f], val).balanced_accuracy;
    });
    const auto best = static_cast<std::size_t>(std::max_element(bacc.begin(), bacc.end()) - bacc.begin());

    RunResult r;
    r.label = "Centralized";
    r.paradigm = Paradigm::Centralized;
    r.final_params = std::move(models[best]);
    r.fold_validation_bacc = bacc;
    r.selected_fold = static_cast<std::int64_t>(best);
    detail::finish(r, spec, prepared, data);
    return r;
}

/// Dispatches on cfg.paradigm; federated and centralized yield one result, local one per client.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                             const RunOptions& opts = {}) {
    switch (cfg.paradigm) {
    case Paradigm::Federated: return {run_federated(cfg, data, opts)};
    case Paradigm::LocalPerClient: return run_local(cfg, data, opts);
    case Paradigm::Centralized: return {run_centralized(cfg, data, opts)};
    }
    throw ConfigError("unknown paradigm");
}

} // namespace fedcyte

#pragma once

// JSON experiment and generation configs. Unknown keys are rejected, and
// to_json() writes every field so a resolved config reproduces its run.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggregation.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "orchestrator.hpp"
#include "trainer.hpp"

namespace fedcyte {

using json = nlohmann::json;

namespace detail {

inline void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    require_object(j, where);
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* allowed : keys) known = known || k == allowed;
        if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline std::string read_string(const json& j, const char* key, const std::string& where) {
    std::string s;
    read(j, key, s, where);
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Enum names

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "softmax") return ModelKind::SoftmaxRegression;
    if (s == "mlp1h") return ModelKind::Mlp1h;
    throw ConfigError("unknown model kind '" + s + "' (expected softmax or mlp1h)");
}

inline StrategyKind parse_strategy_kind(const std::string& s) {
    for (auto k : {StrategyKind::FedAvg, StrategyKind::FedMedian, StrategyKind::FedProx, StrategyKind::FedOpt})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown strategy '" + s + "' (expected FedAvg, FedMedian, FedProx or FedOpt)");
}

inline Paradigm parse_paradigm(const std::string& s) {
    for (auto p : {Paradigm::Federated, Paradigm::LocalPerClient, Paradigm::Centralized})
        if (s == to_string(p)) return p;
    throw ConfigError("unknown paradigm '" + s + "' (expected federated, local or centralized)");
}

// ---------------------------------------------------------------------------
// Run configs

/// Data sources shared by every experiment of a config document.
struct DataConfig {
    SyntheticSettings synthetic{};
    std::vector<DatasetSource> clients;
    std::optional<DatasetSource> holdout;
};

struct RunConfig {
    std::uint64_t master_seed = 42;
    DataConfig data;
    std::vector<ExperimentConfig> experiments;
};

inline json to_json(const DatasetSource& s) {
    json j = {{"name", s.name}};
    if (!s.csv.empty()) j["csv"] = s.csv;
    if (!s.profile.empty()) j["profile"] = s.profile;
    return j;
}

inline DatasetSource source_from_json(const json& j, const std::string& where, const std::filesystem::path& base) {
    detail::allow_keys(j, where, {"name", "csv", "profile"});
    DatasetSource s;
    s.name = detail::read_string(j, "name", where);
    s.csv = detail::read_string(j, "csv", where);
    s.profile = detail::read_string(j, "profile", where);
    if (s.csv.empty() == s.profile.empty()) throw ConfigError(where + ": needs exactly one of 'csv' or 'profile'");
    if (!s.profile.empty()) {
        const auto& names = builtin_profile_names();
        if (std::find(names.begin(), names.end(), s.profile) == names.end())
            throw ConfigError(where + ": unknown built-in profile '" + s.profile + "'");
    }
    if (s.name.empty()) s.name = s.profile.empty() ? std::filesystem::path(s.csv).stem().string() : s.profile;
    if (!s.csv.empty() && !base.empty() && std::filesystem::path(s.csv).is_relative())
        s.csv = (base / s.csv).lexically_normal().string();
    return s;
}

inline json to_json(const ExperimentConfig& e) {
    json j;
    j["name"] = e.name;
    j["paradigm"] = to_string(e.paradigm);
    j["rounds"] = e.rounds;
    j["kfold"] = e.kfold;
    j["master_seed"] = e.master_seed;
    j["model"] = {{"kind", to_string(e.model.kind)},
                  {"input_dim", e.model.input_dim},
                  {"num_classes", e.model.num_classes},
                  {"hidden_dim", e.model.hidden_dim},
                  {"frozen_fraction", e.model.frozen_fraction}};
    j["strategy"] = {{"kind", to_string(e.strategy.kind)},
                     {"fedopt",
                      {{"server_lr", e.strategy.fedopt.server_lr},
                       {"beta1", e.strategy.fedopt.beta1},
                       {"beta2", e.strategy.fedopt.beta2},
                       {"tau", e.strategy.fedopt.tau}}},
                     {"fedmedian", {{"iqr_filter", e.strategy.fedmedian.iqr_filter}, {"iqr_k", e.strategy.fedmedian.iqr_k}}},
                     {"fedprox_mu", e.strategy.fedprox_mu}};
    j["trainer"] = {{"local_epochs", e.trainer.local_epochs},     {"micro_batch", e.trainer.micro_batch},
                    {"accumulation_steps", e.trainer.accumulation_steps}, {"learning_rate", e.trainer.learning_rate},
                    {"momentum", e.trainer.momentum},             {"clip_max_norm", e.trainer.clip_max_norm},
                    {"prox_mu", e.trainer.prox_mu}};
    j["focal"] = {{"gamma", e.focal_gamma}, {"alpha_clip", {e.alpha_clip.lo, e.alpha_clip.hi}}};
    json clients = json::array();
    for (const auto& c : e.clients) clients.push_back(to_json(c));
    j["data"] = {{"synthetic",
                  {{"dim", e.synthetic.dim},
                   {"class_sep", e.synthetic.class_sep},
                   {"count_scale", e.synthetic.count_scale},
                   {"seed", e.synthetic.seed}}},
                 {"clients", clients},
                 {"holdout", e.holdout ? to_json(*e.holdout) : json(nullptr)}};
    return j;
}

namespace detail {

/// Reads the experiment-level keys of `j` into `e` (which already carries the shared data section).
inline void experiment_from_json(const json& j, ExperimentConfig& e, const std::string& where) {
    allow_keys(j, where, {"name", "paradigm", "rounds", "kfold", "model", "strategy", "trainer", "focal"});
    read(j, "name", e.name, where);
    if (j.contains("paradigm")) e.paradigm = parse_paradigm(read_string(j, "paradigm", where));
    read(j, "rounds", e.rounds, where);
    read(j, "kfold", e.kfold, where);

    if (j.contains("model")) {
        const auto& m = j["model"];
        const auto w = where + ".model";
        allow_keys(m, w, {"kind", "input_dim", "num_classes", "hidden_dim", "frozen_fraction"});
        if (m.contains("kind")) e.model.kind = parse_model_kind(read_string(m, "kind", w));
        e.model.frozen_fraction = ModelSpec::default_frozen_fraction(e.model.kind);
        read(m, "input_dim", e.model.input_dim, w);
        read(m, "num_classes", e.model.num_classes, w);
        read(m, "hidden_dim", e.model.hidden_dim, w);
        read(m, "frozen_fraction", e.model.frozen_fraction, w);
    }
    if (j.contains("strategy")) {
        const auto& s = j["strategy"];
        const auto w = where + ".strategy";
        allow_keys(s, w, {"kind", "fedopt", "fedmedian", "fedprox_mu"});
        if (s.contains("kind")) e.strategy.kind = parse_strategy_kind(read_string(s, "kind", w));
        if (s.contains("fedopt")) {
            const auto& o = s["fedopt"];
            allow_keys(o, w + ".fedopt", {"server_lr", "beta1", "beta2", "tau"});
            read(o, "server_lr", e.strategy.fedopt.server_lr, w);
            read(o, "beta1", e.strategy.fedopt.beta1, w);
            read(o, "beta2", e.strategy.fedopt.beta2, w);
            read(o, "tau", e.strategy.fedopt.tau, w);
        }
        if (s.contains("fedmedian")) {
            const auto& o = s["fedmedian"];
            allow_keys(o, w + ".fedmedian", {"iqr_filter", "iqr_k"});
            read(o, "iqr_filter", e.strategy.fedmedian.iqr_filter, w);
            read(o, "iqr_k", e.strategy.fedmedian.iqr_k, w);
        }
        read(s, "fedprox_mu", e.strategy.fedprox_mu, w);
    }
    if (j.contains("trainer")) {
        const auto& t = j["trainer"];
        const auto w = where + ".trainer";
        allow_keys(t, w,
                   {"local_epochs", "micro_batch", "accumulation_steps", "learning_rate", "momentum", "clip_max_norm",
                    "prox_mu"});
        read(t, "local_epochs", e.trainer.local_epochs, w);
        read(t, "micro_batch", e.trainer.micro_batch, w);
        read(t, "accumulation_steps", e.trainer.accumulation_steps, w);
        read(t, "learning_rate", e.trainer.learning_rate, w);
        read(t, "momentum", e.trainer.momentum, w);
        read(t, "clip_max_norm", e.trainer.clip_max_norm, w);
        read(t, "prox_mu", e.trainer.prox_mu, w);
    }
    if (j.contains("focal")) {
        const auto& f = j["focal"];
        const auto w = where + ".focal";
        allow_keys(f, w, {"gamma", "alpha_clip"});
        read(f, "gamma", e.focal_gamma, w);
        if (f.contains("alpha_clip")) {
            std::vector<double> clip;
            read(f, "alpha_clip", clip, w);
            if (clip.size() != 2) throw ConfigError(w + ".alpha_clip: expected [lo, hi]");
            e.alpha_clip = {clip[0], clip[1]};
        }
    }
}

} // namespace detail

/**
 * Parses a run config document:
 *
 *   { "master_seed": 42,
 *     "data": { "synthetic": {...}, "clients": [...], "holdout": {...} | null },
 *     "experiments": [ { "name", "paradigm", "rounds", "kfold",
 *                        "model", "strategy", "trainer", "focal" }, ... ] }
 *
 * Relative CSV paths resolve against `base_dir`. `seed_override` replaces
 * master_seed (and the synthetic seed when that is not given explicitly).
 */
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = {},
                                  std::optional<std::uint64_t> seed_override = {}) {
    detail::allow_keys(j, "config", {"master_seed", "data", "experiments"});
    RunConfig rc;
    detail::read(j, "master_seed", rc.master_seed, "config");
    if (seed_override) rc.master_seed = *seed_override;
    rc.data.synthetic.seed = rc.master_seed;

    if (!j.contains("data")) throw ConfigError("config: missing 'data'");
    const auto& d = j["data"];
    detail::allow_keys(d, "data", {"synthetic", "clients", "holdout"});
    if (d.contains("synthetic")) {
        const auto& s = d["synthetic"];
        detail::allow_keys(s, "data.synthetic", {"dim", "class_sep", "count_scale", "seed"});
        detail::read(s, "dim", rc.data.synthetic.dim, "data.synthetic");
        detail::read(s, "class_sep", rc.data.synthetic.class_sep, "data.synthetic");
        detail::read(s, "count_scale", rc.data.synthetic.count_scale, "data.synthetic");
        detail::read(s, "seed", rc.data.synthetic.seed, "data.synthetic");
    }
    if (!d.contains("clients") || !d["clients"].is_array() || d["clients"].empty())
        throw ConfigError("data.clients: expected a non-empty array");
    for (std::size_t i = 0; i < d["clients"].size(); ++i)
        rc.data.clients.push_back(
            source_from_json(d["clients"][i], "data.clients[" + std::to_string(i) + "]", base_dir));
    if (d.contains("holdout") && !d["holdout"].is_null())
        rc.data.holdout = source_from_json(d["holdout"], "data.holdout", base_dir);

    if (!j.contains("experiments") || !j["experiments"].is_array())
        throw ConfigError("config: 'experiments' must be an array");
    for (std::size_t i = 0; i < j["experiments"].size(); ++i) {
        ExperimentConfig e;
        e.master_seed = rc.master_seed;
        e.synthetic = rc.data.synthetic;
        e.clients = rc.data.clients;
        e.holdout = rc.data.holdout;
        e.model.input_dim = 0;  // resolved from data
        e.model.num_classes = 0;
        e.name = "experiment-" + std::to_string(i);
        detail::experiment_from_json(j["experiments"][i], e, "experiments[" + std::to_string(i) + "]");
        rc.experiments.push_back(std::move(e));
    }
    return rc;
}

/// Fills shape fields left at zero from the loaded data, then validates.
inline void resolve_model_shape(ExperimentConfig& e, const ExperimentData& data) {
    if (e.model.input_dim == 0) e.model.input_dim = data.clients.at(0).dim();
    if (e.model.num_classes == 0) e.model.num_classes = data.clients.at(0).num_classes();
    e.validate();
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Presets

inline json table1_data_section(double count_scale) {
    return {{"synthetic", {{"dim", 16}, {"class_sep", 5.0}, {"count_scale", count_scale}}},
            {"clients", {{{"name", "client1"}, {"profile", "client1"}}, {{"name", "client2"}, {"profile", "client2"}}}},
            {"holdout", {{"name", "client3-holdout"}, {"profile", "client3-holdout"}}}};
}

inline const std::vector<std::string>& run_preset_names() {
    static const std::vector<std::string> names = {"strategy-sweep", "paradigm-compare", "strategy-sweep-full",
                                                   "paradigm-compare-full"};
    return names;
}

/// Built-in run configs on the built-in profiles; the "-full" variants use unscaled counts.
inline json run_preset(const std::string& name) {
    const bool full = name.ends_with("-full");
    const std::string base = full ? name.substr(0, name.size() - 5) : name;
    json j = {{"master_seed", 42}, {"data", table1_data_section(full ? 1.0 : 0.1)}, {"experiments", json::array()}};
    if (base == "strategy-sweep") {
        for (const char* model : {"softmax", "mlp1h"})
            for (const char* s : {"FedAvg", "FedMedian", "FedProx", "FedOpt"})
                j["experiments"].push_back({{"name", std::string(s) + "/" + model},
                                            {"paradigm", "federated"},
                                            {"model", {{"kind", model}}},
                                            {"strategy", {{"kind", s}}}});
        return j;
    }
    if (base == "paradigm-compare") {
        for (const char* model : {"softmax", "mlp1h"}) {
            const std::string m = model;
            j["experiments"].push_back({{"name", "local/" + m}, {"paradigm", "local"}, {"model", {{"kind", model}}}});
            j["experiments"].push_back({{"name", "federated/" + m},
                                        {"paradigm", "federated"},
                                        {"model", {{"kind", model}}},
                                        {"strategy", {{"kind", "FedMedian"}}}});
            j["experiments"].push_back(
                {{"name", "centralized/" + m}, {"paradigm", "centralized"}, {"model", {{"kind", model}}}});
        }
        return j;
    }
    throw ConfigError("unknown run preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Generation configs

struct GenerateConfig {
    std::size_t dim = 16;
    double class_sep = 5.0;
    std::uint64_t seed = 42;
    std::vector<std::string> class_names;
    std::vector<ClientProfile> profiles;
};

inline json to_json(const GenerateConfig& g) {
    json profiles = json::array();
    for (const auto& p : g.profiles)
        profiles.push_back({{"name", p.name},
                            {"class_counts", p.class_counts},
                            {"shift",
                             {{"scale", p.shift.scale},
                              {"offset", p.shift.offset},
                              {"rotation_seed", p.shift.rotation_seed},
                              {"rotation_strength", p.shift.rotation_strength}}}});
    return {{"dim", g.dim}, {"class_sep", g.class_sep}, {"seed", g.seed}, {"class_names", g.class_names},
            {"profiles", profiles}};
}

/**
 * Parses a generation config. Profiles are either built-in references
 * ({"builtin": "client1", "count_scale": 0.1}) or explicit
 * ({"name", "class_counts", "shift": {"scale", "offset", "rotation_seed", "rotation_strength"}}).
 * A manifest written by `generate` is itself a valid config ("files" is ignored).
 */
inline GenerateConfig parse_generate_config(const json& j, std::optional<std::uint64_t> seed_override = {}) {
    detail::allow_keys(j, "config", {"dim", "class_sep", "seed", "class_names", "profiles", "files"});
    GenerateConfig g;
    detail::read(j, "dim", g.dim, "config");
    detail::read(j, "class_sep", g.class_sep, "config");
    detail::read(j, "seed", g.seed, "config");
    if (seed_override) g.seed = *seed_override;
    detail::read(j, "class_names", g.class_names, "config");
    if (g.class_names.empty()) g.class_names = table1_class_names();
    for (const auto& n : g.class_names)
        if (n.empty() || n.find(',') != std::string::npos || n.find('\n') != std::string::npos)
            throw ConfigError("class names must be non-empty and free of commas and newlines");
    if (g.dim < 2) throw ConfigError("dim must be >= 2");
    if (!(g.class_sep > 0.0)) throw ConfigError("class_sep must be > 0");

    if (!j.contains("profiles") || !j["profiles"].is_array() || j["profiles"].empty())
        throw ConfigError("profiles: expected a non-empty array");
    for (std::size_t i = 0; i < j["profiles"].size(); ++i) {
        const auto& p = j["profiles"][i];
        const auto where = "profiles[" + std::to_string(i) + "]";
        if (p.is_string()) {
            g.profiles.push_back(builtin_profile(p.get<std::string>(), g.dim));
            continue;
        }
        if (p.contains("builtin")) {
            detail::allow_keys(p, where, {"builtin", "name", "count_scale"});
            double scale = 1.0;
            detail::read(p, "count_scale", scale, where);
            auto prof = builtin_profile(detail::read_string(p, "builtin", where), g.dim, scale);
            if (p.contains("name")) prof.name = detail::read_string(p, "name", where);
            g.profiles.push_back(std::move(prof));
            continue;
        }
        detail::allow_keys(p, where, {"name", "class_counts", "shift"});
        ClientProfile prof;
        prof.name = detail::read_string(p, "name", where);
        detail::read(p, "class_counts", prof.class_counts, where);
        prof.shift = FeatureShift::identity(g.dim);
        if (p.contains("shift")) {
            const auto& s = p["shift"];
            detail::allow_keys(s, where + ".shift", {"scale", "offset", "rotation_seed", "rotation_strength"});
            detail::read(s, "scale", prof.shift.scale, where + ".shift");
            detail::read(s, "offset", prof.shift.offset, where + ".shift");
            detail::read(s, "rotation_seed", prof.shift.rotation_seed, where + ".shift");
            detail::read(s, "rotation_strength", prof.shift.rotation_strength, where + ".shift");
        }
        g.profiles.push_back(std::move(prof));
    }
    for (const auto& p : g.profiles) {
        if (p.name.empty()) throw ConfigError("profile without a name");
        if (p.class_counts.size() != g.class_names.size())
            throw ConfigError("profile '" + p.name + "': class_counts length does not match class_names");
        if (p.shift.scale.size() != g.dim || p.shift.offset.size() != g.dim)
            throw ConfigError("profile '" + p.name + "': shift vectors must have length dim");
        bool any = false;
        for (auto c : p.class_counts) {
            if (c < 0) throw ConfigError("profile '" + p.name + "': negative class count");
            any = any || c > 0;
        }
        if (!any) throw ConfigError("profile '" + p.name + "': no samples");
        if (p.name.find('/') != std::string::npos || p.name.starts_with("."))
            throw ConfigError("profile name '" + p.name + "' cannot be used as a file name");
    }
    return g;
}

inline json generate_preset(const std::string& name) {
    double scale = 0.0;
    if (name == "paper-table1") scale = 1.0;
    else if (name == "paper-table1-tenth") scale = 0.1;
    else throw ConfigError("unknown generate preset '" + name + "'");
    json profiles = json::array();
    for (const auto& p : builtin_profile_names()) profiles.push_back({{"builtin", p}, {"count_scale", scale}});
    return {{"dim", 16}, {"class_sep", 5.0}, {"seed", 42}, {"profiles", profiles}};
}

} // namespace fedcyte

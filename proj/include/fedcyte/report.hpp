#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "orchestrator.hpp"

namespace fedcyte {

// ---------------------------------------------------------------------------
// Results document: one JSON object per line, one line per experiment.

inline json to_json(const MetricsReport& m) {
    return {{"accuracy", m.accuracy},         {"balanced_accuracy", m.balanced_accuracy},
            {"macro_f1", m.macro_f1},         {"per_class_f1", m.per_class_f1},
            {"per_class_recall", m.per_class_recall}, {"support", m.support},
            {"confusion", m.confusion}};
}

inline json summary_json(const MetricsReport& m) {
    return {{"accuracy", m.accuracy}, {"balanced_accuracy", m.balanced_accuracy}, {"macro_f1", m.macro_f1}};
}

inline json to_json(const RunResult& r) {
    json rounds = json::array();
    for (const auto& rec : r.per_round) {
        json clients = json::array();
        for (const auto& c : rec.clients) {
            auto s = summary_json(c.local_test);
            s["client_id"] = c.client_id;
            clients.push_back(std::move(s));
        }
        rounds.push_back({{"round", rec.round}, {"global_test", summary_json(rec.global_test)}, {"clients", clients}});
    }
    json j = {{"label", r.label},
              {"paradigm", to_string(r.paradigm)},
              {"combined_test", to_json(r.combined_test)},
              {"holdout_test", r.holdout_test ? to_json(*r.holdout_test) : json(nullptr)},
              {"per_round", rounds},
              {"final_params", std::vector<double>(r.final_params.values().begin(), r.final_params.values().end())}};
    if (r.paradigm == Paradigm::Centralized) {
        j["fold_validation_balanced_accuracy"] = r.fold_validation_bacc;
        j["selected_fold"] = r.selected_fold;
    }
    return j;
}

inline json experiment_record(std::size_t id, const ExperimentConfig& resolved, const std::vector<std::string>& class_names,
                              const std::vector<RunResult>& runs) {
    json jr = json::array();
    for (const auto& r : runs) jr.push_back(to_json(r));
    return {{"experiment", id}, {"name", resolved.name}, {"config", to_json(resolved)}, {"class_names", class_names},
            {"runs", jr}};
}

inline std::string results_document(const std::vector<json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<json> parse_results_document(const std::string& text) {
    std::vector<json> records;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("results: invalid JSON: ") + e.what(), line_no);
        }
        for (const char* key : {"experiment", "name", "config", "class_names", "runs"})
            if (!j.is_object() || !j.contains(key))
                throw ParseError(std::string("results: record missing '") + key + "'", line_no);
        if (!j["runs"].is_array() || !j["class_names"].is_array())
            throw ParseError("results: 'runs' and 'class_names' must be arrays", line_no);
        for (const auto& r : j["runs"])
            for (const char* key : {"label", "paradigm", "combined_test", "holdout_test"})
                if (!r.is_object() || !r.contains(key))
                    throw ParseError(std::string("results: run missing '") + key + "'", line_no);
        records.push_back(std::move(j));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Table rendering (Markdown). Pure function of the records.

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string table_row(const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + c + " |";
    return s + "\n";
}

inline std::string table_header(const std::vector<std::string>& cells) {
    std::string s = table_row(cells) + "|";
    for (std::size_t i = 0; i < cells.size(); ++i) s += i == 0 ? " --- |" : " ---: |";
    return s + "\n";
}

struct RunView {
    std::string model;
    std::string strategy;
    std::string paradigm;
    std::string label;
    const json* run;
    const json* class_names;
};

inline std::vector<RunView> run_views(const std::vector<json>& records) {
    std::vector<RunView> views;
    for (const auto& rec : records) {
        const auto& cfg = rec["config"];
        const std::string model = cfg.value("/model/kind"_json_pointer, std::string("?"));
        const std::string strategy = cfg.value("/strategy/kind"_json_pointer, std::string("?"));
        for (const auto& r : rec["runs"])
            views.push_back({model, strategy, r["paradigm"].get<std::string>(), r["label"].get<std::string>(), &r,
                             &rec["class_names"]});
    }
    return views;
}

inline std::vector<std::string> model_order(const std::vector<RunView>& views) {
    std::vector<std::string> models;
    for (const auto& v : views)
        if (std::find(models.begin(), models.end(), v.model) == models.end()) models.push_back(v.model);
    return models;
}

inline double metric(const json& m, const char* key) { return m.at(key).get<double>(); }

} // namespace detail

/**
 * Renders four tables: aggregation strategies, training paradigms, class-wise
 * F1 on the combined global test, and class-wise F1 on the holdout
 * institution (classes present there only).
 */
inline std::string render_report(const std::vector<json>& records) {
    using namespace detail;
    const auto views = run_views(records);
    const auto models = model_order(views);
    std::string out = "# Results\n\n";

    out += "## Aggregation strategies (combined global test)\n\n";
    out += table_header({"Aggregation", "Model", "Balanced Accuracy", "Macro F1"});
    for (const auto& v : views) {
        if (v.paradigm != "federated") continue;
        const auto& m = (*v.run)["combined_test"];
        out += table_row({v.strategy, v.model, fixed4(metric(m, "balanced_accuracy")), fixed4(metric(m, "macro_f1"))});
    }

    out += "\n## Training paradigms (combined global test)\n\n";
    out += table_header({"Model", "Training Configuration", "Accuracy", "Bal. Acc"});
    for (const auto& model : models)
        for (const auto& v : views) {
            if (v.model != model) continue;
            const auto& m = (*v.run)["combined_test"];
            out += table_row({v.model, v.label, fixed4(metric(m, "accuracy")), fixed4(metric(m, "balanced_accuracy"))});
        }

    out += "\n## Class-wise F1 (combined global test)\n";
    for (const auto& model : models) {
        std::vector<const RunView*> cols;
        for (const auto& v : views)
            if (v.model == model) cols.push_back(&v);
        std::vector<std::string> header = {"Cell Type"};
        for (const auto* c : cols) header.push_back(c->label);
        header.push_back("Images");
        out += "\n### " + model + "\n\n" + table_header(header);
        const auto& names = *cols.front()->class_names;
        for (std::size_t k = 0; k < names.size(); ++k) {
            std::vector<std::string> row = {names[k].get<std::string>()};
            for (const auto* c : cols) row.push_back(fixed4((*c->run)["combined_test"]["per_class_f1"][k].get<double>()));
            row.push_back(std::to_string((*cols.front()->run)["combined_test"]["support"][k].get<std::int64_t>()));
            out += table_row(row);
        }
    }

    out += "\n## Class-wise F1 (holdout institution)\n";
    for (const auto& model : models) {
        std::vector<const RunView*> cols;
        for (const auto& v : views)
            if (v.model == model && v.paradigm != "local" && !(*v.run)["holdout_test"].is_null()) cols.push_back(&v);
        if (cols.empty()) continue;
        std::vector<std::string> header = {"Cell Type"};
        for (const auto* c : cols) header.push_back(c->label);
        out += "\n### " + model + "\n\n" + table_header(header);
        const auto& names = *cols.front()->class_names;
        const auto& support = (*cols.front()->run)["holdout_test"]["support"];
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (support[k].get<std::int64_t>() == 0) continue;
            std::vector<std::string> row = {names[k].get<std::string>()};
            for (const auto* c : cols) row.push_back(fixed4((*c->run)["holdout_test"]["per_class_f1"][k].get<double>()));
            out += table_row(row);
        }
        for (const auto& [title, key] : {std::pair{"**Accuracy**", "accuracy"}, std::pair{"**Bal. Accuracy**", "balanced_accuracy"}}) {
            std::vector<std::string> row = {title};
            for (const auto* c : cols) row.push_back(fixed4(metric((*c->run)["holdout_test"], key)));
            out += table_row(row);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

/// Writes to `<path>.tmp` then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace fedcyte

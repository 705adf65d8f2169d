#pragma once

#include <adjcheck/adjustment.hpp>
#include <adjcheck/inference.hpp>
#include <adjcheck/sem.hpp>
#include <adjcheck/simulation.hpp>

#include <nlohmann/json.hpp>

#include <string>

namespace adjcheck {

using nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

/// `{"strategy": "...", "sets": [["A1", "B1"], ...]}`
inline json collection_to_json(const AdjustmentCollection& zc, const Dag& g) {
    json sets = json::array();
    for (const auto& z : zc.sets) sets.push_back(g.names(z));
    return {{"strategy", std::string(to_string(zc.strategy))}, {"sets", std::move(sets)}};
}

/// Inverse of collection_to_json; labels are resolved against `g`.
inline AdjustmentCollection collection_from_json(const json& j, const Dag& g, NodeId x, NodeId y) {
    try {
        std::vector<NodeSet> sets;
        for (const auto& s : j.at("sets")) sets.push_back(g.set(s.get<std::vector<std::string>>()));
        AdjustmentCollection zc = user_collection(g, x, y, std::move(sets));
        if (j.contains("strategy")) zc.strategy = parse_strategy(j.at("strategy").get<std::string>());
        return zc;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

inline json report_to_json(const TestReport& r, bool verbose = false) {
    json out;
    out["status"] = r.tested() ? "tested" : "untestable";
    if (!r.tested()) out["reason"] = r.reason;
    out["strategy"] = std::string(to_string(r.strategy));
    out["x"] = r.x;
    out["y"] = r.y;
    out["k"] = r.k;
    out["n"] = r.n;
    out["sets"] = r.sets;
    out["warnings"] = r.warnings;
    if (r.tested()) {
        out["statistic"] = r.statistic;
        out["rank"] = r.rank_used;
        out["p_value"] = r.p_value;
    } else {
        out["statistic"] = nullptr;
        out["rank"] = nullptr;
        out["p_value"] = nullptr;
    }
    if (verbose) {
        if (r.betas.size() > 0) out["betas"] = vector_to_json(r.betas);
        if (r.sigma_hat.size() > 0) out["sigma_hat"] = matrix_to_json(r.sigma_hat);
        if (r.delta_hat.size() > 0) out["delta_hat"] = matrix_to_json(r.delta_hat);
    }
    return out;
}

inline std::string cells_to_csv(const std::vector<CellResult>& cells) {
    std::string out =
        "cell,graph_size,neighborhood,model,candidate,accuracy,edits,strategy,n,family,x,y,k,hypothesis,"
        "tested,untestable,auc,rejection_rate_05\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        out += std::to_string(i) + "," + std::to_string(c.graph_size) + "," + std::to_string(c.neighborhood) + "," +
               std::to_string(c.model_index) + "," + std::to_string(c.candidate_index) + "," + c.accuracy + "," +
               std::to_string(c.edits) + "," + std::string(to_string(c.strategy)) + "," + std::to_string(c.n) + "," +
               std::string(to_string(c.family)) + "," + c.x + "," + c.y + "," + std::to_string(c.k) + "," +
               std::string(to_string(c.hypothesis_class)) + "," + std::to_string(c.p_values.size()) + "," +
               std::to_string(c.untestable_replications) + "," + format_number(c.auc) + "," +
               format_number(c.rejection_rate_05) + "\n";
    }
    return out;
}

/// One row per cell: the cell index followed by its sorted p-values.
inline std::string pp_data_csv(const std::vector<CellResult>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::vector<double> p = cells[i].p_values;
        std::sort(p.begin(), p.end());
        out += std::to_string(i);
        for (double v : p) out += "," + format_number(v);
        out += "\n";
    }
    return out;
}

inline json rejection_table_to_json(const std::vector<RejectionRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"accuracy", r.accuracy},
                       {"n", r.n},
                       {"strategy", std::string(to_string(r.strategy))},
                       {"hypothesis", r.hypothesis},
                       {"tests", r.tests},
                       {"rejections", r.rejections},
                       {"rate", r.rate()}});
    return out;
}

inline json experiment_summary(const SimConfig& cfg, const ExperimentResult& result) {
    json strategies = json::array();
    for (Strategy s : cfg.strategies) strategies.push_back(std::string(to_string(s)));
    json out;
    out["config"] = {{"graph_sizes", cfg.graph_sizes},
                     {"neighborhood_sizes", cfg.neighborhood_sizes},
                     {"n_models", cfg.n_models},
                     {"n_candidates_per_model", cfg.n_candidates_per_model},
                     {"test_sample_sizes", cfg.test_sample_sizes},
                     {"replications", cfg.replications_per_cell},
                     {"strategies", strategies},
                     {"accuracies", cfg.accuracies},
                     {"low_accuracy_edits", cfg.low_accuracy_edits},
                     {"high_accuracy_edits", cfg.high_accuracy_edits},
                     {"base_seed", cfg.base_seed},
                     {"discard_rank1", cfg.discard_rank1},
                     {"cap", cfg.cap}};
    out["candidate_generation"] =
        "random edge edits of the true graph: low accuracy = low_accuracy_edits edits, high accuracy = "
        "high_accuracy_edits edits, true = unmodified";
    out["cells"] = result.cells.size();
    out["untestable_cells"] = result.untestable_cells;
    out["skipped_models"] = result.skipped_models;
    if (!result.cells.empty()) out["rejection_table"] = rejection_table_to_json(rejection_table(result.cells));
    else out["rejection_table"] = json::array();
    return out;
}

}  // namespace adjcheck

#pragma once

#include <adjcheck/adjustment.hpp>
#include <adjcheck/graph.hpp>
#include <adjcheck/inference.hpp>
#include <adjcheck/sem.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace adjcheck {

enum class HypothesisClass { H0Star, H0NotH0Star, NotH0 };

inline std::string_view to_string(HypothesisClass c) {
    switch (c) {
        case HypothesisClass::H0Star: return "H0*";
        case HypothesisClass::H0NotH0Star: return "notH0*&H0";
        case HypothesisClass::NotH0: return "notH0";
    }
    return "notH0";
}

/// Compares the population coefficients of every set with each other and
/// with the true total effect (tolerance 1e-9, relative for large values).
inline HypothesisClass classify_hypothesis(const SemModel& truth, NodeId x, NodeId y, const std::vector<NodeSet>& sets) {
    if (sets.empty()) throw Error(ErrorCode::EmptyInput, "collection is empty");
    const std::vector<double> betas = population_betas(truth, x, y, sets);
    const double tau = total_effect(truth, x, y);
    double scale = std::max(1.0, std::abs(tau));
    for (double b : betas) scale = std::max(scale, std::abs(b));
    const double tol = 1e-9 * scale;

    const bool all_equal = std::all_of(betas.begin(), betas.end(), [&](double b) { return std::abs(b - betas.front()) <= tol; });
    if (!all_equal) return HypothesisClass::NotH0;
    const bool all_tau = std::all_of(betas.begin(), betas.end(), [&](double b) { return std::abs(b - tau) <= tol; });
    return all_tau ? HypothesisClass::H0Star : HypothesisClass::H0NotH0Star;
}

inline HypothesisClass classify_hypothesis(const SemModel& truth, const AdjustmentCollection& zc) {
    return classify_hypothesis(truth, zc.x, zc.y, zc.sets);
}

/// Area under the p-p plot of the p-values against the uniform distribution.
/// Points are (p_(j), j / R) for the sorted values, closed with (0, 0) and
/// (1, 1), integrated with the trapezoidal rule. Tied values give vertical
/// steps of zero area.
inline double auc_pp(std::vector<double> p_values) {
    if (p_values.size() < 2) throw Error(ErrorCode::EmptyInput, "need at least two p-values");
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::OutOfRange, "p-value outside [0, 1]");
    std::sort(p_values.begin(), p_values.end());
    const double r = static_cast<double>(p_values.size());

    double area = 0.0;
    double prev_x = 0.0, prev_y = 0.0;
    for (std::size_t j = 0; j < p_values.size(); ++j) {
        const double px = p_values[j];
        const double py = static_cast<double>(j + 1) / r;
        area += (px - prev_x) * (prev_y + py) / 2.0;
        prev_x = px;
        prev_y = py;
    }
    area += (1.0 - prev_x) * (prev_y + 1.0) / 2.0;
    return area;
}

inline double rejection_rate(const std::vector<double>& p_values, double level = 0.05) {
    if (p_values.empty()) return 0.0;
    const auto rejected = std::count_if(p_values.begin(), p_values.end(), [&](double p) { return p < level; });
    return static_cast<double>(rejected) / static_cast<double>(p_values.size());
}

struct SimConfig {
    std::vector<std::size_t> graph_sizes{10};
    std::vector<std::size_t> neighborhood_sizes{2, 3, 4, 5};
    std::size_t n_models = 1;
    std::size_t n_candidates_per_model = 1;
    std::vector<std::size_t> test_sample_sizes{100};
    std::size_t replications_per_cell = 20;
    std::vector<Strategy> strategies{Strategy::MinPlus};
    /// Candidate kinds: "true" (the data-generating graph), "low", "high".
    std::vector<std::string> accuracies{"low", "high"};
    std::size_t low_accuracy_edits = 3;
    std::size_t high_accuracy_edits = 1;
    std::uint64_t base_seed = 1;
    bool discard_rank1 = false;
    std::size_t cap = 10'000;

    void validate() const {
        auto positive = [](const std::vector<std::size_t>& v, const char* what) {
            if (v.empty() || std::any_of(v.begin(), v.end(), [](std::size_t x) { return x < 1; }))
                throw Error(ErrorCode::ConfigError, std::string(what) + " must be a nonempty list of counts >= 1");
        };
        positive(graph_sizes, "graph_sizes");
        positive(neighborhood_sizes, "neighborhood_sizes");
        positive(test_sample_sizes, "test_sample_sizes");
        for (std::size_t s : graph_sizes)
            if (s < 2) throw Error(ErrorCode::ConfigError, "graph sizes must be at least 2");
        if (n_models < 1 || n_candidates_per_model < 1)
            throw Error(ErrorCode::ConfigError, "n_models and n_candidates_per_model must be >= 1");
        if (replications_per_cell < 2) throw Error(ErrorCode::ConfigError, "replications must be >= 2");
        if (strategies.empty()) throw Error(ErrorCode::ConfigError, "no strategies");
        for (Strategy s : strategies)
            if (s == Strategy::UserProvided) throw Error(ErrorCode::ConfigError, "strategy must be all or minplus");
        if (accuracies.empty()) throw Error(ErrorCode::ConfigError, "no candidate accuracies");
        for (const auto& a : accuracies)
            if (a != "true" && a != "low" && a != "high")
                throw Error(ErrorCode::ConfigError, "unknown accuracy '" + a + "' (expected true|low|high)");
    }

    std::size_t edits_for(const std::string& accuracy) const {
        if (accuracy == "low") return low_accuracy_edits;
        if (accuracy == "high") return high_accuracy_edits;
        return 0;
    }
};

struct CellResult {
    std::vector<double> p_values;
    double auc = 0.0;
    double rejection_rate_05 = 0.0;
    HypothesisClass hypothesis_class = HypothesisClass::H0Star;
    std::size_t untestable_replications = 0;

    // metadata
    std::size_t graph_size = 0;
    std::size_t neighborhood = 0;
    std::size_t model_index = 0;
    std::size_t candidate_index = 0;
    std::string accuracy;
    std::size_t edits = 0;
    Strategy strategy = Strategy::MinPlus;
    std::size_t n = 0;
    ErrorFamily family = ErrorFamily::Normal;
    std::size_t k = 0;
    std::string x, y;

    friend bool operator==(const CellResult&, const CellResult&) = default;
};

/// Outcome of one cell before metadata is attached.
struct CellOutcome {
    std::optional<CellResult> cell;
    std::string untestable_reason;
};

/// Replicated tests of one candidate graph against fresh samples from the
/// true model. Data seeds depend only on `data_seed`, so different strategies
/// run on identical samples.
inline CellOutcome run_cell(const SemModel& truth, const Dag& candidate, NodeId x, NodeId y, Strategy strategy,
                            std::size_t n, std::size_t replications, std::uint64_t data_seed,
                            const TestOptions& base_options = {}) {
    TestOptions options = base_options;
    options.strategy = strategy;
    options.fallback_to_min_plus = false;

    if (x == y || !descendants(candidate, x).contains(y)) return {std::nullopt, "NotDescendant"};
    AdjustmentCollection zc;
    try {
        zc = collection_for(candidate, x, y, strategy, options.cap);
    } catch (const Error& e) {
        return {std::nullopt, std::string(to_string(e.code()))};
    }
    if (zc.sets.size() < 2) return {std::nullopt, "SingleAdjustmentSet"};

    CellResult cell;
    cell.strategy = strategy;
    cell.n = n;
    cell.k = zc.sets.size();
    cell.family = truth.family();
    cell.x = candidate.label(x);
    cell.y = candidate.label(y);
    // Candidate and truth may number their nodes differently; match by label.
    const Dag& tg = truth.graph();
    std::vector<NodeSet> truth_sets;
    for (const auto& z : zc.sets) truth_sets.push_back(tg.set(candidate.names(z)));
    cell.hypothesis_class = classify_hypothesis(truth, tg.id(cell.x), tg.id(cell.y), truth_sets);

    for (std::size_t rep = 0; rep < replications; ++rep) {
        const Dataset data = sample_data(truth, n, mix_seed(data_seed, rep));
        const TestReport report = run_test_on_collection(candidate, zc, data, options);
        if (report.tested())
            cell.p_values.push_back(report.p_value);
        else
            ++cell.untestable_replications;
    }
    if (cell.p_values.size() < 2) return {std::nullopt, "TooFewTestedReplications"};
    cell.auc = auc_pp(cell.p_values);
    cell.rejection_rate_05 = rejection_rate(cell.p_values);
    return {std::move(cell), {}};
}

struct ExperimentResult {
    std::vector<CellResult> cells;
    std::map<std::string, std::size_t> untestable_cells;  ///< reason -> count
    std::size_t skipped_models = 0;                       ///< no eligible (x, y) pair

    std::size_t untestable_total() const {
        std::size_t total = 0;
        for (const auto& [reason, count] : untestable_cells) total += count;
        return total;
    }
};

/// Double simulation: random true models, perturbed candidate graphs, and
/// repeated tests per candidate, strategy and sample size. Fully determined
/// by `cfg.base_seed`.
inline ExperimentResult run_experiment(const SimConfig& cfg) {
    cfg.validate();
    ExperimentResult result;
    TestOptions options;
    options.cap = cfg.cap;
    options.discard_rank1 = cfg.discard_rank1;

    for (std::size_t si = 0; si < cfg.graph_sizes.size(); ++si) {
        const std::size_t p = cfg.graph_sizes[si];
        for (std::size_t m = 0; m < cfg.n_models; ++m) {
            const std::uint64_t model_seed = mix_seed(mix_seed(cfg.base_seed, si), m);
            std::mt19937_64 rng(model_seed);

            std::optional<Dag> truth_graph;
            std::size_t neighborhood = 0;
            NodeId x = 0, y = 0;
            for (std::uint64_t attempt = 0; attempt < 20 && !truth_graph; ++attempt) {
                neighborhood = cfg.neighborhood_sizes[std::uniform_int_distribution<std::size_t>(
                    0, cfg.neighborhood_sizes.size() - 1)(rng)];
                Dag g = random_dag(p, static_cast<double>(neighborhood), mix_seed(model_seed, 1000 + attempt));
                try {
                    std::tie(x, y) = sample_xy_pair(g, mix_seed(model_seed, 2000 + attempt));
                    truth_graph = std::move(g);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::NoEligiblePair) throw;
                }
            }
            if (!truth_graph) {
                ++result.skipped_models;
                continue;
            }
            const SemModel truth = random_sem(*truth_graph, mix_seed(model_seed, 3));

            for (std::size_t ai = 0; ai < cfg.accuracies.size(); ++ai) {
                const std::string& accuracy = cfg.accuracies[ai];
                const std::size_t n_candidates = accuracy == "true" ? 1 : cfg.n_candidates_per_model;
                for (std::size_t c = 0; c < n_candidates; ++c) {
                    const std::uint64_t candidate_seed = mix_seed(mix_seed(model_seed, 10 + ai), c);
                    const Dag candidate = perturb_graph(*truth_graph, cfg.edits_for(accuracy), candidate_seed);
                    for (std::size_t ni = 0; ni < cfg.test_sample_sizes.size(); ++ni) {
                        const std::size_t n = cfg.test_sample_sizes[ni];
                        const std::uint64_t data_seed = mix_seed(candidate_seed, 100 + ni);
                        for (Strategy strategy : cfg.strategies) {
                            CellOutcome outcome = run_cell(truth, candidate, x, y, strategy, n,
                                                           cfg.replications_per_cell, data_seed, options);
                            if (!outcome.cell) {
                                ++result.untestable_cells[outcome.untestable_reason];
                                continue;
                            }
                            CellResult& cell = *outcome.cell;
                            cell.graph_size = p;
                            cell.neighborhood = neighborhood;
                            cell.model_index = m;
                            cell.candidate_index = c;
                            cell.accuracy = accuracy;
                            cell.edits = cfg.edits_for(accuracy);
                            result.cells.push_back(std::move(cell));
                        }
                    }
                }
            }
        }
    }
    return result;
}

struct RejectionRow {
    std::string accuracy;
    std::size_t n = 0;
    Strategy strategy = Strategy::MinPlus;
    /// "H0*", "notH0*&H0", "notH0", or "H0" for the union of the first two.
    std::string hypothesis;
    std::size_t rejections = 0;
    std::size_t tests = 0;

    double rate() const { return tests ? static_cast<double>(rejections) / static_cast<double>(tests) : 0.0; }
};

/// Pooled rejection proportions at level 0.05 keyed by
/// (accuracy, n, strategy, hypothesis class); each cell weighs by its
/// number of tested replications.
inline std::vector<RejectionRow> rejection_table(const std::vector<CellResult>& cells) {
    if (cells.empty()) throw Error(ErrorCode::EmptyInput, "no cells");
    std::map<std::tuple<std::string, std::size_t, int, std::string>, RejectionRow> rows;
    auto add = [&](const CellResult& cell, const std::string& hypothesis) {
        auto key = std::make_tuple(cell.accuracy, cell.n, static_cast<int>(cell.strategy), hypothesis);
        auto& row = rows[key];
        row.accuracy = cell.accuracy;
        row.n = cell.n;
        row.strategy = cell.strategy;
        row.hypothesis = hypothesis;
        row.tests += cell.p_values.size();
        row.rejections += static_cast<std::size_t>(std::count_if(cell.p_values.begin(), cell.p_values.end(),
                                                                  [](double p) { return p < 0.05; }));
    };
    for (const auto& cell : cells) {
        add(cell, std::string(to_string(cell.hypothesis_class)));
        if (cell.hypothesis_class != HypothesisClass::NotH0) add(cell, "H0");
    }
    std::vector<RejectionRow> out;
    out.reserve(rows.size());
    for (auto& [key, row] : rows) out.push_back(std::move(row));
    return out;
}

}  // namespace adjcheck

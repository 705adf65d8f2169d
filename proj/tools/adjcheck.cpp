#include <adjcheck/adjcheck.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace adjcheck;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitUntestable = 3;

struct Options {
    std::string graph, sem, data, config, out, pp_data;
    std::vector<std::string> sets;
    std::string x, y;
    std::string strategy = "minplus";
    std::size_t cap = 10'000;
    std::size_t n = 400;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

Strategy cli_strategy(const std::string& s) {
    if (s != "all" && s != "minplus")
        throw Error(ErrorCode::ConfigError, "invalid strategy '" + s + "' (expected all|minplus)");
    return parse_strategy(s);
}

std::pair<NodeId, NodeId> resolve_pair(const Dag& g, const Options& o) {
    if (o.x == o.y) throw Error(ErrorCode::InvalidArgument, "--x and --y must differ");
    return {g.id(o.x), g.id(o.y)};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
    out << text;
    if (!out) throw Error(ErrorCode::FileNotFound, "write failed for '" + path + "'");
}

/// JSON goes to --out when given, otherwise to stdout.
void emit(const json& payload, const Options& o) {
    const std::string text = payload.dump(2) + "\n";
    if (o.out.empty())
        std::cout << text;
    else
        write_text(o.out, text);
}

/// {"A1;A1,A2", "-"} -> {{A1}, {A1, A2}, {}}
std::vector<std::vector<std::string>> parse_set_list(const std::vector<std::string>& specs) {
    std::vector<std::vector<std::string>> out;
    for (const auto& spec : specs) {
        std::size_t start = 0;
        while (start <= spec.size()) {
            const auto semi = std::min(spec.find(';', start), spec.size());
            const auto group = detail::trim(std::string_view(spec).substr(start, semi - start));
            start = semi + 1;
            if (group.empty()) continue;
            std::vector<std::string> labels;
            if (group != "-")
                for (const auto& label : detail::split_list(group)) labels.push_back(label);
            out.push_back(std::move(labels));
        }
    }
    if (out.empty()) throw Error(ErrorCode::ParseError, "--sets lists no adjustment sets");
    return out;
}

int cmd_check(const Options& o) {
    const Dag g = load_graph(o.graph);
    const auto [x, y] = resolve_pair(g, o);
    const Dataset data = load_csv(o.data);
    TestOptions options;
    options.strategy = cli_strategy(o.strategy);
    options.cap = o.cap;
    const TestReport report = run_test(g, x, y, data, options);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    emit(report_to_json(report, o.verbose), o);
    if (!report.tested()) {
        std::cerr << "untestable: " << report.reason << "\n";
        return kExitUntestable;
    }
    return kExitOk;
}

int cmd_sets(const Options& o) {
    const Dag g = load_graph(o.graph);
    const auto [x, y] = resolve_pair(g, o);
    const Strategy strategy = cli_strategy(o.strategy);
    AdjustmentCollection zc;
    try {
        zc = collection_for(g, x, y, strategy, o.cap);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::CapExceeded)
            std::cerr << "hint: more than " << o.cap
                      << " valid sets; raise --cap or use --strategy minplus\n";
        throw;
    }
    std::cerr << zc.sets.size() << " adjustment set(s) for " << o.x << " -> " << o.y << " (" << to_string(strategy)
              << ")\n";
    for (const auto& w : zc.warnings) std::cerr << "warning: " << w << "\n";
    json payload = collection_to_json(zc, g);
    payload["x"] = o.x;
    payload["y"] = o.y;
    payload["count"] = zc.sets.size();
    emit(payload, o);
    return kExitOk;
}

int cmd_oracle(const Options& o) {
    const SemModel m = load_sem(o.sem);
    const Dag& g = m.graph();
    const auto [x, y] = resolve_pair(g, o);

    AdjustmentCollection zc;
    if (!o.sets.empty()) {
        std::vector<NodeSet> sets;
        for (const auto& labels : parse_set_list(o.sets)) sets.push_back(g.set(labels));
        zc = user_collection(g, x, y, std::move(sets));
    } else if (!o.graph.empty()) {
        const Dag candidate = load_graph(o.graph);
        const AdjustmentCollection from_graph =
            collection_for(candidate, candidate.id(o.x), candidate.id(o.y), cli_strategy(o.strategy), o.cap);
        std::vector<NodeSet> sets;
        for (const auto& z : from_graph.sets) sets.push_back(g.set(candidate.names(z)));
        zc = user_collection(g, x, y, std::move(sets));
        zc.strategy = from_graph.strategy;
    } else {
        throw Error(ErrorCode::InvalidArgument, "oracle needs --sets or --graph");
    }

    const std::vector<double> betas = population_betas(m, x, y, zc.sets);
    json entries = json::array();
    for (std::size_t i = 0; i < zc.sets.size(); ++i)
        entries.push_back({{"set", g.names(zc.sets[i])}, {"beta", betas[i]}});
    json payload;
    payload["x"] = o.x;
    payload["y"] = o.y;
    payload["strategy"] = std::string(to_string(zc.strategy));
    payload["tau"] = total_effect(m, x, y);
    payload["sets"] = entries;
    payload["hypothesis_class"] = std::string(to_string(classify_hypothesis(m, zc)));
    if (o.verbose && m.family() == ErrorFamily::Normal)
        payload["sigma_gaussian"] = matrix_to_json(population_sigma_gaussian(m, zc));
    emit(payload, o);
    return kExitOk;
}

int cmd_sample(const Options& o) {
    const SemModel m = load_sem(o.sem);
    if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "sample needs --out for the CSV file");
    const std::uint64_t seed = o.seed.value_or(1);
    const Dataset data = sample_data(m, o.n, seed);
    write_text(o.out, write_csv(data));
    json payload{{"path", o.out}, {"rows", data.rows()}, {"columns", data.columns()}, {"seed", seed},
                 {"family", std::string(to_string(m.family()))}};
    std::cout << payload.dump(2) << "\n";
    return kExitOk;
}

int cmd_simulate(const Options& o) {
    SimConfig cfg = load_sim_config(o.config);
    if (o.seed) cfg.base_seed = *o.seed;
    const ExperimentResult result = run_experiment(cfg);
    if (!o.out.empty()) write_text(o.out, cells_to_csv(result.cells));
    if (!o.pp_data.empty()) write_text(o.pp_data, pp_data_csv(result.cells));

    std::cerr << result.cells.size() << " cell(s), " << result.untestable_total() << " untestable, "
              << result.skipped_models << " skipped model(s)\n";
    if (!result.cells.empty()) {
        std::cerr << "accuracy  n  strategy  hypothesis  tests  rejected  rate\n";
        for (const auto& row : rejection_table(result.cells))
            std::cerr << row.accuracy << "  " << row.n << "  " << to_string(row.strategy) << "  " << row.hypothesis
                      << "  " << row.tests << "  " << row.rejections << "  " << format_number(row.rate()) << "\n";
    }
    std::cout << experiment_summary(cfg, result).dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adjustment-set robustness check for linear causal models"};
    app.require_subcommand(1);
    Options o;

    auto add_pair = [&](CLI::App* cmd) {
        cmd->add_option("--x", o.x, "treatment node label")->required();
        cmd->add_option("--y", o.y, "outcome node label")->required();
    };
    auto add_strategy = [&](CLI::App* cmd) {
        cmd->add_option("--strategy", o.strategy, "all | minplus")->capture_default_str();
        cmd->add_option("--cap", o.cap, "maximum number of sets enumerated by 'all'")->capture_default_str();
    };

    auto* check = app.add_subcommand("check", "test whether all adjustment sets agree on the data");
    check->add_option("--graph", o.graph, "candidate graph file")->required();
    check->add_option("--data", o.data, "CSV data file")->required();
    add_pair(check);
    add_strategy(check);
    check->add_option("--out", o.out, "write the JSON report here instead of stdout");
    check->add_flag("--verbose", o.verbose, "include estimated betas and covariance matrices");

    auto* sets = app.add_subcommand("sets", "list the adjustment sets a strategy would use");
    sets->add_option("--graph", o.graph, "graph file")->required();
    add_pair(sets);
    add_strategy(sets);
    sets->add_option("--out", o.out, "write the JSON here instead of stdout");

    auto* oracle = app.add_subcommand("oracle", "exact population quantities under a linear SEM");
    oracle->add_option("--sem", o.sem, "SEM file")->required();
    add_pair(oracle);
    oracle->add_option("--sets", o.sets, "adjustment set as comma-separated labels; repeat or separate with ';' ('-' is the empty set)");
    oracle->add_option("--graph", o.graph, "derive the sets from this candidate graph instead");
    add_strategy(oracle);
    oracle->add_option("--out", o.out, "write the JSON here instead of stdout");
    oracle->add_flag("--verbose", o.verbose, "include the Gaussian covariance of the estimates");

    auto* sample = app.add_subcommand("sample", "draw a CSV sample from a SEM");
    sample->add_option("--sem", o.sem, "SEM file")->required();
    sample->add_option("--n", o.n, "number of rows")->capture_default_str();
    sample->add_option("--seed", o.seed, "random seed (default 1)");
    sample->add_option("--out", o.out, "CSV output path")->required();

    auto* simulate = app.add_subcommand("simulate", "run the simulation harness");
    simulate->add_option("--config", o.config, "INI configuration file")->required();
    simulate->add_option("--seed", o.seed, "override base_seed");
    simulate->add_option("--out", o.out, "per-cell CSV output path");
    simulate->add_option("--pp-data", o.pp_data, "sorted p-values per cell, one row each");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*check) return cmd_check(o);
        if (*sets) return cmd_sets(o);
        if (*oracle) return cmd_oracle(o);
        if (*sample) return cmd_sample(o);
        if (*simulate) return cmd_simulate(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

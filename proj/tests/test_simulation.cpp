#include <adjcheck/config.hpp>
#include <adjcheck/simulation.hpp>

#include <gtest/gtest.h>

using namespace adjcheck;

namespace {

SemModel g0_sem() { return load_sem(std::string(ADJCHECK_DATA_DIR) + "/g0_sem.txt"); }

SimConfig tiny_config() {
    SimConfig cfg;
    cfg.graph_sizes = {8};
    cfg.neighborhood_sizes = {3};
    cfg.n_models = 2;
    cfg.n_candidates_per_model = 1;
    cfg.test_sample_sizes = {100};
    cfg.replications_per_cell = 20;
    cfg.strategies = {Strategy::MinPlus, Strategy::All};
    cfg.accuracies = {"true", "low", "high"};
    cfg.base_seed = 3;
    return cfg;
}

}  // namespace

TEST(Classify, RunningExampleClasses) {
    const SemModel m = g0_sem();
    const Dag& g = m.graph();
    const NodeId x = g.id("X"), y = g.id("Y");
    const std::vector<NodeSet> g1_sets{g.set({"A1"}), g.set({"A1", "A2"}), g.set({"A1", "A2", "R"})};
    EXPECT_EQ(classify_hypothesis(m, x, y, g1_sets), HypothesisClass::H0NotH0Star);
    auto with_v = g1_sets;
    with_v.push_back(g.set({"V"}));
    EXPECT_EQ(classify_hypothesis(m, x, y, with_v), HypothesisClass::NotH0);
    EXPECT_EQ(classify_hypothesis(m, enumerate_all_valid(g, x, y)), HypothesisClass::H0Star);
    std::reverse(with_v.begin(), with_v.end());
    EXPECT_EQ(classify_hypothesis(m, x, y, with_v), HypothesisClass::NotH0);
    EXPECT_THROW((void)classify_hypothesis(m, x, y, {}), Error);
}

TEST(Classify, TrueGraphCollectionsAreSound) {
    for (std::uint64_t s = 0; s < 40; ++s) {
        const Dag g = random_dag(10, 3.0, s);
        NodeId x, y;
        try {
            std::tie(x, y) = sample_xy_pair(g, s);
        } catch (const Error&) {
            continue;
        }
        const SemModel m = random_sem(g, s);
        EXPECT_EQ(classify_hypothesis(m, min_plus_collection(g, x, y)), HypothesisClass::H0Star);
        EXPECT_EQ(classify_hypothesis(m, enumerate_all_valid(g, x, y, 5000)), HypothesisClass::H0Star);
    }
}

TEST(Auc, ReferenceCases) {
    std::vector<double> grid;
    for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
    EXPECT_NEAR(auc_pp(grid), 0.5, 1.0 / 10.0);
    EXPECT_NEAR(auc_pp(std::vector<double>(50, 0.001)), 0.999, 1.0 / 50);
    EXPECT_NEAR(auc_pp(std::vector<double>(50, 0.999)), 0.001, 1.0 / 50);
    // Ties: ramp to (0.4, 1/4), vertical step to (0.4, 3/4), then (0.8, 1), (1, 1).
    EXPECT_NEAR(auc_pp({0.4, 0.4, 0.4, 0.8}), 0.4 * 0.125 + 0.4 * 0.875 + 0.2, 1e-15);
    // Two points (0.25, 0.5), (0.75, 1): area by hand.
    EXPECT_NEAR(auc_pp({0.75, 0.25}), 0.25 * 0.25 + 0.5 * 0.75 + 0.25, 1e-15);
}

TEST(Auc, PropertiesAndErrors) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p(2 + t);
        for (auto& v : p) v = u(rng);
        const double a = auc_pp(p);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
        std::reverse(p.begin(), p.end());
        EXPECT_DOUBLE_EQ(auc_pp(p), a);
    }
    EXPECT_THROW((void)auc_pp({0.5}), Error);
    EXPECT_THROW((void)auc_pp({0.5, 1.5}), Error);
    EXPECT_THROW((void)auc_pp({0.5, -0.1}), Error);
}

TEST(Auc, UniformPValuesNearHalf) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    std::vector<double> p(20'000);
    for (auto& v : p) v = u(rng);
    EXPECT_NEAR(auc_pp(p), 0.5, 0.01);
}

TEST(Rejection, RateCountsStrictlyBelowLevel) {
    EXPECT_DOUBLE_EQ(rejection_rate({0.01, 0.05, 0.2, 0.04}), 0.5);
    EXPECT_DOUBLE_EQ(rejection_rate({}), 0.0);
}

TEST(RunCell, TrueGraphIsCalibratedAndMisspecifiedHasPower) {
    const SemModel m = g0_sem();
    const Dag& g = m.graph();
    const CellOutcome null = run_cell(m, g, g.id("X"), g.id("Y"), Strategy::MinPlus, 400, 60, 1);
    ASSERT_TRUE(null.cell);
    EXPECT_EQ(null.cell->hypothesis_class, HypothesisClass::H0Star);
    EXPECT_EQ(null.cell->p_values.size(), 60U);
    EXPECT_DOUBLE_EQ(null.cell->auc, auc_pp(null.cell->p_values));
    EXPECT_LT(null.cell->rejection_rate_05, 0.2);

    const Dag g1 = load_graph(std::string(ADJCHECK_DATA_DIR) + "/g1.txt");
    const CellOutcome alt = run_cell(m, g1, g1.id("X"), g1.id("Y"), Strategy::MinPlus, 400, 30, 1);
    ASSERT_TRUE(alt.cell);
    EXPECT_EQ(alt.cell->hypothesis_class, HypothesisClass::NotH0);
    EXPECT_GT(alt.cell->rejection_rate_05, 0.8);
}

TEST(RunCell, UntestableCandidates) {
    const SemModel m = g0_sem();
    const Dag& g = m.graph();
    EXPECT_EQ(run_cell(m, g, g.id("Y"), g.id("X"), Strategy::MinPlus, 100, 5, 1).untestable_reason, "NotDescendant");
    // Every other node hangs below Y, so only the empty set is valid.
    std::vector<LabelEdge> edges{{"X", "Y"}};
    for (const char* v : {"A1", "A2", "B1", "B2", "D", "F", "R", "V"}) edges.emplace_back("Y", v);
    const Dag bare(g.labels(), edges);
    EXPECT_EQ(run_cell(m, bare, bare.id("X"), bare.id("Y"), Strategy::All, 100, 5, 1).untestable_reason,
              "SingleAdjustmentSet");
}

TEST(Experiment, DeterministicAndConsistent) {
    const SimConfig cfg = tiny_config();
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    ASSERT_FALSE(a.cells.empty());
    EXPECT_EQ(a.cells, b.cells);
    EXPECT_EQ(a.untestable_cells, b.untestable_cells);
    for (const auto& c : a.cells) {
        EXPECT_EQ(c.p_values.size() + c.untestable_replications, cfg.replications_per_cell);
        EXPECT_DOUBLE_EQ(c.auc, auc_pp(c.p_values));
        EXPECT_DOUBLE_EQ(c.rejection_rate_05, rejection_rate(c.p_values));
        EXPECT_EQ(c.edits, cfg.edits_for(c.accuracy));
        EXPECT_GE(c.k, 2U);
        if (c.accuracy == "true") {
            EXPECT_EQ(c.hypothesis_class, HypothesisClass::H0Star);
        }
    }
    SimConfig other = cfg;
    other.base_seed = 4;
    EXPECT_NE(run_experiment(other).cells, a.cells);
}

TEST(Experiment, StrategiesShareData) {
    SimConfig cfg = tiny_config();
    cfg.accuracies = {"true"};
    const ExperimentResult r = run_experiment(cfg);
    // Same candidate and sample size: the two strategy cells follow each other.
    for (std::size_t i = 0; i + 1 < r.cells.size(); ++i) {
        const auto& a = r.cells[i];
        const auto& b = r.cells[i + 1];
        if (a.model_index == b.model_index && a.strategy != b.strategy) {
            EXPECT_EQ(a.x, b.x);
            EXPECT_EQ(a.y, b.y);
        }
    }
}

TEST(RejectionTable, SingleCellAndAccountingIdentity) {
    CellResult c;
    c.p_values = {0.01, 0.5, 0.03, 0.9};
    c.accuracy = "low";
    c.n = 100;
    c.hypothesis_class = HypothesisClass::H0NotH0Star;
    const auto rows = rejection_table({c});
    ASSERT_EQ(rows.size(), 2U);
    for (const auto& r : rows) EXPECT_DOUBLE_EQ(r.rate(), 0.5);

    CellResult d = c;
    d.p_values = {0.2, 0.3};
    d.hypothesis_class = HypothesisClass::H0Star;
    CellResult e = c;
    e.p_values = {0.001, 0.002, 0.003};
    e.hypothesis_class = HypothesisClass::NotH0;
    const auto table = rejection_table({c, d, e});
    std::map<std::string, RejectionRow> by;
    for (const auto& r : table) by[r.hypothesis] = r;
    EXPECT_EQ(by["H0"].tests, by["H0*"].tests + by["notH0*&H0"].tests);
    EXPECT_EQ(by["H0"].rejections, by["H0*"].rejections + by["notH0*&H0"].rejections);
    EXPECT_DOUBLE_EQ(by["H0"].rate(), 2.0 / 6.0);
    EXPECT_DOUBLE_EQ(by["notH0"].rate(), 1.0);
    EXPECT_THROW((void)rejection_table({}), Error);
}

TEST(Config, ParsesBundledFiles) {
    const SimConfig smoke = load_sim_config(std::string(ADJCHECK_CONFIG_DIR) + "/smoke.ini");
    EXPECT_EQ(smoke.n_models, 1U);
    EXPECT_EQ(smoke.test_sample_sizes, std::vector<std::size_t>{100});
    EXPECT_EQ(smoke.replications_per_cell, 20U);
    const SimConfig desk = load_sim_config(std::string(ADJCHECK_CONFIG_DIR) + "/table1-desk.ini");
    EXPECT_EQ(desk.strategies, (std::vector<Strategy>{Strategy::MinPlus, Strategy::All}));
    EXPECT_EQ(desk.graph_sizes, (std::vector<std::size_t>{10, 15}));
    EXPECT_EQ(desk.low_accuracy_edits, 3U);
    EXPECT_FALSE(desk.discard_rank1);
}

TEST(Config, Errors) {
    auto code = [](const std::string& text) {
        try {
            (void)parse_sim_config(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    EXPECT_EQ(code("[simulation]\nstrategies = every\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\nrepliations = 5\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[other]\nn_models = 1\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\nn_models = -1\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\nn_models = 0\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\ndiscard_rank1 = maybe\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\naccuracies = medium\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation\n"), ErrorCode::ConfigError);
    EXPECT_EQ(code("[simulation]\njust text\n"), ErrorCode::ConfigError);
    const auto doc = parse_ini("a = 1\n[s]\n; comment\nb = two words # trailing\n");
    EXPECT_EQ(doc.at("").at("a"), "1");
    EXPECT_EQ(doc.at("s").at("b"), "two words");
}

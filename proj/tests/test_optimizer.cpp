#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "llana/analog_oracle.hpp"
#include "llana/optimizer.hpp"
#include "support.hpp"

using namespace llana;

namespace {

SearchSpace unit_square() {
    ParamSpec x;
    x.name = "x";
    x.lower = 0.0;
    x.upper = 1.0;
    ParamSpec y;
    y.name = "y";
    y.lower = 0.0;
    y.upper = 1.0;
    return SearchSpace({x, y});
}

Configuration xy(double x, double y) {
    Configuration c;
    c.values["x"] = x;
    c.values["y"] = y;
    return c;
}

// Reference implementation: keep every point within the box at the reference
// point that no other kept point dominates, dropping exact duplicates.
std::vector<std::vector<double>> brute_force_front(std::vector<std::vector<double>> pts,
                                                   const std::vector<double>& ref) {
    std::vector<std::vector<double>> inside;
    for (const auto& p : pts) {
        bool ok = true;
        for (std::size_t i = 0; i < ref.size(); ++i) ok &= p[i] <= ref[i];
        if (ok && std::find(inside.begin(), inside.end(), p) == inside.end())
            inside.push_back(p);
    }
    std::vector<std::vector<double>> front;
    for (const auto& p : inside) {
        bool dominated = false;
        for (const auto& q : inside)
            if (dominates(q, p)) dominated = true;
        if (!dominated) front.push_back(p);
    }
    return front;
}

std::multiset<std::vector<double>> as_multiset(const ParetoArchive& archive) {
    std::multiset<std::vector<double>> s;
    for (const auto& [_, scores] : archive.points) s.insert(scores);
    return s;
}

std::multiset<std::vector<double>> as_multiset(const std::vector<std::vector<double>>& pts) {
    return {pts.begin(), pts.end()};
}

}  // namespace

TEST_CASE("dominance in minimize form") {
    CHECK(dominates({1.0, 2.0}, {2.0, 3.0}));
    CHECK(dominates({1.0, 2.0}, {1.0, 3.0}));
    CHECK_FALSE(dominates({1.0, 2.0}, {1.0, 2.0}));  // equality is not dominance
    CHECK_FALSE(dominates({1.0, 4.0}, {2.0, 3.0}));  // incomparable
    CHECK_FALSE(dominates({2.0, 3.0}, {1.0, 2.0}));
}

TEST_CASE("pareto archive insertion rules") {
    ParetoArchive archive;
    archive.reference = {10.0, 10.0};

    archive = pareto_update(std::move(archive), {xy(0, 0), {5.0, 5.0}});
    CHECK(archive.points.size() == 1);

    // Beyond the reference point: silently discarded.
    archive = pareto_update(std::move(archive), {xy(0, 0), {11.0, 1.0}});
    CHECK(archive.points.size() == 1);

    // Dominated newcomer: no change.
    archive = pareto_update(std::move(archive), {xy(0, 0), {6.0, 6.0}});
    CHECK(archive.points.size() == 1);

    // Exact duplicate: no-op.
    archive = pareto_update(std::move(archive), {xy(0, 0), {5.0, 5.0}});
    CHECK(archive.points.size() == 1);

    // Incomparable newcomer joins the front.
    archive = pareto_update(std::move(archive), {xy(0, 0), {3.0, 7.0}});
    CHECK(archive.points.size() == 2);

    // A dominating newcomer evicts everything it dominates.
    archive = pareto_update(std::move(archive), {xy(0, 0), {3.0, 4.0}});
    CHECK(archive.points.size() == 1);
    CHECK(archive.points[0].second == std::vector<double>{3.0, 4.0});

    CHECK_THROWS_AS(pareto_update(std::move(archive), {xy(0, 0), {1.0, 2.0, 3.0}}), SizeError);
}

TEST_CASE("incremental archive equals the brute-force filter on random streams") {
    Rng rng(77);
    for (int round = 0; round < 5; ++round) {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 60; ++i)
            pts.push_back({rng.uniform(0.0, 1.2), rng.uniform(0.0, 1.2)});
        std::vector<double> ref = {1.0, 1.0};

        ParetoArchive forward;
        forward.reference = ref;
        for (const auto& p : pts) forward = pareto_update(std::move(forward), {xy(0, 0), p});

        // Same stream in reverse: the final front must not depend on order.
        ParetoArchive backward;
        backward.reference = ref;
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            backward = pareto_update(std::move(backward), {xy(0, 0), *it});

        auto expected = as_multiset(brute_force_front(pts, ref));
        CHECK(as_multiset(forward) == expected);
        CHECK(as_multiset(backward) == expected);
    }
}

TEST_CASE("hypervolume hand cases") {
    ParetoArchive archive;
    archive.reference = {3.0, 3.0};
    CHECK(hypervolume(archive) == 0.0);

    archive = pareto_update(std::move(archive), {xy(0, 0), {1.0, 1.0}});
    CHECK(hypervolume(archive) == doctest::Approx(4.0));

    ParetoArchive two;
    two.reference = {3.0, 3.0};
    two = pareto_update(std::move(two), {xy(0, 0), {1.0, 2.0}});
    two = pareto_update(std::move(two), {xy(0, 0), {2.0, 1.0}});
    CHECK(hypervolume(two) == doctest::Approx(3.0));

    ParetoArchive unit;
    unit.reference = {1.0, 1.0};
    unit = pareto_update(std::move(unit), {xy(0, 0), {0.0, 0.0}});
    CHECK(hypervolume(unit) == doctest::Approx(1.0));

    ParetoArchive bad;
    bad.reference = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS(hypervolume(bad), UnsupportedDimensionError);
}

TEST_CASE("hypervolume agrees with a grid estimate on random fronts") {
    Rng rng(3);
    for (int round = 0; round < 3; ++round) {
        ParetoArchive archive;
        archive.reference = {1.0, 1.0};
        for (int i = 0; i < 25; ++i)
            archive = pareto_update(std::move(archive),
                                    {xy(0, 0), {rng.uniform01(), rng.uniform01()}});
        double fast = hypervolume(archive);

        const int grid = 400;
        long hits = 0;
        for (int gx = 0; gx < grid; ++gx) {
            for (int gy = 0; gy < grid; ++gy) {
                double a = (gx + 0.5) / grid, b = (gy + 0.5) / grid;
                for (const auto& [_, s] : archive.points)
                    if (s[0] <= a && s[1] <= b) {
                        ++hits;
                        break;
                    }
            }
        }
        double slow = static_cast<double>(hits) / (grid * grid);
        CHECK(std::abs(fast - slow) < 2e-2);
    }
}

TEST_CASE("gp-driven optimization beats its own random phase on a quadratic") {
    SearchSpace space = unit_square();
    Oracle oracle{[](const Configuration& c) {
        double x = std::get<double>(c.values.at("x"));
        double y = std::get<double>(c.values.at("y"));
        return (x - 0.3) * (x - 0.3) + (y - 0.7) * (y - 0.7);
    }};
    BudgetedRun run;
    run.trial_budget = 25;
    run.n_random = 5;
    run.seed = 1;
    run.gp_restarts = 2;
    run.candidate_pool = 256;
    RunRecord record = run_bo(oracle, space, run);

    REQUIRE(record.trajectory.observations.size() == 25);
    REQUIRE(record.best_so_far.size() == 25);
    CHECK_FALSE(record.aborted);
    for (std::size_t i = 0; i < 5; ++i) CHECK(record.provenance[i] == "random");
    for (std::size_t i = 1; i < record.best_so_far.size(); ++i)
        CHECK(record.best_so_far[i] <= record.best_so_far[i - 1]);
    CHECK(record.best_so_far.back() < record.best_so_far[4]);  // guided beats random
    CHECK(record.best_so_far.back() < 0.02);
}

TEST_CASE("forest-driven optimization makes progress too") {
    SearchSpace space = unit_square();
    Oracle oracle{[](const Configuration& c) {
        double x = std::get<double>(c.values.at("x"));
        double y = std::get<double>(c.values.at("y"));
        return std::abs(x - 0.5) + std::abs(y - 0.25);
    }};
    BudgetedRun run;
    run.trial_budget = 30;
    run.n_random = 5;
    run.seed = 4;
    run.surrogate_kind = SurrogateKind::Forest;
    run.candidate_pool = 256;
    RunRecord record = run_bo(oracle, space, run);
    CHECK(record.best_so_far.back() <= record.best_so_far[4]);
    CHECK(record.best_so_far.back() < 0.2);
}

TEST_CASE("constant oracles do not derail the loop") {
    SearchSpace space = unit_square();
    Oracle oracle{[](const Configuration&) { return 1.0; }};
    BudgetedRun run;
    run.trial_budget = 8;
    run.n_random = 3;
    run.gp_restarts = 1;
    run.candidate_pool = 32;
    RunRecord record = run_bo(oracle, space, run);
    CHECK(record.trajectory.observations.size() == 8);
    for (double b : record.best_so_far) CHECK(b == 1.0);
}

TEST_CASE("tabular oracles are only ever queried inside their pool") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 40, 31, "");
    TabularOracle tab(ds, "cmrr_proxy");
    Oracle oracle{[&](const Configuration& c) { return tab(c); }, &tab.pool()};

    BudgetedRun run;
    run.trial_budget = 12;
    run.n_random = 4;
    run.seed = 2;
    run.gp_restarts = 1;
    RunRecord record = run_bo(oracle, ds.space, run);  // would throw LookupError on a miss
    CHECK(record.trajectory.observations.size() == 12);
    CHECK_FALSE(record.aborted);
    for (const auto& obs : record.trajectory.observations)
        CHECK(std::find(tab.pool().begin(), tab.pool().end(), obs.config) != tab.pool().end());
    // No configuration is evaluated twice while untried ones remain.
    for (std::size_t i = 0; i < record.trajectory.observations.size(); ++i)
        for (std::size_t j = i + 1; j < record.trajectory.observations.size(); ++j)
            CHECK(record.trajectory.observations[i].config !=
                  record.trajectory.observations[j].config);
}

TEST_CASE("loop configuration is validated up front") {
    SearchSpace space = unit_square();
    Oracle oracle{[](const Configuration&) { return 0.0; }};
    BudgetedRun bad;
    bad.trial_budget = 3;
    bad.n_random = 5;
    CHECK_THROWS_AS(run_bo(oracle, space, bad), ValidationError);

    BudgetedRun icl_in_bo;
    icl_in_bo.surrogate_kind = SurrogateKind::Icl;
    CHECK_THROWS_AS(run_bo(oracle, space, icl_in_bo), ValidationError);

    Backend backend;
    BudgetedRun gp_in_llana;  // defaults are gp + uniform-pool
    CHECK_THROWS_AS(run_llana(oracle, space, gp_in_llana, backend), ValidationError);
}

namespace {

// Mock model that answers every prompt truthfully from the tabular dataset:
// surrogate queries get the exact stored score, sampling and initial-design
// prompts get the dataset's best configuration.
Backend truthful_backend(const TabularOracle& tab, const Configuration& best_config) {
    Backend backend;
    backend.cache_enabled = false;
    backend.mock_responder = [&tab, best_config](const std::vector<ChatMessage>& msgs,
                                                 std::size_t, std::uint64_t) -> std::string {
        const std::string& prompt = msgs.back().content;
        const std::string marker = "Hyperparameter configuration: ";
        if (prompt.size() > 12 && prompt.rfind("Performance:") == prompt.size() - 12) {
            // Surrogate query: recover the config between the last marker and
            // ". Performance:".
            std::size_t start = prompt.rfind(marker);
            REQUIRE(start != std::string::npos);
            start += marker.size();
            std::size_t end = prompt.rfind(". Performance:");
            Configuration q =
                parse_configuration(prompt.substr(start, end - start), tab.space()).config;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "## %.17g ##", tab(q));
            return buf;
        }
        // Sampling or initial-design prompt: recommend the best known config.
        std::string text = serialize_config(best_config, tab.space());
        if (prompt.find("un-enumerated list") != std::string::npos)
            return "{" + text + "}";
        return text;
    };
    return backend;
}

}  // namespace

TEST_CASE("llm-guided loop finds the tabular optimum with a truthful model") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 50, 8, "");
    TabularOracle tab(ds, "cmrr_proxy");

    double f_min = std::numeric_limits<double>::infinity();
    const Configuration* best_config = nullptr;
    for (const auto& obs : ds.observations)
        if (obs.scores[0] < f_min) {
            f_min = obs.scores[0];
            best_config = &obs.config;
        }
    REQUIRE(best_config);

    Backend backend = truthful_backend(tab, *best_config);
    Oracle oracle{[&](const Configuration& c) { return tab(c); }, &tab.pool()};

    BudgetedRun run;
    run.trial_budget = 10;
    run.n_random = 3;
    run.m_candidates = 4;
    run.k_samples = 2;
    run.seed = 5;
    run.surrogate_kind = SurrogateKind::Icl;
    run.sampler_kind = SamplerKind::Icl;

    RunRecord record = run_llana(oracle, ds.space, run, backend);
    REQUIRE(record.trajectory.observations.size() == 10);
    CHECK_FALSE(record.aborted);
    CHECK(record.best_so_far.back() == doctest::Approx(f_min).epsilon(1e-15));
    bool any_guided = false;
    for (const auto& p : record.provenance) any_guided |= (p == "icl-sample");
    CHECK(any_guided);
    for (std::size_t i = 1; i < record.best_so_far.size(); ++i)
        CHECK(record.best_so_far[i] <= record.best_so_far[i - 1]);
    for (const auto& obs : record.trajectory.observations)
        CHECK(std::find(tab.pool().begin(), tab.pool().end(), obs.config) != tab.pool().end());
}

TEST_CASE("seeded llm-guided reruns serialize byte-identically without timings") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 30, 14, "");
    TabularOracle tab(ds, "cmrr_proxy");
    double f_min = std::numeric_limits<double>::infinity();
    const Configuration* best_config = &ds.observations[0].config;
    for (const auto& obs : ds.observations)
        if (obs.scores[0] < f_min) {
            f_min = obs.scores[0];
            best_config = &obs.config;
        }
    Backend backend = truthful_backend(tab, *best_config);
    Oracle oracle{[&](const Configuration& c) { return tab(c); }, &tab.pool()};

    BudgetedRun run;
    run.trial_budget = 7;
    run.n_random = 3;
    run.m_candidates = 3;
    run.k_samples = 2;
    run.seed = 21;
    run.surrogate_kind = SurrogateKind::Icl;
    run.sampler_kind = SamplerKind::Icl;

    std::ostringstream a, b;
    write_run_record(a, run_llana(oracle, ds.space, run, backend), nullptr, false);
    write_run_record(b, run_llana(oracle, ds.space, run, backend), nullptr, false);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("ms_elapsed") == std::string::npos);

    // With timings enabled the key is present on trial lines.
    std::ostringstream timed;
    write_run_record(timed, run_llana(oracle, ds.space, run, backend));
    CHECK(timed.str().find("ms_elapsed") != std::string::npos);
}

TEST_CASE("budget equal to the random phase skips the guided loop") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 20, 3, "");
    TabularOracle tab(ds, "cmrr_proxy");
    Backend backend = truthful_backend(tab, ds.observations[0].config);
    Oracle oracle{[&](const Configuration& c) { return tab(c); }, &tab.pool()};
    BudgetedRun run;
    run.trial_budget = 4;
    run.n_random = 4;
    run.k_samples = 2;
    run.surrogate_kind = SurrogateKind::Icl;
    run.sampler_kind = SamplerKind::Icl;
    RunRecord record = run_llana(oracle, ds.space, run, backend);
    REQUIRE(record.trajectory.observations.size() == 4);
    for (const auto& p : record.provenance) CHECK(p == "random");
}

TEST_CASE("oracle lookup failures abort with a partial record") {
    SearchSpace space = unit_square();
    Backend backend;
    backend.cache_enabled = false;
    backend.mock_responder = [](const auto&, std::size_t, std::uint64_t) {
        return std::string("x is 0.5, y is 0.5");
    };
    Oracle oracle{[](const Configuration&) -> double {
        throw LookupError("configuration not present in tabular oracle");
    }};
    BudgetedRun run;
    run.trial_budget = 6;
    run.n_random = 2;
    run.k_samples = 2;
    run.surrogate_kind = SurrogateKind::Icl;
    run.sampler_kind = SamplerKind::Icl;
    RunRecord record = run_llana(oracle, space, run, backend);
    CHECK(record.aborted);
    CHECK(record.trajectory.observations.empty());
}

TEST_CASE("bi-objective loop recovers most of the segment front's hypervolume") {
    SearchSpace space = testing_support::unit_space_1d();
    MultiOracle oracle{[](const Configuration& c) {
        double x = std::get<double>(c.values.at("x"));
        return std::vector<double>{x, 1.0 - x};
    }};
    BudgetedRun run;
    run.trial_budget = 20;
    run.n_random = 5;
    run.seed = 6;
    run.gp_restarts = 2;
    run.candidate_pool = 128;
    MoboResult result = run_mobo(oracle, space, run, {1.1, 1.1});

    REQUIRE(result.hypervolume_curve.size() == 20);
    for (std::size_t i = 1; i < result.hypervolume_curve.size(); ++i)
        CHECK(result.hypervolume_curve[i] >= result.hypervolume_curve[i - 1] - 1e-15);
    for (std::size_t i = 0; i < result.record.best_so_far.size(); ++i)
        CHECK(result.record.best_so_far[i] == doctest::Approx(-result.hypervolume_curve[i]));

    // The attainable maximum for this front and reference point is 0.71.
    CHECK(result.hypervolume_curve.back() >= 0.95 * 0.71);

    CHECK_THROWS_AS(run_mobo(oracle, space, run, {1.0, 1.0, 1.0}), UnsupportedDimensionError);
}

TEST_CASE("an all-random bi-objective run matches the brute-force front") {
    SearchSpace space = unit_square();
    MultiOracle oracle{[](const Configuration& c) {
        double x = std::get<double>(c.values.at("x"));
        double y = std::get<double>(c.values.at("y"));
        return std::vector<double>{x + 0.1 * y, y + 0.1 * x};
    }};
    BudgetedRun run;
    run.trial_budget = 15;
    run.n_random = 15;
    run.seed = 9;
    std::vector<double> ref = {1.0, 1.0};
    MoboResult result = run_mobo(oracle, space, run, ref);

    std::vector<std::vector<double>> all_scores;
    for (const auto& obs : result.record.trajectory.observations)
        all_scores.push_back(obs.scores);
    CHECK(as_multiset(result.archive) == as_multiset(brute_force_front(all_scores, ref)));
}

TEST_CASE("run record serialization has one line per trial plus a summary") {
    SearchSpace space = unit_square();
    Oracle oracle{[](const Configuration& c) { return std::get<double>(c.values.at("x")); }};
    BudgetedRun run;
    run.trial_budget = 6;
    run.n_random = 2;
    run.gp_restarts = 1;
    run.candidate_pool = 16;
    RunRecord record = run_bo(oracle, space, run);

    std::ostringstream out;
    write_run_record(out, record);
    std::istringstream in(out.str());
    std::string line;
    std::vector<nlohmann::json> lines;
    while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 7);
    for (std::size_t t = 0; t < 6; ++t) {
        CHECK(lines[t].at("trial") == t);
        CHECK(lines[t].contains("config"));
        CHECK(lines[t].contains("ms_elapsed"));
        CHECK(lines[t].at("scores").size() == 1);
    }
    CHECK(lines[6].at("summary") == true);
    CHECK(lines[6].at("trials") == 6);
    CHECK(lines[6].at("final_best") == doctest::Approx(record.best_so_far.back()));
    CHECK(lines[6].at("aborted") == false);
}

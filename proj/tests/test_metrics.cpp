#include <doctest.h>

#include <cmath>
#include <sstream>

#include "llana/analog_oracle.hpp"
#include "llana/metrics.hpp"
#include "llana/rng.hpp"

using namespace llana;

namespace {

// A split whose single objective is an exact linear function of the weights.
DatasetSplit linear_split(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                          const SearchSpace& space) {
    std::vector<Observation> obs;
    auto configs = sample_uniform(space, seed, n_train + n_test);
    for (std::size_t i = 0; i < configs.size(); ++i) {
        Observation o;
        o.config = configs[i];
        double a = std::get<double>(o.config.values.at("w1"));
        double b = std::get<double>(o.config.values.at("w2"));
        double c = std::get<double>(o.config.values.at("w3"));
        o.scores = {2.0 * a - b + 0.5 * c};
        o.trial_index = i;
        obs.push_back(std::move(o));
    }
    return split_dataset(obs, n_train, n_test, seed + 1);
}

}  // namespace

TEST_CASE("nrmse hand cases and identities") {
    CHECK(nrmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
    // Errors of magnitude 1 against a unit target range.
    CHECK(nrmse({0.0, 1.0}, {1.0, 0.0}) == doctest::Approx(1.0));
    // Scaling both by 10 leaves the normalized error unchanged.
    CHECK(nrmse({0.0, 10.0}, {10.0, 0.0}) == doctest::Approx(1.0));

    CHECK_THROWS_AS(nrmse({1.0}, {1.0, 2.0}), SizeError);
    CHECK_THROWS_AS(nrmse({}, {}), SizeError);
    CHECK_THROWS_AS(nrmse({1.0, 2.0}, {3.0, 3.0}), DegenerateRangeError);
}

TEST_CASE("r2 hand cases and identities") {
    CHECK(r2({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(1.0));
    // Predicting the mean gives exactly zero.
    CHECK(r2({1.5, 1.5}, {1.0, 2.0}) == doctest::Approx(0.0));
    // Anti-correlated predictions land below zero: ss_res=2, ss_tot=0.5.
    CHECK(r2({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(-3.0));

    CHECK_THROWS_AS(r2({1.0}, {1.0, 2.0}), SizeError);
    CHECK_THROWS_AS(r2({1.0, 2.0}, {5.0, 5.0}), DegenerateRangeError);
}

TEST_CASE("lpd closed-form values") {
    // Exact mean, unit variance: -log(sqrt(2 pi)).
    double base = -0.5 * std::log(2.0 * M_PI);
    CHECK(lpd({{0.0, 1.0}}, {0.0}) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    // One standard deviation off costs exactly 1/2.
    CHECK(lpd({{0.0, 1.0}}, {1.0}) == doctest::Approx(base - 0.5).epsilon(1e-12));
    // Averaging over observations.
    CHECK(lpd({{0.0, 1.0}, {0.0, 1.0}}, {0.0, 1.0}) ==
          doctest::Approx(base - 0.25).epsilon(1e-12));

    CHECK_THROWS_AS(lpd({{0.0, 1.0}}, {0.0, 1.0}), SizeError);
    CHECK_THROWS_AS(lpd({{0.0, 0.0}}, {0.0}), DegenerateRangeError);
}

TEST_CASE("metrics agree with independent recomputation on random data") {
    Rng rng(15);
    std::vector<PredictiveDistribution> preds;
    std::vector<double> means, targets;
    for (int i = 0; i < 40; ++i) {
        preds.push_back({rng.uniform(-2.0, 2.0), rng.uniform(0.1, 1.0)});
        means.push_back(preds.back().mean);
        targets.push_back(rng.uniform(-2.0, 2.0));
    }
    double lo = *std::min_element(targets.begin(), targets.end());
    double hi = *std::max_element(targets.begin(), targets.end());
    double mean_t = 0.0;
    for (double t : targets) mean_t += t;
    mean_t /= targets.size();
    double ss_res = 0.0, ss_tot = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ss_res += (means[i] - targets[i]) * (means[i] - targets[i]);
        ss_tot += (targets[i] - mean_t) * (targets[i] - mean_t);
        double s = preds[i].std, z = targets[i] - preds[i].mean;
        acc += -std::log(s * std::sqrt(2.0 * M_PI)) - 0.5 * z * z / (s * s);
    }
    CHECK(nrmse(means, targets) ==
          doctest::Approx(std::sqrt(ss_res / targets.size()) / (hi - lo)).epsilon(1e-12));
    CHECK(r2(means, targets) == doctest::Approx(1.0 - ss_res / ss_tot).epsilon(1e-12));
    CHECK(lpd(preds, targets) == doctest::Approx(acc / targets.size()).epsilon(1e-12));
}

TEST_CASE("normalized regret tracks the running best") {
    RegretCurve curve = normalized_regret({0.8, 0.4, 0.9, 0.4}, 0.0, 1.0);
    REQUIRE(curve.values.size() == 4);
    CHECK(curve.values[0] == doctest::Approx(0.8));
    CHECK(curve.values[1] == doctest::Approx(0.4));
    CHECK(curve.values[2] == doctest::Approx(0.4));  // worse trial does not regress
    CHECK(curve.values[3] == doctest::Approx(0.4));

    // Affine normalization against the dataset extremes.
    RegretCurve shifted = normalized_regret({1.2, 0.2}, 0.2, 1.2);
    CHECK(shifted.values[0] == doctest::Approx(1.0));
    CHECK(shifted.values[1] == doctest::Approx(0.0));

    for (std::size_t i = 1; i < curve.values.size(); ++i)
        CHECK(curve.values[i] <= curve.values[i - 1]);

    CHECK_THROWS_AS(normalized_regret({1.0}, 2.0, 2.0), DegenerateRangeError);
    CHECK_THROWS_AS(normalized_regret({1.0}, 3.0, 2.0), DegenerateRangeError);
}

TEST_CASE("benchmark grid has one cell per surrogate, size, and repeat") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 60, 19, "");
    DatasetSplit split = split_dataset(ds.observations, 40, 20, 2);

    Backend backend;  // unused by gp/forest cells
    BenchOptions opt;
    opt.n_grid = {5, 10};
    opt.repeats = 2;
    opt.gp_restarts = 2;
    opt.bo_trials = 8;
    opt.bo_n_random = 3;
    opt.seed = 4;
    BenchReport report = bench_surrogates(split, ds.space, backend, opt);

    REQUIRE(report.cells.size() == 2 * 2 * 2);  // {gp, forest} x |n_grid| x repeats
    for (const auto& cell : report.cells) {
        CHECK_FALSE(cell.failed);
        CHECK(std::isfinite(cell.nrmse));
        CHECK(cell.nrmse >= 0.0);
        CHECK(cell.r2 <= 1.0);
        CHECK(std::isfinite(cell.lpd));
    }

    // 2 surrogates x 2 repeats x 8 trials of regret rows, each in [0, 1]
    // and nonincreasing within a (surrogate, repeat) series.
    REQUIRE(report.regret.size() == 2 * 2 * 8);
    for (const auto& row : report.regret) {
        CHECK(row.regret >= 0.0);
        CHECK(row.regret <= 1.0);
    }
    for (const auto& name : {"gp", "forest"}) {
        for (std::size_t rep = 0; rep < 2; ++rep) {
            double prev = 1.0;
            for (const auto& row : report.regret) {
                if (row.surrogate != name || row.repeat != rep) continue;
                CHECK(row.regret <= prev + 1e-15);
                prev = row.regret;
            }
        }
    }

    BenchOptions too_big = opt;
    too_big.n_grid = {1000};
    CHECK_THROWS_AS(bench_surrogates(split, ds.space, backend, too_big), SizeError);
}

TEST_CASE("benchmark output is deterministic in the seed") {
    Netlist nl = make_default_netlist();
    TabularDataset ds = gen_dataset(nl, 40, 5, "");
    DatasetSplit split = split_dataset(ds.observations, 30, 10, 1);
    Backend backend;
    BenchOptions opt;
    opt.n_grid = {8};
    opt.repeats = 1;
    opt.gp_restarts = 1;
    opt.run_regret = false;
    opt.seed = 7;

    std::ostringstream a, b;
    write_bench_csv(a, bench_surrogates(split, ds.space, backend, opt));
    write_bench_csv(b, bench_surrogates(split, ds.space, backend, opt));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("surrogate,n_observed,repeat,nrmse,r2,lpd\n", 0) == 0);
}

TEST_CASE("gp surrogate nails a linear response surface") {
    SearchSpace space = make_weight_space(3);
    DatasetSplit split = linear_split(30, 10, 44, space);
    Backend backend;
    BenchOptions opt;
    opt.n_grid = {30};
    opt.repeats = 1;
    opt.gp_restarts = 4;
    opt.run_regret = false;
    opt.surrogates = {SurrogateKind::Gp};
    BenchReport report = bench_surrogates(split, space, backend, opt);
    REQUIRE(report.cells.size() == 1);
    CHECK_FALSE(report.cells[0].failed);
    // The response is linear in the raw weights but curved in the GP's
    // log-encoded inputs, so demand most-but-not-all of the variance.
    CHECK(report.cells[0].r2 >= 0.98);
}

TEST_CASE("icl surrogate cells run against a mock model") {
    SearchSpace space = make_weight_space(3);
    DatasetSplit split = linear_split(12, 5, 3, space);
    Backend backend;
    backend.cache_enabled = false;
    backend.mock_responder = [](const auto&, std::size_t, std::uint64_t) {
        return std::string("## 0.25 ##");
    };
    BenchOptions opt;
    opt.surrogates = {SurrogateKind::Icl};
    opt.n_grid = {5, 12};
    opt.repeats = 1;
    opt.icl_k_samples = 3;
    opt.run_regret = false;
    BenchReport report = bench_surrogates(split, space, backend, opt);
    REQUIRE(report.cells.size() == 2);
    for (const auto& cell : report.cells) {
        CHECK_FALSE(cell.failed);
        CHECK(cell.surrogate == "icl");
        CHECK(std::isfinite(cell.lpd));
    }
}

TEST_CASE("failed cells serialize as nan rows but keep their errors in JSON") {
    BenchReport report;
    SurrogateEvalReport ok;
    ok.surrogate = "gp";
    ok.n_observed = 5;
    ok.nrmse = 0.25;
    ok.r2 = 0.5;
    ok.lpd = -1.0;
    SurrogateEvalReport bad;
    bad.surrogate = "forest";
    bad.n_observed = 5;
    bad.failed = true;
    bad.error = "boom";
    report.cells = {ok, bad};
    report.regret = {{"gp", 0, 0, 0.75}};

    std::ostringstream csv;
    write_bench_csv(csv, report);
    CHECK(csv.str().find("gp,5,0,0.25,0.5,-1\n") != std::string::npos);
    CHECK(csv.str().find("forest,5,0,nan,nan,nan\n") != std::string::npos);

    std::ostringstream regret_csv;
    write_regret_csv(regret_csv, report);
    CHECK(regret_csv.str() == "surrogate,trial,repeat,regret\ngp,0,0,0.75\n");

    nlohmann::json doc = bench_report_json(report);
    CHECK(doc.at("cells").size() == 2);
    CHECK(doc.at("cells")[1].at("failed") == true);
    CHECK(doc.at("cells")[1].at("error") == "boom");
    CHECK_FALSE(doc.at("cells")[1].contains("nrmse"));
    CHECK(doc.at("regret")[0].at("regret") == doctest::Approx(0.75));
}

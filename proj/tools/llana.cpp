#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llana/analog_oracle.hpp"
#include "llana/icl.hpp"
#include "llana/llm_backend.hpp"
#include "llana/metrics.hpp"
#include "llana/optimizer.hpp"
#include "llana/param_space.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct BackendFlags {
    std::string kind = "mock";
    std::string base_url;
    std::string cache_dir = ".llana_cache";
    bool cache = false;
    std::uint64_t mock_seed = 0;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
    cmd->add_option("--backend", flags.kind, "Backend kind: mock or http")
        ->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--base-url", flags.base_url, "Chat-completions base URL (http backend)");
    cmd->add_option("--cache-dir", flags.cache_dir, "Response cache directory");
    cmd->add_flag("--cache", flags.cache, "Enable response caching");
    cmd->add_option("--mock-seed", flags.mock_seed, "Mock backend seed");
}

llana::Backend make_backend(const BackendFlags& flags) {
    llana::Backend backend;
    if (flags.kind == "http") {
        backend.kind = llana::BackendKind::Http;
        backend.base_url = flags.base_url;
        if (const char* env = std::getenv("LLANA_BASE_URL"); env && backend.base_url.empty())
            backend.base_url = env;
        backend.cache_enabled = true;
    } else {
        backend.kind = llana::BackendKind::Mock;
        backend.cache_enabled = flags.cache;
    }
    backend.cache_dir = flags.cache_dir;
    backend.mock_seed = flags.mock_seed;
    return backend;
}

llana::Netlist resolve_netlist(const std::string& path) {
    if (path.empty()) return llana::make_default_netlist();
    return llana::load_netlist_file(path);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_gen_data(std::size_t rows, std::uint64_t seed, const std::string& out_dir,
                 const std::string& netlist_path, double beta) {
    std::filesystem::create_directories(out_dir);
    llana::Netlist netlist = resolve_netlist(netlist_path);
    std::string path = (std::filesystem::path(out_dir) / "dataset.csv").string();
    llana::TabularDataset ds = llana::gen_dataset(netlist, rows, seed, path, beta);
    std::cout << ds.observations.size() << " rows written to " << path << "\n";
    return 0;
}

int cmd_run(const std::string& surrogate, const std::string& sampler, std::size_t trials,
            std::size_t n_random, std::size_t m_candidates, double alpha, std::uint64_t seed,
            const BackendFlags& backend_flags, const std::string& dataset_path,
            const std::string& space_path, const std::string& objective,
            const std::string& out_path) {
    llana::SearchSpace space =
        space_path.empty() ? llana::make_weight_space() : llana::load_space_file(space_path);
    if (dataset_path.empty()) throw llana::ValidationError("run requires --dataset");
    llana::TabularDataset ds = llana::read_dataset_file(dataset_path, space);
    llana::TabularOracle oracle(ds, objective);
    llana::Oracle wrapped{[&](const llana::Configuration& c) { return oracle(c); },
                          &oracle.pool()};

    llana::BudgetedRun run;
    run.trial_budget = trials;
    run.n_random = n_random;
    run.m_candidates = m_candidates;
    run.exploration_alpha = alpha;
    run.seed = seed;

    llana::Backend backend = make_backend(backend_flags);
    llana::RunRecord record;
    if (surrogate == "icl") {
        run.surrogate_kind = llana::SurrogateKind::Icl;
        run.sampler_kind = llana::SamplerKind::Icl;
        if (sampler != "icl")
            throw llana::ValidationError("surrogate=icl requires sampler=icl");
        record = llana::run_llana(wrapped, space, run, backend);
    } else {
        run.surrogate_kind =
            surrogate == "gp" ? llana::SurrogateKind::Gp : llana::SurrogateKind::Forest;
        run.sampler_kind = llana::SamplerKind::UniformPool;
        if (sampler != "uniform-pool")
            throw llana::ValidationError("surrogate=" + surrogate +
                                         " requires sampler=uniform-pool");
        record = llana::run_bo(wrapped, space, run);
    }

    if (!out_path.empty()) {
        std::filesystem::create_directories(
            std::filesystem::path(out_path).parent_path().empty()
                ? "."
                : std::filesystem::path(out_path).parent_path().string());
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw llana::FileError("cannot write record: " + out_path);
        llana::write_run_record(out, record);
    }
    std::cout << "final best: " << record.best_so_far.back() << "\n";
    if (record.aborted) {
        std::cerr << "run aborted: oracle failure; partial record persisted\n";
        return kExitRuntime;
    }
    return 0;
}

int cmd_bench(const std::string& dataset_path, const std::string& space_path,
              const std::string& surrogates, const std::string& n_grid_text, std::size_t repeats,
              std::uint64_t seed, std::size_t train_n, std::size_t test_n,
              const std::string& objective, const BackendFlags& backend_flags,
              const std::string& out_dir, bool skip_regret) {
    llana::SearchSpace space =
        space_path.empty() ? llana::make_weight_space() : llana::load_space_file(space_path);
    llana::TabularDataset ds = llana::read_dataset_file(dataset_path, space);

    auto it = std::find(ds.objective_names.begin(), ds.objective_names.end(), objective);
    if (it == ds.objective_names.end())
        throw llana::ValidationError("objective '" + objective + "' not in dataset");
    std::size_t objective_index =
        static_cast<std::size_t>(it - ds.objective_names.begin());

    llana::BenchOptions opt;
    opt.surrogates.clear();
    for (const auto& name : split_list(surrogates)) {
        if (name == "gp") opt.surrogates.push_back(llana::SurrogateKind::Gp);
        else if (name == "forest") opt.surrogates.push_back(llana::SurrogateKind::Forest);
        else if (name == "icl") opt.surrogates.push_back(llana::SurrogateKind::Icl);
        else throw llana::ValidationError("unknown surrogate '" + name + "'");
    }
    if (!n_grid_text.empty()) {
        opt.n_grid.clear();
        for (const auto& n : split_list(n_grid_text))
            opt.n_grid.push_back(static_cast<std::size_t>(std::stoull(n)));
    }
    opt.repeats = repeats;
    opt.seed = seed;
    opt.objective_index = objective_index;
    opt.run_regret = !skip_regret;

    if (train_n + test_n > ds.observations.size())
        throw llana::ValidationError("train+test exceeds dataset size");
    llana::DatasetSplit split =
        llana::split_dataset(ds.observations, train_n, test_n, llana::derive_seed(seed, "split"));
    for (std::size_t n : opt.n_grid)
        if (n > split.train.size())
            throw llana::ValidationError("--n-grid entry exceeds training rows");

    llana::Backend backend = make_backend(backend_flags);
    llana::BenchReport report = llana::bench_surrogates(split, space, backend, opt);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(std::filesystem::path(out_dir) / "report.csv", std::ios::binary);
        llana::write_bench_csv(out, report);
    }
    {
        std::ofstream out(std::filesystem::path(out_dir) / "regret.csv", std::ios::binary);
        llana::write_regret_csv(out, report);
    }
    {
        std::ofstream out(std::filesystem::path(out_dir) / "report.json", std::ios::binary);
        out << llana::bench_report_json(report).dump(2) << "\n";
    }

    std::size_t failed = 0;
    for (const auto& cell : report.cells)
        if (cell.failed) ++failed;
    std::cout << report.cells.size() << " cells (" << failed << " failed) written to " << out_dir
              << "\n";
    if (failed == report.cells.size() && !report.cells.empty()) {
        std::cerr << "every bench cell failed\n";
        return kExitRuntime;
    }
    return 0;
}

struct TidySeries {
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        out << "series,x,y_mean,y_std\n";
        char buf[64];
        for (const auto& [key, ys] : groups) {
            double mean = 0.0;
            for (double y : ys) mean += y;
            mean /= static_cast<double>(ys.size());
            double var = 0.0;
            for (double y : ys) var += (y - mean) * (y - mean);
            double sd = ys.size() > 1 ? std::sqrt(var / static_cast<double>(ys.size() - 1)) : 0.0;
            out << key.first << ',' << key.second << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", mean);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", sd);
            out << buf << '\n';
        }
    }
};

int cmd_plot_data(const std::string& report_path, const std::string& regret_path,
                  const std::string& out_dir) {
    std::ifstream report_in(report_path);
    if (!report_in) throw llana::ValidationError("cannot open report: " + report_path);
    std::filesystem::create_directories(out_dir);

    TidySeries nrmse_series, r2_series, lpd_series;
    std::string line;
    std::getline(report_in, line);  // header
    while (std::getline(report_in, line)) {
        auto cells = split_list(line);
        if (cells.size() < 6) continue;
        if (cells[3] == "nan") continue;
        auto key = std::make_pair(cells[0], static_cast<std::size_t>(std::stoull(cells[1])));
        nrmse_series.groups[key].push_back(std::stod(cells[3]));
        r2_series.groups[key].push_back(std::stod(cells[4]));
        lpd_series.groups[key].push_back(std::stod(cells[5]));
    }
    nrmse_series.write((std::filesystem::path(out_dir) / "nrmse.csv").string());
    r2_series.write((std::filesystem::path(out_dir) / "r2.csv").string());
    lpd_series.write((std::filesystem::path(out_dir) / "lpd.csv").string());

    TidySeries regret_series;
    if (!regret_path.empty()) {
        std::ifstream regret_in(regret_path);
        if (!regret_in) throw llana::ValidationError("cannot open regret file: " + regret_path);
        std::getline(regret_in, line);
        while (std::getline(regret_in, line)) {
            auto cells = split_list(line);
            if (cells.size() < 4) continue;
            auto key = std::make_pair(cells[0], static_cast<std::size_t>(std::stoull(cells[1])));
            regret_series.groups[key].push_back(std::stod(cells[3]));
        }
    }
    regret_series.write((std::filesystem::path(out_dir) / "regret.csv").string());
    std::cout << "plot data written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Black-box optimization toolkit for analog placement net weighting"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic design-performance dataset");
    std::size_t rows = 500;
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_netlist;
    double beta = 0.5;
    gen->add_option("--rows", rows, "Number of dataset rows");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--netlist", gen_netlist, "Netlist JSON (default: built-in 36-cell design)");
    gen->add_option("--beta", beta, "Area minimization factor");

    // run
    auto* run = app.add_subcommand("run", "Run one optimization loop");
    std::string surrogate = "gp", sampler;
    std::size_t trials = 30, n_random = 5, m_candidates = 20;
    double alpha = -0.1;
    std::uint64_t run_seed = 0;
    std::string run_dataset, run_space, run_objective = "cmrr_proxy", run_out = "record.jsonl";
    BackendFlags run_backend;
    run->add_option("--surrogate", surrogate, "Surrogate: gp, forest, or icl")
        ->check(CLI::IsMember({"gp", "forest", "icl"}));
    run->add_option("--sampler", sampler, "Sampler: icl or uniform-pool")
        ->check(CLI::IsMember({"icl", "uniform-pool"}));
    run->add_option("--trials", trials, "Trial budget T");
    run->add_option("--n-random", n_random, "Initial design size");
    run->add_option("--m-candidates", m_candidates, "Candidates per trial M");
    run->add_option("--alpha", alpha, "Exploration alpha");
    run->add_option("--seed", run_seed, "RNG seed");
    run->add_option("--dataset", run_dataset, "Tabular dataset CSV")->required();
    run->add_option("--space", run_space, "Search space JSON (default: 14-D weight space)");
    run->add_option("--objective", run_objective, "Objective column name");
    run->add_option("--out", run_out, "Run record output (JSON lines)");
    add_backend_flags(run, run_backend);

    // bench
    auto* bench = app.add_subcommand("bench", "Surrogate benchmark over observation counts");
    std::string bench_dataset, bench_space, bench_surrogates_text = "gp,forest";
    std::string bench_grid, bench_objective = "cmrr_proxy", bench_out = "bench_out";
    std::size_t repeats = 3, train_n = 400, test_n = 100;
    std::uint64_t bench_seed = 0;
    bool skip_regret = false;
    BackendFlags bench_backend;
    bench->add_option("--dataset", bench_dataset, "Tabular dataset CSV")->required();
    bench->add_option("--space", bench_space, "Search space JSON");
    bench->add_option("--surrogates", bench_surrogates_text, "Comma list: gp,forest,icl");
    bench->add_option("--n-grid", bench_grid, "Comma list of observation counts");
    bench->add_option("--repeats", repeats, "Repeats per cell");
    bench->add_option("--seed", bench_seed, "RNG seed");
    bench->add_option("--train", train_n, "Training rows");
    bench->add_option("--test", test_n, "Test rows");
    bench->add_option("--objective", bench_objective, "Objective column name");
    bench->add_option("--out", bench_out, "Output directory");
    bench->add_flag("--skip-regret", skip_regret, "Skip the BO-loop regret runs");
    add_backend_flags(bench, bench_backend);

    // plot-data
    auto* plot = app.add_subcommand("plot-data", "Reshape bench reports into tidy plot series");
    std::string plot_report, plot_regret, plot_out = "plot_out";
    plot->add_option("--report", plot_report, "Bench report CSV")->required();
    plot->add_option("--regret", plot_regret, "Regret CSV");
    plot->add_option("--out", plot_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(rows, gen_seed, gen_out, gen_netlist, beta);
        if (run->parsed()) {
            if (sampler.empty()) sampler = (surrogate == "icl") ? "icl" : "uniform-pool";
            return cmd_run(surrogate, sampler, trials, n_random, m_candidates, alpha, run_seed,
                           run_backend, run_dataset, run_space, run_objective, run_out);
        }
        if (bench->parsed())
            return cmd_bench(bench_dataset, bench_space, bench_surrogates_text, bench_grid,
                             repeats, bench_seed, train_n, test_n, bench_objective, bench_backend,
                             bench_out, skip_regret);
        if (plot->parsed()) return cmd_plot_data(plot_report, plot_regret, plot_out);
    } catch (const llana::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const llana::SizeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const llana::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llana/analog_oracle.hpp"
#include "llana/errors.hpp"
#include "llana/gp.hpp"
#include "llana/optimizer.hpp"
#include "llana/param_space.hpp"

namespace llana {

inline double nrmse(const std::vector<double>& pred_means, const std::vector<double>& targets) {
    if (pred_means.size() != targets.size() || targets.empty())
        throw SizeError("nrmse requires equal nonzero lengths");
    double lo = *std::min_element(targets.begin(), targets.end());
    double hi = *std::max_element(targets.begin(), targets.end());
    if (!(hi > lo)) throw DegenerateRangeError("target range is zero");
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double e = pred_means[i] - targets[i];
        sum_sq += e * e;
    }
    return std::sqrt(sum_sq / static_cast<double>(targets.size())) / (hi - lo);
}

inline double r2(const std::vector<double>& pred_means, const std::vector<double>& targets) {
    if (pred_means.size() != targets.size() || targets.empty())
        throw SizeError("r2 requires equal nonzero lengths");
    double mean = 0.0;
    for (double t : targets) mean += t;
    mean /= static_cast<double>(targets.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ss_res += (pred_means[i] - targets[i]) * (pred_means[i] - targets[i]);
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    if (!(ss_tot > 0.0)) throw DegenerateRangeError("target variance is zero");
    return 1.0 - ss_res / ss_tot;
}

// Mean log predictive density under Gaussian predictive distributions.
inline double lpd(const std::vector<PredictiveDistribution>& preds,
                  const std::vector<double>& targets) {
    if (preds.size() != targets.size() || targets.empty())
        throw SizeError("lpd requires equal nonzero lengths");
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double sigma = preds[i].std;
        if (!(sigma > 0.0)) throw DegenerateRangeError("predictive std must be > 0 for LPD");
        double z = targets[i] - preds[i].mean;
        acc += -0.5 * std::log(2.0 * M_PI * sigma * sigma) - z * z / (2.0 * sigma * sigma);
    }
    return acc / static_cast<double>(targets.size());
}

struct RegretCurve {
    std::vector<double> values;
    double f_star_min = 0.0;
    double f_star_max = 0.0;
};

inline RegretCurve normalized_regret(const std::vector<double>& chosen_scores, double f_star_min,
                                     double f_star_max) {
    if (!(f_star_max > f_star_min)) throw DegenerateRangeError("f*_max must exceed f*_min");
    RegretCurve curve;
    curve.f_star_min = f_star_min;
    curve.f_star_max = f_star_max;
    double running = std::numeric_limits<double>::infinity();
    for (double s : chosen_scores) {
        running = std::min(running, s);
        curve.values.push_back((running - f_star_min) / (f_star_max - f_star_min));
    }
    return curve;
}

// --- surrogate-vs-observation-count benchmark ----------------------------------

struct SurrogateEvalReport {
    std::string surrogate;
    std::size_t n_observed = 0;
    std::size_t repeat = 0;
    double nrmse = 0.0;
    double r2 = 0.0;
    double lpd = 0.0;
    bool failed = false;
    std::string error;
};

struct RegretRow {
    std::string surrogate;
    std::size_t trial = 0;
    std::size_t repeat = 0;
    double regret = 0.0;
};

struct BenchReport {
    std::vector<SurrogateEvalReport> cells;
    std::vector<RegretRow> regret;
};

inline const char* surrogate_name(SurrogateKind kind) {
    switch (kind) {
        case SurrogateKind::Gp: return "gp";
        case SurrogateKind::Forest: return "forest";
        default: return "icl";
    }
}

struct BenchOptions {
    std::vector<SurrogateKind> surrogates = {SurrogateKind::Gp, SurrogateKind::Forest};
    std::vector<std::size_t> n_grid = {5, 10, 15, 20, 25, 30};
    std::size_t repeats = 3;
    std::uint64_t seed = 0;
    std::size_t objective_index = 0;
    std::size_t icl_k_samples = 5;
    std::size_t bo_trials = 30;
    std::size_t bo_n_random = 5;
    std::size_t m_candidates = 20;
    double exploration_alpha = -0.1;
    int gp_restarts = 4;
    bool run_regret = true;
};

inline BenchReport bench_surrogates(const DatasetSplit& split, const SearchSpace& space,
                                    const Backend& backend, const BenchOptions& opt) {
    for (std::size_t n : opt.n_grid)
        if (n > split.train.size())
            throw SizeError("n_grid entry exceeds training set size");

    BenchReport report;
    std::vector<double> test_targets;
    for (const auto& obs : split.test)
        test_targets.push_back(obs.scores.at(opt.objective_index));

    for (SurrogateKind kind : opt.surrogates) {
        const std::string name = surrogate_name(kind);
        for (std::size_t n : opt.n_grid) {
            for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
                SurrogateEvalReport cell;
                cell.surrogate = name;
                cell.n_observed = n;
                cell.repeat = rep;
                try {
                    // Seeded subsample of n training rows.
                    std::uint64_t sub_seed =
                        derive_seed(opt.seed, "bench-subsample-" + name, n * 1000 + rep);
                    Rng rng(sub_seed);
                    std::vector<std::size_t> order(split.train.size());
                    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                    for (std::size_t i = order.size(); i > 1; --i)
                        std::swap(order[i - 1], order[rng.uniform_index(i)]);

                    std::vector<PredictiveDistribution> preds;
                    std::vector<double> means;
                    if (kind == SurrogateKind::Icl) {
                        Trajectory traj;
                        traj.space = space;
                        traj.objective_names = {"objective"};
                        traj.directions = {Direction::Minimize};
                        for (std::size_t i = 0; i < n; ++i) {
                            const Observation& obs = split.train[order[i]];
                            traj.add(obs.config, {obs.scores.at(opt.objective_index)});
                        }
                        TaskCard card = make_task_card(space, "objective (lower is better)", n);
                        for (std::size_t q = 0; q < split.test.size(); ++q) {
                            IclPrediction p = icl_predict(
                                backend, card, traj, split.test[q].config, opt.icl_k_samples,
                                derive_seed(opt.seed, "bench-icl", n * 100000 + rep * 1000 + q));
                            preds.push_back(PredictiveDistribution{p.mean, p.std});
                        }
                    } else {
                        std::vector<std::pair<std::vector<double>, double>> train;
                        for (std::size_t i = 0; i < n; ++i) {
                            const Observation& obs = split.train[order[i]];
                            train.emplace_back(encode_unit(obs.config, space),
                                               obs.scores.at(opt.objective_index));
                        }
                        if (kind == SurrogateKind::Gp) {
                            GpFitOptions fit_opt;
                            fit_opt.restarts = opt.gp_restarts;
                            fit_opt.seed = sub_seed;
                            GpModel model = gp_fit(train, fit_opt);
                            for (const auto& obs : split.test)
                                preds.push_back(gp_predict(model, encode_unit(obs.config, space)));
                        } else {
                            ForestModel model = forest_fit(train, 64, 3, sub_seed);
                            for (const auto& obs : split.test)
                                preds.push_back(
                                    forest_predict(model, encode_unit(obs.config, space)));
                        }
                    }
                    for (const auto& p : preds) means.push_back(p.mean);
                    cell.nrmse = nrmse(means, test_targets);
                    cell.r2 = r2(means, test_targets);
                    cell.lpd = lpd(preds, test_targets);
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.error = e.what();
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }

    if (opt.run_regret) {
        // BO-loop regret over the tabular pool formed by the full split.
        TabularDataset ds;
        ds.space = space;
        ds.objective_names = {"objective"};
        for (const auto& obs : split.train) {
            Observation o;
            o.config = obs.config;
            o.scores = {obs.scores.at(opt.objective_index)};
            o.trial_index = ds.observations.size();
            ds.observations.push_back(std::move(o));
        }
        for (const auto& obs : split.test) {
            Observation o;
            o.config = obs.config;
            o.scores = {obs.scores.at(opt.objective_index)};
            o.trial_index = ds.observations.size();
            ds.observations.push_back(std::move(o));
        }
        TabularOracle oracle(ds, "objective");
        double f_min = std::numeric_limits<double>::infinity(), f_max = -f_min;
        for (const auto& obs : ds.observations) {
            f_min = std::min(f_min, obs.scores[0]);
            f_max = std::max(f_max, obs.scores[0]);
        }

        for (SurrogateKind kind : opt.surrogates) {
            const std::string name = surrogate_name(kind);
            for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
                BudgetedRun run;
                run.trial_budget = opt.bo_trials;
                run.n_random = opt.bo_n_random;
                run.m_candidates = opt.m_candidates;
                run.exploration_alpha = opt.exploration_alpha;
                run.gp_restarts = opt.gp_restarts;
                run.seed = derive_seed(opt.seed, "bench-regret-" + name, rep);
                Oracle wrapped{[&](const Configuration& c) { return oracle(c); }, &oracle.pool()};

                RunRecord record;
                if (kind == SurrogateKind::Icl) {
                    run.surrogate_kind = SurrogateKind::Icl;
                    run.sampler_kind = SamplerKind::Icl;
                    run.k_samples = std::max<std::size_t>(opt.icl_k_samples, 2);
                    record = run_llana(wrapped, space, run, backend);
                } else {
                    run.surrogate_kind = kind;
                    run.sampler_kind = SamplerKind::UniformPool;
                    record = run_bo(wrapped, space, run);
                }
                std::vector<double> chosen;
                for (const auto& obs : record.trajectory.observations)
                    chosen.push_back(obs.scores[0]);
                RegretCurve curve = normalized_regret(chosen, f_min, f_max);
                for (std::size_t t = 0; t < curve.values.size(); ++t)
                    report.regret.push_back(RegretRow{name, t, rep, curve.values[t]});
            }
        }
    }
    return report;
}

// --- report serialization -------------------------------------------------------

inline void write_bench_csv(std::ostream& out, const BenchReport& report) {
    out << "surrogate,n_observed,repeat,nrmse,r2,lpd\n";
    char buf[64];
    for (const auto& cell : report.cells) {
        out << cell.surrogate << ',' << cell.n_observed << ',' << cell.repeat << ',';
        if (cell.failed) {
            out << "nan,nan,nan\n";
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", cell.nrmse);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", cell.r2);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", cell.lpd);
        out << buf << '\n';
    }
}

inline void write_regret_csv(std::ostream& out, const BenchReport& report) {
    out << "surrogate,trial,repeat,regret\n";
    char buf[64];
    for (const auto& row : report.regret) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.regret);
        out << row.surrogate << ',' << row.trial << ',' << row.repeat << ',' << buf << '\n';
    }
}

inline nlohmann::json bench_report_json(const BenchReport& report) {
    nlohmann::json doc;
    doc["cells"] = nlohmann::json::array();
    for (const auto& cell : report.cells) {
        nlohmann::json j = {{"surrogate", cell.surrogate},
                            {"n_observed", cell.n_observed},
                            {"repeat", cell.repeat},
                            {"failed", cell.failed}};
        if (cell.failed) {
            j["error"] = cell.error;
        } else {
            j["nrmse"] = cell.nrmse;
            j["r2"] = cell.r2;
            j["lpd"] = cell.lpd;
        }
        doc["cells"].push_back(std::move(j));
    }
    doc["regret"] = nlohmann::json::array();
    for (const auto& row : report.regret)
        doc["regret"].push_back({{"surrogate", row.surrogate},
                                 {"trial", row.trial},
                                 {"repeat", row.repeat},
                                 {"regret", row.regret}});
    return doc;
}

}  // namespace llana

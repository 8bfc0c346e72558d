#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llana/acquisition.hpp"
#include "llana/errors.hpp"
#include "llana/forest.hpp"
#include "llana/gp.hpp"
#include "llana/icl.hpp"
#include "llana/param_space.hpp"
#include "llana/rng.hpp"

namespace llana {

enum class SurrogateKind { Gp, Forest, Icl };
enum class SamplerKind { Icl, UniformPool };

struct BudgetedRun {
    std::size_t trial_budget = 30;    // T
    std::size_t n_random = 5;         // N_random
    std::size_t m_candidates = 20;    // M
    double exploration_alpha = -0.1;  // alpha
    std::uint64_t seed = 0;
    SurrogateKind surrogate_kind = SurrogateKind::Gp;
    SamplerKind sampler_kind = SamplerKind::UniformPool;
    std::size_t k_samples = 10;      // ICL surrogate completions per query
    int gp_restarts = 8;
    std::size_t candidate_pool = 512;
    std::size_t prompt_context_limit = 50;

    void check() const {
        if (n_random < 1) throw ValidationError("N_random must be >= 1");
        if (m_candidates < 1) throw ValidationError("M must be >= 1");
        if (trial_budget < n_random) throw ValidationError("trial budget must be >= N_random");
    }
};

// Single-objective oracle; a non-null pool marks it tabular, in which case
// evaluated configurations are restricted to the pool.
struct Oracle {
    std::function<double(const Configuration&)> eval;
    const std::vector<Configuration>* pool = nullptr;
};

struct RunRecord {
    Trajectory trajectory;
    std::vector<double> best_so_far;
    std::vector<std::string> provenance;  // random | icl-sample | backfill | fallback-random
    std::vector<double> ms_elapsed;
    bool aborted = false;
};

namespace detail {

class TrialTimer {
public:
    TrialTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void record_trial(RunRecord& record, Oracle& oracle, Configuration config,
                         std::string provenance, const TrialTimer& timer) {
    double score = oracle.eval(config);
    record.trajectory.add(std::move(config), {score});
    double prev = record.best_so_far.empty() ? std::numeric_limits<double>::infinity()
                                             : record.best_so_far.back();
    record.best_so_far.push_back(std::min(prev, record.trajectory.observations.back().scores[0]));
    record.provenance.push_back(std::move(provenance));
    record.ms_elapsed.push_back(timer.ms());
}

inline std::vector<Configuration> initial_configs(const SearchSpace& space, const Oracle& oracle,
                                                  std::size_t n, std::uint64_t seed) {
    if (!oracle.pool) return sample_uniform(space, seed, n);
    Rng rng(seed);
    std::vector<Configuration> out;
    std::vector<std::size_t> order(oracle.pool->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t i = 0; i < n && i < order.size(); ++i)
        out.push_back((*oracle.pool)[order[i]]);
    while (out.size() < n) out.push_back((*oracle.pool)[rng.uniform_index(oracle.pool->size())]);
    return out;
}

inline double unit_distance_sq(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Snaps a proposed configuration onto the nearest pool member (unit-encoded
// Euclidean), preferring ones not yet evaluated.
inline Configuration snap_to_pool(const Configuration& config, const SearchSpace& space,
                                  const std::vector<Configuration>& pool,
                                  const std::vector<Configuration>& evaluated) {
    std::vector<double> q = encode_unit(config, space);
    double best_any = std::numeric_limits<double>::infinity();
    double best_new = std::numeric_limits<double>::infinity();
    const Configuration* pick_any = nullptr;
    const Configuration* pick_new = nullptr;
    for (const auto& candidate : pool) {
        double d = unit_distance_sq(q, encode_unit(candidate, space));
        if (d < best_any) {
            best_any = d;
            pick_any = &candidate;
        }
        bool seen = std::find(evaluated.begin(), evaluated.end(), candidate) != evaluated.end();
        if (!seen && d < best_new) {
            best_new = d;
            pick_new = &candidate;
        }
    }
    if (pick_new) return *pick_new;
    if (pick_any) return *pick_any;
    return config;
}

inline Trajectory truncated_context(const Trajectory& trajectory, std::size_t limit) {
    if (trajectory.observations.size() <= limit) return trajectory;
    Trajectory out;
    out.space = trajectory.space;
    out.objective_names = trajectory.objective_names;
    out.directions = trajectory.directions;
    std::size_t start = trajectory.observations.size() - limit;
    for (std::size_t i = start; i < trajectory.observations.size(); ++i) {
        Observation obs = trajectory.observations[i];
        obs.trial_index = i - start;
        out.observations.push_back(std::move(obs));
    }
    return out;
}

}  // namespace detail

// --- end-to-end LLANA loop ---------------------------------------------------

inline RunRecord run_llana(Oracle oracle, const SearchSpace& space, const BudgetedRun& run,
                           const Backend& backend) {
    run.check();
    if (run.surrogate_kind != SurrogateKind::Icl || run.sampler_kind != SamplerKind::Icl)
        throw ValidationError("run_llana requires surrogate=icl and sampler=icl");

    RunRecord record;
    record.trajectory.space = space;
    record.trajectory.objective_names = {"objective"};
    record.trajectory.directions = {Direction::Minimize};

    TaskCard card = make_task_card(space, "objective (lower is better)", 0);

    try {
        {
            card.n_samples = 0;
            auto init = icl_initial_designs(backend, card, run.n_random, space,
                                            derive_seed(run.seed, "llana-init"), oracle.pool);
            for (auto& config : init.configs) {
                detail::TrialTimer timer;
                if (oracle.pool) {
                    std::vector<Configuration> evaluated;
                    for (const auto& obs : record.trajectory.observations)
                        evaluated.push_back(obs.config);
                    config = detail::snap_to_pool(config, space, *oracle.pool, evaluated);
                }
                detail::record_trial(record, oracle, std::move(config), "random", timer);
            }
        }

        for (std::size_t t = run.n_random; t < run.trial_budget; ++t) {
            detail::TrialTimer timer;
            Trajectory context =
                detail::truncated_context(record.trajectory, run.prompt_context_limit);
            card.n_samples = context.observations.size();

            double x_min = std::numeric_limits<double>::infinity();
            double x_max = -x_min;
            for (const auto& obs : record.trajectory.observations) {
                x_min = std::min(x_min, obs.scores[0]);
                x_max = std::max(x_max, obs.scores[0]);
            }
            AcquisitionContext ctx{record.best_so_far.back(), run.exploration_alpha, x_min, x_max};
            double target = target_score(ctx);

            auto sampled = icl_sample_candidates(backend, card, context, target, run.m_candidates,
                                                 derive_seed(run.seed, "llana-sample", t),
                                                 oracle.pool);

            std::vector<Configuration> evaluated;
            for (const auto& obs : record.trajectory.observations)
                evaluated.push_back(obs.config);
            if (oracle.pool)
                for (auto& c : sampled.configs)
                    c = detail::snap_to_pool(c, space, *oracle.pool, evaluated);

            std::vector<PredictiveDistribution> preds;
            preds.reserve(sampled.configs.size());
            for (std::size_t i = 0; i < sampled.configs.size(); ++i) {
                IclPrediction p = icl_predict(backend, card, context, sampled.configs[i],
                                              run.k_samples,
                                              derive_seed(run.seed, "llana-predict", t * 1000 + i));
                preds.push_back(PredictiveDistribution{p.mean, p.std});
            }
            auto scored = score_candidates(preds, record.best_so_far.back());
            std::size_t pick = scored.argmax_index;
            detail::record_trial(record, oracle, sampled.configs[pick],
                                 sampled.backfilled[pick] ? "backfill" : "icl-sample", timer);
        }
    } catch (const LookupError&) {
        record.aborted = true;  // oracle failure: persist the partial record
    }
    return record;
}

// --- classical BO loop --------------------------------------------------------

inline RunRecord run_bo(Oracle oracle, const SearchSpace& space, const BudgetedRun& run) {
    run.check();
    if (run.surrogate_kind == SurrogateKind::Icl || run.sampler_kind != SamplerKind::UniformPool)
        throw ValidationError("run_bo requires surrogate in {gp, forest} and sampler=uniform-pool");

    RunRecord record;
    record.trajectory.space = space;
    record.trajectory.objective_names = {"objective"};
    record.trajectory.directions = {Direction::Minimize};

    auto init = detail::initial_configs(space, oracle, run.n_random,
                                        derive_seed(run.seed, "bo-init"));
    for (auto& config : init) {
        detail::TrialTimer timer;
        detail::record_trial(record, oracle, std::move(config), "random", timer);
    }

    for (std::size_t t = run.n_random; t < run.trial_budget; ++t) {
        detail::TrialTimer timer;
        std::vector<std::pair<std::vector<double>, double>> train;
        for (const auto& obs : record.trajectory.observations)
            train.emplace_back(encode_unit(obs.config, space), obs.scores[0]);

        // Candidate set: the untried pool for tabular oracles, otherwise a
        // fresh uniform pool.
        std::vector<Configuration> candidates;
        if (oracle.pool) {
            std::vector<Configuration> evaluated;
            for (const auto& obs : record.trajectory.observations)
                evaluated.push_back(obs.config);
            for (const auto& c : *oracle.pool)
                if (std::find(evaluated.begin(), evaluated.end(), c) == evaluated.end())
                    candidates.push_back(c);
            if (candidates.empty()) candidates = *oracle.pool;
        } else {
            candidates =
                sample_uniform(space, derive_seed(run.seed, "bo-pool", t), run.candidate_pool);
        }

        Configuration chosen;
        std::string provenance;
        try {
            std::vector<PredictiveDistribution> preds;
            preds.reserve(candidates.size());
            if (run.surrogate_kind == SurrogateKind::Gp) {
                GpFitOptions opt;
                opt.restarts = run.gp_restarts;
                opt.seed = derive_seed(run.seed, "bo-gp-fit", t);
                GpModel model = gp_fit(train, opt);
                for (const auto& c : candidates)
                    preds.push_back(gp_predict(model, encode_unit(c, space)));
            } else {
                ForestModel model =
                    forest_fit(train, 64, 3, derive_seed(run.seed, "bo-forest-fit", t));
                for (const auto& c : candidates)
                    preds.push_back(forest_predict(model, encode_unit(c, space)));
            }
            auto scored = score_candidates(preds, record.best_so_far.back());
            chosen = candidates[scored.argmax_index];
            provenance = "icl-sample";  // model-guided pick
        } catch (const NumericalError&) {
            Rng rng(derive_seed(run.seed, "bo-fallback", t));
            chosen = candidates[rng.uniform_index(candidates.size())];
            provenance = "fallback-random";
        }
        detail::record_trial(record, oracle, std::move(chosen), std::move(provenance), timer);
    }
    return record;
}

// --- Pareto archive and hypervolume -------------------------------------------

struct ParetoArchive {
    std::vector<std::pair<Configuration, std::vector<double>>> points;
    std::vector<double> reference;
};

// a dominates b (minimize form): a <= b componentwise and a != b.
inline bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

inline ParetoArchive pareto_update(ParetoArchive archive,
                                   std::pair<Configuration, std::vector<double>> point) {
    if (point.second.size() != archive.reference.size())
        throw SizeError("score vector length does not match reference point");
    for (std::size_t i = 0; i < point.second.size(); ++i)
        if (point.second[i] > archive.reference[i]) return archive;  // beyond r: discarded
    for (const auto& existing : archive.points) {
        if (existing.second == point.second) return archive;  // duplicate: a != b required
        if (dominates(existing.second, point.second)) return archive;
    }
    std::erase_if(archive.points, [&](const auto& existing) {
        return dominates(point.second, existing.second);
    });
    archive.points.push_back(std::move(point));
    return archive;
}

// 2-D hypervolume by sort-and-sweep.
inline double hypervolume(const ParetoArchive& archive) {
    if (archive.reference.size() != 2)
        throw UnsupportedDimensionError("hypervolume implemented for m = 2 only");
    if (archive.points.empty()) return 0.0;
    std::vector<std::pair<double, double>> pts;
    for (const auto& [_, s] : archive.points) pts.emplace_back(s[0], s[1]);
    std::sort(pts.begin(), pts.end());
    double hv = 0.0;
    const double r0 = archive.reference[0], r1 = archive.reference[1];
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double next_x = (i + 1 < pts.size()) ? pts[i + 1].first : r0;
        hv += (next_x - pts[i].first) * (r1 - pts[i].second);
    }
    return hv;
}

// --- MOBO baseline --------------------------------------------------------------

struct MultiOracle {
    std::function<std::vector<double>(const Configuration&)> eval;
    const std::vector<Configuration>* pool = nullptr;
};

struct MoboResult {
    RunRecord record;
    ParetoArchive archive;
    std::vector<double> hypervolume_curve;
};

inline MoboResult run_mobo(MultiOracle oracle, const SearchSpace& space, const BudgetedRun& run,
                           const std::vector<double>& reference) {
    run.check();
    if (reference.size() != 2)
        throw UnsupportedDimensionError("run_mobo supports bi-objective problems only");

    MoboResult result;
    result.archive.reference = reference;
    RunRecord& record = result.record;
    record.trajectory.space = space;
    record.trajectory.objective_names = {"f1", "f2"};
    record.trajectory.directions = {Direction::Minimize, Direction::Minimize};

    auto evaluate = [&](Configuration config, std::string provenance, const detail::TrialTimer& timer) {
        std::vector<double> scores = oracle.eval(config);
        result.archive = pareto_update(std::move(result.archive), {config, scores});
        record.trajectory.add(std::move(config), std::move(scores));
        // Progress indicator: negative hypervolume is nonincreasing.
        double hv = hypervolume(result.archive);
        result.hypervolume_curve.push_back(hv);
        record.best_so_far.push_back(-hv);
        record.provenance.push_back(std::move(provenance));
        record.ms_elapsed.push_back(timer.ms());
    };

    constexpr std::size_t kPosteriorDraws = 64;

    for (std::size_t t = 0; t < run.trial_budget; ++t) {
        detail::TrialTimer timer;
        if (t < run.n_random) {
            Configuration config =
                sample_uniform(space, derive_seed(run.seed, "mobo-init", t), 1)[0];
            evaluate(std::move(config), "random", timer);
            continue;
        }

        std::vector<GpModel> models;
        bool fit_ok = true;
        try {
            for (std::size_t obj = 0; obj < 2; ++obj) {
                std::vector<std::pair<std::vector<double>, double>> train;
                for (const auto& obs : record.trajectory.observations)
                    train.emplace_back(encode_unit(obs.config, space), obs.scores[obj]);
                GpFitOptions opt;
                opt.restarts = run.gp_restarts;
                opt.seed = derive_seed(run.seed, "mobo-gp-fit", t * 2 + obj);
                models.push_back(gp_fit(train, opt));
            }
        } catch (const NumericalError&) {
            fit_ok = false;
        }

        auto candidates =
            sample_uniform(space, derive_seed(run.seed, "mobo-pool", t), run.candidate_pool);
        if (!fit_ok) {
            Rng rng(derive_seed(run.seed, "mobo-fallback", t));
            evaluate(candidates[rng.uniform_index(candidates.size())], "fallback-random", timer);
            continue;
        }

        const double base_hv = hypervolume(result.archive);
        Rng draw_rng(derive_seed(run.seed, "mobo-ehvi", t));
        double best_improvement = -1.0;
        std::size_t best_index = 0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            auto x = encode_unit(candidates[c], space);
            PredictiveDistribution p0 = gp_predict(models[0], x);
            PredictiveDistribution p1 = gp_predict(models[1], x);
            double acc = 0.0;
            for (std::size_t k = 0; k < kPosteriorDraws; ++k) {
                std::vector<double> draw = {p0.mean + p0.std * draw_rng.normal01(),
                                            p1.mean + p1.std * draw_rng.normal01()};
                ParetoArchive extended =
                    pareto_update(result.archive, {candidates[c], std::move(draw)});
                acc += hypervolume(extended) - base_hv;
            }
            double improvement = acc / static_cast<double>(kPosteriorDraws);
            if (improvement > best_improvement) {
                best_improvement = improvement;
                best_index = c;
            }
        }
        evaluate(candidates[best_index], "icl-sample", timer);
    }
    return result;
}

// --- RunRecord serialization (JSON lines) ---------------------------------------

inline nlohmann::json config_to_json(const Configuration& config) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, value] : config.values) {
        if (const double* d = std::get_if<double>(&value))
            out[name] = *d;
        else if (const std::int64_t* i = std::get_if<std::int64_t>(&value))
            out[name] = *i;
        else
            out[name] = std::get<std::string>(value);
    }
    return out;
}

// include_timings=false drops wall times so that seeded reruns serialize
// byte-identically.
inline void write_run_record(std::ostream& out, const RunRecord& record,
                             const ParetoArchive* archive = nullptr,
                             bool include_timings = true) {
    for (std::size_t t = 0; t < record.trajectory.observations.size(); ++t) {
        const Observation& obs = record.trajectory.observations[t];
        nlohmann::json line;
        line["trial"] = t;
        line["config"] = config_to_json(obs.config);
        line["scores"] = obs.scores;
        line["best_so_far"] = record.best_so_far[t];
        line["provenance"] = record.provenance[t];
        if (include_timings) line["ms_elapsed"] = record.ms_elapsed[t];
        out << line.dump() << '\n';
    }
    nlohmann::json summary;
    summary["summary"] = true;
    summary["trials"] = record.trajectory.observations.size();
    summary["final_best"] =
        record.best_so_far.empty() ? nlohmann::json() : nlohmann::json(record.best_so_far.back());
    summary["aborted"] = record.aborted;
    if (archive) {
        summary["reference_point"] = archive->reference;
        summary["pareto_points"] = nlohmann::json::array();
        for (const auto& [config, scores] : archive->points)
            summary["pareto_points"].push_back(
                {{"config", config_to_json(config)}, {"scores", scores}});
    }
    out << summary.dump() << '\n';
}

}  // namespace llana

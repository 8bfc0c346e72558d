#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "llana/errors.hpp"
#include "llana/llm_backend.hpp"
#include "llana/param_space.hpp"
#include "llana/rng.hpp"

namespace llana {

// Prompt templates. The same text ships as assets/prompts/*.tmpl; a test pins
// the two copies together.
inline constexpr const char* kInitialTemplate =
    "Assist me with automated machine learning using {model}. Explore these hyperparameters: "
    "{ranges}. Suggest {n_recs} diverse, effective configs for BO hyperparameter tuning, "
    "without \"None\". Respond with an un-enumerated list of dictionaries, each describing a "
    "recommended config.";

inline constexpr const char* kSurrogateTemplate =
    "The following are examples of the performance of a {model} measured in {metric} and the "
    "corresponding model hyperparameter configurations. The model is evaluated on a tabular "
    "{task} containing {n_classes}. The tabular dataset contains {n_samples} samples and "
    "{n_features} features ({n_categorical} categorical, {n_continuous} numerical).\n"
    "Your response should only contain the predicted accuracy in the format ## performance##.\n"
    "{examples}Hyperparameter configuration: {query}. Performance:";

inline constexpr const char* kSamplingTemplate =
    "The following are examples of the performance of a {model} in {metric} and corresponding "
    "hyperparameter configs, evaluated on a tabular {task} task with {n_classes} classes, "
    "{n_samples} samples, {n_features} features ({n_categorical} categorical, {n_continuous} "
    "numerical). Hyperparameter ranges: {ranges}.\n"
    "Recommend a config to achieve {target}, avoiding min/max/rounded values, using highest "
    "precision. Respond with only the predicted config, as ## configuration ##.\n"
    "{examples}Performance: {target}\nHyperparameter config:";

struct TaskCard {
    std::string model_desc = "analog placement net weighting";
    std::string metric_name;
    std::string task_kind = "regression";
    std::size_t n_classes = 0;  // regression tasks render 0
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::size_t n_categorical = 0;
    std::size_t n_continuous = 0;
    std::string param_ranges_text;
};

struct FewShotExample {
    std::string config_text;
    std::string score_text;
};

struct IclPrediction {
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> raw_samples;
    std::size_t n_failures = 0;
};

inline std::string substitute(std::string text, const std::string& key,
                              const std::string& value) {
    const std::string token = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
    return text;
}

inline std::string describe_space(const SearchSpace& space) {
    std::string out;
    for (std::size_t i = 0; i < space.dimension(); ++i) {
        const auto& spec = space.spec(i);
        if (i) out += ", ";
        out += spec.name + ": ";
        switch (spec.kind) {
            case ParamKind::Continuous:
                out += "continuous [" + format_real(spec.lower) + ", " + format_real(spec.upper) +
                       "]";
                if (spec.log_scale) out += " (log)";
                break;
            case ParamKind::Integer:
                out += "integer [" + format_real(spec.lower) + ", " + format_real(spec.upper) + "]";
                break;
            case ParamKind::Categorical: {
                out += "categorical {";
                for (std::size_t k = 0; k < spec.categories.size(); ++k) {
                    if (k) out += ", ";
                    out += spec.categories[k];
                }
                out += "}";
                break;
            }
        }
    }
    return out;
}

inline TaskCard make_task_card(const SearchSpace& space, const std::string& metric_name,
                               std::size_t n_samples,
                               const std::string& model_desc = "analog placement net weighting") {
    TaskCard card;
    card.model_desc = model_desc;
    card.metric_name = metric_name;
    card.n_samples = n_samples;
    card.n_features = space.dimension();
    for (const auto& spec : space.params())
        if (spec.kind == ParamKind::Categorical)
            ++card.n_categorical;
        else
            ++card.n_continuous;
    card.param_ranges_text = describe_space(space);
    return card;
}

// Comma-joined "<name> is <value>" terms in space order, reals at 6
// significant digits.
inline std::string serialize_config(const Configuration& config, const SearchSpace& space) {
    std::string out;
    for (std::size_t i = 0; i < space.dimension(); ++i) {
        const auto& spec = space.spec(i);
        if (i) out += ", ";
        out += spec.name + " is " + format_value(config.values.at(spec.name));
    }
    return out;
}

inline FewShotExample make_example(const Observation& obs, const SearchSpace& space,
                                   std::size_t objective_index = 0) {
    return FewShotExample{serialize_config(obs.config, space),
                          format_real(obs.scores.at(objective_index))};
}

namespace detail {

inline std::vector<FewShotExample> shuffled(std::vector<FewShotExample> examples,
                                            std::uint64_t shuffle_seed) {
    Rng rng(shuffle_seed);
    for (std::size_t i = examples.size(); i > 1; --i)
        std::swap(examples[i - 1], examples[rng.uniform_index(i)]);
    return examples;
}

inline std::string card_fields(std::string text, const TaskCard& card) {
    text = substitute(std::move(text), "model", card.model_desc);
    text = substitute(std::move(text), "metric", card.metric_name);
    text = substitute(std::move(text), "task", card.task_kind);
    text = substitute(std::move(text), "n_classes", std::to_string(card.n_classes));
    text = substitute(std::move(text), "n_samples", std::to_string(card.n_samples));
    text = substitute(std::move(text), "n_features", std::to_string(card.n_features));
    text = substitute(std::move(text), "n_categorical", std::to_string(card.n_categorical));
    text = substitute(std::move(text), "n_continuous", std::to_string(card.n_continuous));
    text = substitute(std::move(text), "ranges", card.param_ranges_text);
    return text;
}

}  // namespace detail

inline std::string render_initial_prompt(const TaskCard& card, std::size_t n_recs) {
    if (n_recs < 1) throw SizeError("n_recs must be >= 1");
    std::string text = detail::card_fields(kInitialTemplate, card);
    return substitute(std::move(text), "n_recs", std::to_string(n_recs));
}

inline std::string render_surrogate_prompt(const TaskCard& card,
                                           const std::vector<FewShotExample>& examples,
                                           const Configuration& query, const SearchSpace& space,
                                           std::uint64_t shuffle_seed) {
    if (examples.empty()) throw SizeError("surrogate prompt needs at least one example");
    std::string block;
    for (const auto& ex : detail::shuffled(examples, shuffle_seed))
        block += "Hyperparameter configuration: " + ex.config_text + ". Performance: " +
                 ex.score_text + ".\n";
    std::string text = detail::card_fields(kSurrogateTemplate, card);
    text = substitute(std::move(text), "examples", block);
    return substitute(std::move(text), "query", serialize_config(query, space));
}

inline std::string render_sampling_prompt(const TaskCard& card,
                                          const std::vector<FewShotExample>& examples,
                                          double target_score, std::uint64_t shuffle_seed) {
    if (examples.empty()) throw SizeError("sampling prompt needs at least one example");
    std::string block;
    for (const auto& ex : detail::shuffled(examples, shuffle_seed))
        block += "Performance: " + ex.score_text + ". Hyperparameter config: " + ex.config_text +
                 "\n";
    std::string text = detail::card_fields(kSamplingTemplate, card);
    text = substitute(std::move(text), "examples", block);
    return substitute(std::move(text), "target", format_real(target_score));
}

namespace detail {

inline const std::regex& number_regex() {
    static const std::regex re(R"([-+]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][-+]?[0-9]+)?)");
    return re;
}

inline std::optional<std::string> first_marked_group(const std::string& reply) {
    static const std::regex re(R"(##\s*([^#]+?)\s*##)");
    std::smatch m;
    if (std::regex_search(reply, m, re)) return m[1].str();
    return std::nullopt;
}

}  // namespace detail

// Extracts the first "## <number> ##" group; falls back to the first real
// token anywhere in the reply.
inline double parse_performance(const std::string& reply) {
    std::string scope = detail::first_marked_group(reply).value_or(reply);
    std::smatch m;
    if (!std::regex_search(scope, m, detail::number_regex()))
        throw ParseError("no parseable number in reply");
    double v = std::stod(m[0].str());
    if (!std::isfinite(v)) throw ParseError("non-finite number in reply");
    return v;
}

struct ParsedConfiguration {
    Configuration config;
    bool clipped = false;
};

// Accepts both "name is value" serialization and dictionary-like
// "{'name': value, ...}" replies; out-of-range values are clipped into bounds.
inline ParsedConfiguration parse_configuration(const std::string& reply,
                                               const SearchSpace& space) {
    std::string scope = detail::first_marked_group(reply).value_or(reply);
    ParsedConfiguration out;
    for (const auto& spec : space.params()) {
        std::regex re("['\"]?" + spec.name + R"(['"]?\s*(?:is|:|=)\s*['"]?([A-Za-z0-9_.+-]+))");
        std::smatch m;
        if (!std::regex_search(scope, m, re))
            throw ParseError("parameter '" + spec.name + "' missing from reply");
        std::string token = m[1].str();
        switch (spec.kind) {
            case ParamKind::Continuous: {
                double v;
                try {
                    std::size_t used = 0;
                    v = std::stod(token, &used);
                    if (used == 0) throw std::invalid_argument("empty");
                } catch (const std::exception&) {
                    throw ParseError("parameter '" + spec.name + "' has non-numeric value");
                }
                if (!std::isfinite(v)) throw ParseError("non-finite value for " + spec.name);
                double clipped = std::clamp(v, spec.lower, spec.upper);
                if (clipped != v) out.clipped = true;
                out.config.values[spec.name] = clipped;
                break;
            }
            case ParamKind::Integer: {
                double v;
                try {
                    v = std::stod(token);
                } catch (const std::exception&) {
                    throw ParseError("parameter '" + spec.name + "' has non-numeric value");
                }
                double clipped = std::clamp(v, spec.lower, spec.upper);
                if (clipped != v) out.clipped = true;
                out.config.values[spec.name] =
                    static_cast<std::int64_t>(std::floor(clipped + 0.5));
                break;
            }
            case ParamKind::Categorical: {
                if (std::find(spec.categories.begin(), spec.categories.end(), token) ==
                    spec.categories.end())
                    throw ParseError("parameter '" + spec.name + "' has unknown category");
                out.config.values[spec.name] = token;
                break;
            }
        }
    }
    auto report = validate(out.config, space);
    if (!report.ok) throw ParseError("parsed configuration fails validation");
    return out;
}

inline double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// LLM-as-surrogate: k completions over shuffled contexts; mean/std are the
// sample statistics of the parsed values.
inline IclPrediction icl_predict(const Backend& backend, const TaskCard& card,
                                 const Trajectory& trajectory, const Configuration& query,
                                 std::size_t k_samples, std::uint64_t seed,
                                 std::size_t objective_index = 0) {
    if (trajectory.observations.empty()) throw SizeError("trajectory is empty");
    if (k_samples < 2) throw SizeError("k_samples must be >= 2");

    std::vector<FewShotExample> examples;
    for (const auto& obs : trajectory.observations)
        examples.push_back(make_example(obs, trajectory.space, objective_index));

    IclPrediction pred;
    for (std::size_t i = 0; i < k_samples; ++i) {
        std::uint64_t shuffle_seed = derive_seed(seed, "icl-predict-shuffle", i);
        ChatRequest request;
        request.messages = {{Role::User, render_surrogate_prompt(card, examples, query,
                                                                 trajectory.space, shuffle_seed)}};
        request.temperature = 1.0;
        ChatResponse response = complete(backend, request);
        try {
            pred.raw_samples.push_back(parse_performance(response.completions.at(0)));
        } catch (const ParseError&) {
            ++pred.n_failures;
        }
    }
    if (pred.n_failures * 2 > k_samples)
        throw PredictionError("majority of surrogate completions were unparseable");

    double sum = 0.0;
    for (double v : pred.raw_samples) sum += v;
    pred.mean = sum / static_cast<double>(pred.raw_samples.size());
    double floor = 1e-6 * std::max(1.0, std::abs(pred.mean));
    pred.std = std::max(sample_std(pred.raw_samples, pred.mean), floor);
    return pred;
}

struct CandidateSampleResult {
    std::vector<Configuration> configs;
    std::vector<bool> backfilled;  // per-index provenance
    std::size_t n_backfilled = 0;
};

namespace detail {

inline Configuration backfill_config(const SearchSpace& space,
                                     const std::vector<Configuration>* pool,
                                     const std::vector<Configuration>& taken,
                                     std::uint64_t seed) {
    Rng rng(seed);
    auto is_taken = [&](const Configuration& c) {
        return std::find(taken.begin(), taken.end(), c) != taken.end();
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        Configuration c;
        if (pool && !pool->empty())
            c = (*pool)[rng.uniform_index(pool->size())];
        else
            c = sample_uniform(space, rng.next_u64(), 1)[0];
        if (!is_taken(c)) return c;
    }
    // Every distinct choice is exhausted; a duplicate keeps the count contract.
    if (pool && !pool->empty()) return (*pool)[0];
    return sample_uniform(space, seed, 1)[0];
}

}  // namespace detail

// Conditional candidate generation at a target score. Parse failures are
// retried up to 3 extra times, then (like exact duplicates) backfilled.
inline CandidateSampleResult icl_sample_candidates(
    const Backend& backend, const TaskCard& card, const Trajectory& trajectory,
    double target_score, std::size_t m_candidates, std::uint64_t seed,
    const std::vector<Configuration>* pool = nullptr, std::size_t objective_index = 0) {
    if (trajectory.observations.empty()) throw SizeError("trajectory is empty");
    if (m_candidates < 1) throw SizeError("m_candidates must be >= 1");

    std::vector<FewShotExample> examples;
    for (const auto& obs : trajectory.observations)
        examples.push_back(make_example(obs, trajectory.space, objective_index));

    CandidateSampleResult out;
    for (std::size_t i = 0; i < m_candidates; ++i) {
        std::optional<Configuration> accepted;
        for (std::size_t attempt = 0; attempt < 4 && !accepted; ++attempt) {
            std::uint64_t shuffle_seed = derive_seed(seed, "icl-sample-shuffle", i * 16 + attempt);
            ChatRequest request;
            request.messages = {{Role::User, render_sampling_prompt(card, examples, target_score,
                                                                    shuffle_seed)}};
            request.temperature = 1.0;
            ChatResponse response = complete(backend, request);
            try {
                Configuration c =
                    parse_configuration(response.completions.at(0), trajectory.space).config;
                if (std::find(out.configs.begin(), out.configs.end(), c) == out.configs.end())
                    accepted = std::move(c);
            } catch (const ParseError&) {
            }
        }
        bool was_backfilled = false;
        if (!accepted) {
            accepted = detail::backfill_config(trajectory.space, pool, out.configs,
                                               derive_seed(seed, "icl-sample-backfill", i));
            ++out.n_backfilled;
            was_backfilled = true;
        }
        out.configs.push_back(std::move(*accepted));
        out.backfilled.push_back(was_backfilled);
    }
    return out;
}

struct InitialDesignResult {
    std::vector<Configuration> configs;
    std::size_t n_backfilled = 0;
};

// Zero-shot initial design: parses an un-enumerated list of dictionary-like
// blocks; invalid or "None"-containing entries are dropped and backfilled.
inline InitialDesignResult icl_initial_designs(const Backend& backend, const TaskCard& card,
                                               std::size_t n_recs, const SearchSpace& space,
                                               std::uint64_t seed,
                                               const std::vector<Configuration>* pool = nullptr) {
    if (n_recs < 1) throw SizeError("n_recs must be >= 1");
    ChatRequest request;
    request.messages = {{Role::User, render_initial_prompt(card, n_recs)}};
    request.temperature = 1.0;
    ChatResponse response = complete(backend, request);
    const std::string& reply = response.completions.at(0);

    InitialDesignResult out;
    std::size_t pos = 0;
    while (out.configs.size() < n_recs) {
        std::size_t open = reply.find('{', pos);
        if (open == std::string::npos) break;
        std::size_t close = reply.find('}', open);
        if (close == std::string::npos) break;
        pos = close + 1;
        std::string block = reply.substr(open, close - open + 1);
        if (block.find("None") != std::string::npos) continue;
        try {
            Configuration c = parse_configuration(block, space).config;
            if (std::find(out.configs.begin(), out.configs.end(), c) == out.configs.end())
                out.configs.push_back(std::move(c));
        } catch (const ParseError&) {
        }
    }
    while (out.configs.size() < n_recs) {
        out.configs.push_back(detail::backfill_config(
            space, pool, out.configs, derive_seed(seed, "initial-backfill", out.configs.size())));
        ++out.n_backfilled;
    }
    return out;
}

inline std::string load_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace llana

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "llana/errors.hpp"
#include "llana/rng.hpp"

namespace llana {

enum class ParamKind { Continuous, Integer, Categorical };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::Continuous;
    double lower = 0.0;
    double upper = 1.0;
    std::vector<std::string> categories;
    bool log_scale = false;
};

using ParamValue = std::variant<double, std::int64_t, std::string>;

struct Configuration {
    std::map<std::string, ParamValue> values;

    bool operator==(const Configuration& other) const { return values == other.values; }
};

class SearchSpace {
public:
    SearchSpace() = default;

    explicit SearchSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
        if (params_.empty()) throw ValidationError("search space must have at least one parameter");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& p = params_[i];
            if (p.kind == ParamKind::Categorical) {
                if (p.categories.empty())
                    throw ValidationError("categorical parameter '" + p.name + "' has no categories");
                std::vector<std::string> sorted = p.categories;
                std::sort(sorted.begin(), sorted.end());
                if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                    throw ValidationError("categorical parameter '" + p.name + "' has duplicate categories");
            } else if (!(p.lower < p.upper)) {
                throw ValidationError("parameter '" + p.name + "' requires lower < upper");
            }
            if (index_.count(p.name))
                throw ValidationError("duplicate parameter name '" + p.name + "'");
            index_[p.name] = i;
        }
    }

    const std::vector<ParamSpec>& params() const { return params_; }
    std::size_t dimension() const { return params_.size(); }

    const ParamSpec& spec(std::size_t i) const { return params_.at(i); }

    std::optional<std::size_t> index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::vector<ParamSpec> params_;
    std::map<std::string, std::size_t> index_;
};

// Builds the default 14-D net-weighting space: w1..wd, log-uniform on [0.1, 10].
inline SearchSpace make_weight_space(std::size_t d = 14, double lower = 0.1, double upper = 10.0) {
    std::vector<ParamSpec> specs;
    specs.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        ParamSpec p;
        p.name = "w" + std::to_string(i + 1);
        p.kind = ParamKind::Continuous;
        p.lower = lower;
        p.upper = upper;
        p.log_scale = true;
        specs.push_back(std::move(p));
    }
    return SearchSpace(std::move(specs));
}

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;
};

inline ValidationReport validate(const Configuration& config, const SearchSpace& space) {
    ValidationReport report;
    auto fail = [&](std::string msg) {
        report.ok = false;
        report.violations.push_back(std::move(msg));
    };

    for (const auto& spec : space.params()) {
        auto it = config.values.find(spec.name);
        if (it == config.values.end()) {
            fail(spec.name + ": absent");
            continue;
        }
        const ParamValue& v = it->second;
        switch (spec.kind) {
            case ParamKind::Continuous: {
                const double* d = std::get_if<double>(&v);
                if (!d) {
                    fail(spec.name + ": expected real value");
                } else if (!std::isfinite(*d)) {
                    fail(spec.name + ": non-finite value");
                } else if (*d < spec.lower || *d > spec.upper) {
                    fail(spec.name + ": value out of bounds");
                }
                break;
            }
            case ParamKind::Integer: {
                const std::int64_t* i = std::get_if<std::int64_t>(&v);
                if (!i) {
                    fail(spec.name + ": expected integer value");
                } else if (static_cast<double>(*i) < spec.lower ||
                           static_cast<double>(*i) > spec.upper) {
                    fail(spec.name + ": value out of bounds");
                }
                break;
            }
            case ParamKind::Categorical: {
                const std::string* s = std::get_if<std::string>(&v);
                if (!s) {
                    fail(spec.name + ": expected category string");
                } else if (std::find(spec.categories.begin(), spec.categories.end(), *s) ==
                           spec.categories.end()) {
                    fail(spec.name + ": unknown category '" + *s + "'");
                }
                break;
            }
        }
    }
    for (const auto& [name, _] : config.values) {
        if (!space.index_of(name)) fail(name + ": not a parameter of this space");
    }
    return report;
}

inline std::vector<Configuration> sample_uniform(const SearchSpace& space, std::uint64_t seed,
                                                 std::size_t n) {
    Rng rng(seed);
    std::vector<Configuration> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Configuration c;
        for (const auto& spec : space.params()) {
            switch (spec.kind) {
                case ParamKind::Continuous: {
                    double v;
                    if (spec.log_scale) {
                        double lo = std::log10(spec.lower), hi = std::log10(spec.upper);
                        v = std::pow(10.0, rng.uniform(lo, hi));
                        v = std::clamp(v, spec.lower, spec.upper);
                    } else {
                        v = rng.uniform(spec.lower, spec.upper);
                    }
                    c.values[spec.name] = v;
                    break;
                }
                case ParamKind::Integer: {
                    auto lo = static_cast<std::int64_t>(std::ceil(spec.lower));
                    auto hi = static_cast<std::int64_t>(std::floor(spec.upper));
                    c.values[spec.name] =
                        lo + static_cast<std::int64_t>(rng.uniform_index(
                                 static_cast<std::uint64_t>(hi - lo + 1)));
                    break;
                }
                case ParamKind::Categorical: {
                    c.values[spec.name] = spec.categories[rng.uniform_index(spec.categories.size())];
                    break;
                }
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<double> encode_unit(const Configuration& config, const SearchSpace& space) {
    auto report = validate(config, space);
    if (!report.ok) {
        std::string msg = "invalid configuration:";
        for (const auto& v : report.violations) msg += " " + v + ";";
        throw ValidationError(msg);
    }
    std::vector<double> x(space.dimension());
    for (std::size_t i = 0; i < space.dimension(); ++i) {
        const auto& spec = space.spec(i);
        const ParamValue& v = config.values.at(spec.name);
        switch (spec.kind) {
            case ParamKind::Continuous: {
                double d = std::get<double>(v);
                if (spec.log_scale) {
                    x[i] = (std::log10(d) - std::log10(spec.lower)) /
                           (std::log10(spec.upper) - std::log10(spec.lower));
                } else {
                    x[i] = (d - spec.lower) / (spec.upper - spec.lower);
                }
                break;
            }
            case ParamKind::Integer: {
                double d = static_cast<double>(std::get<std::int64_t>(v));
                x[i] = (d - spec.lower) / (spec.upper - spec.lower);
                break;
            }
            case ParamKind::Categorical: {
                const auto& s = std::get<std::string>(v);
                std::size_t k = spec.categories.size();
                auto it = std::find(spec.categories.begin(), spec.categories.end(), s);
                std::size_t idx = static_cast<std::size_t>(it - spec.categories.begin());
                x[i] = (k == 1) ? 0.0 : static_cast<double>(idx) / static_cast<double>(k - 1);
                break;
            }
        }
    }
    return x;
}

inline Configuration decode_unit(const std::vector<double>& x, const SearchSpace& space) {
    if (x.size() != space.dimension())
        throw SizeError("encoded vector length does not match space dimension");
    Configuration c;
    for (std::size_t i = 0; i < space.dimension(); ++i) {
        const auto& spec = space.spec(i);
        double u = std::clamp(x[i], 0.0, 1.0);
        switch (spec.kind) {
            case ParamKind::Continuous: {
                double v;
                if (spec.log_scale) {
                    double lo = std::log10(spec.lower), hi = std::log10(spec.upper);
                    v = std::pow(10.0, lo + u * (hi - lo));
                } else {
                    v = spec.lower + u * (spec.upper - spec.lower);
                }
                c.values[spec.name] = std::clamp(v, spec.lower, spec.upper);
                break;
            }
            case ParamKind::Integer: {
                // Round half-up.
                double raw = spec.lower + u * (spec.upper - spec.lower);
                c.values[spec.name] = static_cast<std::int64_t>(std::floor(raw + 0.5));
                break;
            }
            case ParamKind::Categorical: {
                std::size_t k = spec.categories.size();
                std::size_t idx =
                    (k == 1) ? 0
                             : static_cast<std::size_t>(
                                   std::llround(u * static_cast<double>(k - 1)));
                c.values[spec.name] = spec.categories[std::min(idx, k - 1)];
                break;
            }
        }
    }
    return c;
}

enum class Direction { Minimize, Maximize };

struct Observation {
    Configuration config;
    std::vector<double> scores;  // canonical minimize form
    std::size_t trial_index = 0;
};

struct Trajectory {
    SearchSpace space;
    std::vector<std::string> objective_names;
    std::vector<Direction> directions;
    std::vector<Observation> observations;

    // Scores are negated on ingest for maximize objectives so the whole
    // pipeline operates on one canonical minimize form.
    void add(Configuration config, std::vector<double> raw_scores) {
        if (raw_scores.size() != objective_names.size())
            throw SizeError("score vector length does not match objective count");
        for (double s : raw_scores)
            if (!std::isfinite(s)) throw ValidationError("non-finite score");
        for (std::size_t i = 0; i < raw_scores.size(); ++i)
            if (directions[i] == Direction::Maximize) raw_scores[i] = -raw_scores[i];
        Observation obs;
        obs.config = std::move(config);
        obs.scores = std::move(raw_scores);
        obs.trial_index = observations.size();
        observations.push_back(std::move(obs));
    }
};

struct DatasetSplit {
    std::vector<Observation> train;
    std::vector<Observation> test;
    std::uint64_t seed = 0;
};

inline DatasetSplit split_dataset(const std::vector<Observation>& observations,
                                  std::size_t train_n, std::size_t test_n, std::uint64_t seed) {
    if (train_n + test_n > observations.size())
        throw SizeError("requested split exceeds available observations");
    std::vector<std::size_t> order(observations.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    // Fisher-Yates with the platform-stable generator.
    for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(order[i - 1], order[j]);
    }
    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < train_n; ++i) split.train.push_back(observations[order[i]]);
    for (std::size_t i = 0; i < test_n; ++i) split.test.push_back(observations[order[train_n + i]]);
    return split;
}

// Renders a real with 6 significant digits in shortest form ("1", "2.5").
inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::string format_value(const ParamValue& v) {
    if (const double* d = std::get_if<double>(&v)) return format_real(*d);
    if (const std::int64_t* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return std::get<std::string>(v);
}

// --- file formats ---------------------------------------------------------

inline SearchSpace load_space_json(const nlohmann::json& doc) {
    std::vector<ParamSpec> specs;
    for (const auto& p : doc.at("params")) {
        ParamSpec spec;
        spec.name = p.at("name").get<std::string>();
        std::string kind = p.at("kind").get<std::string>();
        if (kind == "continuous") spec.kind = ParamKind::Continuous;
        else if (kind == "integer") spec.kind = ParamKind::Integer;
        else if (kind == "categorical") spec.kind = ParamKind::Categorical;
        else throw ParseError("unknown parameter kind '" + kind + "'");
        if (spec.kind == ParamKind::Categorical) {
            spec.categories = p.at("categories").get<std::vector<std::string>>();
        } else {
            spec.lower = p.at("lower").get<double>();
            spec.upper = p.at("upper").get<double>();
        }
        spec.log_scale = p.value("log_scale", false);
        specs.push_back(std::move(spec));
    }
    return SearchSpace(std::move(specs));
}

inline SearchSpace load_space_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open space file: " + path);
    nlohmann::json doc;
    in >> doc;
    return load_space_json(doc);
}

struct TabularDataset {
    SearchSpace space;
    std::vector<std::string> objective_names;
    std::vector<Observation> observations;
};

inline void write_dataset_csv(std::ostream& out, const SearchSpace& space,
                              const std::vector<std::string>& objective_names,
                              const std::vector<Observation>& observations) {
    for (std::size_t i = 0; i < space.dimension(); ++i) {
        if (i) out << ',';
        out << space.spec(i).name;
    }
    for (const auto& name : objective_names) out << ',' << name;
    out << '\n';
    char buf[64];
    for (const auto& obs : observations) {
        for (std::size_t i = 0; i < space.dimension(); ++i) {
            if (i) out << ',';
            const ParamValue& v = obs.config.values.at(space.spec(i).name);
            if (const double* d = std::get_if<double>(&v)) {
                std::snprintf(buf, sizeof(buf), "%.17g", *d);
                out << buf;
            } else {
                out << format_value(v);
            }
        }
        for (double s : obs.scores) {
            std::snprintf(buf, sizeof(buf), "%.17g", s);
            out << ',' << buf;
        }
        out << '\n';
    }
}

// Reads the CSV back against a known space; trailing columns are objectives.
inline TabularDataset read_dataset_csv(std::istream& in, const SearchSpace& space) {
    TabularDataset ds;
    ds.space = space;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty dataset file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const std::size_t d = space.dimension();
    if (header.size() <= d) throw ParseError("dataset header has no objective columns");
    for (std::size_t i = 0; i < d; ++i)
        if (header[i] != space.spec(i).name)
            throw ParseError("dataset column '" + header[i] + "' does not match space");
    for (std::size_t i = d; i < header.size(); ++i) ds.objective_names.push_back(header[i]);

    std::size_t trial = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Observation obs;
        obs.trial_index = trial++;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (!std::getline(ss, cell, ',')) throw ParseError("short dataset row");
            if (i < d) {
                const auto& spec = space.spec(i);
                if (spec.kind == ParamKind::Continuous)
                    obs.config.values[spec.name] = std::stod(cell);
                else if (spec.kind == ParamKind::Integer)
                    obs.config.values[spec.name] = static_cast<std::int64_t>(std::stoll(cell));
                else
                    obs.config.values[spec.name] = cell;
            } else {
                obs.scores.push_back(std::stod(cell));
            }
        }
        ds.observations.push_back(std::move(obs));
    }
    return ds;
}

inline TabularDataset read_dataset_file(const std::string& path, const SearchSpace& space) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open dataset file: " + path);
    return read_dataset_csv(in, space);
}

}  // namespace llana

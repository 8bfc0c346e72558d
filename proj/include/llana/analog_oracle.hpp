#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "llana/errors.hpp"
#include "llana/param_space.hpp"
#include "llana/rng.hpp"

namespace llana {

struct Cell {
    std::string name;
    double width = 0.0;
    double height = 0.0;
    bool fixed = false;
    double x = 0.0;  // meaningful when fixed
    double y = 0.0;
};

struct Net {
    std::string name;
    std::vector<std::size_t> members;  // cell indices
    bool critical = false;
    bool weighted = false;
};

struct Netlist {
    std::vector<Cell> cells;
    std::vector<Net> nets;
    std::vector<std::pair<std::size_t, std::size_t>> symmetry_pairs;

    std::size_t n_weighted() const {
        std::size_t n = 0;
        for (const auto& net : nets)
            if (net.weighted) ++n;
        return n;
    }

    void check() const {
        bool any_fixed = false;
        for (const auto& c : cells) any_fixed |= c.fixed;
        if (!any_fixed) throw StructuralError("netlist has no fixed cell to anchor placement");
        for (const auto& net : nets) {
            if (net.members.size() < 2)
                throw StructuralError("net '" + net.name + "' has fewer than 2 members");
            for (std::size_t m : net.members)
                if (m >= cells.size())
                    throw StructuralError("net '" + net.name + "' references unknown cell");
        }
        std::vector<bool> seen(cells.size(), false);
        for (auto [a, b] : symmetry_pairs) {
            if (a >= cells.size() || b >= cells.size() || a == b)
                throw StructuralError("invalid symmetry pair");
            if (seen[a] || seen[b]) throw StructuralError("symmetry pairs are not disjoint");
            seen[a] = seen[b] = true;
        }
    }
};

struct Placement {
    std::vector<double> xs;
    std::vector<double> ys;
};

// Effective per-net weight: tuned alpha for weighted nets (in net order), 1 otherwise.
inline std::vector<double> net_weights(const Netlist& netlist, const std::vector<double>& alpha) {
    if (alpha.size() != netlist.n_weighted())
        throw SizeError("alpha length does not match weighted net count");
    std::vector<double> w;
    w.reserve(netlist.nets.size());
    std::size_t k = 0;
    for (const auto& net : netlist.nets) w.push_back(net.weighted ? alpha[k++] : 1.0);
    return w;
}

// Minimizes the weighted clique-quadratic placement objective:
//   sum_nets w_i * sum_{(u,v) in net} ||p_u - p_v||^2  +  beta * sum_movable ||p - center||^2
// x and y decouple; each is an exact positive-definite linear solve.
inline Placement place(const Netlist& netlist, const std::vector<double>& alpha, double beta) {
    netlist.check();
    for (double a : alpha)
        if (!(a > 0.0)) throw ValidationError("net weights must be positive");
    if (beta < 0.0) throw ValidationError("beta must be nonnegative");
    const std::vector<double> w = net_weights(netlist, alpha);

    std::vector<int> movable_index(netlist.cells.size(), -1);
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < netlist.cells.size(); ++i)
        if (!netlist.cells[i].fixed) {
            movable_index[i] = static_cast<int>(movable.size());
            movable.push_back(i);
        }

    Placement placement;
    placement.xs.resize(netlist.cells.size());
    placement.ys.resize(netlist.cells.size());
    for (std::size_t i = 0; i < netlist.cells.size(); ++i) {
        placement.xs[i] = netlist.cells[i].x;
        placement.ys[i] = netlist.cells[i].y;
    }
    if (movable.empty()) return placement;

    const Eigen::Index n = static_cast<Eigen::Index>(movable.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd bx = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd by = Eigen::VectorXd::Zero(n);
    const double cx = 0.5, cy = 0.5;

    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, i) += beta;
        bx[i] += beta * cx;
        by[i] += beta * cy;
    }
    for (std::size_t ni = 0; ni < netlist.nets.size(); ++ni) {
        const Net& net = netlist.nets[ni];
        for (std::size_t a = 0; a + 1 < net.members.size(); ++a) {
            for (std::size_t b = a + 1; b < net.members.size(); ++b) {
                std::size_t u = net.members[a], v = net.members[b];
                int mu = movable_index[u], mv = movable_index[v];
                if (mu >= 0 && mv >= 0) {
                    A(mu, mu) += w[ni];
                    A(mv, mv) += w[ni];
                    A(mu, mv) -= w[ni];
                    A(mv, mu) -= w[ni];
                } else if (mu >= 0) {
                    A(mu, mu) += w[ni];
                    bx[mu] += w[ni] * netlist.cells[v].x;
                    by[mu] += w[ni] * netlist.cells[v].y;
                } else if (mv >= 0) {
                    A(mv, mv) += w[ni];
                    bx[mv] += w[ni] * netlist.cells[u].x;
                    by[mv] += w[ni] * netlist.cells[u].y;
                }
            }
        }
    }

    Eigen::LDLT<Eigen::MatrixXd> solver(A);
    if (solver.info() != Eigen::Success)
        throw StructuralError("placement system is singular (disconnected movable cells?)");
    Eigen::VectorXd sx = solver.solve(bx);
    Eigen::VectorXd sy = solver.solve(by);
    double residual = std::max((A * sx - bx).lpNorm<Eigen::Infinity>(),
                               (A * sy - by).lpNorm<Eigen::Infinity>());
    if (!std::isfinite(residual) || residual > 1e-6)
        throw NumericalError("placement solve did not converge");

    for (Eigen::Index i = 0; i < n; ++i) {
        placement.xs[movable[static_cast<std::size_t>(i)]] = sx[i];
        placement.ys[movable[static_cast<std::size_t>(i)]] = sy[i];
    }
    return placement;
}

inline double net_hpwl(const Netlist& netlist, const Placement& p, const Net& net) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (std::size_t m : net.members) {
        xmin = std::min(xmin, p.xs[m]);
        xmax = std::max(xmax, p.xs[m]);
        ymin = std::min(ymin, p.ys[m]);
        ymax = std::max(ymax, p.ys[m]);
    }
    return (xmax - xmin) + (ymax - ymin);
}

// Clique-quadratic wirelength per net: the f_WL term the placer scalarizes.
inline std::vector<double> quad_wirelengths(const Netlist& netlist, const Placement& p) {
    std::vector<double> out;
    out.reserve(netlist.nets.size());
    for (const auto& net : netlist.nets) {
        double q = 0.0;
        for (std::size_t a = 0; a + 1 < net.members.size(); ++a) {
            for (std::size_t b = a + 1; b < net.members.size(); ++b) {
                double dx = p.xs[net.members[a]] - p.xs[net.members[b]];
                double dy = p.ys[net.members[a]] - p.ys[net.members[b]];
                q += dx * dx + dy * dy;
            }
        }
        out.push_back(q);
    }
    return out;
}

struct Eq1Breakdown {
    std::vector<double> f_wl;   // HPWL per net
    double f_area = 0.0;        // bounding-box area, cell extents included
    double f_other = 0.0;       // fixed at 0
    std::vector<double> alpha;  // effective per-net weights
    double beta = 0.0;
    double total = 0.0;
};

inline Eq1Breakdown eval_eq1(const Netlist& netlist, const Placement& p,
                             const std::vector<double>& alpha, double beta) {
    Eq1Breakdown out;
    out.alpha = net_weights(netlist, alpha);
    out.beta = beta;
    for (const auto& net : netlist.nets) out.f_wl.push_back(net_hpwl(netlist, p, net));

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (std::size_t i = 0; i < netlist.cells.size(); ++i) {
        const Cell& c = netlist.cells[i];
        xmin = std::min(xmin, p.xs[i] - c.width / 2);
        xmax = std::max(xmax, p.xs[i] + c.width / 2);
        ymin = std::min(ymin, p.ys[i] - c.height / 2);
        ymax = std::max(ymax, p.ys[i] + c.height / 2);
    }
    out.f_area = (xmax - xmin) * (ymax - ymin);

    out.total = out.beta * out.f_area + out.f_other;
    for (std::size_t i = 0; i < out.f_wl.size(); ++i) out.total += out.alpha[i] * out.f_wl[i];
    return out;
}

struct ProxyMetrics {
    double cmrr_proxy = 0.0;    // minimize form
    double offset_proxy = 0.0;  // lower is better
};

// Mismatch is measured about the symmetry cells' own mean-x axis, so a rigid
// translation of the placement leaves it unchanged.
inline ProxyMetrics proxy_metrics(const Netlist& netlist, const Placement& p) {
    double mismatch = 0.0;
    if (!netlist.symmetry_pairs.empty()) {
        double axis = 0.0;
        for (auto [a, b] : netlist.symmetry_pairs) axis += p.xs[a] + p.xs[b];
        axis /= static_cast<double>(2 * netlist.symmetry_pairs.size());
        for (auto [a, b] : netlist.symmetry_pairs) {
            double dx = (2.0 * axis - p.xs[a]) - p.xs[b];
            double dy = p.ys[a] - p.ys[b];
            mismatch += std::sqrt(dx * dx + dy * dy);
        }
    }
    double critical_hpwl = 0.0, other_hpwl = 0.0;
    for (const auto& net : netlist.nets) {
        double h = net_hpwl(netlist, p, net);
        if (net.critical)
            critical_hpwl += h;
        else
            other_hpwl += h;
    }
    ProxyMetrics out;
    out.offset_proxy = mismatch + 0.05 * critical_hpwl;
    out.cmrr_proxy = std::log10(out.offset_proxy + 0.01 * other_hpwl + 1e-9);
    return out;
}

// --- synthetic default netlist ---------------------------------------------

// 36 cells (4 fixed corner pads), 20 nets of which 14 carry tunable weights,
// 6 symmetry pairs.
inline Netlist make_default_netlist() {
    Netlist nl;
    const std::size_t n_movable = 32;
    for (std::size_t i = 0; i < n_movable; ++i) {
        Cell c;
        c.name = "c" + std::to_string(i + 1);
        c.width = 0.02;
        c.height = 0.02;
        nl.cells.push_back(c);
    }
    const double pad_xy[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
        Cell c;
        c.name = "p" + std::to_string(i + 1);
        c.fixed = true;
        c.x = pad_xy[i][0];
        c.y = pad_xy[i][1];
        nl.cells.push_back(c);
    }
    for (std::size_t i = 0; i < 20; ++i) {
        Net net;
        net.name = "n" + std::to_string(i + 1);
        net.members = {(2 * i) % n_movable, (2 * i + 1) % n_movable, (2 * i + 2) % n_movable};
        if (i % 5 == 0) net.members.push_back(n_movable + i / 5);  // tie into a pad
        net.critical = i < 6;
        net.weighted = i < 14;
        nl.nets.push_back(std::move(net));
    }
    for (std::size_t i = 0; i < 6; ++i) nl.symmetry_pairs.emplace_back(2 * i, 2 * i + 1);
    nl.check();
    return nl;
}

inline nlohmann::json netlist_to_json(const Netlist& nl) {
    nlohmann::json doc;
    doc["cells"] = nlohmann::json::array();
    for (const auto& c : nl.cells)
        doc["cells"].push_back({{"name", c.name}, {"w", c.width}, {"h", c.height},
                                {"fixed", c.fixed}, {"x", c.x}, {"y", c.y}});
    doc["nets"] = nlohmann::json::array();
    for (const auto& n : nl.nets)
        doc["nets"].push_back({{"name", n.name}, {"members", n.members},
                               {"critical", n.critical}, {"weighted", n.weighted}});
    doc["symmetry_pairs"] = nlohmann::json::array();
    for (auto [a, b] : nl.symmetry_pairs) doc["symmetry_pairs"].push_back({a, b});
    return doc;
}

inline Netlist netlist_from_json(const nlohmann::json& doc) {
    Netlist nl;
    for (const auto& c : doc.at("cells")) {
        Cell cell;
        cell.name = c.at("name").get<std::string>();
        cell.width = c.at("w").get<double>();
        cell.height = c.at("h").get<double>();
        cell.fixed = c.at("fixed").get<bool>();
        cell.x = c.at("x").get<double>();
        cell.y = c.at("y").get<double>();
        nl.cells.push_back(std::move(cell));
    }
    for (const auto& n : doc.at("nets")) {
        Net net;
        net.name = n.at("name").get<std::string>();
        net.members = n.at("members").get<std::vector<std::size_t>>();
        net.critical = n.at("critical").get<bool>();
        net.weighted = n.at("weighted").get<bool>();
        nl.nets.push_back(std::move(net));
    }
    for (const auto& p : doc.at("symmetry_pairs"))
        nl.symmetry_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    nl.check();
    return nl;
}

inline Netlist load_netlist_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open netlist file: " + path);
    nlohmann::json doc;
    in >> doc;
    return netlist_from_json(doc);
}

// --- dataset generation and tabular replay ----------------------------------

inline std::vector<double> config_to_weights(const Configuration& config,
                                             const SearchSpace& space) {
    std::vector<double> alpha;
    alpha.reserve(space.dimension());
    for (const auto& spec : space.params())
        alpha.push_back(std::get<double>(config.values.at(spec.name)));
    return alpha;
}

inline std::vector<std::string> oracle_objective_names() {
    return {"cmrr_proxy", "offset_proxy"};
}

inline std::vector<double> eval_oracle(const Netlist& netlist, const Configuration& config,
                                       const SearchSpace& space, double beta = 0.5) {
    Placement p = place(netlist, config_to_weights(config, space), beta);
    ProxyMetrics m = proxy_metrics(netlist, p);
    return {m.cmrr_proxy, m.offset_proxy};
}

inline TabularDataset gen_dataset(const Netlist& netlist, std::size_t n_rows,
                                  std::uint64_t seed, const std::string& out_path,
                                  double beta = 0.5) {
    if (n_rows < 1) throw SizeError("n_rows must be >= 1");
    TabularDataset ds;
    ds.space = make_weight_space(netlist.n_weighted());
    ds.objective_names = oracle_objective_names();
    auto configs = sample_uniform(ds.space, derive_seed(seed, "gen-dataset"), n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        Observation obs;
        obs.config = std::move(configs[i]);
        obs.scores = eval_oracle(netlist, obs.config, ds.space, beta);
        obs.trial_index = i;
        ds.observations.push_back(std::move(obs));
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw FileError("cannot write dataset file: " + out_path);
        write_dataset_csv(out, ds.space, ds.objective_names, ds.observations);
    }
    return ds;
}

// Exact-match replay over a fixed dataset; keys are the 6-significant-digit
// serialized configurations, and the candidate pool is the dataset itself.
class TabularOracle {
public:
    TabularOracle(const TabularDataset& ds, const std::string& objective_name) : space_(ds.space) {
        auto it = std::find(ds.objective_names.begin(), ds.objective_names.end(), objective_name);
        if (it == ds.objective_names.end())
            throw LookupError("objective '" + objective_name + "' not in dataset");
        std::size_t col = static_cast<std::size_t>(it - ds.objective_names.begin());
        for (const auto& obs : ds.observations) {
            pool_.push_back(obs.config);
            table_[key(obs.config)] = obs.scores.at(col);
        }
    }

    std::string key(const Configuration& config) const {
        std::string k;
        for (const auto& spec : space_.params()) {
            k += format_value(config.values.at(spec.name));
            k += '|';
        }
        return k;
    }

    double operator()(const Configuration& config) const {
        auto it = table_.find(key(config));
        if (it == table_.end()) throw LookupError("configuration not present in tabular oracle");
        return it->second;
    }

    const std::vector<Configuration>& pool() const { return pool_; }
    const SearchSpace& space() const { return space_; }

private:
    SearchSpace space_;
    std::vector<Configuration> pool_;
    std::map<std::string, double> table_;
};

}  // namespace llana

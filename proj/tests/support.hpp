#pragma once

// Shared test-only helpers: independent oracles kept deliberately naive so
// they never share code paths with the implementations they check.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "llana/gp.hpp"
#include "llana/param_space.hpp"
#include "llana/rng.hpp"

namespace testing_support {

// Dense-inverse GP posterior: naive O(n^3) route via explicit matrix inverse.
inline llana::PredictiveDistribution dense_gp_oracle(const Eigen::MatrixXd& X,
                                                     const Eigen::VectorXd& y_raw,
                                                     const llana::GpHyperparams& h,
                                                     const Eigen::VectorXd& query) {
    const Eigen::Index n = X.rows();
    double y_mean = y_raw.mean();
    double var = (y_raw.array() - y_mean).square().sum() / static_cast<double>(n);
    double y_std = var > 0.0 ? std::sqrt(var) : 1.0;
    Eigen::VectorXd y = (y_raw.array() - y_mean) / y_std;

    auto k = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        double q = 0.0;
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            double d = (a[j] - b[j]) / h.lengthscales[j];
            q += d * d;
        }
        return h.signal_variance * std::exp(-0.5 * q);
    };
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = k(X.row(i), X.row(j));
    K.diagonal().array() += h.noise_variance;
    Eigen::MatrixXd Kinv = K.inverse();

    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) ks[i] = k(X.row(i), query);
    double mean = ks.dot(Kinv * y) * y_std + y_mean;
    double v = k(query, query) - ks.dot(Kinv * ks);
    return {mean, std::sqrt(std::max(v, 0.0)) * y_std};
}

// Dense-determinant log marginal likelihood.
inline double dense_lml_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_std,
                               const llana::GpHyperparams& h) {
    const Eigen::Index n = X.rows();
    auto k = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        double q = 0.0;
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            double d = (a[j] - b[j]) / h.lengthscales[j];
            q += d * d;
        }
        return h.signal_variance * std::exp(-0.5 * q);
    };
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = k(X.row(i), X.row(j));
    K.diagonal().array() += h.noise_variance;
    return -0.5 * y_std.dot(K.inverse() * y_std) - 0.5 * std::log(K.determinant()) -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

inline Eigen::MatrixXd random_matrix(llana::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform01();
    return m;
}

inline llana::Configuration make_config_1d(double v, const std::string& name = "x") {
    llana::Configuration c;
    c.values[name] = v;
    return c;
}

inline llana::SearchSpace unit_space_1d(const std::string& name = "x") {
    llana::ParamSpec p;
    p.name = name;
    p.kind = llana::ParamKind::Continuous;
    p.lower = 0.0;
    p.upper = 1.0;
    return llana::SearchSpace({p});
}

}  // namespace testing_support

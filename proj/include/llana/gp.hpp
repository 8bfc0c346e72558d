#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "llana/errors.hpp"
#include "llana/rng.hpp"

namespace llana {

struct PredictiveDistribution {
    double mean = 0.0;
    double std = 0.0;
};

struct GpHyperparams {
    double signal_variance = 1.0;
    Eigen::VectorXd lengthscales;  // one per dimension (ARD)
    double noise_variance = 1e-6;
};

struct GpHyperBounds {
    double lengthscale_lo = 1e-2, lengthscale_hi = 1e2;
    double signal_lo = 1e-2, signal_hi = 1e2;
    double noise_lo = 1e-8, noise_hi = 1.0;
};

struct GpFitOptions {
    GpHyperBounds bounds;
    int restarts = 8;
    std::uint64_t seed = 0;
    std::optional<double> fixed_noise;  // pins sigma_n^2 when set
};

namespace detail {

inline double se_ard(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const GpHyperparams& h) {
    double q = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        double d = (a[j] - b[j]) / h.lengthscales[j];
        q += d * d;
    }
    return h.signal_variance * std::exp(-0.5 * q);
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpHyperparams& h) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j)
            K(i, j) = K(j, i) = se_ard(X.row(i), X.row(j), h);
    return K;
}

}  // namespace detail

struct GpModel {
    Eigen::MatrixXd train_x;  // n x d, unit-encoded
    Eigen::VectorXd train_y;  // standardized targets
    GpHyperparams hyper;
    Eigen::MatrixXd chol;   // lower Cholesky of K + sigma_n^2 I (jittered)
    Eigen::VectorXd alpha;  // (K + sigma_n^2 I)^-1 y
    double y_mean = 0.0;
    double y_std = 1.0;
    double jitter = 0.0;
    // Fit diagnostics: log marginal likelihood at each restart's starting point
    // and at the accepted optimum.
    std::vector<double> restart_initial_lml;
    double fitted_lml = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(train_x.cols()); }
};

inline double gp_log_marginal_likelihood(const GpModel& model) {
    const double n = static_cast<double>(model.train_y.size());
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < model.chol.rows(); ++i)
        logdet += 2.0 * std::log(model.chol(i, i));
    return -0.5 * model.train_y.dot(model.alpha) - 0.5 * logdet -
           0.5 * n * std::log(2.0 * M_PI);
}

namespace detail {

// Factorizes K + sigma_n^2 I with escalating jitter (1e-9*mean diag, x10 up to 1e-3).
inline bool factorize(GpModel& model) {
    Eigen::MatrixXd K = kernel_matrix(model.train_x, model.hyper);
    const double diag_mean = K.diagonal().mean();
    double jitter = 1e-9 * diag_mean;
    const double jitter_max = 1e-3 * std::max(diag_mean, 1.0);
    Eigen::MatrixXd A = K;
    A.diagonal().array() += model.hyper.noise_variance;
    for (;;) {
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) {
            model.chol = llt.matrixL();
            model.alpha = llt.solve(model.train_y);
            model.jitter = (A(0, 0) - K(0, 0)) - model.hyper.noise_variance;
            return true;
        }
        if (jitter > jitter_max) return false;
        A = K;
        A.diagonal().array() += model.hyper.noise_variance + jitter;
        jitter *= 10.0;
    }
}

inline double lml_for(GpModel& model, const GpHyperparams& h) {
    model.hyper = h;
    if (!factorize(model)) return -std::numeric_limits<double>::infinity();
    return gp_log_marginal_likelihood(model);
}

}  // namespace detail

// Constructs a model with fixed hyperparameters (no fitting).
inline GpModel make_gp_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const GpHyperparams& hyper) {
    if (X.rows() == 0) throw SizeError("empty training set");
    if (y.size() != X.rows()) throw SizeError("target length does not match inputs");
    GpModel model;
    model.train_x = X;
    model.y_mean = y.mean();
    double var = (y.array() - model.y_mean).square().sum() / static_cast<double>(y.size());
    model.y_std = var > 0.0 ? std::sqrt(var) : 1.0;
    model.train_y = (y.array() - model.y_mean) / model.y_std;
    model.hyper = hyper;
    if (!detail::factorize(model))
        throw NumericalError("Cholesky factorization failed at maximum jitter");
    model.fitted_lml = gp_log_marginal_likelihood(model);
    return model;
}

inline GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const GpFitOptions& opt = {}) {
    if (X.rows() == 0) throw SizeError("empty training set");
    if (y.size() != X.rows()) throw SizeError("target length does not match inputs");
    const Eigen::Index d = X.cols();
    const GpHyperBounds& b = opt.bounds;

    GpHyperparams init;
    init.lengthscales = Eigen::VectorXd::Constant(d, 0.3);
    init.signal_variance = 1.0;
    init.noise_variance = opt.fixed_noise.value_or(1e-4);

    GpModel best = make_gp_model(X, y, init);
    GpModel scratch = best;

    // theta = log of (signal, lengthscales..., noise); coordinate-wise search.
    auto pack = [&](const GpHyperparams& h) {
        std::vector<double> t;
        t.push_back(std::log(h.signal_variance));
        for (Eigen::Index j = 0; j < d; ++j) t.push_back(std::log(h.lengthscales[j]));
        t.push_back(std::log(h.noise_variance));
        return t;
    };
    auto unpack = [&](const std::vector<double>& t) {
        GpHyperparams h;
        h.signal_variance = std::exp(t[0]);
        h.lengthscales = Eigen::VectorXd(d);
        for (Eigen::Index j = 0; j < d; ++j) h.lengthscales[j] = std::exp(t[1 + j]);
        h.noise_variance = std::exp(t[1 + d]);
        return h;
    };
    std::vector<double> lo = pack(GpHyperparams{
        b.signal_lo, Eigen::VectorXd::Constant(d, b.lengthscale_lo), b.noise_lo});
    std::vector<double> hi = pack(GpHyperparams{
        b.signal_hi, Eigen::VectorXd::Constant(d, b.lengthscale_hi), b.noise_hi});

    double best_lml = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta = pack(init);

    for (int r = 0; r < std::max(opt.restarts, 1); ++r) {
        Rng rng(derive_seed(opt.seed, "gp-fit-restart", static_cast<std::uint64_t>(r)));
        std::vector<double> theta(lo.size());
        if (r == 0) {
            theta = pack(init);  // first restart starts at the default point
        } else {
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] = rng.uniform(lo[i], hi[i]);
        }
        if (opt.fixed_noise) theta.back() = std::log(*opt.fixed_noise);

        double cur = detail::lml_for(scratch, unpack(theta));
        best.restart_initial_lml.push_back(cur);

        // Coordinate descent in log space with a shrinking step.
        double step = 1.0;
        for (int sweep = 0; sweep < 12; ++sweep) {
            bool improved = false;
            for (std::size_t i = 0; i < theta.size(); ++i) {
                if (opt.fixed_noise && i == theta.size() - 1) continue;
                for (double dir : {+1.0, -1.0}) {
                    double trial = std::clamp(theta[i] + dir * step, lo[i], hi[i]);
                    if (trial == theta[i]) continue;
                    double saved = theta[i];
                    theta[i] = trial;
                    double val = detail::lml_for(scratch, unpack(theta));
                    if (val > cur + 1e-12) {
                        cur = val;
                        improved = true;
                        break;
                    }
                    theta[i] = saved;
                }
            }
            if (!improved) {
                step *= 0.5;
                if (step < 1e-3) break;
            }
        }
        if (cur > best_lml) {
            best_lml = cur;
            best_theta = theta;
        }
    }

    GpHyperparams fitted = unpack(best_theta);
    auto diagnostics = std::move(best.restart_initial_lml);
    best = make_gp_model(X, y, fitted);
    best.restart_initial_lml = std::move(diagnostics);
    best.fitted_lml = gp_log_marginal_likelihood(best);
    return best;
}

inline GpModel gp_fit(const std::vector<std::pair<std::vector<double>, double>>& train,
                      const GpFitOptions& opt = {}) {
    if (train.empty()) throw SizeError("empty training set");
    const Eigen::Index n = static_cast<Eigen::Index>(train.size());
    const Eigen::Index d = static_cast<Eigen::Index>(train[0].first.size());
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(train[i].first.size()) != d)
            throw SizeError("inconsistent input dimension");
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = train[i].first[j];
        y[i] = train[i].second;
    }
    return gp_fit(X, y, opt);
}

inline PredictiveDistribution gp_predict(const GpModel& model, const Eigen::VectorXd& query) {
    if (query.size() != model.train_x.cols())
        throw SizeError("query dimension does not match model");
    const Eigen::Index n = model.train_x.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k[i] = detail::se_ard(model.train_x.row(i), query, model.hyper);
    double mean_std = k.dot(model.alpha);
    Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(k);
    double var_std = model.hyper.signal_variance - v.squaredNorm();
    var_std = std::max(var_std, 0.0);
    PredictiveDistribution pred;
    pred.mean = mean_std * model.y_std + model.y_mean;
    pred.std = std::sqrt(var_std) * model.y_std;
    return pred;
}

inline PredictiveDistribution gp_predict(const GpModel& model, const std::vector<double>& query) {
    Eigen::VectorXd q(static_cast<Eigen::Index>(query.size()));
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = query[static_cast<std::size_t>(i)];
    return gp_predict(model, q);
}

}  // namespace llana

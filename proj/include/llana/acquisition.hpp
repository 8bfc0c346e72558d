#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "llana/errors.hpp"
#include "llana/gp.hpp"  // PredictiveDistribution

namespace llana {

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Expected improvement in canonical minimize form: E[max(best - f, 0)].
inline double expected_improvement(const PredictiveDistribution& pred, double best) {
    const double improvement = best - pred.mean;
    if (pred.std <= 0.0) return std::max(improvement, 0.0);
    const double z = improvement / pred.std;
    double ei = improvement * normal_cdf(z) + pred.std * normal_pdf(z);
    return std::max(ei, 0.0);
}

struct AcquisitionContext {
    double best_score = 0.0;        // f(h_best), canonical minimize form
    double exploration_alpha = 0.0; // alpha
    double observed_min = 0.0;      // x_min (best observed)
    double observed_max = 0.0;      // x_max (worst observed)
};

// Target objective value used to condition the candidate sampler:
// x' = x_min - alpha * (x_max - x_min). No clamping.
inline double target_score(const AcquisitionContext& ctx) {
    return ctx.observed_min - ctx.exploration_alpha * (ctx.observed_max - ctx.observed_min);
}

struct CandidateScores {
    std::vector<double> scores;
    std::size_t argmax_index = 0;
};

inline CandidateScores score_candidates(const std::vector<PredictiveDistribution>& preds,
                                        double best) {
    if (preds.empty()) throw SizeError("no candidates to score");
    CandidateScores out;
    out.scores.reserve(preds.size());
    double best_score = -1.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double s = expected_improvement(preds[i], best);
        out.scores.push_back(s);
        if (s > best_score) {  // strict: first index wins ties
            best_score = s;
            out.argmax_index = i;
        }
    }
    return out;
}

}  // namespace llana

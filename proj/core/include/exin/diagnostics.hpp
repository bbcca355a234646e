#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exin/events.hpp"
#include "exin/likelihood.hpp"
#include "exin/matrix.hpp"
#include "exin/mcmc.hpp"

namespace exin {

// Random-time-change residuals: per-draw ordered compensator increments of
// the superposed (or one-mark) process, their posterior mean, pointwise 95%
// credible band, and Exp(1) quantiles at plotting positions (i - 0.5)/n.
struct RtctResult {
    Matrix increments;                 // draws x n, each row sorted ascending
    std::vector<double> mean_ordered;  // column means
    std::vector<double> lo, hi;        // pointwise 2.5% / 97.5% quantiles
    std::vector<double> theoretical;   // -log(1 - (i - 0.5)/n)
};

// mark = -1 pools all marks (the primary diagnostic); mark = k restricts to
// that mark's events and intensity. max_draws = 0 uses every draw, otherwise
// draws are thinned by a deterministic stride down to at most max_draws.
RtctResult rtct_increments(std::span<const MarkedEventSequence> data, const PosteriorDraws& draws,
                           const CovariateTrack& cov, const QuadratureSpec& quad = {},
                           int mark = -1, std::size_t max_draws = 0);

// Increments under a single parameter set (B = 1), e.g. generating values.
RtctResult rtct_increments(std::span<const MarkedEventSequence> data, const ExInParams& params,
                           const CovariateTrack& cov, const QuadratureSpec& quad = {},
                           int mark = -1);

// Mean squared distance between the posterior-mean ordered increments and the
// Exp(1) quantiles.
double qq_msd(const RtctResult& result);

// Per-draw, per-event pointwise log-likelihood contributions:
// log lambda_{m_i}(t_i) minus the superposed compensator over (t_{i-1}, t_i],
// with each replicate's tail interval folded into its last event so rows sum
// to the draw's log-likelihood.
Matrix compute_pointwise(std::span<const MarkedEventSequence> data, const PosteriorDraws& draws,
                         const CovariateTrack& cov, const QuadratureSpec& quad = {},
                         std::size_t max_draws = 0);

// Widely applicable information criterion from pointwise contributions:
// -2 [ sum_i log mean_b exp(ll_bi) - sum_i var_b(ll_bi) ].
double waic(const Matrix& pointwise);

// Posterior summaries of the expected background / excitation-driven event
// counts per mark (summed over replicates).
struct DecompositionSummary {
    struct PerMark {
        double bg_mean = 0.0, bg_lo = 0.0, bg_hi = 0.0;
        double exc_mean = 0.0, exc_lo = 0.0, exc_hi = 0.0;
    };
    std::vector<PerMark> marks;
    Matrix bg_draws, exc_draws; // draws x K
};

DecompositionSummary decomposition_report(std::span<const MarkedEventSequence> data,
                                          const PosteriorDraws& draws, const CovariateTrack& cov,
                                          const QuadratureSpec& quad = {}, double level = 0.95);

// One-sample Kolmogorov-Smirnov test against Exp(1) (asymptotic p-value).
struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
KsResult ks_test_exp1(std::vector<double> sample);

// Two-sample Kolmogorov-Smirnov test (asymptotic p-value).
KsResult ks_test_two_sample(std::vector<double> a, std::vector<double> b);

// Potential scale reduction factor across chains of a scalar trace.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

} // namespace exin

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exin/events.hpp"
#include "exin/params.hpp"

namespace exin {

// Numerical integration settings for compensators. The integrand is smooth
// between knots and kinked at event times and covariate knots, so panels are
// always aligned to those and each inter-knot interval is split into
// `subdivisions` equal trapezoid panels. When a parameter set has no active
// inhibition the exponential-kernel integral is exact, and the closed form is
// used instead unless `closed_form` is disabled (tests disable it to compare
// the two routes).
struct QuadratureSpec {
    enum class Scheme { trapezoid };
    Scheme scheme = Scheme::trapezoid;
    int subdivisions = 20;
    bool closed_form = true;

    void validate() const;
};

// Latent parent labels: parent[i] is the index of the event that triggered
// event i, or -1 for a background event. A valid parent must be strictly
// earlier and its effective excitation edge must be active.
struct BranchingAssignment {
    std::vector<int> parent;

    bool is_background(std::size_t i) const { return parent[i] < 0; }
};

// Normalized parent distribution for one event: background versus each
// admissible earlier event. The multiplicative inhibition factor is common to
// all terms and cancels, so these weights do not depend on gamma or phi.
struct BranchingConditional {
    double background_probability = 1.0;
    std::vector<std::pair<std::size_t, double>> parent_probabilities;
};

// Integral of lambda_k over (a, b] by knot-aligned composite trapezoid (or
// the exact exponential-kernel form when no inhibition is active). Additivity
// over adjacent intervals is exact when the split point is an event time or
// covariate knot.
double compensator(double a, double b, int mark, const MarkedEventSequence& seq,
                   const ExInParams& params, const CovariateTrack& cov,
                   const QuadratureSpec& quad = {});

// Expected background and excitation-driven event counts per mark:
// (integral of mu_k * H_k, integral of G_k * H_k) over (0, T]. Their sum is
// the total compensator on the same panels.
struct SubcompensatorPair {
    double background = 0.0;
    double excitation = 0.0;
};
std::vector<SubcompensatorPair> subcompensators(const MarkedEventSequence& seq,
                                                const ExInParams& params, const CovariateTrack& cov,
                                                const QuadratureSpec& quad = {});

// Identifies an event whose intensity underflowed to zero during a
// log-likelihood evaluation.
struct ZeroIntensityEvent {
    int replicate = -1;
    std::size_t index = 0;
    double time = 0.0;
    int mark = -1;
};

// Observed-data log-likelihood: sum over replicates of
// sum_i log lambda_{m_i}(t_i) - sum_k Lambda_k(0, T]. Returns -infinity when
// some event has zero intensity, filling *diag if given.
double log_likelihood(std::span<const MarkedEventSequence> data, const ExInParams& params,
                      const CovariateTrack& cov, const QuadratureSpec& quad = {},
                      ZeroIntensityEvent* diag = nullptr);
double log_likelihood(const MarkedEventSequence& seq, const ExInParams& params,
                      const CovariateTrack& cov, const QuadratureSpec& quad = {},
                      ZeroIntensityEvent* diag = nullptr);

// Complete-data log-likelihood given a branching assignment:
//   -sum_k Lambda_k + sum_{background i} log(mu H)(t_i)
//                   + sum_{triggered i} log(alpha_{m_j,m_i} g_{m_j}(t_i - t_j) H_{m_i}(t_i)).
// Averaging the per-event factors over branching_conditional recovers the
// observed-data likelihood. Throws ValidationError on an inadmissible parent.
double complete_data_log_likelihood(const MarkedEventSequence& seq, const BranchingAssignment& z,
                                    const ExInParams& params, const CovariateTrack& cov,
                                    const QuadratureSpec& quad = {});

// Parent distribution of event i: background weight mu_{m_i}(t_i), parent
// weight alpha_{m_j,m_i} g_{m_j}(t_i - t_j) for each admissible j.
BranchingConditional branching_conditional(std::size_t i, const MarkedEventSequence& seq,
                                           const ExInParams& params, const CovariateTrack& cov);

} // namespace exin

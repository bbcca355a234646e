#pragma once

#include "exin/events.hpp"
#include "exin/params.hpp"

namespace exin {

// Conditional-intensity components. All functions are pure and use only the
// strict past (events with time < t), so they can be called concurrently.
// These are the reference evaluators; the likelihood and sampler use an
// equivalent O(1)-per-step recursion over sorted time points (fit_state.hpp)
// that is tested against these.

// x(t) beta_{d,k} under the linear link, exp{x(t) beta_{d,k}} under the log
// link. Throws ValidationError if t is outside covariate coverage or a linear
// background is nonpositive.
double background_rate(double t, int mark, int replicate, const ExInParams& params,
                       const CovariateTrack& cov);

// Sum over past events of alpha_{m_i,k} * eta_{m_i}^-1 * exp(-(t - t_i)/eta_{m_i}).
double excitation_component(double t, int mark, const MarkedEventSequence& history,
                            const ExInParams& params);

// exp{-sum_i gamma_{m_i,k} * exp(-(t - t_i)/phi_{m_i})}, in (0, 1].
double inhibition_factor(double t, int mark, const MarkedEventSequence& history,
                         const ExInParams& params);

// (background + excitation) * inhibition.
double conditional_intensity(double t, int mark, int replicate, const MarkedEventSequence& history,
                             const ExInParams& params, const CovariateTrack& cov);

// Sum of conditional_intensity over all marks (the superposed process rate).
double total_intensity(double t, int replicate, const MarkedEventSequence& history,
                       const ExInParams& params, const CovariateTrack& cov);

} // namespace exin

#pragma once

#include <cstdint>
#include <optional>

#include "exin/events.hpp"
#include "exin/params.hpp"
#include "exin/rng.hpp"

namespace exin {

// Inputs for one thinning simulation. With no covariate track the background
// is intercept-only over [0, horizon]. max_events = 0 means the default cap
// of 100x the expected background count; hitting the cap raises
// NumericalError since it indicates a supercritical excitation regime.
struct SimulationConfig {
    ExInParams params;
    ModelVariant variant = ModelVariant::exc_inh;
    double horizon = 0.0;
    std::optional<CovariateTrack> cov;
    std::uint64_t seed = 1;
    std::size_t max_events = 0;
    int replicate = 0; // which beta block drives the background

    void validate() const;
};

// Upper bound for the thinning step at time t:
//   M(t) = sum_k [ sup_{s in (t, T]} mu_k(s) + G_k(t+) ]
// where G_k(t+) includes events at exactly t. Between events G_k is
// non-increasing and H_k <= 1, so M(t) dominates the total intensity on
// (t, next event].
double dominating_bound(double t, const MarkedEventSequence& history, const ExInParams& params,
                        const CovariateTrack& cov);

// Exact sampling of the configured point process on (0, horizon] by thinning.
// Deterministic given the seed. The bound inequality is checked at every
// candidate; a violation throws (it would mean a bound construction bug, not
// a data problem).
MarkedEventSequence simulate(const SimulationConfig& config);

} // namespace exin

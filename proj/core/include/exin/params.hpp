#pragma once

#include <vector>

#include "exin/events.hpp"
#include "exin/matrix.hpp"

namespace exin {

enum class BackgroundLink { linear, log };

// The three model variants: full excitation + inhibition, excitation only,
// inhibition only. exc_only forces all inhibition indicators off; inh_only
// forces all excitation indicators off.
enum class ModelVariant { exc_inh, exc_only, inh_only };

const char* to_string(ModelVariant v);
const char* to_string(BackgroundLink link);

// Full parameter set of the additive-excitation / multiplicative-inhibition
// model. Interaction magnitudes are stored as (alpha_star, gamma_star) with
// 0/1 inclusion indicators; the effective coefficients are their products,
// and for every ordered pair (l, k) at most one of the two indicators is on.
// Decay scales are shared across receiving marks: eta[l] governs how long
// excitation from mark l persists, phi[l] the reach of its inhibition.
struct ExInParams {
    std::vector<Matrix> beta;   // per replicate: mark_count x covariate_dim
    BackgroundLink link = BackgroundLink::log;
    Matrix alpha_star;          // K x K, row = source mark, col = target mark
    Matrix gamma_star;          // K x K
    Matrix include_alpha;       // K x K of {0, 1}
    Matrix include_gamma;       // K x K of {0, 1}
    std::vector<double> eta;    // K, > 0
    std::vector<double> phi;    // K, > 0

    int mark_count() const { return static_cast<int>(eta.size()); }
    int replicate_count() const { return static_cast<int>(beta.size()); }
    int covariate_dim() const { return beta.empty() ? 0 : static_cast<int>(beta.front().cols()); }

    bool alpha_active(int l, int k) const { return include_alpha(l, k) != 0.0; }
    bool gamma_active(int l, int k) const { return include_gamma(l, k) != 0.0; }
    double alpha(int l, int k) const { return alpha_star(l, k) * include_alpha(l, k); }
    double gamma(int l, int k) const { return gamma_star(l, k) * include_gamma(l, k); }

    bool has_excitation() const;
    bool has_inhibition() const;

    // Shape, positivity, and pairwise exclusivity checks; throws
    // ValidationError on the first violation.
    void validate() const;

    // Checks that every covariate segment yields a strictly positive
    // background rate for every replicate and mark (only the linear link can
    // fail this).
    void validate_background(const CovariateTrack& cov) const;

    // Zeroes the indicators excluded by the variant.
    void apply_variant(ModelVariant v);

    // Intercept-only parameter set with the given constant backgrounds
    // (linear link), one replicate. Convenience for tests and simulation
    // configs.
    static ExInParams intercept_only(std::vector<double> mu, Matrix alpha, Matrix gamma,
                                     std::vector<double> eta, std::vector<double> phi);

    bool operator==(const ExInParams&) const = default;
};

} // namespace exin

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "exin/mcmc.hpp"

namespace exin {

// Univariate self-limiting Hawkes process: the classical exponential-kernel
// intensity damped by exp(-gamma * N), where N counts events in the sliding
// window [t - phi_window, t). Used as the baseline for the identifiability
// experiment.
struct SelfLimitingParams {
    double mu = 0.0;
    double alpha = 0.0;
    double eta = 1.0;
    double gamma = 0.0;
    double phi_window = 1.0;

    void validate() const;
};

// (mu + sum_i alpha/eta e^{-(t - t_i)/eta}) * exp(-gamma * #{i : t - phi <= t_i < t}).
// Right-continuous with left limits; jumps sit at event times and window
// exits t_i + phi_window.
double sl_intensity(double t, std::span<const double> history, const SelfLimitingParams& params);

// Thinning simulation on (0, horizon] with bound M(t) = mu + G(t+): the
// damping factor is at most one, so upward intensity jumps at window exits
// stay under the bound.
std::vector<double> sl_simulate(const SelfLimitingParams& params, double horizon,
                                std::uint64_t seed, std::size_t max_events = 0);

// Exact log-likelihood: the damping factor is piecewise constant between
// events and window exits, and the exponential-kernel integral is analytic
// within each piece.
double sl_log_likelihood(std::span<const double> events, double horizon,
                         const SelfLimitingParams& params);

struct SlPriorSpec {
    double log_mu_variance = 10.0; // log mu ~ N(0, 10), mirroring the background prior
    double slab_sd = 1.0;          // log alpha, log gamma, log eta, log phi ~ N(0, 1)
};

struct SlFitConfig {
    int iterations = 15000;
    int burn_in = 5000;
    int thin = 1;
    std::uint64_t seed = 1;
    int adaptation_window = 5000;
    double target_acceptance = 0.3;
    double initial_scale = 0.3;
    bool fix_gamma = false; // conditioning runs hold gamma at its initial value
    bool fix_phi = false;
    std::optional<SelfLimitingParams> initial;

    void validate() const;
};

// Random-walk MH on the log parameters. Draw columns are named
// mu, alpha, eta, gamma, phi_window.
PosteriorDraws sl_fit(std::span<const double> events, double horizon, const SlPriorSpec& prior,
                      const SlFitConfig& config);

} // namespace exin

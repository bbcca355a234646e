#include "exin/self_limiting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "exin/errors.hpp"
#include "exin/rng.hpp"

namespace exin {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void SelfLimitingParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ValidationError(std::string(name) + " must be strictly positive");
    };
    positive(mu, "mu");
    positive(alpha, "alpha");
    positive(eta, "eta");
    positive(gamma, "gamma");
    positive(phi_window, "phi_window");
}

double sl_intensity(double t, std::span<const double> history, const SelfLimitingParams& params) {
    double g = 0.0;
    int in_window = 0;
    for (double ti : history) {
        if (ti >= t) break;
        g += params.alpha / params.eta * std::exp(-(t - ti) / params.eta);
        if (ti >= t - params.phi_window) ++in_window;
    }
    return (params.mu + g) * std::exp(-params.gamma * in_window);
}

std::vector<double> sl_simulate(const SelfLimitingParams& params, double horizon,
                                std::uint64_t seed, std::size_t max_events) {
    params.validate();
    if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
    std::size_t cap = max_events;
    if (cap == 0) cap = static_cast<std::size_t>(std::max(1000.0, 100.0 * params.mu * horizon));

    Rng rng(seed);
    std::vector<double> events;
    double gs = 0.0; // sum of exp(-(t - t_i)/eta) over events <= t
    double t = 0.0;
    while (true) {
        const double bound = params.mu + params.alpha / params.eta * gs;
        const double wait = rng.exponential(bound);
        const double t_star = t + wait;
        if (t_star > horizon) break;
        gs *= std::exp(-wait / params.eta);
        // window count at t_star: events in [t_star - phi, t_star)
        const auto lo = std::lower_bound(events.begin(), events.end(), t_star - params.phi_window);
        const int in_window = static_cast<int>(events.end() - lo);
        const double lambda =
            (params.mu + params.alpha / params.eta * gs) * std::exp(-params.gamma * in_window);
        if (lambda > bound * (1.0 + 1e-9))
            throw NumericalError("self-limiting thinning bound violated");
        if (rng.uniform() * bound < lambda) {
            events.push_back(t_star);
            gs += 1.0;
            if (events.size() > cap) {
                std::ostringstream msg;
                msg << "self-limiting simulation exceeded max_events=" << cap;
                throw NumericalError(msg.str());
            }
        }
        t = t_star;
    }
    return events;
}

double sl_log_likelihood(std::span<const double> events, double horizon,
                         const SelfLimitingParams& params) {
    params.validate();
    const std::size_t n = events.size();
    // knots: event times and window exits inside (0, horizon]
    std::vector<double> knots;
    knots.reserve(2 * n + 2);
    knots.push_back(0.0);
    for (double t : events) {
        if (!(t > 0.0) || t > horizon)
            throw ValidationError("event time outside (0, horizon]");
        knots.push_back(t);
        const double exit = t + params.phi_window;
        if (exit < horizon) knots.push_back(exit);
    }
    knots.push_back(horizon);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    double loglik = 0.0;
    double compensator = 0.0;
    double gs = 0.0;       // decayed excitation sum just after the current knot
    int in_window = 0;     // window count on the upcoming open interval
    std::size_t next_event = 0, next_exit = 0;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        const double a = knots[j];
        // knot bookkeeping at a: window exits leave, events at a enter (an
        // event at exactly a still counts at a + phi per the closed-left
        // window convention, so exits are processed first)
        while (next_exit < n && events[next_exit] + params.phi_window <= a) {
            --in_window;
            ++next_exit;
        }
        if (next_event < n && events[next_event] == a) {
            gs += 1.0;
            ++in_window;
            ++next_event;
        }
        const double b = knots[j + 1];
        const double width = b - a;
        const double damp = std::exp(-params.gamma * in_window);
        const double decay = std::exp(-width / params.eta);
        compensator += damp * (params.mu * width + params.alpha * gs * (1.0 - decay));
        gs *= decay;
        // event at b: its intensity uses the left-limit excitation state and
        // the window [b - phi, b), closed on the left
        if (next_event < n && events[next_event] == b) {
            const auto first = events.begin();
            const auto last = first + static_cast<long>(next_event); // events strictly before b
            const auto lo = std::lower_bound(first, last, b - params.phi_window);
            const int win = static_cast<int>(last - lo);
            const double lambda =
                (params.mu + params.alpha / params.eta * gs) * std::exp(-params.gamma * win);
            if (!(lambda > 0.0)) return kNegInf;
            loglik += std::log(lambda);
        }
    }
    return loglik - compensator;
}

void SlFitConfig::validate() const {
    if (iterations <= 0) throw ValidationError("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
        throw ValidationError("burn_in must satisfy 0 <= burn_in < iterations");
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (adaptation_window < 0) throw ValidationError("adaptation window must be >= 0");
    if (!(initial_scale > 0.0)) throw ValidationError("initial scale must be positive");
}

PosteriorDraws sl_fit(std::span<const double> events, double horizon, const SlPriorSpec& prior,
                      const SlFitConfig& config) {
    config.validate();
    if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");

    SelfLimitingParams p;
    if (config.initial) {
        p = *config.initial;
    } else {
        p.mu = std::max(0.5, static_cast<double>(events.size())) / horizon * 0.5;
        p.alpha = 0.5;
        p.eta = 1.0;
        p.gamma = 0.1;
        p.phi_window = 1.0;
    }
    p.validate();

    // state on the log scale: mu, alpha, eta, gamma, phi_window
    std::vector<double> x = {std::log(p.mu), std::log(p.alpha), std::log(p.eta),
                             std::log(p.gamma), std::log(p.phi_window)};
    const std::vector<std::string> names = {"mu", "alpha", "eta", "gamma", "phi_window"};
    auto params_of = [](const std::vector<double>& v) {
        SelfLimitingParams q;
        q.mu = std::exp(v[0]);
        q.alpha = std::exp(v[1]);
        q.eta = std::exp(v[2]);
        q.gamma = std::exp(v[3]);
        q.phi_window = std::exp(v[4]);
        return q;
    };
    auto log_prior = [&](const std::vector<double>& v) {
        double lp = -v[0] * v[0] / (2.0 * prior.log_mu_variance);
        for (std::size_t i = 1; i < v.size(); ++i)
            lp -= v[i] * v[i] / (2.0 * prior.slab_sd * prior.slab_sd);
        return lp;
    };

    double ll = sl_log_likelihood(events, horizon, params_of(x));
    if (!std::isfinite(ll))
        throw NumericalError("non-finite self-limiting likelihood at initialization");
    double lp = log_prior(x);

    Rng rng(config.seed);
    std::vector<double> scales(x.size(), std::log(config.initial_scale));
    std::vector<std::uint64_t> adapt_n(x.size(), 0);
    const std::size_t retained = static_cast<std::size_t>(
        (config.iterations - config.burn_in + config.thin - 1) / config.thin);

    PosteriorDraws out;
    out.names = names;
    out.samples = Matrix(retained, names.size());
    out.loglik.reserve(retained);
    out.acceptance.push_back({"sl", 0, 0});
    out.mark_count = 1;
    out.replicate_count = 1;
    out.covariate_dim = 0;

    std::size_t row = 0;
    for (int it = 0; it < config.iterations; ++it) {
        const bool adapt = it < std::min(config.adaptation_window, config.burn_in);
        for (std::size_t c = 0; c < x.size(); ++c) {
            if (c == 3 && config.fix_gamma) continue;
            if (c == 4 && config.fix_phi) continue;
            const double x_old = x[c];
            x[c] = x_old + std::exp(scales[c]) * rng.normal();
            const double ll_new = sl_log_likelihood(events, horizon, params_of(x));
            const double lp_new = log_prior(x);
            const double log_ratio = ll_new + lp_new - ll - lp;
            out.acceptance[0].proposals += 1;
            const double u = rng.uniform_pos();
            if (std::log(u) < log_ratio) {
                ll = ll_new;
                lp = lp_new;
                out.acceptance[0].accepts += 1;
            } else {
                x[c] = x_old;
            }
            if (adapt) {
                adapt_n[c] += 1;
                const double step = std::pow(static_cast<double>(adapt_n[c]) + 10.0, -0.6);
                scales[c] += step * (std::exp(std::min(0.0, log_ratio)) -
                                     config.target_acceptance);
                scales[c] = std::clamp(scales[c], -12.0, 5.0);
            }
        }
        if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0) {
            const SelfLimitingParams q = params_of(x);
            out.samples(row, 0) = q.mu;
            out.samples(row, 1) = q.alpha;
            out.samples(row, 2) = q.eta;
            out.samples(row, 3) = q.gamma;
            out.samples(row, 4) = q.phi_window;
            out.loglik.push_back(ll);
            ++row;
        }
    }
    return out;
}

} // namespace exin

#include "exin/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "exin/errors.hpp"
#include "exin/model.hpp"

namespace exin {

namespace {

// Largest background level of any mark over (t, T].
double sup_background(double t, double horizon, int mark, int replicate, const ExInParams& params,
                      const CovariateTrack& cov) {
    const Matrix& b = params.beta[static_cast<std::size_t>(replicate)];
    double best = 0.0;
    const std::size_t first = cov.segment_index(std::min(t, horizon));
    for (std::size_t seg = first; seg < cov.segment_count(); ++seg) {
        if (cov.knots()[seg] > horizon) break;
        double xb = 0.0;
        for (std::size_t c = 0; c < cov.dimension(); ++c)
            xb += cov.values()(seg, c) * b(mark, c);
        const double mu = params.link == BackgroundLink::log ? std::exp(xb) : xb;
        best = std::max(best, mu);
    }
    return best;
}

double expected_background_count(double horizon, int replicate, const ExInParams& params,
                                 const CovariateTrack& cov) {
    double total = 0.0;
    const Matrix& b = params.beta[static_cast<std::size_t>(replicate)];
    for (int k = 0; k < params.mark_count(); ++k) {
        for (std::size_t seg = 0; seg < cov.segment_count(); ++seg) {
            const double lo = cov.knots()[seg];
            const double hi = std::min(horizon, cov.knots()[seg + 1]);
            if (hi <= lo) continue;
            double xb = 0.0;
            for (std::size_t c = 0; c < cov.dimension(); ++c)
                xb += cov.values()(seg, c) * b(k, c);
            total += (params.link == BackgroundLink::log ? std::exp(xb) : xb) * (hi - lo);
        }
    }
    return total;
}

} // namespace

void SimulationConfig::validate() const {
    params.validate();
    if (!(horizon > 0.0)) throw ValidationError("simulation horizon must be positive");
    if (replicate < 0 || replicate >= params.replicate_count())
        throw ValidationError("simulation replicate has no matching beta block");
    if (cov) {
        if (!cov->covers(horizon))
            throw ValidationError("covariate track does not cover the simulation horizon");
        params.validate_background(*cov);
    } else if (params.covariate_dim() != 1) {
        throw ValidationError("parameters use covariates but no covariate track was given");
    }
}

double dominating_bound(double t, const MarkedEventSequence& history, const ExInParams& params,
                        const CovariateTrack& cov) {
    const double horizon = history.horizon();
    const int replicate = history.replicate_id();
    double bound = 0.0;
    for (int k = 0; k < params.mark_count(); ++k) {
        bound += sup_background(t, horizon, k, replicate, params, cov);
        // excitation right limit: events at exactly t enter at lag 0+
        for (const MarkedEvent& e : history.events()) {
            if (e.time > t) break;
            const double a = params.alpha(e.mark, k);
            if (a == 0.0) continue;
            const double eta = params.eta[static_cast<std::size_t>(e.mark)];
            bound += a / eta * std::exp(-(t - e.time) / eta);
        }
    }
    return bound;
}

MarkedEventSequence simulate(const SimulationConfig& config) {
    config.validate();
    ExInParams params = config.params;
    params.apply_variant(config.variant);
    const CovariateTrack cov =
        config.cov ? *config.cov : CovariateTrack::constant(config.horizon);
    params.validate_background(cov);

    const int k_count = params.mark_count();
    const double horizon = config.horizon;
    const int replicate = config.replicate;
    std::size_t cap = config.max_events;
    if (cap == 0) {
        const double expected = expected_background_count(horizon, replicate, params, cov);
        cap = static_cast<std::size_t>(std::max(1000.0, 100.0 * expected));
    }

    Rng rng(config.seed);
    std::vector<MarkedEvent> events;
    // decayed kernel sums including all events <= t
    std::vector<double> gs(static_cast<std::size_t>(k_count), 0.0);
    std::vector<double> rs(static_cast<std::size_t>(k_count), 0.0);
    std::vector<double> lambda(static_cast<std::size_t>(k_count), 0.0);

    double t = 0.0;
    while (true) {
        double bound = 0.0;
        for (int k = 0; k < k_count; ++k) {
            bound += sup_background(t, horizon, k, replicate, params, cov);
            for (int l = 0; l < k_count; ++l) {
                const double a = params.alpha(l, k);
                if (a != 0.0) bound += a / params.eta[static_cast<std::size_t>(l)] *
                                       gs[static_cast<std::size_t>(l)];
            }
        }
        const double wait = rng.exponential(bound);
        const double t_star = t + wait;
        if (t_star > horizon) break;

        for (int l = 0; l < k_count; ++l) {
            const std::size_t ll = static_cast<std::size_t>(l);
            gs[ll] *= std::exp(-wait / params.eta[ll]);
            rs[ll] *= std::exp(-wait / params.phi[ll]);
        }
        double total = 0.0;
        const std::size_t seg = cov.segment_index(t_star);
        const Matrix& b = params.beta[static_cast<std::size_t>(replicate)];
        for (int k = 0; k < k_count; ++k) {
            double xb = 0.0;
            for (std::size_t c = 0; c < cov.dimension(); ++c)
                xb += cov.values()(seg, c) * b(k, c);
            const double mu = params.link == BackgroundLink::log ? std::exp(xb) : xb;
            double g = 0.0;
            double damp = 0.0;
            for (int l = 0; l < k_count; ++l) {
                const std::size_t ll = static_cast<std::size_t>(l);
                const double a = params.alpha(l, k);
                if (a != 0.0) g += a / params.eta[ll] * gs[ll];
                const double gm = params.gamma(l, k);
                if (gm != 0.0) damp += gm * rs[ll];
            }
            lambda[static_cast<std::size_t>(k)] = (mu + g) * std::exp(-damp);
            total += lambda[static_cast<std::size_t>(k)];
        }
        if (total > bound * (1.0 + 1e-9)) {
            std::ostringstream msg;
            msg << "thinning bound violated at t=" << t_star << ": total intensity " << total
                << " exceeds bound " << bound;
            throw NumericalError(msg.str());
        }

        const double u = rng.uniform();
        if (u * bound < total) {
            const int mark = static_cast<int>(rng.categorical(lambda, total));
            events.push_back({t_star, mark});
            gs[static_cast<std::size_t>(mark)] += 1.0;
            rs[static_cast<std::size_t>(mark)] += 1.0;
            if (events.size() > cap) {
                std::ostringstream msg;
                msg << "simulation exceeded max_events=" << cap << " before t=" << t_star
                    << "; the excitation regime may be supercritical (spectral radius of the "
                       "effective alpha matrix near or above 1)";
                throw NumericalError(msg.str());
            }
        }
        t = t_star;
    }
    return MarkedEventSequence(std::move(events), horizon, k_count, replicate);
}

} // namespace exin

#include "exin/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "exin/errors.hpp"
#include "exin/model.hpp"

namespace exin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Decayed kernel sums per source mark:
//   gs[l] = sum over included events of mark l of exp(-(t - t_i)/eta_l)
//   rs[l] = sum over included events of mark l of exp(-(t - t_i)/phi_l)
struct KernelStates {
    std::vector<double> gs, rs;

    explicit KernelStates(int k_count) : gs(k_count, 0.0), rs(k_count, 0.0) {}

    void decay(std::span<const double> dg, std::span<const double> dr) {
        for (std::size_t l = 0; l < gs.size(); ++l) {
            gs[l] *= dg[l];
            rs[l] *= dr[l];
        }
    }

    void add_event(int mark) {
        gs[static_cast<std::size_t>(mark)] += 1.0;
        rs[static_cast<std::size_t>(mark)] += 1.0;
    }

    double excitation(int k, const ExInParams& p) const {
        double g = 0.0;
        for (std::size_t l = 0; l < gs.size(); ++l) {
            const double a = p.alpha(static_cast<int>(l), k);
            if (a != 0.0) g += a / p.eta[l] * gs[l];
        }
        return g;
    }

    double inhibition(int k, const ExInParams& p) const {
        double s = 0.0;
        for (std::size_t l = 0; l < rs.size(); ++l) {
            const double gm = p.gamma(static_cast<int>(l), k);
            if (gm != 0.0) s += gm * rs[l];
        }
        return std::exp(-s);
    }
};

std::vector<double> background_levels(std::size_t seg, const ExInParams& params,
                                      const CovariateTrack& cov, int replicate) {
    const int k_count = params.mark_count();
    const Matrix& b = params.beta.at(static_cast<std::size_t>(replicate));
    std::vector<double> mu(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
        double xb = 0.0;
        for (std::size_t j = 0; j < cov.dimension(); ++j) xb += cov.values()(seg, j) * b(k, j);
        if (params.link == BackgroundLink::log) {
            mu[static_cast<std::size_t>(k)] = std::exp(xb);
        } else {
            if (!(xb > 0.0)) {
                std::ostringstream msg;
                msg << "linear background is nonpositive (" << xb << ") on covariate segment "
                    << seg << " for mark " << k;
                throw ValidationError(msg.str());
            }
            mu[static_cast<std::size_t>(k)] = xb;
        }
    }
    return mu;
}

// Sorted base knots in [a, b]: endpoints, event times, interior covariate
// knots. Panels never straddle a jump of the integrand.
std::vector<double> base_knots(double a, double b, const MarkedEventSequence& seq,
                               const CovariateTrack& cov) {
    std::vector<double> knots;
    knots.push_back(a);
    for (const MarkedEvent& e : seq.events())
        if (e.time > a && e.time < b) knots.push_back(e.time);
    for (double t : cov.knots())
        if (t > a && t < b) knots.push_back(t);
    knots.push_back(b);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    return knots;
}

KernelStates states_at(double t, bool inclusive, const MarkedEventSequence& seq,
                       const ExInParams& params) {
    KernelStates st(params.mark_count());
    for (const MarkedEvent& e : seq.events()) {
        if (inclusive ? (e.time > t) : (e.time >= t)) break;
        const std::size_t l = static_cast<std::size_t>(e.mark);
        st.gs[l] += std::exp(-(t - e.time) / params.eta[l]);
        st.rs[l] += std::exp(-(t - e.time) / params.phi[l]);
    }
    return st;
}

// Exact compensator of mark k over (a, b] when no inhibition is active.
double compensator_closed_form(double a, double b, int mark, const MarkedEventSequence& seq,
                               const ExInParams& params, const CovariateTrack& cov) {
    const int d = seq.replicate_id();
    double total = 0.0;
    // background: piecewise constant, integrates exactly
    for (std::size_t seg = 0; seg < cov.segment_count(); ++seg) {
        const double lo = std::max(a, cov.knots()[seg]);
        const double hi = std::min(b, cov.knots()[seg + 1]);
        if (hi <= lo) continue;
        total += background_levels(seg, params, cov, d)[static_cast<std::size_t>(mark)] * (hi - lo);
    }
    // excitation: integral of the exponential kernel has a closed form
    for (const MarkedEvent& e : seq.events()) {
        if (e.time >= b) break;
        const double alpha = params.alpha(e.mark, mark);
        if (alpha == 0.0) continue;
        const double eta = params.eta[static_cast<std::size_t>(e.mark)];
        const double lo = std::max(a, e.time);
        total += alpha * (std::exp(-(lo - e.time) / eta) - std::exp(-(b - e.time) / eta));
    }
    return total;
}

// Everything a likelihood evaluation needs from one pass over a replicate.
struct ReplicateSweep {
    std::vector<double> compensators;       // per mark
    std::vector<SubcompensatorPair> sub;    // per mark
    std::vector<double> event_log_lambda;   // log lambda_{m_i}(t_i-)
    std::vector<double> event_mu;           // mu_{m_i}(t_i)
    std::vector<double> event_log_H;        // log H_{m_i}(t_i-)
};

ReplicateSweep sweep_replicate(const MarkedEventSequence& seq, const ExInParams& params,
                               const CovariateTrack& cov, const QuadratureSpec& quad) {
    quad.validate();
    if (!cov.covers(seq.horizon()))
        throw ValidationError("covariate track does not cover the observation horizon");
    const int k_count = params.mark_count();
    const int d = seq.replicate_id();
    const double horizon = seq.horizon();

    ReplicateSweep out;
    out.compensators.assign(static_cast<std::size_t>(k_count), 0.0);
    out.sub.assign(static_cast<std::size_t>(k_count), SubcompensatorPair{});
    out.event_log_lambda.reserve(seq.size());
    out.event_mu.reserve(seq.size());
    out.event_log_H.reserve(seq.size());

    const std::vector<double> knots = base_knots(0.0, horizon, seq, cov);
    KernelStates st(k_count);
    std::vector<double> dg(static_cast<std::size_t>(k_count)), dr(static_cast<std::size_t>(k_count));
    std::vector<double> mu = background_levels(cov.segment_index(0.0), params, cov, d);
    // right-limit integrand values at the current node, per mark: mu*H and G*H
    std::vector<double> bgH(static_cast<std::size_t>(k_count)), excH(static_cast<std::size_t>(k_count));
    auto fill_values = [&](std::vector<double>& bg_out, std::vector<double>& exc_out) {
        for (int k = 0; k < k_count; ++k) {
            const double h = st.inhibition(k, params);
            bg_out[static_cast<std::size_t>(k)] = mu[static_cast<std::size_t>(k)] * h;
            exc_out[static_cast<std::size_t>(k)] = st.excitation(k, params) * h;
        }
    };
    fill_values(bgH, excH);

    std::size_t next_event = 0;
    std::vector<double> bgL(static_cast<std::size_t>(k_count)), excL(static_cast<std::size_t>(k_count));
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        const double b0 = knots[j];
        const double b1 = knots[j + 1];
        mu = background_levels(cov.segment_index(0.5 * (b0 + b1)), params, cov, d);
        fill_values(bgH, excH); // segment may have changed at b0
        const double w = (b1 - b0) / quad.subdivisions;
        for (int k = 0; k < k_count; ++k) {
            dg[static_cast<std::size_t>(k)] = std::exp(-w / params.eta[static_cast<std::size_t>(k)]);
            dr[static_cast<std::size_t>(k)] = std::exp(-w / params.phi[static_cast<std::size_t>(k)]);
        }
        for (int step = 0; step < quad.subdivisions; ++step) {
            st.decay(dg, dr);
            fill_values(bgL, excL); // left limit at the sub-node
            for (int k = 0; k < k_count; ++k) {
                const std::size_t kk = static_cast<std::size_t>(k);
                out.sub[kk].background += 0.5 * w * (bgH[kk] + bgL[kk]);
                out.sub[kk].excitation += 0.5 * w * (excH[kk] + excL[kk]);
            }
            bgH = bgL;
            excH = excL;
        }
        // b1 reached; record and absorb any event there
        if (next_event < seq.size() && seq[next_event].time == b1) {
            const MarkedEvent& e = seq[next_event];
            const double h = st.inhibition(e.mark, params);
            const double base = mu[static_cast<std::size_t>(e.mark)] + st.excitation(e.mark, params);
            out.event_mu.push_back(mu[static_cast<std::size_t>(e.mark)]);
            out.event_log_H.push_back(std::log(h));
            out.event_log_lambda.push_back(std::log(base * h));
            st.add_event(e.mark);
            fill_values(bgH, excH);
            ++next_event;
        }
    }
    for (int k = 0; k < k_count; ++k) {
        const std::size_t kk = static_cast<std::size_t>(k);
        out.compensators[kk] = out.sub[kk].background + out.sub[kk].excitation;
    }
    // exact integrals when inhibition is inactive
    if (quad.closed_form && !params.has_inhibition()) {
        for (int k = 0; k < k_count; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            SubcompensatorPair exact;
            for (std::size_t seg = 0; seg < cov.segment_count(); ++seg) {
                const double lo = cov.knots()[seg];
                const double hi = std::min(horizon, cov.knots()[seg + 1]);
                if (hi <= lo) continue;
                exact.background += background_levels(seg, params, cov, d)[kk] * (hi - lo);
            }
            for (const MarkedEvent& e : seq.events()) {
                const double alpha = params.alpha(e.mark, k);
                if (alpha == 0.0) continue;
                const double eta = params.eta[static_cast<std::size_t>(e.mark)];
                exact.excitation += alpha * (1.0 - std::exp(-(horizon - e.time) / eta));
            }
            out.sub[kk] = exact;
            out.compensators[kk] = exact.background + exact.excitation;
        }
    }
    return out;
}

} // namespace

void QuadratureSpec::validate() const {
    if (subdivisions < 1) throw ValidationError("quadrature subdivisions must be >= 1");
}

double compensator(double a, double b, int mark, const MarkedEventSequence& seq,
                   const ExInParams& params, const CovariateTrack& cov,
                   const QuadratureSpec& quad) {
    quad.validate();
    if (!(a >= 0.0) || !(b >= a))
        throw ValidationError("compensator requires 0 <= a <= b");
    if (a == b) return 0.0;
    if (!cov.covers(b)) throw ValidationError("covariate track does not cover the interval end");
    if (quad.closed_form && !params.has_inhibition())
        return compensator_closed_form(a, b, mark, seq, params, cov);

    const int k_count = params.mark_count();
    const std::vector<double> knots = base_knots(a, b, seq, cov);
    KernelStates st = states_at(a, /*inclusive=*/true, seq, params);
    std::vector<double> dg(static_cast<std::size_t>(k_count)), dr(static_cast<std::size_t>(k_count));
    const int d = seq.replicate_id();

    std::size_t next_event = 0;
    while (next_event < seq.size() && seq[next_event].time <= a) ++next_event;

    double total = 0.0;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        const double b0 = knots[j];
        const double b1 = knots[j + 1];
        const double mu =
            background_levels(cov.segment_index(0.5 * (b0 + b1)), params, cov,
                              d)[static_cast<std::size_t>(mark)];
        const double w = (b1 - b0) / quad.subdivisions;
        for (int k = 0; k < k_count; ++k) {
            dg[static_cast<std::size_t>(k)] = std::exp(-w / params.eta[static_cast<std::size_t>(k)]);
            dr[static_cast<std::size_t>(k)] = std::exp(-w / params.phi[static_cast<std::size_t>(k)]);
        }
        double right = (mu + st.excitation(mark, params)) * st.inhibition(mark, params);
        for (int step = 0; step < quad.subdivisions; ++step) {
            st.decay(dg, dr);
            const double left = (mu + st.excitation(mark, params)) * st.inhibition(mark, params);
            total += 0.5 * w * (right + left);
            right = left;
        }
        while (next_event < seq.size() && seq[next_event].time == b1) {
            st.add_event(seq[next_event].mark);
            ++next_event;
        }
    }
    return total;
}

std::vector<SubcompensatorPair> subcompensators(const MarkedEventSequence& seq,
                                                const ExInParams& params, const CovariateTrack& cov,
                                                const QuadratureSpec& quad) {
    return sweep_replicate(seq, params, cov, quad).sub;
}

double log_likelihood(const MarkedEventSequence& seq, const ExInParams& params,
                      const CovariateTrack& cov, const QuadratureSpec& quad,
                      ZeroIntensityEvent* diag) {
    return log_likelihood(std::span<const MarkedEventSequence>(&seq, 1), params, cov, quad, diag);
}

double log_likelihood(std::span<const MarkedEventSequence> data, const ExInParams& params,
                      const CovariateTrack& cov, const QuadratureSpec& quad,
                      ZeroIntensityEvent* diag) {
    double total = 0.0;
    for (const MarkedEventSequence& seq : data) {
        const ReplicateSweep sweep = sweep_replicate(seq, params, cov, quad);
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const double ll = sweep.event_log_lambda[i];
            if (!std::isfinite(ll)) {
                if (diag) *diag = {seq.replicate_id(), i, seq[i].time, seq[i].mark};
                return kNegInf;
            }
            total += ll;
        }
        for (double lam : sweep.compensators) total -= lam;
    }
    return total;
}

double complete_data_log_likelihood(const MarkedEventSequence& seq, const BranchingAssignment& z,
                                    const ExInParams& params, const CovariateTrack& cov,
                                    const QuadratureSpec& quad) {
    if (z.parent.size() != seq.size())
        throw ValidationError("branching assignment length does not match the event count");
    const ReplicateSweep sweep = sweep_replicate(seq, params, cov, quad);
    double total = 0.0;
    for (double lam : sweep.compensators) total -= lam;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        total += sweep.event_log_H[i];
        if (z.is_background(i)) {
            total += std::log(sweep.event_mu[i]);
            continue;
        }
        const std::size_t j = static_cast<std::size_t>(z.parent[i]);
        if (j >= i) {
            std::ostringstream msg;
            msg << "event " << i << " names parent " << j << " which is not strictly earlier";
            throw ValidationError(msg.str());
        }
        const double alpha = params.alpha(seq[j].mark, seq[i].mark);
        if (alpha == 0.0) {
            std::ostringstream msg;
            msg << "event " << i << " is attributed to event " << j << " but the excitation edge ("
                << seq[j].mark << " -> " << seq[i].mark << ") is inactive";
            throw ValidationError(msg.str());
        }
        const double eta = params.eta[static_cast<std::size_t>(seq[j].mark)];
        const double lag = seq[i].time - seq[j].time;
        total += std::log(alpha / eta) - lag / eta;
    }
    return total;
}

BranchingConditional branching_conditional(std::size_t i, const MarkedEventSequence& seq,
                                           const ExInParams& params, const CovariateTrack& cov) {
    if (i >= seq.size()) throw ValidationError("event index out of range");
    const MarkedEvent& ev = seq[i];
    const double mu = background_rate(ev.time, ev.mark, seq.replicate_id(), params, cov);
    BranchingConditional out;
    double total = mu;
    for (std::size_t j = 0; j < i; ++j) {
        const double alpha = params.alpha(seq[j].mark, ev.mark);
        if (alpha == 0.0) continue;
        const double eta = params.eta[static_cast<std::size_t>(seq[j].mark)];
        const double w = alpha / eta * std::exp(-(ev.time - seq[j].time) / eta);
        out.parent_probabilities.emplace_back(j, w);
        total += w;
    }
    out.background_probability = mu / total;
    for (auto& [j, w] : out.parent_probabilities) w /= total;
    return out;
}

} // namespace exin

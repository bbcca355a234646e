#include "exin/model.hpp"

#include <cmath>
#include <sstream>

#include "exin/errors.hpp"

namespace exin {

double background_rate(double t, int mark, int replicate, const ExInParams& params,
                       const CovariateTrack& cov) {
    const std::size_t seg = cov.segment_index(t);
    const Matrix& b = params.beta.at(static_cast<std::size_t>(replicate));
    double xb = 0.0;
    for (std::size_t j = 0; j < cov.dimension(); ++j) xb += cov.values()(seg, j) * b(mark, j);
    if (params.link == BackgroundLink::log) return std::exp(xb);
    if (!(xb > 0.0)) {
        std::ostringstream msg;
        msg << "linear background is nonpositive (" << xb << ") at t=" << t << " for mark "
            << mark;
        throw ValidationError(msg.str());
    }
    return xb;
}

double excitation_component(double t, int mark, const MarkedEventSequence& history,
                            const ExInParams& params) {
    double g = 0.0;
    for (const MarkedEvent& e : history.events()) {
        if (e.time >= t) break;
        const double a = params.alpha(e.mark, mark);
        if (a == 0.0) continue;
        const double eta = params.eta[static_cast<std::size_t>(e.mark)];
        g += a / eta * std::exp(-(t - e.time) / eta);
    }
    return g;
}

double inhibition_factor(double t, int mark, const MarkedEventSequence& history,
                         const ExInParams& params) {
    double s = 0.0;
    for (const MarkedEvent& e : history.events()) {
        if (e.time >= t) break;
        const double g = params.gamma(e.mark, mark);
        if (g == 0.0) continue;
        s += g * std::exp(-(t - e.time) / params.phi[static_cast<std::size_t>(e.mark)]);
    }
    return std::exp(-s);
}

double conditional_intensity(double t, int mark, int replicate, const MarkedEventSequence& history,
                             const ExInParams& params, const CovariateTrack& cov) {
    const double mu = background_rate(t, mark, replicate, params, cov);
    const double g = excitation_component(t, mark, history, params);
    const double h = inhibition_factor(t, mark, history, params);
    return (mu + g) * h;
}

double total_intensity(double t, int replicate, const MarkedEventSequence& history,
                       const ExInParams& params, const CovariateTrack& cov) {
    double sum = 0.0;
    for (int k = 0; k < params.mark_count(); ++k)
        sum += conditional_intensity(t, k, replicate, history, params, cov);
    return sum;
}

} // namespace exin

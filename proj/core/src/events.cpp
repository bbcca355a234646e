#include "exin/events.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "exin/errors.hpp"

namespace exin {

MarkedEventSequence::MarkedEventSequence(std::vector<MarkedEvent> events, double horizon,
                                         int mark_count, int replicate_id)
    : events_(std::move(events)), horizon_(horizon), mark_count_(mark_count),
      replicate_id_(replicate_id) {
    if (!(horizon_ > 0.0)) throw ValidationError("event sequence horizon must be positive");
    if (mark_count_ < 1) throw ValidationError("mark count must be at least 1");
    double prev = 0.0;
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (!(e.time > 0.0) || e.time > horizon_) {
            std::ostringstream msg;
            msg << "event " << i << " at time " << e.time << " is outside (0, " << horizon_ << "]";
            throw ValidationError(msg.str());
        }
        if (i > 0 && !(e.time > prev)) {
            std::ostringstream msg;
            msg << "event times must be strictly increasing; event " << i << " at " << e.time
                << " does not follow " << prev;
            throw ValidationError(msg.str());
        }
        if (e.mark < 0 || e.mark >= mark_count_) {
            std::ostringstream msg;
            msg << "event " << i << " has mark " << e.mark << " outside [0, " << mark_count_ << ")";
            throw ValidationError(msg.str());
        }
        prev = e.time;
    }
    by_mark_.resize(static_cast<std::size_t>(mark_count_));
    for (std::size_t i = 0; i < events_.size(); ++i)
        by_mark_[static_cast<std::size_t>(events_[i].mark)].push_back(i);
}

std::size_t resolve_ties(std::vector<MarkedEvent>& events, double horizon) {
    std::stable_sort(events.begin(), events.end(),
                     [](const MarkedEvent& a, const MarkedEvent& b) { return a.time < b.time; });
    const double nudge = 1e-9 * horizon;
    std::size_t collisions = 0;
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].time <= events[i - 1].time) {
            events[i].time = events[i - 1].time + nudge;
            ++collisions;
        }
    }
    return collisions;
}

CovariateTrack::CovariateTrack(std::vector<double> knots, Matrix values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() < 2) throw ValidationError("covariate track needs at least two knots");
    if (knots_.front() != 0.0) throw ValidationError("covariate knots must start at 0");
    for (std::size_t i = 1; i < knots_.size(); ++i)
        if (!(knots_[i] > knots_[i - 1]))
            throw ValidationError("covariate knots must be strictly increasing");
    if (values_.rows() + 1 != knots_.size())
        throw ValidationError("covariate track needs one value row per segment");
    if (values_.cols() < 1) throw ValidationError("covariate track needs at least one column");
    for (double v : values_.data())
        if (!std::isfinite(v)) throw ValidationError("covariate values must be finite");
}

CovariateTrack CovariateTrack::constant(double end) {
    return CovariateTrack({0.0, end}, Matrix(1, 1, 1.0));
}

std::size_t CovariateTrack::segment_index(double t) const {
    if (t < 0.0 || t > knots_.back()) {
        std::ostringstream msg;
        msg << "time " << t << " is outside covariate coverage [0, " << knots_.back() << "]";
        throw ValidationError(msg.str());
    }
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t seg = static_cast<std::size_t>(it - knots_.begin());
    if (seg == 0) return 0;
    seg -= 1;
    if (seg >= values_.rows()) seg = values_.rows() - 1; // t == final boundary
    return seg;
}

} // namespace exin

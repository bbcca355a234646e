#pragma once

#include <cstddef>
#include <vector>

#include "exin/matrix.hpp"

namespace exin {

// One event of a marked temporal point process. Marks are 0-based indices in
// [0, mark_count); file readers translate external labels (see io.hpp).
struct MarkedEvent {
    double time = 0.0;
    int mark = 0;
};

// Ordered event times with marks on a finite observation window (0, horizon].
// Times are strictly increasing; exact ties are resolved upstream by
// resolve_ties(). replicate_id identifies the independent day/segment this
// sequence belongs to (0-based).
class MarkedEventSequence {
public:
    MarkedEventSequence(std::vector<MarkedEvent> events, double horizon, int mark_count,
                        int replicate_id = 0);

    const std::vector<MarkedEvent>& events() const { return events_; }
    double horizon() const { return horizon_; }
    int mark_count() const { return mark_count_; }
    int replicate_id() const { return replicate_id_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    const MarkedEvent& operator[](std::size_t i) const { return events_[i]; }

    // Events of one source mark, in time order (indices into events()).
    const std::vector<std::size_t>& indices_of_mark(int mark) const {
        return by_mark_[static_cast<std::size_t>(mark)];
    }

private:
    std::vector<MarkedEvent> events_;
    double horizon_ = 0.0;
    int mark_count_ = 0;
    int replicate_id_ = 0;
    std::vector<std::vector<std::size_t>> by_mark_;
};

// Sorts in place and perturbs exact time ties by +1e-9 * horizon so the
// sequence is strictly increasing. Returns the number of collisions resolved;
// callers emit one warning per collision.
std::size_t resolve_ties(std::vector<MarkedEvent>& events, double horizon);

// Piecewise-constant covariate values over [0, coverage end]. knots() holds
// the m+1 segment boundaries k_0 = 0 < ... < k_m; values() row i applies on
// the right-open segment [k_i, k_{i+1}) (closed at the final boundary). The
// first column is the intercept.
class CovariateTrack {
public:
    CovariateTrack(std::vector<double> knots, Matrix values);

    // Intercept-only track covering [0, end].
    static CovariateTrack constant(double end);

    const std::vector<double>& knots() const { return knots_; }
    const Matrix& values() const { return values_; }
    std::size_t segment_count() const { return values_.rows(); }
    std::size_t dimension() const { return values_.cols(); }
    double coverage_end() const { return knots_.back(); }

    // Segment containing t; throws ValidationError if t is outside coverage.
    std::size_t segment_index(double t) const;

    bool covers(double horizon) const { return knots_.back() >= horizon; }

private:
    std::vector<double> knots_;
    Matrix values_;
};

} // namespace exin

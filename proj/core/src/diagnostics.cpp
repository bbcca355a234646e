#include "exin/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "exin/errors.hpp"
#include "exin/fit_state.hpp"

namespace exin {

namespace {

std::vector<std::size_t> thinned_draws(std::size_t total, std::size_t max_draws) {
    std::vector<std::size_t> rows;
    if (total == 0) return rows;
    std::size_t stride = 1;
    if (max_draws > 0 && total > max_draws) stride = (total + max_draws - 1) / max_draws;
    for (std::size_t r = 0; r < total; r += stride) rows.push_back(r);
    return rows;
}

double column_quantile(std::vector<double>& scratch, double q) {
    std::sort(scratch.begin(), scratch.end());
    const double pos = q * static_cast<double>(scratch.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, scratch.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return scratch[lo] * (1.0 - frac) + scratch[hi] * frac;
}

RtctResult finalize_rtct(Matrix increments) {
    RtctResult out;
    const std::size_t draws = increments.rows();
    const std::size_t n = increments.cols();
    out.mean_ordered.assign(n, 0.0);
    out.lo.assign(n, 0.0);
    out.hi.assign(n, 0.0);
    out.theoretical.assign(n, 0.0);
    std::vector<double> col(draws);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t b = 0; b < draws; ++b) {
            col[b] = increments(b, i);
            sum += col[b];
        }
        out.mean_ordered[i] = sum / static_cast<double>(draws);
        if (draws > 1) {
            std::vector<double> scratch = col;
            out.lo[i] = column_quantile(scratch, 0.025);
            scratch = col;
            out.hi[i] = column_quantile(scratch, 0.975);
        } else {
            out.lo[i] = out.hi[i] = col[0];
        }
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        out.theoretical[i] = -std::log(1.0 - p);
    }
    out.increments = std::move(increments);
    return out;
}

// increments of one draw, concatenated across replicates, sorted
void draw_increments(std::vector<FitState>& states, int mark, std::vector<double>& row,
                     std::vector<double>& scratch) {
    row.clear();
    for (FitState& st : states) {
        if (mark < 0) {
            st.interval_compensators(scratch);
        } else {
            double tail = 0.0;
            st.mark_interval_compensators(mark, scratch, tail);
        }
        row.insert(row.end(), scratch.begin(), scratch.end());
    }
    std::sort(row.begin(), row.end());
}

} // namespace

RtctResult rtct_increments(std::span<const MarkedEventSequence> data, const PosteriorDraws& draws,
                           const CovariateTrack& cov, const QuadratureSpec& quad, int mark,
                           std::size_t max_draws) {
    if (draws.draw_count() == 0) throw ValidationError("rtct requires at least one draw");
    const std::vector<std::size_t> rows = thinned_draws(draws.draw_count(), max_draws);
    std::vector<FitState> states;
    ExInParams p0 = draws.params_at(rows.front());
    for (const MarkedEventSequence& seq : data) states.emplace_back(seq, cov, p0, quad);

    std::vector<double> row, scratch;
    draw_increments(states, mark, row, scratch);
    Matrix incr(rows.size(), row.size());
    for (std::size_t c = 0; c < row.size(); ++c) incr(0, c) = row[c];
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const ExInParams p = draws.params_at(rows[r]);
        for (FitState& st : states) st.set_params(p);
        draw_increments(states, mark, row, scratch);
        for (std::size_t c = 0; c < row.size(); ++c) incr(r, c) = row[c];
    }
    return finalize_rtct(std::move(incr));
}

RtctResult rtct_increments(std::span<const MarkedEventSequence> data, const ExInParams& params,
                           const CovariateTrack& cov, const QuadratureSpec& quad, int mark) {
    std::vector<FitState> states;
    for (const MarkedEventSequence& seq : data) states.emplace_back(seq, cov, params, quad);
    std::vector<double> row, scratch;
    draw_increments(states, mark, row, scratch);
    Matrix incr(1, row.size());
    for (std::size_t c = 0; c < row.size(); ++c) incr(0, c) = row[c];
    return finalize_rtct(std::move(incr));
}

double qq_msd(const RtctResult& result) {
    const std::size_t n = result.mean_ordered.size();
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = result.mean_ordered[i] - result.theoretical[i];
        sum += d * d;
    }
    return sum / static_cast<double>(n);
}

Matrix compute_pointwise(std::span<const MarkedEventSequence> data, const PosteriorDraws& draws,
                         const CovariateTrack& cov, const QuadratureSpec& quad,
                         std::size_t max_draws) {
    if (draws.draw_count() == 0) throw ValidationError("pointwise requires at least one draw");
    const std::vector<std::size_t> rows = thinned_draws(draws.draw_count(), max_draws);
    std::size_t events_total = 0;
    for (const MarkedEventSequence& seq : data) events_total += seq.size();

    std::vector<FitState> states;
    ExInParams p0 = draws.params_at(rows.front());
    for (const MarkedEventSequence& seq : data) states.emplace_back(seq, cov, p0, quad);

    Matrix out(rows.size(), events_total);
    std::vector<double> incr;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r > 0) {
            const ExInParams p = draws.params_at(rows[r]);
            for (FitState& st : states) st.set_params(p);
        }
        std::size_t c = 0;
        for (FitState& st : states) {
            const double tail = st.interval_compensators(incr);
            const std::size_t n = st.sequence().size();
            for (std::size_t i = 0; i < n; ++i, ++c) {
                double v = st.event_log_lambda(i) - incr[i];
                if (i + 1 == n) v -= tail;
                out(r, c) = v;
            }
        }
    }
    return out;
}

double waic(const Matrix& pointwise) {
    const std::size_t draws = pointwise.rows();
    const std::size_t n = pointwise.cols();
    if (draws < 2) throw ValidationError("waic requires at least 2 draws");
    double lppd = 0.0;
    double penalty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = pointwise(0, i);
        for (std::size_t b = 1; b < draws; ++b) mx = std::max(mx, pointwise(b, i));
        double sum_exp = 0.0, mean = 0.0;
        for (std::size_t b = 0; b < draws; ++b) {
            sum_exp += std::exp(pointwise(b, i) - mx);
            mean += pointwise(b, i);
        }
        mean /= static_cast<double>(draws);
        double var = 0.0;
        for (std::size_t b = 0; b < draws; ++b) {
            const double d = pointwise(b, i) - mean;
            var += d * d;
        }
        var /= static_cast<double>(draws - 1);
        lppd += mx + std::log(sum_exp / static_cast<double>(draws));
        penalty += var;
    }
    return -2.0 * (lppd - penalty);
}

DecompositionSummary decomposition_report(std::span<const MarkedEventSequence> data,
                                          const PosteriorDraws& draws, const CovariateTrack& cov,
                                          const QuadratureSpec& quad, double level) {
    if (draws.draw_count() == 0) throw ValidationError("decomposition requires draws");
    const int k_count = draws.mark_count;
    std::vector<FitState> states;
    ExInParams p0 = draws.params_at(0);
    for (const MarkedEventSequence& seq : data) states.emplace_back(seq, cov, p0, quad);

    const std::size_t b_total = draws.draw_count();
    DecompositionSummary out;
    out.bg_draws = Matrix(b_total, static_cast<std::size_t>(k_count));
    out.exc_draws = Matrix(b_total, static_cast<std::size_t>(k_count));
    for (std::size_t b = 0; b < b_total; ++b) {
        if (b > 0) {
            const ExInParams p = draws.params_at(b);
            for (FitState& st : states) st.set_params(p);
        }
        for (int k = 0; k < k_count; ++k) {
            double bg = 0.0, exc = 0.0;
            for (FitState& st : states) {
                bg += st.background_subcompensator(k);
                exc += st.excitation_subcompensator(k);
            }
            out.bg_draws(b, static_cast<std::size_t>(k)) = bg;
            out.exc_draws(b, static_cast<std::size_t>(k)) = exc;
        }
    }
    out.marks.resize(static_cast<std::size_t>(k_count));
    std::vector<double> col(b_total);
    for (int k = 0; k < k_count; ++k) {
        auto& m = out.marks[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < b_total; ++b) col[b] = out.bg_draws(b, k);
        m.bg_mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(b_total);
        if (b_total >= 2) std::tie(m.bg_lo, m.bg_hi) = hpd_interval(col, level);
        for (std::size_t b = 0; b < b_total; ++b) col[b] = out.exc_draws(b, k);
        m.exc_mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(b_total);
        if (b_total >= 2) std::tie(m.exc_lo, m.exc_hi) = hpd_interval(col, level);
    }
    return out;
}

namespace {

// complement of the Kolmogorov distribution CDF
double kolmogorov_q(double t) {
    if (t <= 0.0) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * t * t);
        sum += (j % 2 == 1) ? term : -term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

} // namespace

KsResult ks_test_exp1(std::vector<double> sample) {
    if (sample.empty()) throw ValidationError("ks test requires a nonempty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = 1.0 - std::exp(-sample[i]);
        const double d_plus = (static_cast<double>(i) + 1.0) / n - f;
        const double d_minus = f - static_cast<double>(i) / n;
        d = std::max({d, d_plus, d_minus});
    }
    const double rn = std::sqrt(n);
    return {d, kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)};
}

KsResult ks_test_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("ks test requires nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw ValidationError("gelman_rubin requires at least 2 chains");
    std::size_t n = chains.front().size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 2) throw ValidationError("gelman_rubin requires at least 2 draws per chain");
    const double m = static_cast<double>(chains.size());
    const double nd = static_cast<double>(n);
    std::vector<double> means;
    double w = 0.0;
    for (const auto& c : chains) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += c[i];
        mean /= nd;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (c[i] - mean) * (c[i] - mean);
        var /= (nd - 1.0);
        means.push_back(mean);
        w += var;
    }
    w /= m;
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double b = 0.0;
    for (double v : means) b += (v - grand) * (v - grand);
    b *= nd / (m - 1.0);
    const double var_plus = (nd - 1.0) / nd * w + b / nd;
    if (w <= 0.0) return 1.0;
    return std::sqrt(var_plus / w);
}

} // namespace exin

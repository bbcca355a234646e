#include "exin/fit_state.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "exin/errors.hpp"

namespace exin {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

FitState::FitState(const MarkedEventSequence& seq, const CovariateTrack& cov,
                   const ExInParams& params, const QuadratureSpec& quad)
    : seq_(&seq), cov_(&cov), quad_(quad), params_(params) {
    quad_.validate();
    params_.validate();
    if (!cov.covers(seq.horizon()))
        throw ValidationError("covariate track does not cover the observation horizon");
    if (seq.mark_count() != params_.mark_count())
        throw ValidationError("sequence and parameter mark counts differ");
    if (seq.replicate_id() < 0 || seq.replicate_id() >= params_.replicate_count())
        throw ValidationError("sequence replicate_id has no matching beta block");
    build_grid();
    rebuild_all();
}

void FitState::build_grid() {
    const double horizon = seq_->horizon();
    std::vector<double> base;
    base.push_back(0.0);
    for (const MarkedEvent& e : seq_->events()) base.push_back(e.time);
    for (double t : cov_->knots())
        if (t > 0.0 && t < horizon) base.push_back(t);
    base.push_back(horizon);
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());

    const int s = quad_.subdivisions;
    const std::size_t panels = (base.size() - 1) * static_cast<std::size_t>(s);
    nodes_.clear();
    nodes_.reserve(panels + 1);
    node_event_.assign(panels + 1, -1);
    node_event_mark_.assign(panels + 1, -1);
    panel_seg_.assign(panels, 0);
    first_node_of_interval_.clear();
    first_node_of_interval_.reserve(base.size());

    nodes_.push_back(base.front());
    for (std::size_t j = 0; j + 1 < base.size(); ++j) {
        first_node_of_interval_.push_back(nodes_.size() - 1);
        const double b0 = base[j];
        const double b1 = base[j + 1];
        const std::size_t seg = cov_->segment_index(0.5 * (b0 + b1));
        const double w = (b1 - b0) / s;
        for (int step = 1; step <= s; ++step) {
            panel_seg_[nodes_.size() - 1] = seg;
            nodes_.push_back(step == s ? b1 : b0 + step * w);
        }
    }
    first_node_of_interval_.push_back(nodes_.size() - 1);

    node_of_event_.assign(seq_->size(), 0);
    seg_of_event_.assign(seq_->size(), 0);
    std::size_t j = 0;
    for (std::size_t i = 0; i < seq_->size(); ++i) {
        const double t = (*seq_)[i].time;
        while (nodes_[j] < t) ++j;
        node_of_event_[i] = j;
        node_event_[j] = static_cast<int>(i);
        node_event_mark_[j] = (*seq_)[i].mark;
        seg_of_event_[i] = cov_->segment_index(t);
    }
}

void FitState::rebuild_gs(int l, double eta, std::vector<double>& out) const {
    out.assign(nodes_.size(), 0.0);
    double state = 0.0;
    for (std::size_t blk = 0; blk + 1 < first_node_of_interval_.size(); ++blk) {
        const std::size_t j0 = first_node_of_interval_[blk];
        const std::size_t j1 = first_node_of_interval_[blk + 1];
        const double w = nodes_[j0 + 1] - nodes_[j0];
        const double decay = std::exp(-w / eta);
        // events sit only on block boundaries; interior nodes are subdivisions
        if (node_event_mark_[j0] == l) state += 1.0;
        for (std::size_t j = j0 + 1; j <= j1; ++j) {
            state *= decay;
            out[j] = state;
        }
    }
}

void FitState::rebuild_rs(int l, double phi, std::vector<double>& out) const {
    out.assign(nodes_.size(), 0.0);
    double state = 0.0;
    for (std::size_t blk = 0; blk + 1 < first_node_of_interval_.size(); ++blk) {
        const std::size_t j0 = first_node_of_interval_[blk];
        const std::size_t j1 = first_node_of_interval_[blk + 1];
        const double w = nodes_[j0 + 1] - nodes_[j0];
        const double decay = std::exp(-w / phi);
        if (node_event_mark_[j0] == l) state += 1.0;
        for (std::size_t j = j0 + 1; j <= j1; ++j) {
            state *= decay;
            out[j] = state;
        }
    }
}

void FitState::rebuild_H(int k, std::vector<double>& out) const {
    const int k_count = params_.mark_count();
    out.assign(nodes_.size(), 1.0);
    bool any = false;
    for (int l = 0; l < k_count; ++l)
        if (params_.gamma(l, k) != 0.0) any = true;
    if (!any) return;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
        double s = 0.0;
        for (int l = 0; l < k_count; ++l) {
            const double g = params_.gamma(l, k);
            if (g != 0.0) s += g * rs_[static_cast<std::size_t>(l)][j];
        }
        out[j] = std::exp(-s);
    }
}

void FitState::rebuild_mu() {
    const int k_count = params_.mark_count();
    const Matrix& b = params_.beta[static_cast<std::size_t>(seq_->replicate_id())];
    mu_seg_.assign(static_cast<std::size_t>(k_count),
                   std::vector<double>(cov_->segment_count(), 0.0));
    for (int k = 0; k < k_count; ++k) {
        for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg) {
            double xb = 0.0;
            for (std::size_t c = 0; c < cov_->dimension(); ++c)
                xb += cov_->values()(seg, c) * b(k, c);
            if (params_.link == BackgroundLink::log) {
                mu_seg_[static_cast<std::size_t>(k)][seg] = std::exp(xb);
            } else {
                if (!(xb > 0.0))
                    throw ValidationError("linear background is nonpositive on a covariate segment");
                mu_seg_[static_cast<std::size_t>(k)][seg] = xb;
            }
        }
    }
    mu_event_.assign(seq_->size(), 0.0);
    for (std::size_t i = 0; i < seq_->size(); ++i)
        mu_event_[i] = mu_seg_[static_cast<std::size_t>((*seq_)[i].mark)][seg_of_event_[i]];
}

void FitState::rebuild_base() {
    const int k_count = params_.mark_count();
    base_event_.assign(seq_->size(), 0.0);
    for (std::size_t i = 0; i < seq_->size(); ++i) {
        const int k = (*seq_)[i].mark;
        double g = 0.0;
        for (int l = 0; l < k_count; ++l) {
            const double a = params_.alpha(l, k);
            if (a != 0.0)
                g += a / params_.eta[static_cast<std::size_t>(l)] *
                     gs_[static_cast<std::size_t>(l)][node_of_event_[i]];
        }
        base_event_[i] = mu_event_[i] + g;
    }
}

void FitState::rebuild_integrals() {
    const int k_count = params_.mark_count();
    B_.assign(static_cast<std::size_t>(k_count),
              std::vector<double>(cov_->segment_count(), 0.0));
    J_ = Matrix(static_cast<std::size_t>(k_count), static_cast<std::size_t>(k_count), 0.0);
    for (int k = 0; k < k_count; ++k) {
        const std::size_t kk = static_cast<std::size_t>(k);
        const std::vector<double>& h = H_[kk];
        for (std::size_t p = 0; p + 1 < nodes_.size(); ++p) {
            const double w = nodes_[p + 1] - nodes_[p];
            const int m = node_event_mark_[p];
            const double hr = (m >= 0) ? h[p] * exp_neg_gamma_(m, k) : h[p];
            const double hl = h[p + 1];
            B_[kk][panel_seg_[p]] += 0.5 * w * (hr + hl);
            for (int l = 0; l < k_count; ++l) {
                const std::size_t ll = static_cast<std::size_t>(l);
                const double gr = gs_[ll][p] + (m == l ? 1.0 : 0.0);
                const double gl = gs_[ll][p + 1];
                J_(ll, kk) += 0.5 * w / params_.eta[ll] * (gr * hr + gl * hl);
            }
        }
    }
}

void FitState::rebuild_all() {
    const int k_count = params_.mark_count();
    gs_.assign(static_cast<std::size_t>(k_count), {});
    rs_.assign(static_cast<std::size_t>(k_count), {});
    H_.assign(static_cast<std::size_t>(k_count), {});
    exp_neg_gamma_ = Matrix(static_cast<std::size_t>(k_count), static_cast<std::size_t>(k_count));
    for (int l = 0; l < k_count; ++l) {
        rebuild_gs(l, params_.eta[static_cast<std::size_t>(l)], gs_[static_cast<std::size_t>(l)]);
        rebuild_rs(l, params_.phi[static_cast<std::size_t>(l)], rs_[static_cast<std::size_t>(l)]);
        for (int k = 0; k < k_count; ++k)
            exp_neg_gamma_(l, k) = std::exp(-params_.gamma(l, k));
    }
    for (int k = 0; k < k_count; ++k) rebuild_H(k, H_[static_cast<std::size_t>(k)]);
    rebuild_mu();
    rebuild_base();
    rebuild_integrals();
    pending_ = PendingKind::none;
}

void FitState::set_params(const ExInParams& params) {
    params.validate();
    if (params.mark_count() != seq_->mark_count())
        throw ValidationError("parameter mark count does not match the sequence");
    params_ = params;
    rebuild_all();
}

double FitState::lambda_total(int k) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    double lam = 0.0;
    for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg)
        lam += mu_seg_[kk][seg] * B_[kk][seg];
    for (int l = 0; l < params_.mark_count(); ++l) {
        const double a = params_.alpha(l, k);
        if (a != 0.0) lam += a * J_(static_cast<std::size_t>(l), kk);
    }
    return lam;
}

double FitState::lambda_from(int k, std::span<const double> b_col, std::span<const double> j_col,
                             const double* alpha_override_lk, int l_override) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    double lam = 0.0;
    for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg)
        lam += mu_seg_[kk][seg] * b_col[seg];
    for (int l = 0; l < params_.mark_count(); ++l) {
        double a = params_.alpha(l, k);
        if (alpha_override_lk && l == l_override) a = *alpha_override_lk;
        if (a != 0.0) lam += a * j_col[static_cast<std::size_t>(l)];
    }
    return lam;
}

double FitState::compensator_total(int k) const { return lambda_total(k); }

double FitState::background_subcompensator(int k) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    double v = 0.0;
    for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg)
        v += mu_seg_[kk][seg] * B_[kk][seg];
    return v;
}

double FitState::excitation_subcompensator(int k) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    double v = 0.0;
    for (int l = 0; l < params_.mark_count(); ++l) {
        const double a = params_.alpha(l, k);
        if (a != 0.0) v += a * J_(static_cast<std::size_t>(l), kk);
    }
    return v;
}

double FitState::event_log_H(std::size_t i) const {
    const int k = (*seq_)[i].mark;
    double s = 0.0;
    for (int l = 0; l < params_.mark_count(); ++l) {
        const double g = params_.gamma(l, k);
        if (g != 0.0) s += g * rs_[static_cast<std::size_t>(l)][node_of_event_[i]];
    }
    return -s;
}

double FitState::event_log_lambda(std::size_t i) const {
    return std::log(base_event_[i]) + event_log_H(i);
}

double FitState::observed_loglik() const {
    double total = 0.0;
    for (std::size_t i = 0; i < seq_->size(); ++i) {
        const double ll = event_log_lambda(i);
        if (!std::isfinite(ll)) return kNegInf;
        total += ll;
    }
    for (int k = 0; k < params_.mark_count(); ++k) total -= lambda_total(k);
    return total;
}

double FitState::interval_compensators(std::vector<double>& out) const {
    out.assign(seq_->size(), 0.0);
    double tail = 0.0;
    const int k_count = params_.mark_count();
    std::size_t bin = 0;
    for (std::size_t p = 0; p + 1 < nodes_.size(); ++p) {
        const double w = nodes_[p + 1] - nodes_[p];
        const int m = node_event_mark_[p];
        double v = 0.0;
        for (int k = 0; k < k_count; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const double mu = mu_seg_[kk][panel_seg_[p]];
            double gr = 0.0, gl = 0.0;
            for (int l = 0; l < k_count; ++l) {
                const double a = params_.alpha(l, k);
                if (a == 0.0) continue;
                const std::size_t ll = static_cast<std::size_t>(l);
                const double inv_eta = 1.0 / params_.eta[ll];
                gr += a * inv_eta * (gs_[ll][p] + (m == l ? 1.0 : 0.0));
                gl += a * inv_eta * gs_[ll][p + 1];
            }
            const double hr = (m >= 0) ? H_[kk][p] * exp_neg_gamma_(m, k) : H_[kk][p];
            const double hl = H_[kk][p + 1];
            v += 0.5 * w * ((mu + gr) * hr + (mu + gl) * hl);
        }
        if (bin < out.size())
            out[bin] += v;
        else
            tail += v;
        if (node_event_[p + 1] >= 0) ++bin;
    }
    return tail;
}

double FitState::tail_compensator() const {
    std::vector<double> tmp;
    return interval_compensators(tmp);
}

void FitState::mark_interval_compensators(int k, std::vector<double>& out, double& tail) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    out.assign(seq_->indices_of_mark(k).size(), 0.0);
    tail = 0.0;
    const int k_count = params_.mark_count();
    std::size_t bin = 0;
    for (std::size_t p = 0; p + 1 < nodes_.size(); ++p) {
        const double w = nodes_[p + 1] - nodes_[p];
        const int m = node_event_mark_[p];
        const double mu = mu_seg_[kk][panel_seg_[p]];
        double gr = 0.0, gl = 0.0;
        for (int l = 0; l < k_count; ++l) {
            const double a = params_.alpha(l, k);
            if (a == 0.0) continue;
            const std::size_t ll = static_cast<std::size_t>(l);
            const double inv_eta = 1.0 / params_.eta[ll];
            gr += a * inv_eta * (gs_[ll][p] + (m == l ? 1.0 : 0.0));
            gl += a * inv_eta * gs_[ll][p + 1];
        }
        const double hr = (m >= 0) ? H_[kk][p] * exp_neg_gamma_(m, k) : H_[kk][p];
        const double hl = H_[kk][p + 1];
        const double v = 0.5 * w * ((mu + gr) * hr + (mu + gl) * hl);
        if (bin < out.size())
            out[bin] += v;
        else
            tail += v;
        if (node_event_mark_[p + 1] == k) ++bin;
    }
}

double FitState::propose_beta(int k, std::span<const double> beta_row,
                              std::span<const std::size_t> background_events) {
    assert(pending_ == PendingKind::none);
    const std::size_t kk = static_cast<std::size_t>(k);
    pend_mu_seg_.assign(cov_->segment_count(), 0.0);
    for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg) {
        double xb = 0.0;
        for (std::size_t c = 0; c < cov_->dimension(); ++c)
            xb += cov_->values()(seg, c) * beta_row[c];
        if (params_.link == BackgroundLink::log) {
            pend_mu_seg_[seg] = std::exp(xb);
        } else {
            if (!(xb > 0.0)) return kNegInf; // outside positivity: auto-reject
            pend_mu_seg_[seg] = xb;
        }
    }
    double delta = 0.0;
    for (std::size_t i : background_events) {
        assert((*seq_)[i].mark == k);
        delta += std::log(pend_mu_seg_[seg_of_event_[i]]) - std::log(mu_event_[i]);
    }
    for (std::size_t seg = 0; seg < cov_->segment_count(); ++seg)
        delta -= (pend_mu_seg_[seg] - mu_seg_[kk][seg]) * B_[kk][seg];
    pending_ = PendingKind::beta;
    pend_k_ = k;
    pend_row_.assign(beta_row.begin(), beta_row.end());
    return delta;
}

double FitState::propose_alpha(int l, int k, double alpha_new) {
    assert(pending_ == PendingKind::none);
    const double delta =
        -(alpha_new - params_.alpha(l, k)) * J_(static_cast<std::size_t>(l), static_cast<std::size_t>(k));
    pending_ = PendingKind::alpha;
    pend_l_ = l;
    pend_k_ = k;
    pend_value_ = alpha_new;
    return delta;
}

double FitState::propose_eta(int l, double eta_new) {
    assert(pending_ == PendingKind::none);
    const std::size_t ll = static_cast<std::size_t>(l);
    rebuild_gs(l, eta_new, pend_gs_);
    const int k_count = params_.mark_count();
    pend_J_.assign(static_cast<std::size_t>(k_count), 0.0);
    for (std::size_t p = 0; p + 1 < nodes_.size(); ++p) {
        const double w = nodes_[p + 1] - nodes_[p];
        const int m = node_event_mark_[p];
        const double gr = pend_gs_[p] + (m == l ? 1.0 : 0.0);
        const double gl = pend_gs_[p + 1];
        for (int k = 0; k < k_count; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const double hr = (m >= 0) ? H_[kk][p] * exp_neg_gamma_(m, k) : H_[kk][p];
            const double hl = H_[kk][p + 1];
            pend_J_[kk] += 0.5 * w / eta_new * (gr * hr + gl * hl);
        }
    }
    double delta = 0.0;
    for (int k = 0; k < k_count; ++k) {
        const double a = params_.alpha(l, k);
        if (a != 0.0)
            delta -= a * (pend_J_[static_cast<std::size_t>(k)] - J_(ll, static_cast<std::size_t>(k)));
    }
    pending_ = PendingKind::eta;
    pend_l_ = l;
    pend_value_ = eta_new;
    return delta;
}

void FitState::sweep_modified_H(int k, int l, double coef_old, double coef_new,
                                std::span<const double> rs_old, std::span<const double> rs_new,
                                std::vector<double>& h_out, std::vector<double>& b_out,
                                std::vector<double>& j_out) const {
    const std::size_t kk = static_cast<std::size_t>(k);
    const int k_count = params_.mark_count();
    h_out.assign(nodes_.size(), 0.0);
    b_out.assign(cov_->segment_count(), 0.0);
    j_out.assign(static_cast<std::size_t>(k_count), 0.0);
    const double exp_neg_new = std::exp(-coef_new);
    for (std::size_t j = 0; j < nodes_.size(); ++j)
        h_out[j] = H_[kk][j] * std::exp(coef_old * rs_old[j] - coef_new * rs_new[j]);
    for (std::size_t p = 0; p + 1 < nodes_.size(); ++p) {
        const double w = nodes_[p + 1] - nodes_[p];
        const int m = node_event_mark_[p];
        double hr = h_out[p];
        if (m >= 0) hr *= (m == l) ? exp_neg_new : exp_neg_gamma_(m, k);
        const double hl = h_out[p + 1];
        b_out[panel_seg_[p]] += 0.5 * w * (hr + hl);
        for (int l2 = 0; l2 < k_count; ++l2) {
            const std::size_t ll2 = static_cast<std::size_t>(l2);
            const double gr = gs_[ll2][p] + (m == l2 ? 1.0 : 0.0);
            const double gl = gs_[ll2][p + 1];
            j_out[ll2] += 0.5 * w / params_.eta[ll2] * (gr * hr + gl * hl);
        }
    }
}

double FitState::propose_gamma(int l, int k, double gamma_new) {
    assert(pending_ == PendingKind::none);
    const std::size_t ll = static_cast<std::size_t>(l);
    const double gamma_old = params_.gamma(l, k);
    const double dgamma = gamma_new - gamma_old;
    sweep_modified_H(k, l, gamma_old, gamma_new, rs_[ll], rs_[ll], pend_H_, pend_B_, pend_J_);
    const double lam_new = lambda_from(k, pend_B_, pend_J_, nullptr, -1);
    double product = 0.0;
    for (std::size_t i : seq_->indices_of_mark(k)) product -= dgamma * rs_[ll][node_of_event_[i]];
    pending_ = PendingKind::gamma;
    pend_l_ = l;
    pend_k_ = k;
    pend_value_ = gamma_new;
    return product - (lam_new - lambda_total(k));
}

double FitState::propose_phi(int l, double phi_new) {
    assert(pending_ == PendingKind::none);
    const std::size_t ll = static_cast<std::size_t>(l);
    rebuild_rs(l, phi_new, pend_rs_);
    const int k_count = params_.mark_count();
    pend_affected_.clear();
    pend_H_multi_.resize(static_cast<std::size_t>(k_count));
    pend_B_multi_.resize(static_cast<std::size_t>(k_count));
    pend_J_multi_.resize(static_cast<std::size_t>(k_count));
    double delta = 0.0;
    for (int k = 0; k < k_count; ++k) {
        const double g = params_.gamma(l, k);
        if (g == 0.0) continue;
        const std::size_t slot = pend_affected_.size();
        pend_affected_.push_back(k);
        sweep_modified_H(k, l, g, g, rs_[ll], pend_rs_, pend_H_multi_[slot], pend_B_multi_[slot],
                         pend_J_multi_[slot]);
        const double lam_new = lambda_from(k, pend_B_multi_[slot], pend_J_multi_[slot], nullptr, -1);
        double product = 0.0;
        for (std::size_t i : seq_->indices_of_mark(k)) {
            const std::size_t j = node_of_event_[i];
            product -= g * (pend_rs_[j] - rs_[ll][j]);
        }
        delta += product - (lam_new - lambda_total(k));
    }
    pending_ = PendingKind::phi;
    pend_l_ = l;
    pend_value_ = phi_new;
    return delta;
}

double FitState::propose_edge_marginal(int l, int k, double alpha_new, double gamma_new) {
    assert(pending_ == PendingKind::none);
    const std::size_t ll = static_cast<std::size_t>(l);
    const std::size_t kk = static_cast<std::size_t>(k);
    const double alpha_old = params_.alpha(l, k);
    const double gamma_old = params_.gamma(l, k);
    const double dalpha = alpha_new - alpha_old;
    const double dgamma = gamma_new - gamma_old;
    const double inv_eta = 1.0 / params_.eta[ll];

    double lam_new;
    if (dgamma != 0.0) {
        sweep_modified_H(k, l, gamma_old, gamma_new, rs_[ll], rs_[ll], pend_H_, pend_B_, pend_J_);
        lam_new = lambda_from(k, pend_B_, pend_J_, &alpha_new, l);
    } else {
        lam_new = lambda_total(k) + dalpha * J_(ll, kk);
    }
    double product = 0.0;
    for (std::size_t i : seq_->indices_of_mark(k)) {
        const std::size_t j = node_of_event_[i];
        if (dalpha != 0.0)
            product += std::log(base_event_[i] + dalpha * inv_eta * gs_[ll][j]) -
                       std::log(base_event_[i]);
        if (dgamma != 0.0) product -= dgamma * rs_[ll][j];
    }
    pending_ = PendingKind::edge;
    pend_l_ = l;
    pend_k_ = k;
    pend_value_ = alpha_new;
    pend_value2_ = gamma_new;
    return product - (lam_new - lambda_total(k));
}

void FitState::commit_pending() {
    const std::size_t ll = static_cast<std::size_t>(pend_l_);
    const std::size_t kk = static_cast<std::size_t>(pend_k_);
    switch (pending_) {
    case PendingKind::none:
        throw ValidationError("no pending proposal to commit");
    case PendingKind::beta: {
        Matrix& b = params_.beta[static_cast<std::size_t>(seq_->replicate_id())];
        for (std::size_t c = 0; c < pend_row_.size(); ++c) b(pend_k_, c) = pend_row_[c];
        mu_seg_[kk] = pend_mu_seg_;
        for (std::size_t i : seq_->indices_of_mark(pend_k_)) {
            const double mu_new = pend_mu_seg_[seg_of_event_[i]];
            base_event_[i] += mu_new - mu_event_[i];
            mu_event_[i] = mu_new;
        }
        break;
    }
    case PendingKind::alpha: {
        const double dalpha = pend_value_ - params_.alpha(pend_l_, pend_k_);
        params_.alpha_star(ll, kk) = pend_value_;
        params_.include_alpha(ll, kk) = 1.0;
        const double inv_eta = 1.0 / params_.eta[ll];
        for (std::size_t i : seq_->indices_of_mark(pend_k_))
            base_event_[i] += dalpha * inv_eta * gs_[ll][node_of_event_[i]];
        break;
    }
    case PendingKind::eta: {
        params_.eta[ll] = pend_value_;
        gs_[ll].swap(pend_gs_);
        for (int k = 0; k < params_.mark_count(); ++k)
            J_(ll, static_cast<std::size_t>(k)) = pend_J_[static_cast<std::size_t>(k)];
        rebuild_base();
        break;
    }
    case PendingKind::gamma: {
        if (pend_value_ > 0.0) {
            params_.gamma_star(ll, kk) = pend_value_;
            params_.include_gamma(ll, kk) = 1.0;
        } else {
            params_.include_gamma(ll, kk) = 0.0;
        }
        exp_neg_gamma_(ll, kk) = std::exp(-params_.gamma(pend_l_, pend_k_));
        H_[kk].swap(pend_H_);
        B_[kk] = pend_B_;
        for (int l = 0; l < params_.mark_count(); ++l)
            J_(static_cast<std::size_t>(l), kk) = pend_J_[static_cast<std::size_t>(l)];
        break;
    }
    case PendingKind::phi: {
        params_.phi[ll] = pend_value_;
        rs_[ll].swap(pend_rs_);
        for (std::size_t slot = 0; slot < pend_affected_.size(); ++slot) {
            const std::size_t ak = static_cast<std::size_t>(pend_affected_[slot]);
            H_[ak].swap(pend_H_multi_[slot]);
            B_[ak] = pend_B_multi_[slot];
            for (int l = 0; l < params_.mark_count(); ++l)
                J_(static_cast<std::size_t>(l), ak) = pend_J_multi_[slot][static_cast<std::size_t>(l)];
        }
        break;
    }
    case PendingKind::edge: {
        const double alpha_old = params_.alpha(pend_l_, pend_k_);
        if (pend_value_ > 0.0) {
            params_.alpha_star(ll, kk) = pend_value_;
            params_.include_alpha(ll, kk) = 1.0;
        } else {
            params_.include_alpha(ll, kk) = 0.0;
        }
        const double gamma_old = params_.gamma(pend_l_, pend_k_);
        if (pend_value2_ > 0.0) {
            params_.gamma_star(ll, kk) = pend_value2_;
            params_.include_gamma(ll, kk) = 1.0;
        } else {
            params_.include_gamma(ll, kk) = 0.0;
        }
        const double dalpha = pend_value_ - alpha_old;
        if (dalpha != 0.0) {
            const double inv_eta = 1.0 / params_.eta[ll];
            for (std::size_t i : seq_->indices_of_mark(pend_k_))
                base_event_[i] += dalpha * inv_eta * gs_[ll][node_of_event_[i]];
        }
        if (pend_value2_ != gamma_old) {
            exp_neg_gamma_(ll, kk) = std::exp(-params_.gamma(pend_l_, pend_k_));
            H_[kk].swap(pend_H_);
            B_[kk] = pend_B_;
            for (int l = 0; l < params_.mark_count(); ++l)
                J_(static_cast<std::size_t>(l), kk) = pend_J_[static_cast<std::size_t>(l)];
        }
        break;
    }
    }
    pending_ = PendingKind::none;
}

void FitState::discard_pending() { pending_ = PendingKind::none; }

double FitState::cache_drift() const {
    FitState fresh(*seq_, *cov_, params_, quad_);
    double worst = 0.0;
    auto rel = [](double a, double b) {
        const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
        return std::abs(a - b) / scale;
    };
    for (int k = 0; k < params_.mark_count(); ++k) {
        worst = std::max(worst, rel(lambda_total(k), fresh.lambda_total(k)));
        worst = std::max(worst,
                         rel(background_subcompensator(k), fresh.background_subcompensator(k)));
    }
    for (std::size_t i = 0; i < seq_->size(); ++i)
        worst = std::max(worst, rel(base_event_[i], fresh.base_event_[i]));
    return worst;
}

} // namespace exin

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exin/events.hpp"
#include "exin/likelihood.hpp"
#include "exin/params.hpp"

namespace exin {

// Cached intensity evaluation for one replicate on a fixed integration grid.
//
// The grid has a node at every event time and covariate knot, with
// `quad.subdivisions` equal trapezoid panels between consecutive knots. For
// each source mark l the decayed kernel sums
//   gs_l(u) = sum_{t_i < u, m_i = l} exp(-(u - t_i)/eta_l)
//   rs_l(u) = sum_{t_i < u, m_i = l} exp(-(u - t_i)/phi_l)
// are stored at every node (left limits), along with the inhibition factors
// H_k(u) and the basis integrals
//   B[k][seg] = integral of H_k over the covariate segment
//   J[l][k]   = integral of (gs_l / eta_l) * H_k over (0, T]
// so that Lambda_k = sum_seg mu_k,seg B[k][seg] + sum_l alpha_lk J[l][k].
//
// MCMC updates touch only the pieces a parameter enters: a proposal is
// evaluated into scratch buffers through one of the propose_* methods (which
// return the data term of the log acceptance ratio owed by this replicate)
// and either committed or discarded. Product terms that depend on the latent
// branching structure (triggered-event counts and lag sums) are owned by the
// sampler and passed in.
class FitState {
public:
    FitState(const MarkedEventSequence& seq, const CovariateTrack& cov, const ExInParams& params,
             const QuadratureSpec& quad);

    const MarkedEventSequence& sequence() const { return *seq_; }
    const ExInParams& params() const { return params_; }
    const QuadratureSpec& quadrature() const { return quad_; }

    // Full cache rebuild for an arbitrary parameter set.
    void set_params(const ExInParams& params);

    // ---- summaries under the current parameters ----
    double compensator_total(int k) const;
    double background_subcompensator(int k) const;
    double excitation_subcompensator(int k) const;
    double observed_loglik() const;
    double event_log_lambda(std::size_t i) const;
    double event_mu(std::size_t i) const { return mu_event_[i]; }
    double event_base(std::size_t i) const { return base_event_[i]; }
    double event_log_H(std::size_t i) const;
    double event_gsum(int l, std::size_t i) const {
        return gs_[static_cast<std::size_t>(l)][node_of_event_[i]];
    }
    std::size_t event_segment(std::size_t i) const { return seg_of_event_[i]; }

    // Superposed compensator increments between consecutive events
    // (out[i] = integral of sum_k lambda_k over (t_{i-1}, t_i]); returns the
    // tail over (t_n, T].
    double interval_compensators(std::vector<double>& out) const;
    double tail_compensator() const;
    // Same, for a single mark k with intervals delimited by mark-k events.
    void mark_interval_compensators(int k, std::vector<double>& out, double& tail) const;

    // ---- proposals (one pending at a time) ----
    double propose_beta(int k, std::span<const double> beta_row,
                        std::span<const std::size_t> background_events);
    // Compensator term of an alpha_{l,k} value change; the sampler owns the
    // triggered-count product term.
    double propose_alpha(int l, int k, double alpha_new);
    // Compensator term of an eta_l change (the lag-sum product term is the
    // sampler's).
    double propose_eta(int l, double eta_new);
    double propose_gamma(int l, int k, double gamma_new);
    double propose_phi(int l, double phi_new);
    // Branching-marginalized change of edge (l,k): full data term over the
    // mark-k factors, used by the indicator moves.
    double propose_edge_marginal(int l, int k, double alpha_new, double gamma_new);

    void commit_pending();
    void discard_pending();

    // Debug aid: largest relative inconsistency between cached integrals and
    // a fresh rebuild.
    double cache_drift() const;

private:
    enum class PendingKind { none, beta, alpha, eta, gamma, phi, edge };

    void build_grid();
    void rebuild_all();
    void rebuild_gs(int l, double eta, std::vector<double>& out) const;
    void rebuild_rs(int l, double phi, std::vector<double>& out) const;
    void rebuild_H(int k, std::vector<double>& out) const;
    void rebuild_mu();
    void rebuild_base();
    void rebuild_integrals();
    // Basis integrals under a modified inhibition factor
    //   H'_k(u) = H_k(u) * exp(coef_old * rs_old(u) - coef_new * rs_new(u)),
    // covering both a gamma_{l,k} value change (rs_old == rs_new == rs_l) and a
    // phi_l change (coef_old == coef_new == gamma_{l,k}). Writes H'_k left
    // limits into h_out and fills B'_k (per segment) and J'_{.,k} (per source
    // mark).
    void sweep_modified_H(int k, int l, double coef_old, double coef_new,
                          std::span<const double> rs_old, std::span<const double> rs_new,
                          std::vector<double>& h_out, std::vector<double>& b_out,
                          std::vector<double>& j_out) const;
    double lambda_total(int k) const; // from mu/B/alpha/J
    double lambda_from(int k, std::span<const double> b_col, std::span<const double> j_col,
                       const double* alpha_override_lk, int l_override) const;

    const MarkedEventSequence* seq_;
    const CovariateTrack* cov_;
    QuadratureSpec quad_;
    ExInParams params_;

    // grid
    std::vector<double> nodes_;
    std::vector<int> node_event_;           // event index or -1
    std::vector<int> node_event_mark_;      // mark of that event or -1
    std::vector<std::size_t> panel_seg_;    // covariate segment of panel [j, j+1]
    std::vector<std::size_t> node_of_event_;
    std::vector<std::size_t> seg_of_event_;
    std::vector<std::size_t> first_node_of_interval_; // base-knot interval starts

    // kernel caches (left limits at nodes)
    std::vector<std::vector<double>> gs_, rs_; // per source mark
    std::vector<std::vector<double>> H_;       // per target mark
    Matrix exp_neg_gamma_;                     // exp(-gamma_{l,k})

    // integrals and per-segment/-event values
    std::vector<std::vector<double>> B_;      // [k][seg]
    Matrix J_;                                // (l, k)
    std::vector<std::vector<double>> mu_seg_; // [k][seg]
    std::vector<double> mu_event_;            // mu_{m_i}(t_i)
    std::vector<double> base_event_;          // mu + G at t_i- for the event's own mark

    // pending proposal
    PendingKind pending_ = PendingKind::none;
    int pend_l_ = -1, pend_k_ = -1;
    double pend_value_ = 0.0, pend_value2_ = 0.0;
    std::vector<double> pend_row_, pend_mu_seg_;
    std::vector<double> pend_gs_, pend_rs_, pend_H_;
    std::vector<std::vector<double>> pend_H_multi_;
    std::vector<int> pend_affected_;
    std::vector<double> pend_B_, pend_J_;           // single-k scratch
    std::vector<std::vector<double>> pend_B_multi_, pend_J_multi_;
};

} // namespace exin

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exin/events.hpp"
#include "exin/fit_state.hpp"
#include "exin/likelihood.hpp"
#include "exin/matrix.hpp"
#include "exin/params.hpp"
#include "exin/rng.hpp"

namespace exin {

// Priors: N(0, beta_variance) on each background coefficient, standard
// normal slabs on log alpha*, log gamma*, log eta, log phi, and spike-and-slab
// inclusion probabilities per interaction pair. The pair indicator prior is
// the product Bernoulli(p) x Bernoulli(pi) conditioned on the admissible
// states {(1,0), (0,1), (0,0)}.
struct PriorSpec {
    double beta_variance = 10.0;
    double slab_sd = 1.0;
    double inclusion_alpha = 0.5;
    double inclusion_gamma = 0.5;
    std::optional<Matrix> inclusion_alpha_matrix; // per-pair overrides (l, k)
    std::optional<Matrix> inclusion_gamma_matrix;

    double p_alpha(int l, int k) const;
    double p_gamma(int l, int k) const;
    double log_state_prior(int l, int k, bool alpha_on, bool gamma_on) const;
    void validate(int mark_count) const;
};

struct McmcConfig {
    int iterations = 20000;
    int burn_in = 10000;
    int thin = 1;
    std::uint64_t seed = 1;
    int chain_count = 1;
    int adaptation_window = 5000;           // first iterations with scale adaptation
    double target_acceptance = 0.3;
    double initial_scale_beta = 0.1;        // proposal scales per block
    double initial_scale_positive = 0.3;    // log-scale random walk for positive parameters
    QuadratureSpec quad{};
    bool store_pointwise = false;
    // Component toggles for conditioning runs and tests.
    bool update_beta = true;
    bool update_alpha = true;
    bool update_eta = true;
    bool update_gamma = true;
    bool update_phi = true;
    bool update_indicators = true;

    void validate() const;
};

struct AcceptanceEntry {
    std::string block;
    std::uint64_t proposals = 0;
    std::uint64_t accepts = 0;

    double rate() const { return proposals ? static_cast<double>(accepts) / proposals : 0.0; }
};

// Retained posterior sample: one row per draw of the flattened parameters,
// the observed-data log-likelihood per draw, optional per-event pointwise
// log-likelihood contributions (for WAIC), and per-block acceptance tallies.
struct PosteriorDraws {
    std::vector<std::string> names;
    Matrix samples;
    std::vector<double> loglik;
    Matrix pointwise;
    std::vector<AcceptanceEntry> acceptance;
    ModelVariant variant = ModelVariant::exc_inh;
    BackgroundLink link = BackgroundLink::linear;
    int mark_count = 0;
    int replicate_count = 0;
    int covariate_dim = 0;

    static std::vector<std::string> param_names(int replicates, int marks, int cov_dim);

    std::size_t draw_count() const { return samples.rows(); }
    std::size_t column_index(std::string_view name) const;
    std::vector<double> column(std::string_view name) const;
    ExInParams params_at(std::size_t draw) const;
};

// Draws one branching assignment from the exact conditional: background with
// weight mu_{m_i}(t_i), parent j with weight alpha_{m_j,m_i} g_{m_j}(t_i - t_j).
BranchingAssignment sample_branching(const MarkedEventSequence& seq, const ExInParams& params,
                                     const CovariateTrack& cov, Rng& rng);

// Shortest interval containing ceil(level * n) of the samples.
std::pair<double, double> hpd_interval(std::span<const double> samples, double level);

// Metropolis-Hastings-within-Gibbs sampler with latent branching augmentation
// and spike-and-slab edge selection. One sweep is: resample branching,
// update beta blocks, update the (indicator, alpha*, eta) block, update the
// (gamma*, phi) block. Indicator moves use the branching-marginalized
// likelihood of the affected target mark and immediately refresh that mark's
// branching variables.
class Sampler {
public:
    enum class Block { beta, alpha_eta, gamma_phi };

    Sampler(std::span<const MarkedEventSequence> data, const CovariateTrack& cov,
            ModelVariant variant, const PriorSpec& prior, const McmcConfig& config,
            ExInParams initial);

    void resample_branching(Rng& rng);
    void update_block(Block block, Rng& rng, bool adapt);
    void sweep(Rng& rng, bool adapt);

    const ExInParams& params() const { return params_; }
    const std::vector<BranchingAssignment>& branching() const { return z_; }
    double observed_loglik() const;
    void store_pointwise_row(std::vector<double>& out) const;
    std::vector<AcceptanceEntry> acceptance_report() const;
    ModelVariant variant() const { return variant_; }

private:
    struct Scale {
        double log_scale = 0.0;
        std::uint64_t n = 0;
    };

    void adapt_scale(Scale& s, double accept_prob, bool adapt);
    bool mh_accept(double log_ratio, Rng& rng);
    void rebuild_branching_tables();
    void resample_mark_branching(int mark, Rng& rng);
    void assert_admissible() const;

    void update_beta(Rng& rng, bool adapt);
    void update_indicator_pair(int l, int k, Rng& rng);
    void update_alpha_values(Rng& rng, bool adapt);
    void update_eta_values(Rng& rng, bool adapt);
    void update_gamma_values(Rng& rng, bool adapt);
    void update_phi_values(Rng& rng, bool adapt);

    std::vector<const MarkedEventSequence*> data_;
    const CovariateTrack* cov_;
    ModelVariant variant_;
    PriorSpec prior_;
    McmcConfig config_;
    ExInParams params_;
    std::vector<FitState> states_;

    std::vector<BranchingAssignment> z_;
    std::vector<std::vector<std::vector<std::size_t>>> bg_by_mark_; // [rep][mark]
    Matrix child_count_;                                            // (l, k)
    std::vector<double> child_lag_sum_;                             // per source mark

    std::vector<std::vector<Scale>> beta_scales_;              // [rep][mark]
    std::vector<Scale> eta_scales_, phi_scales_;               // per source mark
    std::vector<Scale> alpha_edge_scales_, gamma_edge_scales_; // per (l,k), row-major

    std::vector<AcceptanceEntry> tallies_;
    AcceptanceEntry& tally(const std::string& block);
};

// Initial state used by run_mcmc: crude-rate intercepts, diagonal pairs
// active on the side the variant allows, alpha* = gamma* = 0.5, eta = phi = 1.
ExInParams default_initial_params(std::span<const MarkedEventSequence> data,
                                  const CovariateTrack& cov, ModelVariant variant,
                                  BackgroundLink link);

PosteriorDraws run_mcmc(std::span<const MarkedEventSequence> data, const CovariateTrack& cov,
                        ModelVariant variant, const PriorSpec& prior, const McmcConfig& config,
                        BackgroundLink link = BackgroundLink::linear);

} // namespace exin

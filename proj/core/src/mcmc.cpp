#include "exin/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <limits>
#include <sstream>
#include <thread>

#include "exin/errors.hpp"
#include "exin/model.hpp"

namespace exin {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
} // namespace

// ---------------------------------------------------------------------------
// PriorSpec / McmcConfig
// ---------------------------------------------------------------------------

double PriorSpec::p_alpha(int l, int k) const {
    if (inclusion_alpha_matrix) return (*inclusion_alpha_matrix)(l, k);
    return inclusion_alpha;
}

double PriorSpec::p_gamma(int l, int k) const {
    if (inclusion_gamma_matrix) return (*inclusion_gamma_matrix)(l, k);
    return inclusion_gamma;
}

double PriorSpec::log_state_prior(int l, int k, bool alpha_on, bool gamma_on) const {
    const double p = p_alpha(l, k);
    const double q = p_gamma(l, k);
    const double z = 1.0 - p * q;
    double mass;
    if (alpha_on && gamma_on)
        throw ValidationError("indicator state (1,1) violates the exclusivity constraint");
    else if (alpha_on)
        mass = p * (1.0 - q);
    else if (gamma_on)
        mass = (1.0 - p) * q;
    else
        mass = (1.0 - p) * (1.0 - q);
    return std::log(mass) - std::log(z);
}

void PriorSpec::validate(int mark_count) const {
    if (!(beta_variance > 0.0)) throw ValidationError("beta prior variance must be positive");
    if (!(slab_sd > 0.0)) throw ValidationError("slab standard deviation must be positive");
    auto check_p = [](double p) {
        if (!(p >= 0.0) || !(p <= 1.0))
            throw ValidationError("inclusion probabilities must lie in [0, 1]");
    };
    check_p(inclusion_alpha);
    check_p(inclusion_gamma);
    const std::size_t kc = static_cast<std::size_t>(mark_count);
    for (const auto& m : {inclusion_alpha_matrix, inclusion_gamma_matrix}) {
        if (!m) continue;
        if (m->rows() != kc || m->cols() != kc)
            throw ValidationError("inclusion probability matrix must be mark_count x mark_count");
        for (double v : m->data()) check_p(v);
    }
    for (int l = 0; l < mark_count; ++l)
        for (int k = 0; k < mark_count; ++k)
            if (p_alpha(l, k) * p_gamma(l, k) >= 1.0)
                throw ValidationError("joint inclusion probabilities leave no admissible state");
}

void McmcConfig::validate() const {
    if (iterations <= 0) throw ValidationError("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
        throw ValidationError("burn_in must satisfy 0 <= burn_in < iterations (no draws would "
                              "be retained otherwise)");
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (chain_count < 1) throw ValidationError("chain_count must be >= 1");
    if (adaptation_window < 0) throw ValidationError("adaptation window must be >= 0");
    if (!(target_acceptance > 0.0) || !(target_acceptance < 1.0))
        throw ValidationError("target acceptance must lie in (0, 1)");
    if (!(initial_scale_beta > 0.0) || !(initial_scale_positive > 0.0))
        throw ValidationError("proposal scales must be positive");
    quad.validate();
}

// ---------------------------------------------------------------------------
// PosteriorDraws
// ---------------------------------------------------------------------------

std::vector<std::string> PosteriorDraws::param_names(int replicates, int marks, int cov_dim) {
    std::vector<std::string> names;
    auto tag = [](const std::string& base, std::initializer_list<int> idx) {
        std::ostringstream s;
        s << base;
        for (int i : idx) s << "." << (i + 1);
        return s.str();
    };
    for (int d = 0; d < replicates; ++d)
        for (int k = 0; k < marks; ++k)
            for (int c = 0; c < cov_dim; ++c) names.push_back(tag("beta", {d, k, c}));
    for (int l = 0; l < marks; ++l)
        for (int k = 0; k < marks; ++k) names.push_back(tag("alpha_star", {l, k}));
    for (int l = 0; l < marks; ++l)
        for (int k = 0; k < marks; ++k) names.push_back(tag("include_alpha", {l, k}));
    for (int l = 0; l < marks; ++l)
        for (int k = 0; k < marks; ++k) names.push_back(tag("gamma_star", {l, k}));
    for (int l = 0; l < marks; ++l)
        for (int k = 0; k < marks; ++k) names.push_back(tag("include_gamma", {l, k}));
    for (int l = 0; l < marks; ++l) names.push_back(tag("eta", {l}));
    for (int l = 0; l < marks; ++l) names.push_back(tag("phi", {l}));
    return names;
}

std::size_t PosteriorDraws::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw ValidationError("unknown parameter column: " + std::string(name));
}

std::vector<double> PosteriorDraws::column(std::string_view name) const {
    const std::size_t c = column_index(name);
    std::vector<double> out(draw_count());
    for (std::size_t r = 0; r < draw_count(); ++r) out[r] = samples(r, c);
    return out;
}

namespace {

void flatten_params(const ExInParams& p, std::vector<double>& row) {
    row.clear();
    for (const Matrix& b : p.beta)
        for (double v : b.data()) row.push_back(v);
    for (double v : p.alpha_star.data()) row.push_back(v);
    for (double v : p.include_alpha.data()) row.push_back(v);
    for (double v : p.gamma_star.data()) row.push_back(v);
    for (double v : p.include_gamma.data()) row.push_back(v);
    for (double v : p.eta) row.push_back(v);
    for (double v : p.phi) row.push_back(v);
}

} // namespace

ExInParams PosteriorDraws::params_at(std::size_t draw) const {
    const std::size_t kc = static_cast<std::size_t>(mark_count);
    const std::size_t p = static_cast<std::size_t>(covariate_dim);
    ExInParams out;
    out.link = link;
    std::size_t c = 0;
    for (int d = 0; d < replicate_count; ++d) {
        Matrix b(kc, p);
        for (std::size_t i = 0; i < kc * p; ++i) b.data()[i] = samples(draw, c++);
        out.beta.push_back(std::move(b));
    }
    auto read_matrix = [&]() {
        Matrix m(kc, kc);
        for (std::size_t i = 0; i < kc * kc; ++i) m.data()[i] = samples(draw, c++);
        return m;
    };
    out.alpha_star = read_matrix();
    out.include_alpha = read_matrix();
    out.gamma_star = read_matrix();
    out.include_gamma = read_matrix();
    out.eta.resize(kc);
    for (std::size_t l = 0; l < kc; ++l) out.eta[l] = samples(draw, c++);
    out.phi.resize(kc);
    for (std::size_t l = 0; l < kc; ++l) out.phi[l] = samples(draw, c++);
    return out;
}

// ---------------------------------------------------------------------------
// Branching
// ---------------------------------------------------------------------------

namespace {

// Draws parents for the listed events. mu_at(i) is the background rate at
// event i; gs_at(l, i) the decayed excitation sum of source mark l at t_i-.
// Category weights use the recursion values; the event within the winning
// source mark is found by walking recent events backwards, which matches the
// categorical distribution exactly (the far tail carries weight below the
// 53-bit resolution of the uniform draw).
template <typename MuAt, typename GsAt>
void resample_parents(const MarkedEventSequence& seq, const ExInParams& params, MuAt&& mu_at,
                      GsAt&& gs_at, std::span<const std::size_t> which, Rng& rng,
                      std::vector<int>& parent) {
    const int k_count = params.mark_count();
    std::vector<double> source_weight(static_cast<std::size_t>(k_count));
    for (std::size_t i : which) {
        const int k = seq[i].mark;
        const double t = seq[i].time;
        const double w_bg = mu_at(i);
        double total = w_bg;
        for (int l = 0; l < k_count; ++l) {
            const double a = params.alpha(l, k);
            const double w =
                a == 0.0 ? 0.0 : a / params.eta[static_cast<std::size_t>(l)] * gs_at(l, i);
            source_weight[static_cast<std::size_t>(l)] = w;
            total += w;
        }
        double u = rng.uniform() * total;
        if (u < w_bg || total == w_bg) {
            parent[i] = -1;
            continue;
        }
        u -= w_bg;
        int chosen = -1;
        for (int l = 0; l < k_count; ++l) {
            if (u < source_weight[static_cast<std::size_t>(l)]) {
                chosen = l;
                break;
            }
            u -= source_weight[static_cast<std::size_t>(l)];
        }
        if (chosen < 0) { // numerical shortfall at the far edge
            parent[i] = -1;
            continue;
        }
        const double eta = params.eta[static_cast<std::size_t>(chosen)];
        const double target = u / (params.alpha(chosen, k) / eta); // in [0, gs)
        const auto& idx = seq.indices_of_mark(chosen);
        auto it = std::lower_bound(idx.begin(), idx.end(), i);
        double cum = 0.0;
        int pick = -1;
        while (it != idx.begin()) {
            --it;
            cum += std::exp(-(t - seq[*it].time) / eta);
            if (cum > target) {
                pick = static_cast<int>(*it);
                break;
            }
        }
        if (pick < 0) pick = static_cast<int>(idx.front()); // rounding tail: oldest admissible
        parent[i] = pick;
    }
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace

BranchingAssignment sample_branching(const MarkedEventSequence& seq, const ExInParams& params,
                                     const CovariateTrack& cov, Rng& rng) {
    params.validate();
    const int k_count = params.mark_count();
    const std::size_t n = seq.size();
    // forward recursion of the decayed sums at event times (left limits)
    Matrix gs(n, static_cast<std::size_t>(k_count));
    std::vector<double> state(static_cast<std::size_t>(k_count), 0.0);
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = seq[i].time - prev;
        for (int l = 0; l < k_count; ++l) {
            const std::size_t ll = static_cast<std::size_t>(l);
            state[ll] *= std::exp(-dt / params.eta[ll]);
            gs(i, ll) = state[ll];
        }
        state[static_cast<std::size_t>(seq[i].mark)] += 1.0;
        prev = seq[i].time;
    }
    std::vector<double> mu(n);
    for (std::size_t i = 0; i < n; ++i)
        mu[i] = background_rate(seq[i].time, seq[i].mark, seq.replicate_id(), params, cov);

    BranchingAssignment z;
    z.parent.assign(n, -1);
    const std::vector<std::size_t> which = all_indices(n);
    resample_parents(
        seq, params, [&](std::size_t i) { return mu[i]; },
        [&](int l, std::size_t i) { return gs(i, static_cast<std::size_t>(l)); }, which, rng,
        z.parent);
    return z;
}

std::pair<double, double> hpd_interval(std::span<const double> samples, double level) {
    if (samples.size() < 2) throw ValidationError("hpd_interval requires at least 2 samples");
    if (!(level > 0.0) || !(level < 1.0))
        throw ValidationError("hpd_interval level must lie in (0, 1)");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    std::size_t m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
    m = std::min(std::max<std::size_t>(m, 1), n);
    std::size_t best = 0;
    double best_width = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + m <= n; ++i) {
        const double width = s[i + m - 1] - s[i];
        if (width < best_width) {
            best_width = width;
            best = i;
        }
    }
    return {s[best], s[best + m - 1]};
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

Sampler::Sampler(std::span<const MarkedEventSequence> data, const CovariateTrack& cov,
                 ModelVariant variant, const PriorSpec& prior, const McmcConfig& config,
                 ExInParams initial)
    : cov_(&cov), variant_(variant), prior_(prior), config_(config), params_(std::move(initial)) {
    if (data.empty()) throw ValidationError("no event sequences given");
    config_.validate();
    params_.apply_variant(variant_);
    params_.validate();
    prior_.validate(params_.mark_count());
    const int k_count = params_.mark_count();
    for (std::size_t d = 0; d < data.size(); ++d) {
        if (data[d].mark_count() != k_count)
            throw ValidationError("all replicates must share the mark count");
        if (data[d].replicate_id() != static_cast<int>(d))
            throw ValidationError("replicate_id fields must match the data order");
        data_.push_back(&data[d]);
    }
    if (params_.replicate_count() != static_cast<int>(data.size()))
        throw ValidationError("parameter set needs one beta block per replicate");
    params_.validate_background(cov);
    for (std::size_t d = 0; d < data.size(); ++d)
        states_.emplace_back(data[d], cov, params_, config_.quad);

    const double ll = observed_loglik();
    if (!std::isfinite(ll)) {
        throw NumericalError(
            "non-finite log-likelihood at initialization; check that event times fit the "
            "horizon and that background rates are sensible for the time unit (consider "
            "rescaling time or adjusting initial parameters)");
    }

    z_.resize(data.size());
    for (std::size_t d = 0; d < data.size(); ++d) z_[d].parent.assign(data[d].size(), -1);
    rebuild_branching_tables();

    beta_scales_.assign(data.size(), std::vector<Scale>(static_cast<std::size_t>(k_count)));
    for (auto& per_rep : beta_scales_)
        for (Scale& s : per_rep) s.log_scale = std::log(config_.initial_scale_beta);
    const double ls = std::log(config_.initial_scale_positive);
    eta_scales_.assign(static_cast<std::size_t>(k_count), Scale{ls, 0});
    phi_scales_.assign(static_cast<std::size_t>(k_count), Scale{ls, 0});
    alpha_edge_scales_.assign(static_cast<std::size_t>(k_count * k_count), Scale{ls, 0});
    gamma_edge_scales_.assign(static_cast<std::size_t>(k_count * k_count), Scale{ls, 0});
}

AcceptanceEntry& Sampler::tally(const std::string& block) {
    for (AcceptanceEntry& e : tallies_)
        if (e.block == block) return e;
    tallies_.push_back({block, 0, 0});
    return tallies_.back();
}

std::vector<AcceptanceEntry> Sampler::acceptance_report() const { return tallies_; }

void Sampler::adapt_scale(Scale& s, double accept_prob, bool adapt) {
    if (!adapt) return;
    s.n += 1;
    const double step = std::pow(static_cast<double>(s.n) + 10.0, -0.6);
    s.log_scale += step * (accept_prob - config_.target_acceptance);
    s.log_scale = std::clamp(s.log_scale, -12.0, 5.0);
}

bool Sampler::mh_accept(double log_ratio, Rng& rng) {
    const double u = rng.uniform_pos();
    return std::log(u) < log_ratio;
}

void Sampler::rebuild_branching_tables() {
    const int k_count = params_.mark_count();
    child_count_ = Matrix(static_cast<std::size_t>(k_count), static_cast<std::size_t>(k_count));
    child_lag_sum_.assign(static_cast<std::size_t>(k_count), 0.0);
    bg_by_mark_.assign(data_.size(), {});
    for (std::size_t d = 0; d < data_.size(); ++d) {
        const MarkedEventSequence& seq = *data_[d];
        bg_by_mark_[d].assign(static_cast<std::size_t>(k_count), {});
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const int p = z_[d].parent[i];
            if (p < 0) {
                bg_by_mark_[d][static_cast<std::size_t>(seq[i].mark)].push_back(i);
            } else {
                const std::size_t j = static_cast<std::size_t>(p);
                child_count_(seq[j].mark, seq[i].mark) += 1.0;
                child_lag_sum_[static_cast<std::size_t>(seq[j].mark)] += seq[i].time - seq[j].time;
            }
        }
    }
}

void Sampler::assert_admissible() const {
    for (std::size_t d = 0; d < data_.size(); ++d) {
        const MarkedEventSequence& seq = *data_[d];
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const int p = z_[d].parent[i];
            if (p < 0) continue;
            const std::size_t j = static_cast<std::size_t>(p);
            if (j >= i || params_.alpha(seq[j].mark, seq[i].mark) <= 0.0) {
                std::ostringstream msg;
                msg << "branching state left the admissible space: event " << i << " of replicate "
                    << d << " points at event " << j;
                throw NumericalError(msg.str());
            }
        }
    }
}

void Sampler::resample_branching(Rng& rng) {
    for (std::size_t d = 0; d < data_.size(); ++d) {
        const MarkedEventSequence& seq = *data_[d];
        FitState& st = states_[d];
        const std::vector<std::size_t> which = all_indices(seq.size());
        resample_parents(
            seq, params_, [&](std::size_t i) { return st.event_mu(i); },
            [&](int l, std::size_t i) { return st.event_gsum(l, i); }, which, rng, z_[d].parent);
    }
    rebuild_branching_tables();
    assert_admissible();
}

void Sampler::resample_mark_branching(int mark, Rng& rng) {
    for (std::size_t d = 0; d < data_.size(); ++d) {
        const MarkedEventSequence& seq = *data_[d];
        FitState& st = states_[d];
        resample_parents(
            seq, params_, [&](std::size_t i) { return st.event_mu(i); },
            [&](int l, std::size_t i) { return st.event_gsum(l, i); }, seq.indices_of_mark(mark),
            rng, z_[d].parent);
    }
    rebuild_branching_tables();
    assert_admissible();
}

double Sampler::observed_loglik() const {
    double total = 0.0;
    for (const FitState& st : states_) total += st.observed_loglik();
    return total;
}

void Sampler::store_pointwise_row(std::vector<double>& out) const {
    out.clear();
    std::vector<double> incr;
    for (const FitState& st : states_) {
        const double tail = st.interval_compensators(incr);
        const std::size_t n = st.sequence().size();
        for (std::size_t i = 0; i < n; ++i) {
            double v = st.event_log_lambda(i) - incr[i];
            if (i + 1 == n) v -= tail; // fold the tail so the sum equals the log-likelihood
            out.push_back(v);
        }
    }
}

void Sampler::update_beta(Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    const std::size_t p = static_cast<std::size_t>(params_.covariate_dim());
    std::vector<double> row_new(p);
    for (std::size_t d = 0; d < data_.size(); ++d) {
        Matrix& beta = params_.beta[d];
        for (int k = 0; k < k_count; ++k) {
            Scale& sc = beta_scales_[d][static_cast<std::size_t>(k)];
            const double sigma = std::exp(sc.log_scale);
            double dprior = 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                const double old_v = beta(k, c);
                row_new[c] = old_v + sigma * rng.normal();
                dprior += (old_v * old_v - row_new[c] * row_new[c]) / (2.0 * prior_.beta_variance);
            }
            const double ddata =
                states_[d].propose_beta(k, row_new, bg_by_mark_[d][static_cast<std::size_t>(k)]);
            AcceptanceEntry& t = tally("beta");
            t.proposals += 1;
            if (ddata == kNegInf) { // outside positivity
                adapt_scale(sc, 0.0, adapt);
                continue;
            }
            const double log_ratio = ddata + dprior;
            const double prob = std::exp(std::min(0.0, log_ratio));
            if (mh_accept(log_ratio, rng)) {
                states_[d].commit_pending();
                for (std::size_t c = 0; c < p; ++c) beta(k, c) = row_new[c];
                t.accepts += 1;
            } else {
                states_[d].discard_pending();
            }
            adapt_scale(sc, prob, adapt);
        }
    }
}

void Sampler::update_indicator_pair(int l, int k, Rng& rng) {
    const bool a_on = params_.alpha_active(l, k);
    const bool g_on = params_.gamma_active(l, k);
    const bool exc_allowed = variant_ != ModelVariant::inh_only;
    const bool inh_allowed = variant_ != ModelVariant::exc_only;
    const double pick = rng.uniform();

    double a_new = 0.0, g_new = 0.0;
    bool alpha_side_changes = false;
    if (!a_on && !g_on) {
        if (pick < 0.5) {
            if (!exc_allowed) return;
            a_new = std::exp(rng.normal(0.0, prior_.slab_sd));
            alpha_side_changes = true;
        } else {
            if (!inh_allowed) return;
            g_new = std::exp(rng.normal(0.0, prior_.slab_sd));
        }
    } else if (a_on) {
        alpha_side_changes = true;
        if (pick < 0.5) {
            // death to (0,0)
        } else {
            if (!inh_allowed) return;
            g_new = std::exp(rng.normal(0.0, prior_.slab_sd)); // switch to inhibition
        }
    } else {
        if (pick < 0.5) {
            // death to (0,0)
        } else {
            if (!exc_allowed) return;
            a_new = std::exp(rng.normal(0.0, prior_.slab_sd)); // switch to excitation
            alpha_side_changes = true;
        }
    }

    const double dprior = prior_.log_state_prior(l, k, a_new > 0.0, g_new > 0.0) -
                          prior_.log_state_prior(l, k, a_on, g_on);
    double ddata = 0.0;
    for (FitState& st : states_) ddata += st.propose_edge_marginal(l, k, a_new, g_new);
    const double log_ratio = ddata + dprior;
    AcceptanceEntry& t = tally("indicators");
    t.proposals += 1;
    if (mh_accept(log_ratio, rng)) {
        for (FitState& st : states_) st.commit_pending();
        if (a_new > 0.0) {
            params_.alpha_star(l, k) = a_new;
            params_.include_alpha(l, k) = 1.0;
        } else {
            params_.include_alpha(l, k) = 0.0;
        }
        if (g_new > 0.0) {
            params_.gamma_star(l, k) = g_new;
            params_.include_gamma(l, k) = 1.0;
        } else {
            params_.include_gamma(l, k) = 0.0;
        }
        t.accepts += 1;
        if (alpha_side_changes) resample_mark_branching(k, rng);
    } else {
        for (FitState& st : states_) st.discard_pending();
    }
}

void Sampler::update_alpha_values(Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    for (int l = 0; l < k_count; ++l) {
        for (int k = 0; k < k_count; ++k) {
            if (!params_.alpha_active(l, k)) continue;
            Scale& sc = alpha_edge_scales_[static_cast<std::size_t>(l * k_count + k)];
            const double x = std::log(params_.alpha_star(l, k));
            const double x_new = x + std::exp(sc.log_scale) * rng.normal();
            const double a_new = std::exp(x_new);
            double ddata = child_count_(l, k) * (x_new - x);
            for (FitState& st : states_) ddata += st.propose_alpha(l, k, a_new);
            const double dprior = (x * x - x_new * x_new) / (2.0 * prior_.slab_sd * prior_.slab_sd);
            const double log_ratio = ddata + dprior;
            const double prob = std::exp(std::min(0.0, log_ratio));
            AcceptanceEntry& t = tally("alpha");
            t.proposals += 1;
            if (mh_accept(log_ratio, rng)) {
                for (FitState& st : states_) st.commit_pending();
                params_.alpha_star(l, k) = a_new;
                t.accepts += 1;
            } else {
                for (FitState& st : states_) st.discard_pending();
            }
            adapt_scale(sc, prob, adapt);
        }
    }
}

void Sampler::update_eta_values(Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    for (int l = 0; l < k_count; ++l) {
        Scale& sc = eta_scales_[static_cast<std::size_t>(l)];
        const double eta_old = params_.eta[static_cast<std::size_t>(l)];
        const double x = std::log(eta_old);
        const double x_new = x + std::exp(sc.log_scale) * rng.normal();
        const double eta_new = std::exp(x_new);
        double children = 0.0;
        for (int k = 0; k < k_count; ++k) children += child_count_(l, k);
        double ddata = children * (x - x_new) +
                       child_lag_sum_[static_cast<std::size_t>(l)] * (1.0 / eta_old - 1.0 / eta_new);
        for (FitState& st : states_) ddata += st.propose_eta(l, eta_new);
        const double dprior = (x * x - x_new * x_new) / (2.0 * prior_.slab_sd * prior_.slab_sd);
        const double log_ratio = ddata + dprior;
        const double prob = std::exp(std::min(0.0, log_ratio));
        AcceptanceEntry& t = tally("eta");
        t.proposals += 1;
        if (mh_accept(log_ratio, rng)) {
            for (FitState& st : states_) st.commit_pending();
            params_.eta[static_cast<std::size_t>(l)] = eta_new;
            t.accepts += 1;
        } else {
            for (FitState& st : states_) st.discard_pending();
        }
        adapt_scale(sc, prob, adapt);
    }
}

void Sampler::update_gamma_values(Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    for (int l = 0; l < k_count; ++l) {
        for (int k = 0; k < k_count; ++k) {
            if (!params_.gamma_active(l, k)) continue;
            Scale& sc = gamma_edge_scales_[static_cast<std::size_t>(l * k_count + k)];
            const double x = std::log(params_.gamma_star(l, k));
            const double x_new = x + std::exp(sc.log_scale) * rng.normal();
            const double g_new = std::exp(x_new);
            double ddata = 0.0;
            for (FitState& st : states_) ddata += st.propose_gamma(l, k, g_new);
            const double dprior = (x * x - x_new * x_new) / (2.0 * prior_.slab_sd * prior_.slab_sd);
            const double log_ratio = ddata + dprior;
            const double prob = std::exp(std::min(0.0, log_ratio));
            AcceptanceEntry& t = tally("gamma");
            t.proposals += 1;
            if (mh_accept(log_ratio, rng)) {
                for (FitState& st : states_) st.commit_pending();
                params_.gamma_star(l, k) = g_new;
                t.accepts += 1;
            } else {
                for (FitState& st : states_) st.discard_pending();
            }
            adapt_scale(sc, prob, adapt);
        }
    }
}

void Sampler::update_phi_values(Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    for (int l = 0; l < k_count; ++l) {
        Scale& sc = phi_scales_[static_cast<std::size_t>(l)];
        const double x = std::log(params_.phi[static_cast<std::size_t>(l)]);
        const double x_new = x + std::exp(sc.log_scale) * rng.normal();
        const double phi_new = std::exp(x_new);
        double ddata = 0.0;
        for (FitState& st : states_) ddata += st.propose_phi(l, phi_new);
        const double dprior = (x * x - x_new * x_new) / (2.0 * prior_.slab_sd * prior_.slab_sd);
        const double log_ratio = ddata + dprior;
        const double prob = std::exp(std::min(0.0, log_ratio));
        AcceptanceEntry& t = tally("phi");
        t.proposals += 1;
        if (mh_accept(log_ratio, rng)) {
            for (FitState& st : states_) st.commit_pending();
            params_.phi[static_cast<std::size_t>(l)] = phi_new;
            t.accepts += 1;
        } else {
            for (FitState& st : states_) st.discard_pending();
        }
        adapt_scale(sc, prob, adapt);
    }
}

void Sampler::update_block(Block block, Rng& rng, bool adapt) {
    const int k_count = params_.mark_count();
    switch (block) {
    case Block::beta:
        if (config_.update_beta) update_beta(rng, adapt);
        break;
    case Block::alpha_eta:
        if (config_.update_indicators)
            for (int l = 0; l < k_count; ++l)
                for (int k = 0; k < k_count; ++k) update_indicator_pair(l, k, rng);
        if (config_.update_alpha) update_alpha_values(rng, adapt);
        if (config_.update_eta) update_eta_values(rng, adapt);
        break;
    case Block::gamma_phi:
        if (config_.update_gamma) update_gamma_values(rng, adapt);
        if (config_.update_phi) update_phi_values(rng, adapt);
        break;
    }
}

void Sampler::sweep(Rng& rng, bool adapt) {
    resample_branching(rng);
    update_block(Block::beta, rng, adapt);
    update_block(Block::alpha_eta, rng, adapt);
    update_block(Block::gamma_phi, rng, adapt);
}

// ---------------------------------------------------------------------------
// run_mcmc
// ---------------------------------------------------------------------------

ExInParams default_initial_params(std::span<const MarkedEventSequence> data,
                                  const CovariateTrack& cov, ModelVariant variant,
                                  BackgroundLink link) {
    if (data.empty()) throw ValidationError("no event sequences given");
    const int k_count = data.front().mark_count();
    const std::size_t kc = static_cast<std::size_t>(k_count);
    ExInParams p;
    p.link = link;
    for (const MarkedEventSequence& seq : data) {
        Matrix b(kc, cov.dimension());
        for (int k = 0; k < k_count; ++k) {
            const double count =
                std::max(0.5, static_cast<double>(seq.indices_of_mark(k).size()));
            const double rate = count / seq.horizon();
            b(k, 0) = link == BackgroundLink::log ? std::log(rate) : rate;
        }
        p.beta.push_back(std::move(b));
    }
    p.alpha_star = Matrix(kc, kc, 0.5);
    p.gamma_star = Matrix(kc, kc, 0.5);
    p.include_alpha = Matrix(kc, kc, 0.0);
    p.include_gamma = Matrix(kc, kc, 0.0);
    for (int k = 0; k < k_count; ++k) {
        if (variant == ModelVariant::inh_only)
            p.include_gamma(k, k) = 1.0;
        else
            p.include_alpha(k, k) = 1.0;
    }
    p.eta.assign(kc, 1.0);
    p.phi.assign(kc, 1.0);
    p.apply_variant(variant);
    p.validate();
    return p;
}

namespace {

struct ChainResult {
    std::vector<std::vector<double>> samples;
    std::vector<double> loglik;
    std::vector<std::vector<double>> pointwise;
    std::vector<AcceptanceEntry> acceptance;
};

ChainResult run_chain(std::span<const MarkedEventSequence> data, const CovariateTrack& cov,
                      ModelVariant variant, const PriorSpec& prior, const McmcConfig& config,
                      BackgroundLink link, int chain) {
    Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(chain));
    Sampler sampler(data, cov, variant, prior, config,
                    default_initial_params(data, cov, variant, link));
    ChainResult out;
    std::vector<double> row;
    for (int it = 0; it < config.iterations; ++it) {
        const bool adapt = it < std::min(config.adaptation_window, config.burn_in);
        sampler.sweep(rng, adapt);
        if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0) {
            flatten_params(sampler.params(), row);
            out.samples.push_back(row);
            out.loglik.push_back(sampler.observed_loglik());
            if (config.store_pointwise) {
                std::vector<double> pw;
                sampler.store_pointwise_row(pw);
                out.pointwise.push_back(std::move(pw));
            }
        }
    }
    out.acceptance = sampler.acceptance_report();
    return out;
}

unsigned max_worker_threads() {
    if (const char* env = std::getenv("EXIN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

} // namespace

PosteriorDraws run_mcmc(std::span<const MarkedEventSequence> data, const CovariateTrack& cov,
                        ModelVariant variant, const PriorSpec& prior, const McmcConfig& config,
                        BackgroundLink link) {
    config.validate();
    std::vector<ChainResult> chains(static_cast<std::size_t>(config.chain_count));
    const unsigned workers = std::min<unsigned>(max_worker_threads(),
                                                static_cast<unsigned>(config.chain_count));
    if (workers <= 1 || config.chain_count == 1) {
        for (int c = 0; c < config.chain_count; ++c)
            chains[static_cast<std::size_t>(c)] =
                run_chain(data, cov, variant, prior, config, link, c);
    } else {
        // chains are independent; results merge in chain order regardless of scheduling
        std::vector<std::future<ChainResult>> futures;
        futures.reserve(static_cast<std::size_t>(config.chain_count));
        for (int c = 0; c < config.chain_count; ++c)
            futures.push_back(std::async(std::launch::async, [&, c] {
                return run_chain(data, cov, variant, prior, config, link, c);
            }));
        for (int c = 0; c < config.chain_count; ++c)
            chains[static_cast<std::size_t>(c)] = futures[static_cast<std::size_t>(c)].get();
    }

    const int k_count = data.front().mark_count();
    PosteriorDraws out;
    out.variant = variant;
    out.link = link;
    out.mark_count = k_count;
    out.replicate_count = static_cast<int>(data.size());
    out.covariate_dim = static_cast<int>(cov.dimension());
    out.names = PosteriorDraws::param_names(out.replicate_count, k_count, out.covariate_dim);

    std::size_t total_draws = 0;
    for (const ChainResult& c : chains) total_draws += c.samples.size();
    out.samples = Matrix(total_draws, out.names.size());
    out.loglik.reserve(total_draws);
    std::size_t events_total = 0;
    for (const MarkedEventSequence& seq : data) events_total += seq.size();
    if (config.store_pointwise) out.pointwise = Matrix(total_draws, events_total);

    std::size_t r = 0;
    for (const ChainResult& c : chains) {
        for (std::size_t i = 0; i < c.samples.size(); ++i, ++r) {
            for (std::size_t j = 0; j < out.names.size(); ++j) out.samples(r, j) = c.samples[i][j];
            out.loglik.push_back(c.loglik[i]);
            if (config.store_pointwise)
                for (std::size_t j = 0; j < events_total; ++j)
                    out.pointwise(r, j) = c.pointwise[i][j];
        }
        for (const AcceptanceEntry& e : c.acceptance) {
            bool merged = false;
            for (AcceptanceEntry& existing : out.acceptance) {
                if (existing.block == e.block) {
                    existing.proposals += e.proposals;
                    existing.accepts += e.accepts;
                    merged = true;
                    break;
                }
            }
            if (!merged) out.acceptance.push_back(e);
        }
    }
    return out;
}

} // namespace exin

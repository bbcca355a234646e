#include "exin/params.hpp"

#include <cmath>
#include <sstream>

#include "exin/errors.hpp"

namespace exin {

const char* to_string(ModelVariant v) {
    switch (v) {
    case ModelVariant::exc_inh: return "exc_inh";
    case ModelVariant::exc_only: return "exc_only";
    case ModelVariant::inh_only: return "inh_only";
    }
    return "?";
}

const char* to_string(BackgroundLink link) {
    return link == BackgroundLink::linear ? "linear" : "log";
}

bool ExInParams::has_excitation() const {
    const int k_count = mark_count();
    for (int l = 0; l < k_count; ++l)
        for (int k = 0; k < k_count; ++k)
            if (alpha(l, k) > 0.0) return true;
    return false;
}

bool ExInParams::has_inhibition() const {
    const int k_count = mark_count();
    for (int l = 0; l < k_count; ++l)
        for (int k = 0; k < k_count; ++k)
            if (gamma(l, k) > 0.0) return true;
    return false;
}

void ExInParams::validate() const {
    const std::size_t k_count = eta.size();
    if (k_count == 0) throw ValidationError("parameter set has no marks");
    if (phi.size() != k_count) throw ValidationError("eta and phi must have one entry per mark");
    auto check_square = [&](const Matrix& m, const char* name) {
        if (m.rows() != k_count || m.cols() != k_count) {
            std::ostringstream msg;
            msg << name << " must be " << k_count << "x" << k_count;
            throw ValidationError(msg.str());
        }
    };
    check_square(alpha_star, "alpha_star");
    check_square(gamma_star, "gamma_star");
    check_square(include_alpha, "include_alpha");
    check_square(include_gamma, "include_gamma");
    if (beta.empty()) throw ValidationError("at least one replicate of beta is required");
    const std::size_t p = beta.front().cols();
    for (const Matrix& b : beta) {
        if (b.rows() != k_count || b.cols() != p)
            throw ValidationError("every beta block must be mark_count x covariate_dim");
        for (double v : b.data())
            if (!std::isfinite(v)) throw ValidationError("beta must be finite");
    }
    for (std::size_t l = 0; l < k_count; ++l) {
        if (!(eta[l] > 0.0) || !std::isfinite(eta[l]))
            throw ValidationError("eta must be strictly positive");
        if (!(phi[l] > 0.0) || !std::isfinite(phi[l]))
            throw ValidationError("phi must be strictly positive");
        for (std::size_t k = 0; k < k_count; ++k) {
            const double a = alpha_star(l, k);
            const double g = gamma_star(l, k);
            if (!(a >= 0.0) || !std::isfinite(a))
                throw ValidationError("alpha_star must be nonnegative");
            if (!(g >= 0.0) || !std::isfinite(g))
                throw ValidationError("gamma_star must be nonnegative");
            const double ia = include_alpha(l, k);
            const double ig = include_gamma(l, k);
            if ((ia != 0.0 && ia != 1.0) || (ig != 0.0 && ig != 1.0))
                throw ValidationError("inclusion indicators must be 0 or 1");
            if (ia == 1.0 && ig == 1.0) {
                std::ostringstream msg;
                msg << "pair (" << l << "," << k
                    << ") has both excitation and inhibition active; the exclusivity "
                       "constraint requires alpha * gamma = 0";
                throw ValidationError(msg.str());
            }
        }
    }
}

void ExInParams::validate_background(const CovariateTrack& cov) const {
    if (cov.dimension() != static_cast<std::size_t>(covariate_dim()))
        throw ValidationError("covariate dimension does not match beta");
    if (link != BackgroundLink::linear) return;
    for (int d = 0; d < replicate_count(); ++d) {
        for (int k = 0; k < mark_count(); ++k) {
            for (std::size_t seg = 0; seg < cov.segment_count(); ++seg) {
                double xb = 0.0;
                for (std::size_t j = 0; j < cov.dimension(); ++j)
                    xb += cov.values()(seg, j) * beta[static_cast<std::size_t>(d)](k, j);
                if (!(xb > 0.0)) {
                    std::ostringstream msg;
                    msg << "linear background is nonpositive (" << xb << ") for replicate " << d
                        << ", mark " << k << ", covariate segment " << seg;
                    throw ValidationError(msg.str());
                }
            }
        }
    }
}

void ExInParams::apply_variant(ModelVariant v) {
    const int k_count = mark_count();
    for (int l = 0; l < k_count; ++l) {
        for (int k = 0; k < k_count; ++k) {
            if (v == ModelVariant::exc_only) include_gamma(l, k) = 0.0;
            if (v == ModelVariant::inh_only) include_alpha(l, k) = 0.0;
        }
    }
}

ExInParams ExInParams::intercept_only(std::vector<double> mu, Matrix alpha, Matrix gamma,
                                      std::vector<double> eta, std::vector<double> phi) {
    const std::size_t k_count = mu.size();
    ExInParams p;
    p.link = BackgroundLink::linear;
    Matrix b(k_count, 1);
    for (std::size_t k = 0; k < k_count; ++k) b(k, 0) = mu[k];
    p.beta.push_back(std::move(b));
    p.alpha_star = std::move(alpha);
    p.gamma_star = std::move(gamma);
    p.include_alpha = Matrix(k_count, k_count);
    p.include_gamma = Matrix(k_count, k_count);
    for (std::size_t l = 0; l < k_count; ++l) {
        for (std::size_t k = 0; k < k_count; ++k) {
            if (p.alpha_star(l, k) > 0.0) p.include_alpha(l, k) = 1.0;
            if (p.gamma_star(l, k) > 0.0) p.include_gamma(l, k) = 1.0;
        }
    }
    p.eta = std::move(eta);
    p.phi = std::move(phi);
    p.validate();
    return p;
}

} // namespace exin

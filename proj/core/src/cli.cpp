#include "exin/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "exin/diagnostics.hpp"
#include "exin/errors.hpp"
#include "exin/simulate.hpp"
#include "exin/version.hpp"

namespace exin {

namespace fs = std::filesystem;

ModelVariant RunConfig::variant_enum() const {
    if (variant == "exc_inh") return ModelVariant::exc_inh;
    if (variant == "exc_only") return ModelVariant::exc_only;
    if (variant == "inh_only") return ModelVariant::inh_only;
    throw ValidationError("unknown variant '" + variant +
                          "' (expected exc_inh, exc_only, or inh_only)");
}

BackgroundLink RunConfig::link_enum() const {
    if (background_link == "linear") return BackgroundLink::linear;
    if (background_link == "log") return BackgroundLink::log;
    throw ValidationError("unknown background link '" + background_link + "'");
}

namespace {

double kv_number(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + " has a non-numeric value '" + value + "'");
    }
}

bool kv_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ValidationError("config key " + key + " must be true/false");
}

} // namespace

void apply_key_values(RunConfig& c, const KeyValues& kv) {
    for (const auto& [raw_key, value] : kv) {
        std::string key = raw_key;
        if (key.rfind("config.", 0) == 0) key = key.substr(7);
        else if (raw_key.find('.') != std::string::npos &&
                 (raw_key.rfind("input.", 0) == 0)) {
            continue; // manifest provenance entries
        }
        if (key == "version" || key == "command" || key == "model" || key == "mark_count" ||
            key == "replicate_count" || key == "covariate_dim" || key == "config_digest" ||
            key == "events_written" || key == "sl_verb")
            continue; // manifest metadata, not configuration

        if (key == "seed") c.seed = static_cast<std::uint64_t>(kv_number(key, value));
        else if (key == "variant") c.variant = value;
        else if (key == "background_link") c.background_link = value;
        else if (key == "horizon") c.horizon = kv_number(key, value);
        else if (key == "threads") c.threads = static_cast<int>(kv_number(key, value));
        else if (key == "paths.events") c.events_path = value;
        else if (key == "paths.covariates") c.covariates_path = value;
        else if (key == "paths.params") c.params_path = value;
        else if (key == "paths.fit") c.posterior_dir = value;
        else if (key == "paths.out") c.output_dir = value;
        else if (key == "mcmc.iterations") c.mcmc.iterations = static_cast<int>(kv_number(key, value));
        else if (key == "mcmc.burn_in") c.mcmc.burn_in = static_cast<int>(kv_number(key, value));
        else if (key == "mcmc.thin") c.mcmc.thin = static_cast<int>(kv_number(key, value));
        else if (key == "mcmc.chains") c.mcmc.chain_count = static_cast<int>(kv_number(key, value));
        else if (key == "mcmc.adaptation_window")
            c.mcmc.adaptation_window = static_cast<int>(kv_number(key, value));
        else if (key == "mcmc.target_acceptance") c.mcmc.target_acceptance = kv_number(key, value);
        else if (key == "mcmc.scale_beta") c.mcmc.initial_scale_beta = kv_number(key, value);
        else if (key == "mcmc.scale_positive") c.mcmc.initial_scale_positive = kv_number(key, value);
        else if (key == "quad.subdivisions")
            c.mcmc.quad.subdivisions = static_cast<int>(kv_number(key, value));
        else if (key == "quad.closed_form") c.mcmc.quad.closed_form = kv_bool(key, value);
        else if (key == "prior.beta_variance") c.prior.beta_variance = kv_number(key, value);
        else if (key == "prior.slab_sd") c.prior.slab_sd = kv_number(key, value);
        else if (key == "prior.inclusion_alpha") c.prior.inclusion_alpha = kv_number(key, value);
        else if (key == "prior.inclusion_gamma") c.prior.inclusion_gamma = kv_number(key, value);
        else if (key == "sl.mu") c.sl_mu = kv_number(key, value);
        else if (key == "sl.alpha") c.sl_alpha = kv_number(key, value);
        else if (key == "sl.eta") c.sl_eta = kv_number(key, value);
        else if (key == "sl.gamma") c.sl_gamma = kv_number(key, value);
        else if (key == "sl.phi") c.sl_phi = kv_number(key, value);
        else if (key == "sl.fix_gamma") c.sl_fix_gamma = kv_bool(key, value);
        else if (key == "sl.fix_phi") c.sl_fix_phi = kv_bool(key, value);
        else if (key == "assess.per_mark") c.per_mark_qq = kv_bool(key, value);
        else if (key == "assess.max_draws")
            c.assess_max_draws = static_cast<std::size_t>(kv_number(key, value));
        else if (key == "report.level") c.hpd_level = kv_number(key, value);
        else throw ValidationError("unknown config key: " + raw_key);
    }
}

KeyValues serialize_run_config(const RunConfig& c) {
    KeyValues kv;
    auto add = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    add("seed", std::to_string(c.seed));
    add("variant", c.variant);
    add("background_link", c.background_link);
    if (c.horizon) add("horizon", format_double(*c.horizon));
    if (c.threads) add("threads", std::to_string(*c.threads));
    add("paths.events", c.events_path);
    add("paths.covariates", c.covariates_path);
    add("paths.params", c.params_path);
    add("paths.fit", c.posterior_dir);
    add("paths.out", c.output_dir);
    add("mcmc.iterations", std::to_string(c.mcmc.iterations));
    add("mcmc.burn_in", std::to_string(c.mcmc.burn_in));
    add("mcmc.thin", std::to_string(c.mcmc.thin));
    add("mcmc.chains", std::to_string(c.mcmc.chain_count));
    add("mcmc.adaptation_window", std::to_string(c.mcmc.adaptation_window));
    add("mcmc.target_acceptance", format_double(c.mcmc.target_acceptance));
    add("mcmc.scale_beta", format_double(c.mcmc.initial_scale_beta));
    add("mcmc.scale_positive", format_double(c.mcmc.initial_scale_positive));
    add("quad.subdivisions", std::to_string(c.mcmc.quad.subdivisions));
    add("quad.closed_form", c.mcmc.quad.closed_form ? "true" : "false");
    add("prior.beta_variance", format_double(c.prior.beta_variance));
    add("prior.slab_sd", format_double(c.prior.slab_sd));
    add("prior.inclusion_alpha", format_double(c.prior.inclusion_alpha));
    add("prior.inclusion_gamma", format_double(c.prior.inclusion_gamma));
    add("sl.mu", format_double(c.sl_mu));
    add("sl.alpha", format_double(c.sl_alpha));
    add("sl.eta", format_double(c.sl_eta));
    add("sl.gamma", format_double(c.sl_gamma));
    add("sl.phi", format_double(c.sl_phi));
    add("sl.fix_gamma", c.sl_fix_gamma ? "true" : "false");
    add("sl.fix_phi", c.sl_fix_phi ? "true" : "false");
    add("assess.per_mark", c.per_mark_qq ? "true" : "false");
    add("assess.max_draws", std::to_string(c.assess_max_draws));
    add("report.level", format_double(c.hpd_level));
    return kv;
}

namespace {

void write_manifest(const std::string& dir, const RunConfig& c, const KeyValues& extra,
                    const KeyValues& inputs) {
    std::ostringstream out;
    out << "version=" << kVersion << "\n";
    out << "command=" << c.command << (c.sl_verb.empty() ? "" : " " + c.sl_verb) << "\n";
    for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
    std::ostringstream cfg;
    for (const auto& [k, v] : serialize_run_config(c)) cfg << "config." << k << "=" << v << "\n";
    out << "config_digest=" << text_digest(cfg.str()) << "\n";
    out << cfg.str();
    for (const auto& [k, v] : inputs) out << "input." << k << "=" << v << "\n";
    write_text_file(dir + "/manifest.txt", out.str());
}

void ensure_output_dir(const RunConfig& c) {
    if (c.output_dir.empty()) throw ValidationError("an output directory is required (--out)");
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec) throw ValidationError("cannot create output directory: " + c.output_dir);
}

CovariateTrack load_cov_or_constant(const RunConfig& c, double end) {
    if (!c.covariates_path.empty()) return ingest_covariates(c.covariates_path);
    return CovariateTrack::constant(end);
}

int run_simulate(const RunConfig& c) {
    if (c.params_path.empty()) throw ValidationError("simulate requires --params");
    if (!c.horizon) throw ValidationError("simulate requires --horizon");
    ensure_output_dir(c);
    const std::string params_text = read_text_file(c.params_path);
    const ExInParams params = parse_params(params_text);
    MarkLabelMap marks = params_mark_labels(params_text).value_or(
        MarkLabelMap::numeric(params.mark_count()));
    if (marks.size() != params.mark_count())
        throw ValidationError("mark label count does not match mark_count");
    const CovariateTrack cov = load_cov_or_constant(c, *c.horizon);

    std::vector<MarkedEventSequence> sequences;
    std::size_t total = 0;
    for (int d = 0; d < params.replicate_count(); ++d) {
        SimulationConfig sim;
        sim.params = params;
        sim.variant = c.variant_enum();
        sim.horizon = *c.horizon;
        sim.cov = cov;
        sim.seed = Rng::mix(c.seed, static_cast<std::uint64_t>(d));
        sim.replicate = d;
        sequences.push_back(simulate(sim));
        total += sequences.back().size();
    }
    save_events_csv(c.output_dir + "/events.csv", sequences, marks);
    KeyValues inputs;
    inputs.emplace_back("params", file_digest(c.params_path));
    if (!c.covariates_path.empty())
        inputs.emplace_back("covariates", file_digest(c.covariates_path));
    KeyValues extra;
    extra.emplace_back("model", "exin");
    extra.emplace_back("events_written", std::to_string(total));
    write_manifest(c.output_dir, c, extra, inputs);
    std::cout << "simulate: wrote " << total << " events across " << sequences.size()
              << " replicate(s) to " << c.output_dir << "/events.csv\n";
    return 0;
}

int run_fit(const RunConfig& c) {
    if (c.events_path.empty()) throw ValidationError("fit requires --events");
    ensure_output_dir(c);
    const IngestResult ingest = ingest_events(c.events_path, c.horizon);
    for (const std::string& w : ingest.warnings) std::cerr << "warning: " << w << "\n";
    double max_h = 0.0;
    for (const MarkedEventSequence& s : ingest.sequences) max_h = std::max(max_h, s.horizon());
    const CovariateTrack cov = load_cov_or_constant(c, max_h);

    const PosteriorDraws draws =
        run_mcmc(ingest.sequences, cov, c.variant_enum(), c.prior, c.mcmc, c.link_enum());

    save_posterior_csv(c.output_dir + "/posterior.csv", draws);
    save_mark_labels(c.output_dir + "/marks.csv", ingest.marks);
    std::ostringstream acc;
    acc << "block,proposals,accepts,rate\n";
    for (const AcceptanceEntry& e : draws.acceptance)
        acc << e.block << "," << e.proposals << "," << e.accepts << "," << format_double(e.rate())
            << "\n";
    write_text_file(c.output_dir + "/acceptance.txt", acc.str());

    KeyValues extra;
    extra.emplace_back("model", "exin");
    extra.emplace_back("mark_count", std::to_string(draws.mark_count));
    extra.emplace_back("replicate_count", std::to_string(draws.replicate_count));
    extra.emplace_back("covariate_dim", std::to_string(draws.covariate_dim));
    KeyValues inputs;
    inputs.emplace_back("events", file_digest(c.events_path));
    if (!c.covariates_path.empty())
        inputs.emplace_back("covariates", file_digest(c.covariates_path));
    write_manifest(c.output_dir, c, extra, inputs);
    std::cout << "fit: retained " << draws.draw_count() << " draws to " << c.output_dir
              << "/posterior.csv\n";
    return 0;
}

struct FitBundle {
    PosteriorDraws draws;
    MarkLabelMap marks;
    std::string model;
    RunConfig fit_config; // config.* entries of the fit manifest
};

FitBundle load_fit_bundle(const std::string& dir) {
    FitBundle b;
    const KeyValues manifest = load_key_values(dir + "/manifest.txt");
    b.model = kv_find(manifest, "model").value_or("exin");
    RunConfig fc;
    apply_key_values(fc, manifest); // config.* keys
    b.fit_config = fc;
    if (b.model == "self_limiting") {
        PosteriorDraws d;
        // reuse the generic loader by reading columns directly
        d = load_posterior_csv(dir + "/posterior.csv", ModelVariant::exc_inh,
                               BackgroundLink::log, 0, 0, 0);
        b.draws = std::move(d);
        b.marks = MarkLabelMap::numeric(1);
        return b;
    }
    auto req_int = [&](const std::string& k) {
        const auto v = kv_find(manifest, k);
        if (!v) throw ValidationError("fit manifest is missing " + k);
        return static_cast<int>(kv_number(k, *v));
    };
    const int kcount = req_int("mark_count");
    const int reps = req_int("replicate_count");
    const int dim = req_int("covariate_dim");
    b.draws = load_posterior_csv(dir + "/posterior.csv", fc.variant_enum(), fc.link_enum(),
                                 kcount, reps, dim);
    b.marks = load_mark_labels(dir + "/marks.csv");
    return b;
}

// events re-ingested to match the fit (same horizon override and mark space)
std::vector<MarkedEventSequence> reload_events(const RunConfig& c, const FitBundle& bundle) {
    if (c.events_path.empty()) throw ValidationError("this command requires --events");
    std::optional<double> horizon = c.horizon;
    if (!horizon) horizon = bundle.fit_config.horizon;
    const IngestResult ingest = ingest_events(c.events_path, horizon, bundle.draws.mark_count);
    if (ingest.marks.labels != bundle.marks.labels)
        throw ValidationError("event file marks do not match the fitted mark labels");
    return ingest.sequences;
}

int run_assess(const RunConfig& c) {
    if (c.posterior_dir.empty()) throw ValidationError("assess requires --fit");
    ensure_output_dir(c);
    const FitBundle bundle = load_fit_bundle(c.posterior_dir);
    if (bundle.model != "exin")
        throw ValidationError("assess applies to multivariate fits; got model " + bundle.model);
    const std::vector<MarkedEventSequence> data = reload_events(c, bundle);
    double max_h = 0.0;
    for (const MarkedEventSequence& s : data) max_h = std::max(max_h, s.horizon());
    RunConfig cov_source = c;
    if (cov_source.covariates_path.empty())
        cov_source.covariates_path = bundle.fit_config.covariates_path;
    const CovariateTrack cov = load_cov_or_constant(cov_source, max_h);
    const QuadratureSpec quad = c.mcmc.quad;

    const RtctResult rtct =
        rtct_increments(data, bundle.draws, cov, quad, -1, c.assess_max_draws);
    const double msd = qq_msd(rtct);
    const Matrix pointwise = compute_pointwise(data, bundle.draws, cov, quad, c.assess_max_draws);
    const double w = waic(pointwise);

    std::ostringstream qq;
    qq << "theoretical,mean,lo,hi\n";
    for (std::size_t i = 0; i < rtct.theoretical.size(); ++i)
        qq << format_double(rtct.theoretical[i]) << "," << format_double(rtct.mean_ordered[i])
           << "," << format_double(rtct.lo[i]) << "," << format_double(rtct.hi[i]) << "\n";
    write_text_file(c.output_dir + "/qq.csv", qq.str());
    write_text_file(c.output_dir + "/waic.txt", format_double(w) + "\n");
    write_text_file(c.output_dir + "/msd.txt", format_double(msd) + "\n");

    if (c.per_mark_qq) {
        for (int k = 0; k < bundle.draws.mark_count; ++k) {
            const RtctResult rk =
                rtct_increments(data, bundle.draws, cov, quad, k, c.assess_max_draws);
            std::ostringstream qk;
            qk << "theoretical,mean,lo,hi\n";
            for (std::size_t i = 0; i < rk.theoretical.size(); ++i)
                qk << format_double(rk.theoretical[i]) << "," << format_double(rk.mean_ordered[i])
                   << "," << format_double(rk.lo[i]) << "," << format_double(rk.hi[i]) << "\n";
            write_text_file(c.output_dir + "/qq_mark_" +
                                bundle.marks.labels[static_cast<std::size_t>(k)] + ".csv",
                            qk.str());
        }
    }

    KeyValues extra;
    extra.emplace_back("model", "exin");
    extra.emplace_back("waic", format_double(w));
    extra.emplace_back("msd", format_double(msd));
    KeyValues inputs;
    inputs.emplace_back("events", file_digest(c.events_path));
    inputs.emplace_back("posterior", file_digest(c.posterior_dir + "/posterior.csv"));
    write_manifest(c.output_dir, c, extra, inputs);
    std::cout << "assess: waic=" << format_double(w) << " msd=" << format_double(msd) << "\n";
    return 0;
}

int run_decompose(const RunConfig& c) {
    if (c.posterior_dir.empty()) throw ValidationError("decompose requires --fit");
    ensure_output_dir(c);
    const FitBundle bundle = load_fit_bundle(c.posterior_dir);
    if (bundle.model != "exin")
        throw ValidationError("decompose applies to multivariate fits");
    const std::vector<MarkedEventSequence> data = reload_events(c, bundle);
    double max_h = 0.0;
    for (const MarkedEventSequence& s : data) max_h = std::max(max_h, s.horizon());
    RunConfig cov_source = c;
    if (cov_source.covariates_path.empty())
        cov_source.covariates_path = bundle.fit_config.covariates_path;
    const CovariateTrack cov = load_cov_or_constant(cov_source, max_h);

    const DecompositionSummary dec =
        decomposition_report(data, bundle.draws, cov, c.mcmc.quad, c.hpd_level);
    std::ostringstream out;
    out << "mark,label,observed,bg_mean,bg_lo,bg_hi,exc_mean,exc_lo,exc_hi\n";
    for (int k = 0; k < bundle.draws.mark_count; ++k) {
        std::size_t observed = 0;
        for (const MarkedEventSequence& s : data) observed += s.indices_of_mark(k).size();
        const auto& m = dec.marks[static_cast<std::size_t>(k)];
        out << (k + 1) << "," << bundle.marks.labels[static_cast<std::size_t>(k)] << ","
            << observed << "," << format_double(m.bg_mean) << "," << format_double(m.bg_lo) << ","
            << format_double(m.bg_hi) << "," << format_double(m.exc_mean) << ","
            << format_double(m.exc_lo) << "," << format_double(m.exc_hi) << "\n";
    }
    write_text_file(c.output_dir + "/decomposition.csv", out.str());
    KeyValues extra;
    extra.emplace_back("model", "exin");
    KeyValues inputs;
    inputs.emplace_back("events", file_digest(c.events_path));
    inputs.emplace_back("posterior", file_digest(c.posterior_dir + "/posterior.csv"));
    write_manifest(c.output_dir, c, extra, inputs);
    std::cout << "decompose: wrote " << c.output_dir << "/decomposition.csv\n";
    return 0;
}

std::string fancy_name(const std::string& column, const MarkLabelMap& marks) {
    // alpha_star.2.3 -> alpha[al,sn], beta.1.2.1 -> beta[day1,al,x1]
    std::istringstream ss(column);
    std::string base;
    std::getline(ss, base, '.');
    std::vector<int> idx;
    std::string part;
    while (std::getline(ss, part, '.')) idx.push_back(std::stoi(part));
    auto mark_label = [&](int i) { return marks.labels[static_cast<std::size_t>(i - 1)]; };
    std::ostringstream out;
    if (base == "beta" && idx.size() == 3) {
        out << "beta[day" << idx[0] << "," << mark_label(idx[1]) << ",x" << idx[2] << "]";
    } else if ((base == "alpha_star" || base == "gamma_star" || base == "include_alpha" ||
                base == "include_gamma") &&
               idx.size() == 2) {
        const std::string nice = base == "alpha_star"      ? "alpha"
                                 : base == "gamma_star"    ? "gamma"
                                 : base == "include_alpha" ? "I_alpha"
                                                           : "I_gamma";
        out << nice << "[" << mark_label(idx[0]) << "," << mark_label(idx[1]) << "]";
    } else if ((base == "eta" || base == "phi") && idx.size() == 1) {
        out << base << "[" << mark_label(idx[0]) << "]";
    } else {
        out << column;
    }
    return out.str();
}

int run_report(const RunConfig& c) {
    if (c.posterior_dir.empty()) throw ValidationError("report requires --fit");
    ensure_output_dir(c);
    const FitBundle bundle = load_fit_bundle(c.posterior_dir);
    const PosteriorDraws& draws = bundle.draws;
    if (draws.draw_count() < 2)
        throw ValidationError("report requires at least 2 posterior draws");

    std::ostringstream out;
    out << "posterior summary (" << draws.draw_count() << " draws, "
        << format_double(c.hpd_level * 100.0) << "% HPD)\n";
    out << "parameter,mean,hpd_lo,hpd_hi\n";

    std::vector<double> col(draws.draw_count());
    auto summarize = [&](const std::string& name, const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        const auto [lo, hi] = hpd_interval(values, c.hpd_level);
        out << name << "," << format_double(mean) << "," << format_double(lo) << ","
            << format_double(hi) << "\n";
    };

    if (bundle.model == "self_limiting") {
        for (const std::string& name : draws.names) summarize(name, draws.column(name));
    } else {
        for (const std::string& name : draws.names) {
            // effective interaction values: star * indicator per draw
            if (name.rfind("alpha_star.", 0) == 0 || name.rfind("gamma_star.", 0) == 0) {
                const bool is_alpha = name.rfind("alpha_star.", 0) == 0;
                const std::string suffix = name.substr(is_alpha ? 11 : 11);
                const std::vector<double> star = draws.column(name);
                const std::vector<double> ind =
                    draws.column((is_alpha ? "include_alpha." : "include_gamma.") + suffix);
                std::vector<double> eff(star.size());
                for (std::size_t i = 0; i < star.size(); ++i) eff[i] = star[i] * ind[i];
                summarize(fancy_name((is_alpha ? "alpha_star." : "gamma_star.") + suffix,
                                     bundle.marks),
                          eff);
            } else if (name.rfind("include_", 0) == 0) {
                const std::vector<double> ind = draws.column(name);
                double mean = 0.0;
                for (double v : ind) mean += v;
                mean /= static_cast<double>(ind.size());
                out << fancy_name(name, bundle.marks) << "," << format_double(mean) << ",,\n";
            } else {
                summarize(fancy_name(name, bundle.marks), draws.column(name));
            }
        }
    }
    // -2 log L summary, median and HPD
    std::vector<double> neg2(draws.loglik.size());
    for (std::size_t i = 0; i < neg2.size(); ++i) neg2[i] = -2.0 * draws.loglik[i];
    std::vector<double> sorted = neg2;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const auto [lo, hi] = hpd_interval(neg2, c.hpd_level);
    out << "neg2loglik_median," << format_double(median) << "," << format_double(lo) << ","
        << format_double(hi) << "\n";
    write_text_file(c.output_dir + "/report.txt", out.str());

    if (!c.dump_params_path.empty()) {
        if (bundle.model == "self_limiting")
            throw ValidationError("--dump-params applies to multivariate fits");
        // posterior means; indicators by majority (exclusivity holds because the
        // per-draw indicators are exclusive, so both means cannot exceed 0.5)
        ExInParams p = draws.params_at(0);
        const std::size_t b_total = draws.draw_count();
        std::vector<double> acc(draws.names.size(), 0.0);
        for (std::size_t r = 0; r < b_total; ++r)
            for (std::size_t j = 0; j < draws.names.size(); ++j) acc[j] += draws.samples(r, j);
        for (double& v : acc) v /= static_cast<double>(b_total);
        // rebuild via a one-row draw matrix holding the means
        PosteriorDraws mean_draws = draws;
        mean_draws.samples = Matrix(1, draws.names.size());
        for (std::size_t j = 0; j < draws.names.size(); ++j)
            mean_draws.samples(0, j) = acc[j];
        p = mean_draws.params_at(0);
        const int kc = p.mark_count();
        for (int l = 0; l < kc; ++l) {
            for (int k = 0; k < kc; ++k) {
                p.include_alpha(l, k) = p.include_alpha(l, k) > 0.5 ? 1.0 : 0.0;
                p.include_gamma(l, k) = p.include_gamma(l, k) > 0.5 ? 1.0 : 0.0;
            }
        }
        p.validate();
        save_params(c.dump_params_path, p, &bundle.marks);
    }
    std::cout << "report: wrote " << c.output_dir << "/report.txt\n";
    return 0;
}

int run_baseline_sl(const RunConfig& c) {
    ensure_output_dir(c);
    if (c.sl_verb == "simulate") {
        if (!c.horizon) throw ValidationError("baseline-sl simulate requires --horizon");
        SelfLimitingParams p{c.sl_mu, c.sl_alpha, c.sl_eta, c.sl_gamma, c.sl_phi};
        const std::vector<double> times = sl_simulate(p, *c.horizon, c.seed);
        std::vector<MarkedEvent> events;
        events.reserve(times.size());
        for (double t : times) events.push_back({t, 0});
        const MarkedEventSequence seq(std::move(events), *c.horizon, 1, 0);
        save_events_csv(c.output_dir + "/events.csv", {&seq, 1}, MarkLabelMap::numeric(1));
        KeyValues extra;
        extra.emplace_back("model", "self_limiting");
        extra.emplace_back("events_written", std::to_string(times.size()));
        write_manifest(c.output_dir, c, extra, {});
        std::cout << "baseline-sl simulate: wrote " << times.size() << " events\n";
        return 0;
    }
    if (c.sl_verb == "fit") {
        if (c.events_path.empty()) throw ValidationError("baseline-sl fit requires --events");
        const IngestResult ingest = ingest_events(c.events_path, c.horizon);
        if (ingest.sequences.size() != 1)
            throw ValidationError("baseline-sl fit expects a single replicate");
        if (ingest.marks.size() != 1)
            throw ValidationError("baseline-sl fit expects a univariate event file");
        const MarkedEventSequence& seq = ingest.sequences.front();
        std::vector<double> times;
        times.reserve(seq.size());
        for (const MarkedEvent& e : seq.events()) times.push_back(e.time);

        SlFitConfig cfg;
        cfg.iterations = c.mcmc.iterations;
        cfg.burn_in = c.mcmc.burn_in;
        cfg.thin = c.mcmc.thin;
        cfg.seed = c.seed;
        cfg.adaptation_window = c.mcmc.adaptation_window;
        cfg.target_acceptance = c.mcmc.target_acceptance;
        cfg.initial_scale = c.mcmc.initial_scale_positive;
        cfg.fix_gamma = c.sl_fix_gamma;
        cfg.fix_phi = c.sl_fix_phi;
        if (c.sl_fix_gamma || c.sl_fix_phi) {
            SelfLimitingParams init;
            init.mu = std::max(0.5, static_cast<double>(times.size())) / seq.horizon() * 0.5;
            init.alpha = 0.5;
            init.eta = 1.0;
            init.gamma = c.sl_gamma;
            init.phi_window = c.sl_phi;
            cfg.initial = init;
        }
        SlPriorSpec prior;
        prior.slab_sd = c.prior.slab_sd;
        const PosteriorDraws draws = sl_fit(times, seq.horizon(), prior, cfg);
        save_posterior_csv(c.output_dir + "/posterior.csv", draws);
        KeyValues extra;
        extra.emplace_back("model", "self_limiting");
        KeyValues inputs;
        inputs.emplace_back("events", file_digest(c.events_path));
        write_manifest(c.output_dir, c, extra, inputs);
        std::cout << "baseline-sl fit: retained " << draws.draw_count() << " draws\n";
        return 0;
    }
    throw ValidationError("baseline-sl requires a verb: simulate or fit");
}

} // namespace

int run(const RunConfig& c) {
    if (c.threads) {
        setenv("EXIN_THREADS", std::to_string(*c.threads).c_str(), 1);
    }
    if (c.command == "simulate") return run_simulate(c);
    if (c.command == "fit") return run_fit(c);
    if (c.command == "assess") return run_assess(c);
    if (c.command == "decompose") return run_decompose(c);
    if (c.command == "report") return run_report(c);
    if (c.command == "baseline-sl") return run_baseline_sl(c);
    throw ValidationError("unknown command: " + c.command);
}

int cli_main(int argc, const char* const* argv) {
    RunConfig cfg;

    // --config documents load first; explicit flags override below
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                apply_key_values(cfg, load_key_values(argv[i + 1]));
            } catch (const ValidationError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }

    CLI::App app{"multivariate Hawkes toolkit with additive excitation and multiplicative "
                 "inhibition"};
    app.require_subcommand(1);
    std::string config_path; // consumed above; declared so CLI11 accepts it
    app.add_option("--config", config_path, "key-value config document");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", cfg.seed, "random seed");
        sub->add_option("--threads", [&cfg](const std::vector<std::string>& v) {
            cfg.threads = std::stoi(v[0]);
            return true;
        }, "worker thread cap (chains run in parallel)");
        sub->add_option("--out", cfg.output_dir, "output directory");
        sub->add_option("--horizon", [&cfg](const std::vector<std::string>& v) {
            cfg.horizon = std::stod(v[0]);
            return true;
        }, "observation horizon override");
        sub->add_option("--subdivisions", cfg.mcmc.quad.subdivisions,
                        "quadrature subdivisions per inter-knot interval");
    };

    CLI::App* sim = app.add_subcommand("simulate", "sample event sequences by thinning");
    add_common(sim);
    sim->add_option("--params", cfg.params_path, "parameter document");
    sim->add_option("--covariates", cfg.covariates_path, "piecewise-constant covariate CSV");
    sim->add_option("--variant", cfg.variant, "exc_inh | exc_only | inh_only");

    CLI::App* fit = app.add_subcommand("fit", "posterior sampling by MH-within-Gibbs");
    add_common(fit);
    fit->add_option("--events", cfg.events_path, "events CSV (time,mark,replicate)");
    fit->add_option("--covariates", cfg.covariates_path, "covariate CSV");
    fit->add_option("--variant", cfg.variant, "exc_inh | exc_only | inh_only");
    fit->add_option("--link", cfg.background_link, "background link: linear | log");
    fit->add_option("--iterations", cfg.mcmc.iterations, "MCMC iterations");
    fit->add_option("--burn-in", cfg.mcmc.burn_in, "burn-in iterations");
    fit->add_option("--thin", cfg.mcmc.thin, "thinning stride");
    fit->add_option("--chains", cfg.mcmc.chain_count, "independent chains");
    fit->add_option("--adaptation-window", cfg.mcmc.adaptation_window,
                    "iterations of proposal-scale adaptation");
    fit->add_option("--inclusion-alpha", cfg.prior.inclusion_alpha,
                    "prior inclusion probability for excitation edges");
    fit->add_option("--inclusion-gamma", cfg.prior.inclusion_gamma,
                    "prior inclusion probability for inhibition edges");

    CLI::App* assess = app.add_subcommand("assess", "RTCT Q-Q bands, MSD, and WAIC");
    add_common(assess);
    assess->add_option("--events", cfg.events_path, "events CSV used for the fit");
    assess->add_option("--covariates", cfg.covariates_path, "covariate CSV used for the fit");
    assess->add_option("--fit", cfg.posterior_dir, "fit output directory");
    assess->add_flag("--per-mark", cfg.per_mark_qq, "also write per-mark Q-Q tables");
    assess->add_option("--max-draws", cfg.assess_max_draws,
                       "thin to at most this many draws (0 = all)");

    CLI::App* dec = app.add_subcommand("decompose",
                                       "posterior background/excitation event counts");
    add_common(dec);
    dec->add_option("--events", cfg.events_path, "events CSV used for the fit");
    dec->add_option("--covariates", cfg.covariates_path, "covariate CSV used for the fit");
    dec->add_option("--fit", cfg.posterior_dir, "fit output directory");
    dec->add_option("--level", cfg.hpd_level, "HPD level");

    CLI::App* rep = app.add_subcommand("report", "posterior means and HPD intervals");
    add_common(rep);
    rep->add_option("--fit", cfg.posterior_dir, "fit output directory");
    rep->add_option("--level", cfg.hpd_level, "HPD level");
    rep->add_option("--dump-params", cfg.dump_params_path,
                    "write posterior-mean parameters as a parameter document");

    CLI::App* sl = app.add_subcommand("baseline-sl", "univariate self-limiting baseline");
    CLI::App* sl_sim = sl->add_subcommand("simulate", "simulate the self-limiting process");
    add_common(sl_sim);
    sl_sim->add_option("--mu", cfg.sl_mu, "background rate");
    sl_sim->add_option("--alpha", cfg.sl_alpha, "excitation magnitude");
    sl_sim->add_option("--eta", cfg.sl_eta, "excitation decay");
    sl_sim->add_option("--gamma", cfg.sl_gamma, "inhibition strength");
    sl_sim->add_option("--phi", cfg.sl_phi, "count window length");
    CLI::App* sl_fit_cmd = sl->add_subcommand("fit", "fit the self-limiting model");
    add_common(sl_fit_cmd);
    sl_fit_cmd->add_option("--events", cfg.events_path, "events CSV");
    sl_fit_cmd->add_option("--iterations", cfg.mcmc.iterations, "MCMC iterations");
    sl_fit_cmd->add_option("--burn-in", cfg.mcmc.burn_in, "burn-in iterations");
    sl_fit_cmd->add_option("--thin", cfg.mcmc.thin, "thinning stride");
    sl_fit_cmd->add_flag("--fix-gamma", cfg.sl_fix_gamma, "hold gamma at --gamma");
    sl_fit_cmd->add_flag("--fix-phi", cfg.sl_fix_phi, "hold the window length at --phi");
    sl_fit_cmd->add_option("--mu", cfg.sl_mu, "initial/fixed background rate");
    sl_fit_cmd->add_option("--alpha", cfg.sl_alpha, "initial/fixed excitation magnitude");
    sl_fit_cmd->add_option("--eta", cfg.sl_eta, "initial/fixed excitation decay");
    sl_fit_cmd->add_option("--gamma", cfg.sl_gamma, "initial/fixed inhibition strength");
    sl_fit_cmd->add_option("--phi", cfg.sl_phi, "initial/fixed window length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) cfg.command = "simulate";
        else if (fit->parsed()) cfg.command = "fit";
        else if (assess->parsed()) cfg.command = "assess";
        else if (dec->parsed()) cfg.command = "decompose";
        else if (rep->parsed()) cfg.command = "report";
        else if (sl->parsed()) {
            cfg.command = "baseline-sl";
            if (sl_sim->parsed()) cfg.sl_verb = "simulate";
            else if (sl_fit_cmd->parsed()) cfg.sl_verb = "fit";
        }
        return run(cfg);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace exin

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "exin/io.hpp"
#include "exin/mcmc.hpp"
#include "exin/self_limiting.hpp"

namespace exin {

// Resolved settings for one CLI invocation. Values load from a key-value
// config document (dotted keys, e.g. mcmc.iterations=20000) and command-line
// flags override them.
struct RunConfig {
    std::string command;       // simulate | fit | assess | decompose | baseline-sl | report
    std::string sl_verb;       // simulate | fit

    std::string events_path;
    std::string covariates_path;
    std::string params_path;
    std::string posterior_dir; // existing fit output consumed by assess/decompose/report
    std::string output_dir;
    std::string dump_params_path;

    std::string variant = "exc_inh";
    std::string background_link = "log";
    std::uint64_t seed = 1;
    std::optional<double> horizon;
    std::optional<int> threads;

    McmcConfig mcmc{};
    PriorSpec prior{};

    double sl_mu = 0.65, sl_alpha = 0.65, sl_eta = 5.0, sl_gamma = 0.3, sl_phi = 3.0;
    bool sl_fix_gamma = false, sl_fix_phi = false;

    bool per_mark_qq = false;
    std::size_t assess_max_draws = 0;
    double hpd_level = 0.95;

    ModelVariant variant_enum() const;
    BackgroundLink link_enum() const;
};

// Applies config-document keys (config.-prefixed keys are accepted too, so a
// manifest can be replayed directly). Unknown keys are validation errors.
void apply_key_values(RunConfig& config, const KeyValues& kv);

// Deterministic serialization of everything that affects outputs.
KeyValues serialize_run_config(const RunConfig& config);

// Executes the command, writing artifacts under config.output_dir. Returns 0;
// failures throw ValidationError / NumericalError.
int run(const RunConfig& config);

// Full argv entry point: parses flags, runs, and maps errors to exit codes
// (0 success, 2 validation error, 3 numerical failure).
int cli_main(int argc, const char* const* argv);

} // namespace exin

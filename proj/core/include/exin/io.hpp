#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exin/events.hpp"
#include "exin/mcmc.hpp"
#include "exin/params.hpp"

namespace exin {

// External mark labels mapped to internal 0-based marks in first-appearance
// order. Reports translate back through this table.
struct MarkLabelMap {
    std::vector<std::string> labels;

    static MarkLabelMap numeric(int mark_count);
    int index_of(const std::string& label) const; // -1 if unknown
    int size() const { return static_cast<int>(labels.size()); }
};

struct IngestResult {
    std::vector<MarkedEventSequence> sequences; // replicate_id 0.. in sorted label order
    MarkLabelMap marks;
    std::vector<long long> replicate_labels;    // original replicate column values
    std::size_t tie_collisions = 0;
    std::vector<std::string> warnings;
};

// Reads `time,mark,replicate` CSV. Marks may be arbitrary labels; exact time
// ties are perturbed with one warning per collision. The horizon defaults to
// each replicate's last event time.
IngestResult ingest_events(const std::string& path, std::optional<double> horizon = {},
                           std::optional<int> mark_count = {});

// Reads `time,name...` CSV of piecewise-constant segment start times. A final
// row with empty value cells closes coverage at that time; otherwise the last
// segment extends indefinitely. An intercept column is prepended.
CovariateTrack ingest_covariates(const std::string& path);

// Flat key-value documents (key=value per line, # comments).
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::string& path);
std::optional<std::string> kv_find(const KeyValues& kv, const std::string& key);

// Parameter documents round-trip exactly (17 significant digits).
std::string serialize_params(const ExInParams& params, const MarkLabelMap* marks = nullptr);
ExInParams parse_params(const std::string& text);
ExInParams load_params(const std::string& path);
void save_params(const std::string& path, const ExInParams& params,
                 const MarkLabelMap* marks = nullptr);
std::optional<MarkLabelMap> params_mark_labels(const std::string& text);

// Event CSV output; marks written through the label map.
void save_events_csv(const std::string& path, std::span<const MarkedEventSequence> sequences,
                     const MarkLabelMap& marks);

// Posterior draws as a columnar CSV (one row per draw, `loglik` last).
void save_posterior_csv(const std::string& path, const PosteriorDraws& draws);
// Metadata (variant, link, dimensions) comes from the sidecar manifest.
PosteriorDraws load_posterior_csv(const std::string& path, ModelVariant variant,
                                  BackgroundLink link, int mark_count, int replicate_count,
                                  int covariate_dim);

void save_mark_labels(const std::string& path, const MarkLabelMap& marks);
MarkLabelMap load_mark_labels(const std::string& path);

// 64-bit FNV-1a content digest, hex-encoded.
std::string file_digest(const std::string& path);
std::string text_digest(const std::string& text);

// Deterministic 17-significant-digit decimal form.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace exin

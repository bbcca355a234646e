#include "exin/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "exin/errors.hpp"

namespace exin {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_number(const std::string& s, const std::string& what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "line " << line_no << ": cannot parse " << what << " from '" << s << "'";
        throw ValidationError(msg.str());
    }
}

long long parse_integer(const std::string& s, const std::string& what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "line " << line_no << ": cannot parse " << what << " from '" << s << "'";
        throw ValidationError(msg.str());
    }
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << text;
    if (!out) throw ValidationError("failed writing file: " + path);
}

std::string text_digest(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::string& path) { return text_digest(read_text_file(path)); }

MarkLabelMap MarkLabelMap::numeric(int mark_count) {
    MarkLabelMap m;
    for (int k = 1; k <= mark_count; ++k) m.labels.push_back(std::to_string(k));
    return m;
}

int MarkLabelMap::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

IngestResult ingest_events(const std::string& path, std::optional<double> horizon,
                           std::optional<int> mark_count) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open events file: " + path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ValidationError("events file is empty: " + path);
    ++line_no;
    const std::vector<std::string> header = split_csv(line);
    if (header.size() < 3 || header[0] != "time" || header[1] != "mark" ||
        header[2] != "replicate")
        throw ValidationError("events file must start with header 'time,mark,replicate'");

    struct Row {
        double time;
        int mark;
        long long replicate;
    };
    std::vector<Row> rows;
    IngestResult result;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != 3) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected 3 fields, got " << f.size();
            throw ValidationError(msg.str());
        }
        const double t = parse_number(f[0], "time", line_no);
        int mark = result.marks.index_of(f[1]);
        if (mark < 0) {
            result.marks.labels.push_back(f[1]); // first-appearance order
            mark = result.marks.size() - 1;
        }
        const long long rep = parse_integer(f[2], "replicate", line_no);
        rows.push_back({t, mark, rep});
    }
    if (rows.empty()) throw ValidationError("events file has no data rows: " + path);

    int k_count = result.marks.size();
    if (mark_count) {
        if (*mark_count < k_count)
            throw ValidationError("events file uses more marks than declared");
        k_count = *mark_count;
        while (result.marks.size() < static_cast<std::size_t>(k_count))
            result.marks.labels.push_back(std::to_string(result.marks.size() + 1));
    }

    std::map<long long, std::vector<MarkedEvent>> by_rep;
    for (const Row& r : rows) by_rep[r.replicate].push_back({r.time, r.mark});
    int rep_index = 0;
    for (auto& [label, events] : by_rep) {
        double t_max = 0.0;
        for (const MarkedEvent& e : events) t_max = std::max(t_max, e.time);
        const double h = horizon ? *horizon : t_max;
        const std::size_t collisions = resolve_ties(events, h);
        if (collisions > 0) {
            std::ostringstream msg;
            msg << "replicate " << label << ": perturbed " << collisions
                << " duplicate timestamp(s) by +1e-9 * horizon";
            result.warnings.push_back(msg.str());
            result.tie_collisions += collisions;
        }
        result.sequences.emplace_back(std::move(events), h, k_count, rep_index);
        result.replicate_labels.push_back(label);
        ++rep_index;
    }
    return result;
}

CovariateTrack ingest_covariates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open covariates file: " + path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ValidationError("covariates file is empty: " + path);
    ++line_no;
    const std::vector<std::string> header = split_csv(line);
    if (header.size() < 2 || header[0] != "time")
        throw ValidationError("covariates file must start with header 'time,<name>...'");
    const std::size_t dim = header.size() - 1;

    std::vector<double> times;
    std::vector<std::vector<double>> values;
    bool closed = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (closed)
            throw ValidationError("covariates file has rows after the closing (empty-value) row");
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != header.size()) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected " << header.size() << " fields, got "
                << f.size();
            throw ValidationError(msg.str());
        }
        times.push_back(parse_number(f[0], "time", line_no));
        bool all_empty = true;
        for (std::size_t c = 1; c < f.size(); ++c)
            if (!f[c].empty()) all_empty = false;
        if (all_empty) { // terminal knot: closes coverage
            closed = true;
            continue;
        }
        std::vector<double> row;
        for (std::size_t c = 1; c < f.size(); ++c)
            row.push_back(parse_number(f[c], header[c], line_no));
        values.push_back(std::move(row));
    }
    if (values.empty()) throw ValidationError("covariates file has no segments: " + path);
    if (!closed) times.push_back(std::numeric_limits<double>::infinity());

    Matrix m(values.size(), dim + 1);
    for (std::size_t r = 0; r < values.size(); ++r) {
        m(r, 0) = 1.0; // intercept
        for (std::size_t c = 0; c < dim; ++c) m(r, c + 1) = values[r][c];
    }
    return CovariateTrack(std::move(times), std::move(m));
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected key=value, got '" << s << "'";
            throw ValidationError(msg.str());
        }
        kv.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return kv;
}

KeyValues load_key_values(const std::string& path) {
    return parse_key_values(read_text_file(path));
}

std::optional<std::string> kv_find(const KeyValues& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    return std::nullopt;
}

std::string serialize_params(const ExInParams& params, const MarkLabelMap* marks) {
    std::ostringstream out;
    const int kc = params.mark_count();
    out << "mark_count=" << kc << "\n";
    out << "replicates=" << params.replicate_count() << "\n";
    out << "covariate_dim=" << params.covariate_dim() << "\n";
    out << "background_link=" << to_string(params.link) << "\n";
    if (marks) {
        out << "marks=";
        for (int k = 0; k < marks->size(); ++k) out << (k ? "," : "") << marks->labels[k];
        out << "\n";
    }
    for (int d = 0; d < params.replicate_count(); ++d)
        for (int k = 0; k < kc; ++k)
            for (int c = 0; c < params.covariate_dim(); ++c)
                out << "beta." << (d + 1) << "." << (k + 1) << "." << (c + 1) << "="
                    << format_double(params.beta[static_cast<std::size_t>(d)](k, c)) << "\n";
    auto dump_matrix = [&](const char* name, const Matrix& m) {
        for (int l = 0; l < kc; ++l)
            for (int k = 0; k < kc; ++k)
                out << name << "." << (l + 1) << "." << (k + 1) << "="
                    << format_double(m(l, k)) << "\n";
    };
    dump_matrix("alpha_star", params.alpha_star);
    dump_matrix("include_alpha", params.include_alpha);
    dump_matrix("gamma_star", params.gamma_star);
    dump_matrix("include_gamma", params.include_gamma);
    for (int l = 0; l < kc; ++l)
        out << "eta." << (l + 1) << "=" << format_double(params.eta[static_cast<std::size_t>(l)])
            << "\n";
    for (int l = 0; l < kc; ++l)
        out << "phi." << (l + 1) << "=" << format_double(params.phi[static_cast<std::size_t>(l)])
            << "\n";
    return out.str();
}

std::optional<MarkLabelMap> params_mark_labels(const std::string& text) {
    const KeyValues kv = parse_key_values(text);
    const auto v = kv_find(kv, "marks");
    if (!v) return std::nullopt;
    MarkLabelMap m;
    std::istringstream ss(*v);
    std::string label;
    while (std::getline(ss, label, ',')) m.labels.push_back(trim(label));
    return m;
}

ExInParams parse_params(const std::string& text) {
    const KeyValues kv = parse_key_values(text);
    auto require = [&](const std::string& key) {
        const auto v = kv_find(kv, key);
        if (!v) throw ValidationError("parameter document is missing key: " + key);
        return *v;
    };
    auto to_number = [](const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            throw ValidationError("cannot parse numeric value for key " + key);
        }
    };
    auto num = [&](const std::string& key) { return to_number(key, require(key)); };

    const int kc = static_cast<int>(num("mark_count"));
    const int reps = static_cast<int>(num("replicates"));
    const int dim = static_cast<int>(num("covariate_dim"));
    if (kc < 1 || reps < 1 || dim < 1)
        throw ValidationError("parameter document has invalid dimensions");
    ExInParams p;
    const std::string link = require("background_link");
    if (link == "linear")
        p.link = BackgroundLink::linear;
    else if (link == "log")
        p.link = BackgroundLink::log;
    else
        throw ValidationError("background_link must be 'linear' or 'log'");

    auto key3 = [](const char* base, int a, int b, int c) {
        std::ostringstream s;
        s << base << "." << a << "." << b << "." << c;
        return s.str();
    };
    auto key2 = [](const char* base, int a, int b) {
        std::ostringstream s;
        s << base << "." << a << "." << b;
        return s.str();
    };
    for (int d = 0; d < reps; ++d) {
        Matrix b(static_cast<std::size_t>(kc), static_cast<std::size_t>(dim));
        for (int k = 0; k < kc; ++k)
            for (int c = 0; c < dim; ++c) b(k, c) = num(key3("beta", d + 1, k + 1, c + 1));
        p.beta.push_back(std::move(b));
    }
    auto read_matrix = [&](const char* base) {
        Matrix m(static_cast<std::size_t>(kc), static_cast<std::size_t>(kc));
        for (int l = 0; l < kc; ++l)
            for (int k = 0; k < kc; ++k) m(l, k) = num(key2(base, l + 1, k + 1));
        return m;
    };
    p.alpha_star = read_matrix("alpha_star");
    p.include_alpha = read_matrix("include_alpha");
    p.gamma_star = read_matrix("gamma_star");
    p.include_gamma = read_matrix("include_gamma");
    for (int l = 0; l < kc; ++l) {
        std::ostringstream ke, kp;
        ke << "eta." << (l + 1);
        kp << "phi." << (l + 1);
        p.eta.push_back(num(ke.str()));
        p.phi.push_back(num(kp.str()));
    }
    p.validate();
    return p;
}

ExInParams load_params(const std::string& path) { return parse_params(read_text_file(path)); }

void save_params(const std::string& path, const ExInParams& params, const MarkLabelMap* marks) {
    write_text_file(path, serialize_params(params, marks));
}

void save_events_csv(const std::string& path, std::span<const MarkedEventSequence> sequences,
                     const MarkLabelMap& marks) {
    std::ostringstream out;
    out << "time,mark,replicate\n";
    for (const MarkedEventSequence& seq : sequences) {
        for (const MarkedEvent& e : seq.events())
            out << format_double(e.time) << ","
                << marks.labels[static_cast<std::size_t>(e.mark)] << ","
                << (seq.replicate_id() + 1) << "\n";
    }
    write_text_file(path, out.str());
}

void save_posterior_csv(const std::string& path, const PosteriorDraws& draws) {
    std::ostringstream out;
    for (std::size_t c = 0; c < draws.names.size(); ++c) out << draws.names[c] << ",";
    out << "loglik\n";
    for (std::size_t r = 0; r < draws.draw_count(); ++r) {
        for (std::size_t c = 0; c < draws.names.size(); ++c)
            out << format_double(draws.samples(r, c)) << ",";
        out << format_double(draws.loglik[r]) << "\n";
    }
    write_text_file(path, out.str());
}

PosteriorDraws load_posterior_csv(const std::string& path, ModelVariant variant,
                                  BackgroundLink link, int mark_count, int replicate_count,
                                  int covariate_dim) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open posterior file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("posterior file is empty: " + path);
    const std::vector<std::string> header = split_csv(line);
    if (header.empty() || header.back() != "loglik")
        throw ValidationError("posterior file must end with a loglik column");

    PosteriorDraws out;
    out.variant = variant;
    out.link = link;
    out.mark_count = mark_count;
    out.replicate_count = replicate_count;
    out.covariate_dim = covariate_dim;
    out.names.assign(header.begin(), header.end() - 1);
    const std::vector<std::string> expected =
        PosteriorDraws::param_names(replicate_count, mark_count, covariate_dim);
    if (out.names != expected)
        throw ValidationError("posterior file columns do not match the recorded dimensions");

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != header.size()) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected " << header.size() << " fields";
            throw ValidationError(msg.str());
        }
        std::vector<double> row;
        row.reserve(f.size());
        for (std::size_t c = 0; c < f.size(); ++c)
            row.push_back(parse_number(f[c], header[c], line_no));
        rows.push_back(std::move(row));
    }
    out.samples = Matrix(rows.size(), out.names.size());
    out.loglik.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < out.names.size(); ++c) out.samples(r, c) = rows[r][c];
        out.loglik.push_back(rows[r].back());
    }
    return out;
}

void save_mark_labels(const std::string& path, const MarkLabelMap& marks) {
    std::ostringstream out;
    out << "mark,label\n";
    for (int k = 0; k < marks.size(); ++k)
        out << (k + 1) << "," << marks.labels[static_cast<std::size_t>(k)] << "\n";
    write_text_file(path, out.str());
}

MarkLabelMap load_mark_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open mark label file: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "mark,label")
        throw ValidationError("mark label file must start with 'mark,label'");
    MarkLabelMap m;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != 2) throw ValidationError("malformed mark label row");
        m.labels.push_back(f[1]);
    }
    return m;
}

} // namespace exin

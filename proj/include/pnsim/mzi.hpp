#pragma once

// Synthetic time-tagged acquisition behind a path-unbalanced Mach-Zehnder.
//
// Consecutive wavepackets meet on the output splitter with a relative phase that
// drifts freely in time. Each acquisition bin sees an (approximately) constant
// phase, so per-bin count expectations come straight from the closed-form
// interference model; counts are Poisson draws on top of those.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "errors.hpp"
#include "fock.hpp"
#include "interference.hpp"

namespace pnsim {

/// phi(t) = phi0 + rate t + A sin(2 pi t / T) + x(t), with x an Ornstein-Uhlenbeck
/// process (stationary std sigma, correlation time tau) sampled on a knot grid
/// and linearly interpolated, so the path is continuous.
struct DriftParams {
    double initial_phase_rad = 0.0;
    double rate_rad_per_s = 0.2;
    double sine_amp_rad = 1.0;
    double sine_period_s = 60.0;
    double ou_sigma_rad = 0.3;
    double ou_tau_s = 5.0;
    double knot_spacing_s = 0.05;

    static DriftParams none(double phase = 0.0) {
        DriftParams d;
        d.initial_phase_rad = phase;
        d.rate_rad_per_s = 0.0;
        d.sine_amp_rad = 0.0;
        d.ou_sigma_rad = 0.0;
        return d;
    }

    void validate() const {
        if (!(sine_period_s > 0.0)) throw ValidationError("drift sine period must be positive");
        if (!(ou_tau_s > 0.0)) throw ValidationError("drift OU correlation time must be positive");
        if (!(ou_sigma_rad >= 0.0)) throw ValidationError("drift OU sigma must be non-negative");
        if (!(knot_spacing_s > 0.0)) throw ValidationError("drift knot spacing must be positive");
    }
};

class PhaseDrift {
public:
    PhaseDrift(const DriftParams& params, std::uint64_t seed, double span_s) : p_(params) {
        p_.validate();
        if (!(span_s >= 0.0)) throw ValidationError("drift span must be non-negative");
        const auto n = static_cast<std::size_t>(std::ceil(span_s / p_.knot_spacing_s)) + 2;
        knots_.resize(n, 0.0);
        if (p_.ou_sigma_rad > 0.0) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> normal;
            const double decay = std::exp(-p_.knot_spacing_s / p_.ou_tau_s);
            const double kick = p_.ou_sigma_rad * std::sqrt(1.0 - decay * decay);
            knots_[0] = p_.ou_sigma_rad * normal(rng);
            for (std::size_t k = 1; k < n; ++k) knots_[k] = decay * knots_[k - 1] + kick * normal(rng);
        }
    }

    double span_s() const { return p_.knot_spacing_s * static_cast<double>(knots_.size() - 2); }

    double at(double t_s) const {
        if (t_s < 0.0) throw ValidationError("drift time must be non-negative");
        const double x = t_s / p_.knot_spacing_s;
        const auto k = static_cast<std::size_t>(x);
        if (k + 1 >= knots_.size()) throw ValidationError("drift evaluated beyond its generated span");
        const double w = x - static_cast<double>(k);
        const double ou = (1.0 - w) * knots_[k] + w * knots_[k + 1];
        return p_.initial_phase_rad + p_.rate_rad_per_s * t_s +
               p_.sine_amp_rad * std::sin(2.0 * std::numbers::pi * t_s / p_.sine_period_s) + ou;
    }

private:
    DriftParams p_;
    std::vector<double> knots_;
};

inline double phase_drift(const DriftParams& params, std::uint64_t seed, double t_s) {
    return PhaseDrift(params, seed, t_s).at(t_s);
}

// Overlap after rotating one arm's polarisation by theta.
inline double theta_to_M(double theta_rad, double M0) {
    if (!(M0 >= 0.0 && M0 <= 1.0)) throw ValidationError("M0 must lie in [0, 1]");
    const double c = std::cos(theta_rad);
    return M0 * c * c;
}

struct ExperimentConfig {
    NumberState state;
    double overlap_M = 1.0;                 // used as M0 when theta_rad is set
    std::optional<double> theta_rad;
    double efficiency = 0.01;               // end-to-end detection probability
    double rep_period_ns = 24.67;
    double mzi_delay_ns = 12.34;
    double acq_bin_ms = 810.0;
    std::size_t n_bins = 1000;
    double pulses_per_bin = 0.0;            // 0: acq_bin / rep_period
    DriftParams drift;
    std::uint64_t seed = 1;
    double dark_counts_per_s = 0.0;
    double coincidence_window_ns = 2.0;
    int histogram_half_width = 5;           // side peaks 1..H on each side
    double count_cap = 1e12;
    bool noiseless = false;

    double effective_M() const { return theta_rad ? theta_to_M(*theta_rad, overlap_M) : overlap_M; }

    double pulses() const {
        return pulses_per_bin > 0.0 ? pulses_per_bin : acq_bin_ms * 1e6 / rep_period_ns;
    }

    void validate() const {
        if (!(rep_period_ns > 0.0)) throw ValidationError("rep_period_ns must be positive");
        if (!(mzi_delay_ns > 0.0)) throw ValidationError("mzi_delay_ns must be positive");
        if (!(efficiency > 0.0 && efficiency <= 1.0)) throw ValidationError("efficiency must lie in (0, 1]");
        if (!(overlap_M >= 0.0 && overlap_M <= 1.0)) throw ValidationError("overlap_M must lie in [0, 1]");
        if (!(acq_bin_ms > 0.0)) throw ValidationError("acq_bin_ms must be positive");
        if (n_bins == 0) throw ValidationError("n_bins must be positive");
        if (!(pulses_per_bin >= 0.0)) throw ValidationError("pulses_per_bin must be non-negative");
        if (!(dark_counts_per_s >= 0.0)) throw ValidationError("dark_counts_per_s must be non-negative");
        if (!(coincidence_window_ns > 0.0 && coincidence_window_ns < mzi_delay_ns))
            throw ValidationError("coincidence window must be positive and shorter than the MZI delay");
        if (histogram_half_width < 1) throw ValidationError("histogram needs at least one side peak");
        if (!(count_cap > 0.0)) throw ValidationError("count_cap must be positive");
        drift.validate();
    }
};

struct SinglesBin {
    std::size_t index = 0;
    double t_ms = 0.0;
    long long counts_c = 0;
    long long counts_d = 0;
    double true_phi = std::numeric_limits<double>::quiet_NaN();
};

/// One acquisition record. coincidences[bin][k + H] counts d-c detection pairs
/// separated by k laser periods (k = -H..H); k = 0 is the interference peak.
struct TagStream {
    std::vector<SinglesBin> bins;
    std::vector<std::vector<long long>> coincidences;
    int half_width = 5;

    long long at(std::size_t bin, int delta) const {
        return coincidences[bin][static_cast<std::size_t>(delta + half_width)];
    }

    std::vector<long long> histogram() const {
        std::vector<long long> h(static_cast<std::size_t>(2 * half_width + 1), 0);
        for (const auto& row : coincidences)
            for (std::size_t k = 0; k < row.size(); ++k) h[k] += row[k];
        return h;
    }

    bool has_true_phase() const { return !bins.empty() && !std::isnan(bins.front().true_phi); }
};

/// Draw a stream. Expected singles per bin are eta * pulses * N_{c,d}(phi) and
/// the zero-delay peak eta^2 * pulses * C(0)(phi); side peaks hold uncorrelated
/// pulses at eta^2 * pulses * N_c N_d.
inline TagStream synthesize(const ExperimentConfig& cfg) {
    cfg.validate();
    const double M = cfg.effective_M();
    const double pulses = cfg.pulses();
    const double eta = cfg.efficiency;
    const double bin_s = cfg.acq_bin_ms * 1e-3;
    const double window_s = cfg.coincidence_window_ns * 1e-9;
    const double darks = cfg.dark_counts_per_s * bin_s;
    const int H = cfg.histogram_half_width;

    std::seed_seq seq{cfg.seed, std::uint64_t{0x6d7a69}};
    std::vector<std::uint64_t> seeds(2);
    seq.generate(seeds.begin(), seeds.end());
    const PhaseDrift drift(cfg.drift, seeds[0], bin_s * static_cast<double>(cfg.n_bins));
    std::mt19937_64 rng(seeds[1]);

    auto draw = [&](double mean) -> long long {
        if (!(mean <= cfg.count_cap))
            throw ValidationError("expected counts per bin " + std::to_string(mean) + " exceed count_cap");
        if (mean <= 0.0) return 0;
        if (cfg.noiseless) return std::llround(mean);
        return std::poisson_distribution<long long>(mean)(rng);
    };

    TagStream ts;
    ts.half_width = H;
    ts.bins.reserve(cfg.n_bins);
    ts.coincidences.reserve(cfg.n_bins);
    for (std::size_t k = 0; k < cfg.n_bins; ++k) {
        const double t_mid = bin_s * (static_cast<double>(k) + 0.5);
        const double phi = drift.at(t_mid);
        const auto singles = closed_singles(cfg.state, M, phi);
        const double mu_c = eta * pulses * singles.c;
        const double mu_d = eta * pulses * singles.d;

        SinglesBin b;
        b.index = k;
        b.t_ms = cfg.acq_bin_ms * static_cast<double>(k);
        b.counts_c = draw(mu_c + darks);
        b.counts_d = draw(mu_d + darks);
        b.true_phi = phi;
        ts.bins.push_back(b);

        // accidentals from dark counts landing inside the coincidence window
        const double dark_rate_window = cfg.dark_counts_per_s * window_s;
        const double accidental = dark_rate_window * (mu_c + mu_d) + pulses * dark_rate_window * dark_rate_window;
        std::vector<long long> row(static_cast<std::size_t>(2 * H + 1));
        for (int delta = -H; delta <= H; ++delta) {
            const double mu = delta == 0 ? eta * eta * pulses * closed_coincidences(cfg.state, phi)
                                         : eta * eta * pulses * singles.c * singles.d;
            row[static_cast<std::size_t>(delta + H)] = draw(mu + accidental);
        }
        ts.coincidences.push_back(std::move(row));
    }
    return ts;
}

/// Insert an extra transmission factor in front of the detectors.
inline ExperimentConfig apply_loss(ExperimentConfig cfg, double extra_loss) {
    if (!(extra_loss > 0.0 && extra_loss <= 1.0)) throw ValidationError("extra_loss must lie in (0, 1]");
    cfg.efficiency *= extra_loss;
    return cfg;
}

// ---------------------------------------------------------------------------
// Persistence

inline void write_singles_csv(std::ostream& os, const TagStream& ts, bool with_phase = true) {
    const auto old = os.precision(15);
    os << "bin_index,t_ms,counts_c,counts_d" << (with_phase ? ",true_phi" : "") << '\n';
    for (const auto& b : ts.bins) {
        os << b.index << ',' << b.t_ms << ',' << b.counts_c << ',' << b.counts_d;
        if (with_phase) os << ',' << b.true_phi;
        os << '\n';
    }
    os.precision(old);
}

inline void write_histogram_csv(std::ostream& os, const TagStream& ts) {
    os << "delta_pulses,coincidences\n";
    const auto h = ts.histogram();
    for (int d = -ts.half_width; d <= ts.half_width; ++d) os << d << ',' << h[static_cast<std::size_t>(d + ts.half_width)] << '\n';
}

inline void write_coincidences_by_bin_csv(std::ostream& os, const TagStream& ts) {
    os << "bin_index,delta_pulses,coincidences\n";
    for (std::size_t k = 0; k < ts.coincidences.size(); ++k)
        for (int d = -ts.half_width; d <= ts.half_width; ++d) os << ts.bins[k].index << ',' << d << ',' << ts.at(k, d) << '\n';
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(std::istream& is, const std::vector<std::string>& header,
                                                      std::size_t optional_tail = 0) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty CSV", 1);
    const auto cols = split(trim(line), ',');
    const bool full = cols == header;
    std::vector<std::string> shortened(header.begin(), header.end() - static_cast<long>(optional_tail));
    if (!full && !(optional_tail && cols == shortened))
        throw ParseError("unexpected CSV header '" + trim(line) + "'", 1);
    std::vector<std::vector<std::string>> rows;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (trim(line).empty()) continue;
        auto fields = split(trim(line), ',');
        if (fields.size() != cols.size())
            throw ParseError("expected " + std::to_string(cols.size()) + " fields, got " + std::to_string(fields.size()), n);
        rows.push_back(std::move(fields));
    }
    return rows;
}

inline long long parse_count(const std::string& s, const char* what, std::size_t line) {
    const long long v = parse_integer(s, what, line);
    if (v < 0) throw ParseError(std::string("negative ") + what, line);
    return v;
}

}  // namespace detail

/// Rebuild a stream from the singles and per-bin coincidence files.
inline TagStream read_stream(std::istream& singles, std::istream& by_bin) {
    TagStream ts;
    const auto srows = detail::read_csv(singles, {"bin_index", "t_ms", "counts_c", "counts_d", "true_phi"}, 1);
    std::size_t line = 1;
    for (const auto& r : srows) {
        ++line;
        SinglesBin b;
        b.index = static_cast<std::size_t>(detail::parse_count(r[0], "bin_index", line));
        b.t_ms = detail::parse_double(r[1], "t_ms", line);
        b.counts_c = detail::parse_count(r[2], "counts_c", line);
        b.counts_d = detail::parse_count(r[3], "counts_d", line);
        if (r.size() > 4) b.true_phi = detail::parse_double(r[4], "true_phi", line);
        ts.bins.push_back(b);
    }
    if (ts.bins.empty()) throw ParseError("singles file has no rows");

    const auto crows = detail::read_csv(by_bin, {"bin_index", "delta_pulses", "coincidences"});
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t k = 0; k < ts.bins.size(); ++k) slot[ts.bins[k].index] = k;
    int half = 0;
    line = 1;
    for (const auto& r : crows) {
        ++line;
        half = std::max(half, static_cast<int>(std::abs(detail::parse_integer(r[1], "delta_pulses", line))));
    }
    if (half < 1) throw ParseError("coincidence file has no side peaks");
    ts.half_width = half;
    ts.coincidences.assign(ts.bins.size(), std::vector<long long>(static_cast<std::size_t>(2 * half + 1), 0));
    line = 1;
    for (const auto& r : crows) {
        ++line;
        const auto idx = static_cast<std::size_t>(detail::parse_count(r[0], "bin_index", line));
        const auto it = slot.find(idx);
        if (it == slot.end()) throw ParseError("coincidences refer to unknown bin " + r[0], line);
        const int d = static_cast<int>(detail::parse_integer(r[1], "delta_pulses", line));
        ts.coincidences[it->second][static_cast<std::size_t>(d + half)] = detail::parse_count(r[2], "coincidences", line);
    }
    return ts;
}

inline std::vector<std::pair<int, long long>> read_histogram(std::istream& is) {
    std::vector<std::pair<int, long long>> out;
    std::size_t line = 1;
    for (const auto& r : detail::read_csv(is, {"delta_pulses", "coincidences"})) {
        ++line;
        out.emplace_back(static_cast<int>(detail::parse_integer(r[0], "delta_pulses", line)),
                         detail::parse_count(r[1], "coincidences", line));
    }
    return out;
}

inline nlohmann::json to_json(const DriftParams& d) {
    return {{"initial_phase_rad", d.initial_phase_rad}, {"rate_rad_per_s", d.rate_rad_per_s},
            {"sine_amp_rad", d.sine_amp_rad},           {"sine_period_s", d.sine_period_s},
            {"ou_sigma_rad", d.ou_sigma_rad},           {"ou_tau_s", d.ou_tau_s},
            {"knot_spacing_s", d.knot_spacing_s}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["state"] = c.state;
    j["overlap_M"] = c.overlap_M;
    j["theta_rad"] = c.theta_rad ? nlohmann::json(*c.theta_rad) : nlohmann::json(nullptr);
    j["efficiency"] = c.efficiency;
    j["rep_period_ns"] = c.rep_period_ns;
    j["mzi_delay_ns"] = c.mzi_delay_ns;
    j["acq_bin_ms"] = c.acq_bin_ms;
    j["n_bins"] = c.n_bins;
    j["pulses_per_bin"] = c.pulses();
    j["drift"] = to_json(c.drift);
    j["seed"] = c.seed;
    j["dark_counts_per_s"] = c.dark_counts_per_s;
    j["coincidence_window_ns"] = c.coincidence_window_ns;
    j["histogram_half_width"] = c.histogram_half_width;
    j["count_cap"] = c.count_cap;
    j["noiseless"] = c.noiseless;
    return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.state = j.at("state").get<NumberState>();
    c.overlap_M = j.value("overlap_M", 1.0);
    if (j.contains("theta_rad") && !j["theta_rad"].is_null()) c.theta_rad = j["theta_rad"].get<double>();
    c.efficiency = j.value("efficiency", c.efficiency);
    c.rep_period_ns = j.value("rep_period_ns", c.rep_period_ns);
    c.mzi_delay_ns = j.value("mzi_delay_ns", c.mzi_delay_ns);
    c.acq_bin_ms = j.value("acq_bin_ms", c.acq_bin_ms);
    c.n_bins = j.value("n_bins", c.n_bins);
    c.pulses_per_bin = j.value("pulses_per_bin", 0.0);
    if (j.contains("drift")) {
        const auto& d = j["drift"];
        c.drift.initial_phase_rad = d.value("initial_phase_rad", c.drift.initial_phase_rad);
        c.drift.rate_rad_per_s = d.value("rate_rad_per_s", c.drift.rate_rad_per_s);
        c.drift.sine_amp_rad = d.value("sine_amp_rad", c.drift.sine_amp_rad);
        c.drift.sine_period_s = d.value("sine_period_s", c.drift.sine_period_s);
        c.drift.ou_sigma_rad = d.value("ou_sigma_rad", c.drift.ou_sigma_rad);
        c.drift.ou_tau_s = d.value("ou_tau_s", c.drift.ou_tau_s);
        c.drift.knot_spacing_s = d.value("knot_spacing_s", c.drift.knot_spacing_s);
    }
    c.seed = j.value("seed", c.seed);
    c.dark_counts_per_s = j.value("dark_counts_per_s", c.dark_counts_per_s);
    c.coincidence_window_ns = j.value("coincidence_window_ns", c.coincidence_window_ns);
    c.histogram_half_width = j.value("histogram_half_width", c.histogram_half_width);
    c.count_cap = j.value("count_cap", c.count_cap);
    c.noiseless = j.value("noiseless", c.noiseless);
    c.validate();
    return c;
}

inline const std::set<std::string>& experiment_config_keys() {
    static const std::set<std::string> keys{
        "p", "alpha", "lambda", "overlap_M", "theta_rad", "efficiency", "rep_period_ns", "mzi_delay_ns",
        "acq_bin_ms", "n_bins", "pulses_per_bin", "seed", "dark_counts_per_s", "coincidence_window_ns",
        "histogram_half_width", "count_cap", "noiseless", "drift_initial_phase_rad", "drift_rate_rad_per_s",
        "drift_sine_amp_rad", "drift_sine_period_s", "drift_ou_sigma_rad", "drift_ou_tau_s",
        "drift_knot_spacing_s"};
    return keys;
}

// State keys shared by several subcommands.
inline NumberState state_from(const KeyValueConfig& cfg) {
    auto p = cfg.get_list("p");
    if (!p) throw ValidationError("config needs a population list 'p'");
    return NumberState(*p, cfg.get_double("lambda", 1.0), cfg.get_list("alpha").value_or(std::vector<double>{}));
}

inline ExperimentConfig experiment_from(const KeyValueConfig& cfg) {
    ExperimentConfig c;
    c.state = state_from(cfg);
    c.overlap_M = cfg.get_double("overlap_M", c.overlap_M);
    if (auto v = cfg.get_double("theta_rad")) c.theta_rad = *v;
    c.efficiency = cfg.get_double("efficiency", c.efficiency);
    c.rep_period_ns = cfg.get_double("rep_period_ns", c.rep_period_ns);
    c.mzi_delay_ns = cfg.get_double("mzi_delay_ns", c.mzi_delay_ns);
    c.acq_bin_ms = cfg.get_double("acq_bin_ms", c.acq_bin_ms);
    if (auto v = cfg.get_integer("n_bins")) {
        if (*v <= 0) throw ValidationError("n_bins must be positive");
        c.n_bins = static_cast<std::size_t>(*v);
    }
    c.pulses_per_bin = cfg.get_double("pulses_per_bin", c.pulses_per_bin);
    if (auto v = cfg.get_integer("seed")) c.seed = static_cast<std::uint64_t>(*v);
    c.dark_counts_per_s = cfg.get_double("dark_counts_per_s", c.dark_counts_per_s);
    c.coincidence_window_ns = cfg.get_double("coincidence_window_ns", c.coincidence_window_ns);
    if (auto v = cfg.get_integer("histogram_half_width")) c.histogram_half_width = static_cast<int>(*v);
    c.count_cap = cfg.get_double("count_cap", c.count_cap);
    if (auto v = cfg.get_integer("noiseless")) c.noiseless = *v != 0;
    c.drift.initial_phase_rad = cfg.get_double("drift_initial_phase_rad", c.drift.initial_phase_rad);
    c.drift.rate_rad_per_s = cfg.get_double("drift_rate_rad_per_s", c.drift.rate_rad_per_s);
    c.drift.sine_amp_rad = cfg.get_double("drift_sine_amp_rad", c.drift.sine_amp_rad);
    c.drift.sine_period_s = cfg.get_double("drift_sine_period_s", c.drift.sine_period_s);
    c.drift.ou_sigma_rad = cfg.get_double("drift_ou_sigma_rad", c.drift.ou_sigma_rad);
    c.drift.ou_tau_s = cfg.get_double("drift_ou_tau_s", c.drift.ou_tau_s);
    c.drift.knot_spacing_s = cfg.get_double("drift_knot_spacing_s", c.drift.knot_spacing_s);
    c.validate();
    return c;
}

}  // namespace pnsim

#pragma once

// Pulsed resonant driving of a two-level emitter.
//
// Rotating-frame Hamiltonian H = i Omega(t) (sigma - sigma^dag), sigma = |g><e|,
// with spontaneous emission at rate gamma and pure dephasing gamma* (coherence
// decay gamma/2 + gamma*). Photon number and the zero-delay two-photon integral
// follow from a_out = sqrt(gamma) sigma; the latter uses the quantum regression
// theorem, re-propagating the collapsed state sigma rho(t) sigma^dag.
//
// Units: time in ps, rates in 1/ps, pulse area in units of pi with the
// convention area = 2 int Omega dt (area 1 inverts an ideal emitter).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <numbers>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "config.hpp"
#include "errors.hpp"
#include "fock.hpp"

namespace pnsim {

struct GridControls {
    double steps_per_scale = 50.0;      // steps per shortest time scale
    double pulse_span_fwhm = 4.0;       // drive evaluated on [-span, span] * fwhm
    double decay_span_lifetimes = 10.0; // free decay integrated for this many 1/gamma
};

struct PulseConfig {
    double area_pi = 1.0;
    double fwhm_ps = 40.0;
    double gamma_per_ps = 1.0 / 166.0;
    double gamma_star_per_ps = 0.0;
    GridControls grid;

    void validate() const {
        if (!(fwhm_ps > 0.0)) throw ValidationError("fwhm_ps must be positive");
        if (!(gamma_per_ps > 0.0)) throw ValidationError("gamma_per_ps must be positive");
        if (!(gamma_star_per_ps >= 0.0)) throw ValidationError("gamma_star_per_ps must be non-negative");
        if (!(area_pi >= 0.0) || !std::isfinite(area_pi)) throw ValidationError("area_pi must be non-negative");
        if (!(grid.steps_per_scale >= 4.0)) throw ValidationError("steps_per_scale must be at least 4");
        if (!(grid.pulse_span_fwhm > 0.0)) throw ValidationError("pulse_span_fwhm must be positive");
        if (!(grid.decay_span_lifetimes > 0.0)) throw ValidationError("decay_span_lifetimes must be positive");
    }
};

namespace presets {

// Neutral exciton device: 40 ps pulses, 166 ps radiative lifetime.
inline PulseConfig qd1() {
    PulseConfig c;
    c.fwhm_ps = 40.0;
    c.gamma_per_ps = 1.0 / 166.0;
    return c;
}

// Charged exciton device: 15 ps pulses. Its lifetime is not reported; QD1's is assumed.
inline PulseConfig qd2() {
    PulseConfig c;
    c.fwhm_ps = 15.0;
    c.gamma_per_ps = 1.0 / 166.0;
    c.area_pi = 2.0;
    return c;
}

}  // namespace presets

inline const std::set<std::string>& pulse_config_keys() {
    static const std::set<std::string> keys{"area_pi",           "fwhm_ps",         "gamma_per_ps",
                                            "lifetime_ps",       "gamma_star_per_ps", "steps_per_scale",
                                            "pulse_span_fwhm",   "decay_span_lifetimes"};
    return keys;
}

// Overlay the pulse keys present in `cfg` onto `base`.
inline PulseConfig pulse_config_from(const KeyValueConfig& cfg, PulseConfig base = presets::qd1()) {
    if (auto v = cfg.get_double("area_pi")) base.area_pi = *v;
    if (auto v = cfg.get_double("fwhm_ps")) base.fwhm_ps = *v;
    if (cfg.has("gamma_per_ps") && cfg.has("lifetime_ps"))
        throw ValidationError("give either gamma_per_ps or lifetime_ps, not both");
    if (auto v = cfg.get_double("gamma_per_ps")) base.gamma_per_ps = *v;
    if (auto v = cfg.get_double("lifetime_ps")) {
        if (!(*v > 0.0)) throw ValidationError("lifetime_ps must be positive");
        base.gamma_per_ps = 1.0 / *v;
    }
    if (auto v = cfg.get_double("gamma_star_per_ps")) base.gamma_star_per_ps = *v;
    if (auto v = cfg.get_double("steps_per_scale")) base.grid.steps_per_scale = *v;
    if (auto v = cfg.get_double("pulse_span_fwhm")) base.grid.pulse_span_fwhm = *v;
    if (auto v = cfg.get_double("decay_span_lifetimes")) base.grid.decay_span_lifetimes = *v;
    base.validate();
    return base;
}

/// Unit-norm Gaussian, int xi^2 dt = 1, with |xi|^2 of FWHM tau.
inline double pulse_envelope(const PulseConfig& c, double t_ps) {
    const double tau = c.fwhm_ps;
    const double norm = std::pow(4.0 * std::numbers::ln2 / (std::numbers::pi * tau * tau), 0.25);
    return norm * std::exp(-2.0 * std::numbers::ln2 * t_ps * t_ps / (tau * tau));
}

// int xi dt over the whole line.
inline double pulse_envelope_integral(const PulseConfig& c) {
    const double tau = c.fwhm_ps;
    const double norm = std::pow(4.0 * std::numbers::ln2 / (std::numbers::pi * tau * tau), 0.25);
    return norm * std::sqrt(std::numbers::pi * tau * tau / (2.0 * std::numbers::ln2));
}

/// Mean drive photons per pulse implied by Omega = sqrt(n_in gamma) xi and the area.
inline double drive_photons(const PulseConfig& c) {
    const double root = c.area_pi * std::numbers::pi / (2.0 * pulse_envelope_integral(c));
    return root * root / c.gamma_per_ps;
}

/// Omega(t) in rad/ps; zero outside the truncation window.
inline double rabi_frequency(const PulseConfig& c, double t_ps) {
    if (std::abs(t_ps) > c.grid.pulse_span_fwhm * c.fwhm_ps) return 0.0;
    return std::sqrt(drive_photons(c) * c.gamma_per_ps) * pulse_envelope(c, t_ps);
}

struct TwoLevelTrajectory {
    std::vector<double> times;             // ps
    std::vector<Eigen::Matrix2cd> rho;     // basis order (g, e)
    double n_out = 0.0;
    double c0 = 0.0;
    std::size_t pulse_steps = 0;           // grid index where the drive window ends
};

struct EmissionState {
    double p0 = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;
};

namespace detail {

using Matrix2 = Eigen::Matrix2cd;

struct TimeGrid {
    std::vector<double> t;
    std::size_t pulse_end = 0;  // t[pulse_end] is the end of the drive window
};

inline TimeGrid make_grid(const PulseConfig& c) {
    const double tau = c.fwhm_ps;
    const double gamma = c.gamma_per_ps;
    const double decay = 1.0 / (gamma + c.gamma_star_per_ps);
    double scale = std::min({tau, 1.0 / gamma, decay});
    const double omega_peak = rabi_frequency(c, 0.0);
    if (omega_peak > 0.0) scale = std::min(scale, 1.0 / omega_peak);
    const double h_target = scale / c.grid.steps_per_scale;

    const double window = c.grid.pulse_span_fwhm * tau;
    auto n_pulse = static_cast<std::size_t>(std::ceil(2.0 * window / h_target));
    if (n_pulse % 2) ++n_pulse;  // Simpson needs an even count
    const double h_pulse = 2.0 * window / static_cast<double>(n_pulse);

    const double tail = c.grid.decay_span_lifetimes / gamma;
    const double h_tail_target = std::min(1.0 / gamma, decay) / c.grid.steps_per_scale;
    const auto n_tail = static_cast<std::size_t>(std::ceil(tail / h_tail_target));
    const double h_tail = tail / static_cast<double>(n_tail);

    TimeGrid g;
    g.t.reserve(n_pulse + n_tail + 1);
    for (std::size_t k = 0; k <= n_pulse; ++k) g.t.push_back(-window + h_pulse * static_cast<double>(k));
    g.pulse_end = n_pulse;
    for (std::size_t k = 1; k <= n_tail; ++k) g.t.push_back(window + h_tail * static_cast<double>(k));
    return g;
}

class Lindblad {
public:
    explicit Lindblad(const PulseConfig& c)
        : cfg_(c), gamma_(c.gamma_per_ps), gstar_(c.gamma_star_per_ps) {
        sigma_ << 0, 1, 0, 0;
        sz_ << -1, 0, 0, 1;
    }

    double omega(double t) const { return rabi_frequency(cfg_, t); }

    Matrix2 derivative(double t, const Matrix2& rho) const {
        const double om = omega(t);
        Matrix2 h;
        h << 0, complex(0, om), complex(0, -om), 0;
        const complex mi(0, -1);
        const Matrix2 sd = sigma_.adjoint();
        const Matrix2 n = sd * sigma_;
        Matrix2 d = mi * (h * rho - rho * h);
        d += gamma_ * (sigma_ * rho * sd - 0.5 * (n * rho + rho * n));
        d += 0.5 * gstar_ * (sz_ * rho * sz_ - rho);
        return d;
    }

    // One RK4 step; `emitted` accumulates gamma * rho_ee with the same scheme.
    void step(double t, double h, Matrix2& rho, double& emitted) const {
        const Matrix2 k1 = derivative(t, rho);
        const Matrix2 k2 = derivative(t + 0.5 * h, rho + 0.5 * h * k1);
        const Matrix2 k3 = derivative(t + 0.5 * h, rho + 0.5 * h * k2);
        const Matrix2 k4 = derivative(t + h, rho + h * k3);
        const double e1 = rho(1, 1).real();
        const double e2 = (rho + 0.5 * h * k1)(1, 1).real();
        const double e3 = (rho + 0.5 * h * k2)(1, 1).real();
        const double e4 = (rho + h * k3)(1, 1).real();
        emitted += gamma_ * h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
        rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    double gamma() const { return gamma_; }

private:
    PulseConfig cfg_;
    double gamma_;
    double gstar_;
    Matrix2 sigma_;
    Matrix2 sz_;
};

inline void check_trace(const Matrix2& rho, double t) {
    const double err = std::abs(rho.trace() - complex(1.0));
    if (err > 1e-6)
        throw IntegrationError("trace drifted by " + std::to_string(err) + " at t = " + std::to_string(t) +
                               " ps; reduce the time step");
}

inline double simpson(const std::vector<double>& f, double h) {
    const std::size_t n = f.size() - 1;
    double s = f.front() + f.back();
    for (std::size_t k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f[k];
    return s * h / 3.0;
}

}  // namespace detail

/// Integrate the master equation from the ground state. Fills rho(t), N_out and
/// the regression-theorem C0 = <n(n-1)> (both time orderings).
inline TwoLevelTrajectory evolve(const PulseConfig& c) {
    c.validate();
    const auto grid = detail::make_grid(c);
    const detail::Lindblad lb(c);

    TwoLevelTrajectory tr;
    tr.times = grid.t;
    tr.pulse_steps = grid.pulse_end;
    tr.rho.reserve(grid.t.size());

    detail::Matrix2 rho;
    rho << 1, 0, 0, 0;
    tr.rho.push_back(rho);
    double emitted = 0.0;
    for (std::size_t k = 0; k + 1 < grid.t.size(); ++k) {
        lb.step(grid.t[k], grid.t[k + 1] - grid.t[k], rho, emitted);
        detail::check_trace(rho, grid.t[k + 1]);
        tr.rho.push_back(rho);
    }
    tr.n_out = emitted;

    // Emission times outside the drive window collapse to |g> with no drive, so
    // only the window contributes. After the window the collapsed state decays
    // freely: it emits rho_ee(window end) * (1 - exp(-gamma * remaining)).
    const std::size_t kw = grid.pulse_end;
    const double t_end = grid.t.back();
    const double h = grid.t[1] - grid.t[0];
    std::vector<double> outer(kw + 1, 0.0);
    for (std::size_t i = 0; i <= kw; ++i) {
        const double pe = tr.rho[i](1, 1).real();
        if (pe <= 0.0) continue;
        detail::Matrix2 r;
        r << 1, 0, 0, 0;
        double inner = 0.0;
        for (std::size_t k = i; k < kw; ++k) lb.step(grid.t[k], h, r, inner);
        inner += r(1, 1).real() * (1.0 - std::exp(-lb.gamma() * (t_end - grid.t[kw])));
        outer[i] = lb.gamma() * pe * inner;
    }
    tr.c0 = 2.0 * detail::simpson(outer, h);
    return tr;
}

inline double two_photon_correlation(const PulseConfig& c) { return evolve(c).c0; }

inline EmissionState emission_state_from(double n_out, double c0) {
    EmissionState s{1.0 - n_out + 0.5 * c0, n_out - c0, 0.5 * c0};
    if (s.p0 < -1e-6)
        throw TruncationError("vacuum population " + std::to_string(s.p0) +
                              " is negative; photon numbers above two are not negligible");
    if (s.p1 < -1e-6)
        throw TruncationError("one-photon population " + std::to_string(s.p1) + " is negative");
    return s;
}

inline EmissionState emission_state(const PulseConfig& c) {
    const auto tr = evolve(c);
    return emission_state_from(tr.n_out, tr.c0);
}

// Clamps the O(1e-6) negatives emission_state tolerates.
inline NumberState to_number_state(const EmissionState& e, double lambda = 1.0) {
    std::vector<double> p{std::max(e.p0, 0.0), std::max(e.p1, 0.0), std::max(e.p2, 0.0)};
    const double total = p[0] + p[1] + p[2];
    for (double& v : p) v /= total;
    return NumberState(std::move(p), lambda);
}

struct RabiPoint {
    double area_pi;
    double n_out;
    double c0;
    EmissionState state;
};

/// N_out, C0 and populations versus pulse area. Areas are evaluated in
/// parallel; output order follows the input.
inline std::vector<RabiPoint> rabi_sweep(const PulseConfig& base, const std::vector<double>& areas_pi,
                                         unsigned threads = std::thread::hardware_concurrency()) {
    if (areas_pi.empty()) throw ValidationError("area list is empty");
    for (double a : areas_pi)
        if (!(a >= 0.0)) throw ValidationError("pulse areas must be non-negative");
    std::vector<RabiPoint> out(areas_pi.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < areas_pi.size(); k += stride) {
            PulseConfig c = base;
            c.area_pi = areas_pi[k];
            const auto tr = evolve(c);
            out[k] = {areas_pi[k], tr.n_out, tr.c0,
                      EmissionState{1.0 - tr.n_out + 0.5 * tr.c0, tr.n_out - tr.c0, 0.5 * tr.c0}};
        }
    };
    const std::size_t n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(areas_pi.size())));
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 1; w < n; ++w) jobs.push_back(std::async(std::launch::async, work, w, n));
    work(0, n);
    for (auto& j : jobs) j.get();
    return out;
}

inline void write_trajectory_csv(std::ostream& os, const TwoLevelTrajectory& tr) {
    const auto old = os.precision(15);
    os << "t_ps,rho_gg,rho_ee,re_rho_ge,im_rho_ge\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const auto& r = tr.rho[k];
        os << tr.times[k] << ',' << r(0, 0).real() << ',' << r(1, 1).real() << ',' << r(0, 1).real() << ','
           << r(0, 1).imag() << '\n';
    }
    os.precision(old);
}

inline void write_rabi_csv(std::ostream& os, const std::vector<RabiPoint>& pts) {
    const auto old = os.precision(15);
    os << "area_pi,n_out,c0,p0,p1,p2\n";
    for (const auto& p : pts)
        os << p.area_pi << ',' << p.n_out << ',' << p.c0 << ',' << p.state.p0 << ',' << p.state.p1 << ','
           << p.state.p2 << '\n';
    os.precision(old);
}

}  // namespace pnsim

#pragma once

// Two-wavepacket interference on a balanced beamsplitter.
//
// Two routes are provided and kept independent of each other:
//  * bs_output expands a^dag = (c^dag + d^dag)/sqrt2, b^dag = (c^dag - d^dag)/sqrt2
//    on pure input state vectors and reads photon statistics off the amplitudes;
//  * closed_* evaluate the coherence-term formulas, which also cover mixed
//    inputs (lambda) and partial distinguishability (M).
//
// Conventions. The brute-force numbers are raw Fock-space expectations for one
// pulse pair. The closed forms are normalised per input wavepacket:
//   N_{c,d} = 1/2 [<n> +- sqrt(M) C1 cos(phi)],  C(0) = 1/8 [<n(n-1)> - C2 cos(2 phi)],
// so raw singles are 2x and raw coincidences 4x the closed values. Normalised
// observables (n_c, v, Cbar) agree between the two.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "fock.hpp"

namespace pnsim {

inline constexpr double kRawSinglesPerClosed = 2.0;
inline constexpr double kRawCoincidencesPerClosed = 4.0;
inline constexpr std::size_t kDefaultBruteForceCutoff = 4;

/// Output of the splitter: amplitude(n, m) multiplies |n_c, m_d>.
class JointFockState {
public:
    explicit JointFockState(Eigen::MatrixXcd amplitudes) : amp_(std::move(amplitudes)) {}

    std::size_t max_photons() const noexcept { return static_cast<std::size_t>(amp_.rows()) - 1; }
    complex amplitude(std::size_t n_c, std::size_t m_d) const {
        if (n_c > max_photons() || m_d > max_photons()) return {};
        return amp_(static_cast<Eigen::Index>(n_c), static_cast<Eigen::Index>(m_d));
    }
    double norm_squared() const { return amp_.squaredNorm(); }
    const Eigen::MatrixXcd& amplitudes() const noexcept { return amp_; }

private:
    Eigen::MatrixXcd amp_;
};

struct SinglesPair {
    double c = 0.0;
    double d = 0.0;
};

struct InterferenceObservables {
    double phi = 0.0;
    double n_c = 0.0;  // N_c, per-input convention
    double n_d = 0.0;
    double c0 = 0.0;   // C(0), per-input convention
    double v1 = 0.0;
    double v2 = 0.0;
};

namespace detail {

inline double factorial(std::size_t n) {
    double f = 1.0;
    for (std::size_t k = 2; k <= n; ++k) f *= static_cast<double>(k);
    return f;
}

inline double binomial(std::size_t n, std::size_t k) {
    return factorial(n) / (factorial(k) * factorial(n - k));
}

}  // namespace detail

/// U(|psi_a> (x) |psi_b>) with input b carrying an extra phase n*phi on |n>.
/// Pure inputs only; mixed states go through the closed forms.
inline JointFockState bs_output(const NumberState& a, const NumberState& b, double phi,
                                std::size_t max_cutoff = kDefaultBruteForceCutoff) {
    if (a.lambda() < 1.0 || b.lambda() < 1.0)
        throw UnsupportedError("brute-force interference needs pure inputs (lambda = 1)");
    if (a.cutoff() > max_cutoff || b.cutoff() > max_cutoff)
        throw UnsupportedError("input cutoff exceeds the brute-force limit");

    const std::size_t total = a.cutoff() + b.cutoff();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(total + 1),
                                                  static_cast<Eigen::Index>(total + 1));
    for (std::size_t na = 0; na <= a.cutoff(); ++na) {
        for (std::size_t nb = 0; nb <= b.cutoff(); ++nb) {
            const complex weight = a.amplitude(na) * b.amplitude(nb) *
                                   std::polar(1.0, static_cast<double>(nb) * phi) /
                                   std::sqrt(detail::factorial(na) * detail::factorial(nb) *
                                             std::pow(2.0, static_cast<double>(na + nb)));
            if (weight == complex{}) continue;
            // (c+d)^na (c-d)^nb, c^k d^l |0,0> = sqrt(k! l!) |k,l>
            for (std::size_t j = 0; j <= na; ++j) {
                for (std::size_t i = 0; i <= nb; ++i) {
                    const std::size_t k = j + i;
                    const std::size_t l = na + nb - k;
                    const double sign = ((nb - i) % 2 == 0) ? 1.0 : -1.0;
                    const double coeff = detail::binomial(na, j) * detail::binomial(nb, i) * sign *
                                         std::sqrt(detail::factorial(k) * detail::factorial(l));
                    out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) += weight * coeff;
                }
            }
        }
    }
    return JointFockState(std::move(out));
}

// Raw sum_n n |<n|psi_out>|^2 per output mode.
inline SinglesPair singles_from_state(const JointFockState& out) {
    SinglesPair s;
    const auto& amp = out.amplitudes();
    for (Eigen::Index n = 0; n < amp.rows(); ++n) {
        for (Eigen::Index m = 0; m < amp.cols(); ++m) {
            const double prob = std::norm(amp(n, m));
            s.c += static_cast<double>(n) * prob;
            s.d += static_cast<double>(m) * prob;
        }
    }
    return s;
}

// Raw sum n_c m_d |<n_c m_d|psi_out>|^2.
inline double coincidences_from_state(const JointFockState& out) {
    double c = 0.0;
    const auto& amp = out.amplitudes();
    for (Eigen::Index n = 1; n < amp.rows(); ++n)
        for (Eigen::Index m = 1; m < amp.cols(); ++m)
            c += static_cast<double>(n * m) * std::norm(amp(n, m));
    return c;
}

/// C1 = lambda^2 |sum_n sqrt(n) psi*_{n-1} psi_n|^2. With all alpha_n = 0 this is
/// lambda^2 (sum_n sqrt(n p_n p_{n-1}))^2.
inline double first_order_coherence(const NumberState& s) {
    complex sum{};
    for (std::size_t n = 1; n <= s.cutoff(); ++n)
        sum += std::sqrt(static_cast<double>(n)) * std::conj(s.amplitude(n - 1)) * s.amplitude(n);
    return s.lambda() * s.lambda() * std::norm(sum);
}

/// C2 = lambda^2 |sum_n sqrt(n(n-1)) psi*_{n-2} psi_n|^2.
inline double second_order_coherence(const NumberState& s) {
    complex sum{};
    for (std::size_t n = 2; n <= s.cutoff(); ++n)
        sum += std::sqrt(static_cast<double>(n * (n - 1))) * std::conj(s.amplitude(n - 2)) *
               s.amplitude(n);
    return s.lambda() * s.lambda() * std::norm(sum);
}

inline void check_overlap(double M) {
    if (!(M >= 0.0 && M <= 1.0)) throw ValidationError("overlap M must lie in [0, 1]");
}

inline SinglesPair closed_singles(const NumberState& s, double M, double phi) {
    check_overlap(M);
    const double n = mean_photon(s);
    const double osc = std::sqrt(M) * first_order_coherence(s) * std::cos(phi);
    return {0.5 * (n + osc), 0.5 * (n - osc)};
}

inline double closed_coincidences(const NumberState& s, double phi) {
    return 0.125 * (second_factorial_moment(s) - second_order_coherence(s) * std::cos(2.0 * phi));
}

// v1 = sqrt(M) C1 / <n>
inline double singles_visibility(const NumberState& s, double M = 1.0) {
    check_overlap(M);
    const double n = mean_photon(s);
    if (n <= 0.0) throw UndefinedObservableError("singles visibility undefined for vacuum");
    return std::sqrt(M) * first_order_coherence(s) / n;
}

// v2 = C2 / <n(n-1)>; zero when there is no two-photon component.
inline double coincidence_visibility(const NumberState& s) {
    const double m2 = second_factorial_moment(s);
    return m2 > 0.0 ? second_order_coherence(s) / m2 : 0.0;
}

/// Cbar(0) = C(0) / (N_c N_d) = 1/2 g2 (1 - v2 cos 2phi) / (1 - v1^2 cos^2 phi).
inline double normalized_coincidence_curve(const NumberState& s, double phi, double M = 1.0) {
    if (mean_photon(s) <= 0.0)
        throw UndefinedObservableError("normalised coincidences undefined for vacuum");
    const auto singles = closed_singles(s, M, phi);
    const double denom = singles.c * singles.d;
    if (denom <= 0.0) throw UndefinedObservableError("a detector sees zero mean photons");
    return closed_coincidences(s, phi) / denom;
}

/// Printed two-photon visibility with Fock phases,
///   v1 = lambda^2 p1 (p0 + 2 p2 + 2 sqrt(2 p0 p2) cos(2 alpha1 - alpha2)) / (p1 + 2 p2).
inline double v1_with_phases(const NumberState& s) {
    if (s.cutoff() > 2) throw UnsupportedError("phase-dependent v1 formula covers up to two photons");
    const double p0 = s.population(0), p1 = s.population(1), p2 = s.population(2);
    const double denom = p1 + 2.0 * p2;
    if (denom <= 0.0) throw UndefinedObservableError("singles visibility undefined for vacuum");
    const double rel = 2.0 * s.phase(1) - s.phase(2);
    const double l2 = s.lambda() * s.lambda();
    return l2 * p1 * (p0 + 2.0 * p2 + 2.0 * std::sqrt(2.0 * p0 * p2) * std::cos(rel)) / denom;
}

inline InterferenceObservables observables(const NumberState& s, double M, double phi) {
    const auto singles = closed_singles(s, M, phi);
    InterferenceObservables o;
    o.phi = phi;
    o.n_c = singles.c;
    o.n_d = singles.d;
    o.c0 = closed_coincidences(s, phi);
    o.v1 = mean_photon(s) > 0.0 ? singles_visibility(s, M) : 0.0;
    o.v2 = coincidence_visibility(s);
    return o;
}

struct FringeRow {
    double phi;
    double n_c;   // normalised singles N_c / (N_c + N_d)
    double n_d;
    double c0;    // C(0), per-input convention
    double cbar;  // C(0) / (N_c N_d)
};

/// Closed-form fringe over phi in [0, 2 pi) on `points` equally spaced samples.
inline std::vector<FringeRow> fringe_curve(const NumberState& s, double M, std::size_t points) {
    if (points == 0) throw ValidationError("fringe curve needs at least one point");
    std::vector<FringeRow> rows;
    rows.reserve(points);
    for (std::size_t k = 0; k < points; ++k) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points);
        const auto singles = closed_singles(s, M, phi);
        const double total = singles.c + singles.d;
        rows.push_back({phi, singles.c / total, singles.d / total, closed_coincidences(s, phi),
                        normalized_coincidence_curve(s, phi, M)});
    }
    return rows;
}

inline void write_fringe_csv(std::ostream& os, const std::vector<FringeRow>& rows) {
    const auto old = os.precision(15);
    os << "phi,n_c,n_d,C0,Cbar\n";
    for (const auto& r : rows) os << r.phi << ',' << r.n_c << ',' << r.n_d << ',' << r.c0 << ',' << r.cbar << '\n';
    os.precision(old);
}

}  // namespace pnsim

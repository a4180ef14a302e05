#pragma once

// Inverse pipeline: singles -> phase, visibilities, coincidence fit, and the
// inversion of (v1, v2, g2) into {p0, p1, p2, lambda}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "fock.hpp"
#include "interference.hpp"
#include "mzi.hpp"

namespace pnsim {

// ---------------------------------------------------------------------------
// Time-to-phase mapping

enum class AmplitudeEstimator {
    Moments,  // noise-corrected second moment of 2 n_c - 1 over the record
    Extrema,  // raw (max - min) / 2 of 2 n_c - 1
};

struct PhaseMappingOptions {
    std::size_t n_bins = 20;
    AmplitudeEstimator amplitude = AmplitudeEstimator::Extrema;
    double noise_floor_sigmas = 5.0;  // half-range of n_c must exceed this many per-bin sigmas
};

/// Per time bin: normalised singles, folded phase in [0, pi] and intensity-bin
/// membership. Intensity bins are equal-width in n_c; bin 0 holds the dimmest
/// n_c values and therefore the phases closest to pi.
struct PhaseMapped {
    std::vector<double> n_c;         // per time bin; NaN for empty bins
    std::vector<double> total;       // counts_c + counts_d
    std::vector<double> phase;       // arccos((2 n_c - 1) / v_est), NaN for empty bins
    std::vector<int> bin_of;         // intensity bin per time bin, -1 for empty bins
    std::vector<double> bin_phase;   // phase assigned to each intensity bin's centre
    std::vector<std::size_t> occupancy;
    double v_est = 0.0;
};

namespace detail {

// Var(2 n_c - 1) for a binomial split of `total` counts.
inline double split_variance(double x, double total) { return (1.0 - x * x) / total; }

}  // namespace detail

inline PhaseMapped time_to_phase(const TagStream& ts, const PhaseMappingOptions& opt = {}) {
    if (opt.n_bins == 0) throw ValidationError("need at least one phase bin");
    PhaseMapped pm;
    const std::size_t K = ts.bins.size();
    pm.n_c.assign(K, std::numeric_limits<double>::quiet_NaN());
    pm.total.assign(K, 0.0);
    pm.phase.assign(K, std::numeric_limits<double>::quiet_NaN());
    pm.bin_of.assign(K, -1);

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double sum_x2 = 0.0, sum_var = 0.0;
    std::vector<double> sigmas;
    std::size_t used = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const double tot = static_cast<double>(ts.bins[k].counts_c + ts.bins[k].counts_d);
        pm.total[k] = tot;
        if (tot <= 0.0) continue;
        const double nc = static_cast<double>(ts.bins[k].counts_c) / tot;
        pm.n_c[k] = nc;
        const double x = 2.0 * nc - 1.0;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        sum_x2 += x * x;
        const double var = detail::split_variance(x, tot);
        sum_var += var;
        sigmas.push_back(std::sqrt(var));
        ++used;
    }
    if (used < 2) throw InsufficientContrastError("stream has fewer than two non-empty bins");

    const double half_range = 0.5 * (xmax - xmin);
    if (half_range == 0.0 && xmax == 0.0) {
        // n_c = n_d everywhere: every bin sits at pi/2
        pm.v_est = 0.0;
        pm.occupancy.assign(opt.n_bins, 0);
        pm.bin_phase.assign(opt.n_bins, std::numbers::pi / 2);
        const std::size_t mid = opt.n_bins / 2;
        for (std::size_t k = 0; k < K; ++k) {
            if (std::isnan(pm.n_c[k])) continue;
            pm.phase[k] = std::numbers::pi / 2;
            pm.bin_of[k] = static_cast<int>(mid);
            ++pm.occupancy[mid];
        }
        return pm;
    }

    std::nth_element(sigmas.begin(), sigmas.begin() + static_cast<long>(sigmas.size() / 2), sigmas.end());
    const double sigma_med = sigmas[sigmas.size() / 2];
    // x spans 2 n_c - 1, so a per-bin sigma in n_c is sigma_x / 2
    if (0.5 * half_range <= opt.noise_floor_sigmas * 0.5 * sigma_med)
        throw InsufficientContrastError("fringe amplitude is below the noise floor");

    if (opt.amplitude == AmplitudeEstimator::Extrema) {
        pm.v_est = half_range;
    } else {
        const double m2 = (sum_x2 - sum_var) / static_cast<double>(used);
        if (!(m2 > 0.0)) throw InsufficientContrastError("fringe amplitude is below the noise floor");
        pm.v_est = std::min(1.0, std::sqrt(2.0 * m2));
    }

    const double width = (xmax - xmin) / static_cast<double>(opt.n_bins);
    pm.occupancy.assign(opt.n_bins, 0);
    pm.bin_phase.resize(opt.n_bins);
    for (std::size_t j = 0; j < opt.n_bins; ++j) {
        const double centre = xmin + width * (static_cast<double>(j) + 0.5);
        pm.bin_phase[j] = std::acos(std::clamp(centre / pm.v_est, -1.0, 1.0));
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (std::isnan(pm.n_c[k])) continue;
        const double x = 2.0 * pm.n_c[k] - 1.0;
        pm.phase[k] = std::acos(std::clamp(x / pm.v_est, -1.0, 1.0));
        auto j = static_cast<long>(std::floor((x - xmin) / width));
        j = std::clamp(j, 0L, static_cast<long>(opt.n_bins) - 1);
        pm.bin_of[k] = static_cast<int>(j);
        ++pm.occupancy[static_cast<std::size_t>(j)];
    }
    return pm;
}

// ---------------------------------------------------------------------------
// Visibility

struct VisibilityEstimate {
    double v = 0.0;
    double std_error = 0.0;
};

enum class VisibilityMethod {
    SinusoidFit,  // weighted fit of bin-mean intensity against occupancy-derived phases
    Extrema,      // raw max/min of n_c
};

/// Weighted least-squares fit of mean(2 n_c - 1) per intensity bin against
/// a + v cos(phi_j). The bin phases come from bin occupancy: under a freely
/// drifting phase, the cumulative occupancy up to a bin is proportional to the
/// folded phase span it covers, so phi_j = pi (1 - F_j), F_j the occupancy CDF
/// at the bin's midpoint. This keeps the fit independent of v_est.
inline VisibilityEstimate extract_visibility(const PhaseMapped& pm,
                                             VisibilityMethod method = VisibilityMethod::SinusoidFit) {
    const std::size_t J = pm.occupancy.size();
    if (J == 0) throw ValidationError("phase mapping has no bins");
    if (method == VisibilityMethod::Extrema) {
        double lo = 1.0, hi = 0.0;
        for (double v : pm.n_c)
            if (!std::isnan(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        const double v = std::clamp((hi - lo) / (hi + lo), 0.0, 1.0);
        return {v, std::numeric_limits<double>::quiet_NaN()};
    }
    if (pm.v_est == 0.0) return {0.0, 0.0};

    std::vector<double> sum_x(J, 0.0);
    for (std::size_t k = 0; k < pm.n_c.size(); ++k)
        if (pm.bin_of[k] >= 0) sum_x[static_cast<std::size_t>(pm.bin_of[k])] += 2.0 * pm.n_c[k] - 1.0;
    const double n_total = static_cast<double>(std::accumulate(pm.occupancy.begin(), pm.occupancy.end(), std::size_t{0}));

    // Weighted normal equations for y = a + v c.
    double sw = 0, swc = 0, swcc = 0, swy = 0, swcy = 0;
    std::vector<double> cs(J), ys(J), ws(J);
    double cumulative = 0.0;
    std::size_t nonempty = 0;
    for (std::size_t j = 0; j < J; ++j) {
        const double occ = static_cast<double>(pm.occupancy[j]);
        const double F = (cumulative + 0.5 * occ) / n_total;
        cumulative += occ;
        if (occ == 0.0) continue;
        ++nonempty;
        const double c = std::cos(std::numbers::pi * (1.0 - F));
        const double y = sum_x[j] / occ;
        cs[j] = c;
        ys[j] = y;
        ws[j] = occ;
        sw += occ;
        swc += occ * c;
        swcc += occ * c * c;
        swy += occ * y;
        swcy += occ * c * y;
    }
    if (nonempty < 3) throw InsufficientContrastError("too few occupied phase bins for a sinusoid fit");
    const double det = sw * swcc - swc * swc;
    if (det <= 0.0) throw InsufficientContrastError("degenerate phase coverage");
    const double v = (sw * swcy - swc * swy) / det;
    const double a = (swcc * swy - swc * swcy) / det;
    double chi = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        if (ws[j] == 0.0) continue;
        const double r = ys[j] - a - v * cs[j];
        chi += ws[j] * r * r;
    }
    const double dof = static_cast<double>(nonempty) - 2.0;
    const double s2 = dof > 0 ? chi / dof : 0.0;
    return {std::clamp(v, 0.0, 1.0), std::sqrt(s2 * sw / det)};
}

// ---------------------------------------------------------------------------
// Phase-resolved coincidences

struct CoincidenceBin {
    double phase = 0.0;       // assigned phase of the intensity bin
    double mean_cos2 = 0.0;   // mean cos(2 phi) of member time bins
    double zero = 0.0;        // summed zero-delay coincidences
    double pedestal = 0.0;    // summed mean side peak
    double cbar = 0.0;        // zero / pedestal
    std::size_t occupancy = 0;
};

struct CoincidenceFit {
    double g2 = 0.0;
    double v2 = 0.0;
    double g2_err = 0.0;
    double v2_err = 0.0;
    double pedestal_scale = 0.0;  // mean side peak per unit of counts_c * counts_d
    std::vector<CoincidenceBin> bins;
};

/// Per time bin, the zero-delay peak has mean
///   Z_k = kappa N_c N_d Cbar(phi_k) = kappa (T_k / 4) (g2 / 2) (1 - v2 cos 2 phi_k),
/// with T_k the squared total singles, because N_c N_d = T (1 - v1^2 cos^2 phi) / 4
/// cancels the denominator of Cbar. kappa is fixed by the side peaks, which hold
/// kappa N_c N_d, and cos 2 phi_k = 2 (2 n_c - 1)^2 / v1^2 - 1 (noise corrected).
/// A Poisson-weighted linear fit in (g2 / 2, g2 v2 / 2) follows; intensity bins
/// only group the data for the exported curve.
inline CoincidenceFit fit_coincidences(const TagStream& ts, const PhaseMapped& pm, double v1) {
    if (!(v1 > 0.0)) throw InsufficientContrastError("coincidence fit needs a non-zero singles visibility");
    const int H = ts.half_width;
    const std::size_t K = ts.bins.size();

    double side_total = 0.0, product_total = 0.0;
    std::vector<double> side(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (int d = 1; d <= H; ++d) side[k] += static_cast<double>(ts.at(k, d) + ts.at(k, -d));
        side_total += side[k];
        product_total += static_cast<double>(ts.bins[k].counts_c) * static_cast<double>(ts.bins[k].counts_d);
    }
    if (side_total <= 0.0 || product_total <= 0.0)
        throw InsufficientContrastError("no side-peak coincidences to normalise against");
    const double kappa = side_total / (2.0 * H) / product_total;

    // rows: Z_k = A t_k - B t_k c_k
    std::vector<double> t(K, 0.0), c(K, 0.0), z(K, 0.0);
    std::vector<char> use(K, 0);
    for (std::size_t k = 0; k < K; ++k) {
        if (pm.bin_of[k] < 0) continue;
        const double tot = pm.total[k];
        const double x = 2.0 * pm.n_c[k] - 1.0;
        const double q = x * x - detail::split_variance(x, tot);
        t[k] = kappa * (tot * tot - tot) / 4.0;
        c[k] = 2.0 * q / (v1 * v1) - 1.0;
        z[k] = static_cast<double>(ts.at(k, 0));
        use[k] = t[k] > 0.0;
    }

    double A = 0.0, B = 0.0;
    Eigen::Matrix2d normal;
    // Two passes: unit-mean weights, then weights from the first-pass model.
    for (int pass = 0; pass < 2; ++pass) {
        normal.setZero();
        Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
        for (std::size_t k = 0; k < K; ++k) {
            if (!use[k]) continue;
            double mu = t[k] * (pass == 0 ? 1.0 : A - B * c[k]);
            mu = std::max(mu, 1e-3 * t[k] * std::abs(A) + 1e-12);
            const double w = 1.0 / mu;
            const Eigen::Vector2d row(t[k], -t[k] * c[k]);
            normal += w * row * row.transpose();
            rhs += w * row * z[k];
        }
        if (std::abs(normal.determinant()) <= 1e-300)
            throw InsufficientContrastError("degenerate phase coverage in coincidences");
        const Eigen::Vector2d sol = normal.ldlt().solve(rhs);
        A = sol(0);
        B = sol(1);
    }
    if (!(A > 0.0)) throw InsufficientContrastError("no zero-delay coincidences");
    const Eigen::Matrix2d cov = normal.inverse();
    // kappa carries a relative error of 1/sqrt(side counts) common to A and B
    const double rel_kappa = 1.0 / std::sqrt(side_total);

    CoincidenceFit fit;
    fit.pedestal_scale = kappa;
    fit.g2 = 2.0 * A;
    fit.v2 = B / A;
    fit.g2_err = 2.0 * std::sqrt(cov(0, 0) + A * A * rel_kappa * rel_kappa);
    const double dv_dA = -B / (A * A), dv_dB = 1.0 / A;
    fit.v2_err = std::sqrt(dv_dA * dv_dA * cov(0, 0) + dv_dB * dv_dB * cov(1, 1) + 2.0 * dv_dA * dv_dB * cov(0, 1));

    // Grouped curve for plotting.
    const std::size_t J = pm.occupancy.size();
    fit.bins.resize(J);
    for (std::size_t j = 0; j < J; ++j) fit.bins[j].phase = pm.bin_phase[j];
    for (std::size_t k = 0; k < K; ++k) {
        if (pm.bin_of[k] < 0) continue;
        auto& b = fit.bins[static_cast<std::size_t>(pm.bin_of[k])];
        b.mean_cos2 += c[k];
        b.zero += z[k];
        b.pedestal += side[k] / (2.0 * H);
        ++b.occupancy;
    }
    for (auto& b : fit.bins) {
        if (b.occupancy == 0) continue;
        b.mean_cos2 /= static_cast<double>(b.occupancy);
        b.cbar = b.pedestal > 0.0 ? b.zero / b.pedestal : 0.0;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Linear fit of visibility against count rate

struct LambdaFit {
    double lambda = 0.0;
    double lambda_err = 0.0;
    double slope = 0.0;       // dv / d(normalised count rate)
    double intercept = 0.0;
    double residual_rms = 0.0;
};

struct RateVisibility {
    double countrate = 0.0;
    double v = 0.0;
};

/// v = lambda^2 sqrt(M) p0 with p0 = 1 - R / R_pi, R_pi the count rate at full
/// inversion. Fits v against R / R_pi; lambda = sqrt(-slope / sqrt(M)).
inline LambdaFit fit_lambda_linear(const std::vector<RateVisibility>& pts, double M, double full_inversion_rate) {
    if (pts.size() < 3) throw ValidationError("lambda fit needs at least three points");
    if (!(M > 0.0 && M <= 1.0)) throw ValidationError("overlap M must lie in (0, 1]");
    if (!(full_inversion_rate > 0.0)) throw ValidationError("full-inversion count rate must be positive");
    const double n = static_cast<double>(pts.size());
    double sx = 0, sy = 0;
    for (const auto& p : pts) {
        sx += p.countrate / full_inversion_rate;
        sy += p.v;
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        const double dx = p.countrate / full_inversion_rate - mx;
        sxx += dx * dx;
        sxy += dx * (p.v - my);
    }
    if (sxx <= 1e-14 * std::max(1.0, mx * mx)) throw ValidationError("count rates are degenerate");
    LambdaFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (const auto& p : pts) {
        const double r = p.v - fit.intercept - fit.slope * p.countrate / full_inversion_rate;
        rss += r * r;
    }
    fit.residual_rms = std::sqrt(rss / n);
    const double slope_err = pts.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
    const double l2 = std::max(0.0, -fit.slope / std::sqrt(M));
    fit.lambda = std::sqrt(l2);
    fit.lambda_err = fit.lambda > 0.0 ? slope_err / (2.0 * fit.lambda * std::sqrt(M)) : 0.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Two-photon inversion

struct InversionResult {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0;
    double lambda = 0.0;
    double purity = 0.0;
    double g2 = 0.0;
    double cat_fidelity = 0.0;
    double residual_norm = 0.0;
    bool lambda_identifiable = true;
    bool unique = true;                    // a single root in the physical box
    std::vector<NumberState> candidates;   // every root, smallest p0 first

    NumberState state() const { return NumberState({p0, p1, p2}, lambda); }
};

struct ForwardVisibilities {
    double v1 = 0.0, v2 = 0.0, g2 = 0.0;
};

/// Closed-form (v1, v2, g2) of a state truncated at two photons, M = 1.
inline ForwardVisibilities forward_two_photon(double p0, double p1, double p2, double lambda) {
    const double n = p1 + 2.0 * p2;
    if (n <= 0.0) throw UndefinedObservableError("vacuum has no visibilities");
    const double l2 = lambda * lambda;
    return {l2 * p1 * (p0 + 2.0 * std::sqrt(2.0 * p0 * p2) + 2.0 * p2) / n, l2 * p0, 2.0 * p2 / (n * n)};
}

namespace detail {

struct TwoPhotonBranch {
    double p1, p2, lambda_sq;
};

// Given p0 and g2, the populations follow from n = p1 + 2 p2 solving
// g2 n^2 - 2 n + 2 (1 - p0) = 0 on its physical root n in [1 - p0, 2 (1 - p0)].
inline TwoPhotonBranch branch(double p0, double v2, double g2) {
    const double q = 1.0 - p0;
    const double disc = std::max(0.0, 1.0 - 2.0 * g2 * q);
    const double n = 2.0 * q / (1.0 + std::sqrt(disc));
    const double p2 = std::max(0.0, n - q);
    return {std::max(0.0, q - p2), p2, v2 / p0};
}

inline double v1_residual(double p0, double v1, double v2, double g2) {
    const auto b = branch(p0, v2, g2);
    const double n = b.p1 + 2.0 * b.p2;
    return b.lambda_sq * b.p1 * (p0 + 2.0 * b.p2 + 2.0 * std::sqrt(2.0 * p0 * b.p2)) / n - v1;
}

inline void fill_derived(InversionResult& r, double alpha_sq) {
    const NumberState s = r.state();
    r.purity = purity(density_of(s));
    r.g2 = mean_photon(s) > 0.0 ? g2_zero(s) : 0.0;
    r.cat_fidelity = cat_fidelity(s, alpha_sq);
}

}  // namespace detail

/// Solves v2 = lambda^2 p0, g2 = 2 p2 / (p1 + 2 p2)^2,
/// v1 = lambda^2 p1 (p0 + 2 sqrt(2 p0 p2) + 2 p2) / (p1 + 2 p2), sum p = 1.
///
/// lambda^2 = v2 / p0 and the g2 relation reduce the system to one equation in
/// p0, which is bracketed on a grid over the physical interval
/// [max(v2, 1 - 1/(2 g2)), 1) and bisected. Every bracketed root is returned in
/// `candidates`; the primary result is the one with the smallest p0. A sizeable
/// part of the physical box admits two roots, in which case `unique` is false
/// and the measurement triple does not pin the state down.
inline InversionResult invert_two_photon(double v1, double v2, double g2, double alpha_sq = 0.5,
                                         std::size_t scan_points = 4096) {
    if (!(v1 >= 0.0 && v1 < 1.0)) throw ValidationError("v1 must lie in [0, 1)");
    if (!(v2 >= 0.0 && v2 < 1.0)) throw ValidationError("v2 must lie in [0, 1)");
    if (!(g2 >= 0.0) || !std::isfinite(g2)) throw ValidationError("g2 must be non-negative");
    if (scan_points < 2) throw ValidationError("scan_points must be at least 2");

    auto finish = [&](InversionResult r) {
        detail::fill_derived(r, alpha_sq);
        const auto fw = forward_two_photon(r.p0, r.p1, r.p2, r.lambda);
        r.residual_norm = std::hypot(fw.v1 - v1, fw.v2 - v2, fw.g2 - g2);
        return r;
    };

    constexpr double eps = 1e-12;
    if (g2 <= eps || v2 <= eps) {
        // No two-photon lever arm (g2 = 0) or no vacuum coherence (v2 = 0):
        // p0 and lambda only enter through lambda^2 p0, so they cannot be separated.
        if (g2 <= eps && std::abs(v1 - v2) > 1e-9)
            throw InfeasibleError("without a two-photon component v1 must equal v2");
        if (g2 > eps && v1 > 1e-9) throw InfeasibleError("v1 > 0 requires vacuum coherence (v2 > 0)");
        InversionResult r;
        r.lambda_identifiable = false;
        if (g2 <= eps) {
            r.lambda = 1.0;  // the purest member of the family
            r.p0 = v2;
            r.p1 = 1.0 - v2;
        } else {
            r.p0 = std::max(0.0, 1.0 - 1.0 / (2.0 * g2));
            const auto b = detail::branch(std::max(r.p0, 1e-300), 0.0, g2);
            r.p1 = b.p1;
            r.p2 = b.p2;
            r.lambda = r.p0 > 0.0 ? 0.0 : 1.0;
        }
        r.candidates = {r.state()};
        return finish(r);
    }

    const double lo = std::max(v2, 1.0 - 1.0 / (2.0 * g2));
    const double hi = 1.0;
    if (!(lo < hi)) throw InfeasibleError("no physical vacuum population is compatible with v2 and g2");

    auto f = [&](double p0) { return detail::v1_residual(p0, v1, v2, g2); };
    std::vector<std::pair<double, double>> brackets;
    double x_prev = lo, f_prev = f(lo);
    // A root sitting on the lower edge (lambda = 1 or p1 = 0) may not change sign.
    if (std::abs(f_prev) <= 1e-13) brackets.emplace_back(lo, lo);
    for (std::size_t i = 1; i < scan_points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(scan_points);
        const double fx = f(x);
        const bool edge_root = !brackets.empty() && brackets.back().first == lo && brackets.back().second == lo &&
                               x_prev == lo;
        if (!edge_root && (fx == 0.0 || (f_prev < 0.0) != (fx < 0.0))) brackets.emplace_back(x_prev, x);
        x_prev = x;
        f_prev = fx;
    }
    // p0 -> 1 limit: the residual tends to v2 - v1
    if (f_prev != 0.0 && (f_prev < 0.0) != (v2 - v1 < 0.0)) brackets.emplace_back(x_prev, hi);
    if (brackets.empty())
        throw InfeasibleError("no physical state reproduces (v1, v2, g2) = (" + std::to_string(v1) + ", " +
                              std::to_string(v2) + ", " + std::to_string(g2) + ")");

    std::vector<InversionResult> roots;
    for (auto [a, b] : brackets) {
        double fa = f(a);
        for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
            const double m = 0.5 * (a + b);
            const double fm = f(m);
            if (fm == 0.0) {
                a = b = m;
                break;
            }
            if ((fa < 0.0) == (fm < 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        const double p0 = std::min(0.5 * (a + b), 1.0 - 1e-15);
        const auto br = detail::branch(p0, v2, g2);
        InversionResult r;
        const double total = p0 + br.p1 + br.p2;
        r.p0 = p0 / total;
        r.p1 = br.p1 / total;
        r.p2 = br.p2 / total;
        r.lambda = std::sqrt(std::min(1.0, br.lambda_sq));
        roots.push_back(r);
    }

    InversionResult r = roots.front();
    r.unique = roots.size() == 1;
    for (const auto& c : roots) r.candidates.push_back(c.state());
    return finish(r);
}


// ---------------------------------------------------------------------------
// Report

struct Report {
    InversionResult result;
    double alpha_sq = 0.5;
    double g2_consistency = 0.0;  // |g2 from populations - g2 from the result record|
    nlohmann::json errors = nlohmann::json::object();
};

inline Report report(const InversionResult& r, double alpha_sq = 0.5) {
    Report rep;
    rep.result = r;
    rep.alpha_sq = alpha_sq;
    const NumberState s = r.state();
    rep.result.purity = purity(density_of(s));
    rep.result.cat_fidelity = cat_fidelity(s, alpha_sq);
    const double g2 = mean_photon(s) > 0.0 ? g2_zero(s) : 0.0;
    rep.g2_consistency = std::abs(g2 - r.g2);
    rep.result.g2 = g2;
    return rep;
}

inline nlohmann::json to_json(const Report& rep) {
    const auto& r = rep.result;
    nlohmann::json j;
    j["p"] = {r.p0, r.p1, r.p2};
    j["lambda"] = r.lambda;
    j["purity"] = r.purity;
    j["g2"] = r.g2;
    j["cat_fidelity"] = r.cat_fidelity;
    j["alpha_sq"] = rep.alpha_sq;
    j["residual"] = r.residual_norm;
    j["lambda_identifiable"] = r.lambda_identifiable;
    j["unique"] = r.unique;
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : r.candidates) cands.push_back(c);
    j["candidates"] = cands;
    j["g2_consistency"] = rep.g2_consistency;
    j["errors"] = rep.errors;
    return j;
}

// ---------------------------------------------------------------------------
// Full stream analysis with a Poisson bootstrap

struct AnalysisOptions {
    PhaseMappingOptions mapping;
    VisibilityMethod visibility = VisibilityMethod::SinusoidFit;
    double alpha_sq = 0.5;
    std::size_t bootstrap = 100;
    std::size_t block_bins = 50;  // 0: resample counts only
    std::uint64_t seed = 1;
    unsigned threads = std::thread::hardware_concurrency();
};

struct StreamEstimate {
    VisibilityEstimate v1;
    CoincidenceFit coincidences;
    InversionResult inversion;
};

struct Spread {
    double p0 = 0, p1 = 0, p2 = 0, lambda = 0, v1 = 0, v2 = 0, g2 = 0, purity = 0, cat_fidelity = 0;
};

struct AnalysisResult {
    PhaseMapped mapping;
    StreamEstimate estimate;
    Spread sigma;                  // bootstrap standard deviations
    std::size_t bootstrap_used = 0;
    std::size_t bootstrap_failed = 0;
};

inline StreamEstimate estimate_stream(const TagStream& ts, const AnalysisOptions& opt, PhaseMapped* mapping_out = nullptr) {
    PhaseMapped pm = time_to_phase(ts, opt.mapping);
    StreamEstimate e;
    e.v1 = extract_visibility(pm, opt.visibility);
    e.coincidences = fit_coincidences(ts, pm, e.v1.v);
    const double v2 = std::clamp(e.coincidences.v2, 0.0, 1.0 - 1e-12);
    const double g2 = std::max(0.0, e.coincidences.g2);
    e.inversion = invert_two_photon(e.v1.v, v2, g2, opt.alpha_sq);
    if (mapping_out) *mapping_out = std::move(pm);
    return e;
}

// Each count replaced by a Poisson draw with the observed count as mean.
inline TagStream poisson_resample(const TagStream& ts, std::mt19937_64& rng) {
    TagStream out = ts;
    auto draw = [&](long long n) -> long long {
        return n > 0 ? std::poisson_distribution<long long>(static_cast<double>(n))(rng) : 0;
    };
    for (auto& b : out.bins) {
        b.counts_c = draw(b.counts_c);
        b.counts_d = draw(b.counts_d);
    }
    for (auto& row : out.coincidences)
        for (auto& c : row) c = draw(c);
    return out;
}

/// Moving-block resample of time bins followed by Poisson resampling. The block
/// step carries the sampling spread of the phase path itself, which a pure count
/// resample leaves fixed.
inline TagStream block_resample(const TagStream& ts, std::size_t block, std::mt19937_64& rng) {
    const std::size_t K = ts.bins.size();
    if (block == 0 || K == 0) return poisson_resample(ts, rng);
    block = std::min(block, K);
    TagStream picked;
    picked.half_width = ts.half_width;
    picked.bins.reserve(K);
    picked.coincidences.reserve(K);
    std::uniform_int_distribution<std::size_t> start(0, K - block);
    while (picked.bins.size() < K) {
        const std::size_t s = start(rng);
        for (std::size_t k = s; k < s + block && picked.bins.size() < K; ++k) {
            picked.bins.push_back(ts.bins[k]);
            picked.bins.back().index = picked.bins.size() - 1;
            picked.coincidences.push_back(ts.coincidences[k]);
        }
    }
    return poisson_resample(picked, rng);
}

inline AnalysisResult analyze_stream(const TagStream& ts, const AnalysisOptions& opt = {}) {
    AnalysisResult res;
    res.estimate = estimate_stream(ts, opt, &res.mapping);
    if (opt.bootstrap == 0) return res;

    struct Sample {
        bool ok = false;
        StreamEstimate e;
    };
    std::vector<Sample> samples(opt.bootstrap);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t b = begin; b < samples.size(); b += stride) {
            std::seed_seq seq{opt.seed, std::uint64_t{b}, std::uint64_t{0x626f6f74}};
            std::mt19937_64 rng(seq);
            try {
                samples[b].e = estimate_stream(block_resample(ts, opt.block_bins, rng), opt);
                samples[b].ok = true;
            } catch (const std::exception&) {
                samples[b].ok = false;
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min<std::size_t>(opt.threads, samples.size()));
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 1; w < n_threads; ++w) jobs.push_back(std::async(std::launch::async, work, w, n_threads));
    work(0, n_threads);
    for (auto& j : jobs) j.get();

    std::vector<std::array<double, 9>> vals;
    for (const auto& s : samples) {
        if (!s.ok) {
            ++res.bootstrap_failed;
            continue;
        }
        const auto& r = s.e.inversion;
        vals.push_back({r.p0, r.p1, r.p2, r.lambda, s.e.v1.v, s.e.coincidences.v2, s.e.coincidences.g2, r.purity,
                        r.cat_fidelity});
    }
    res.bootstrap_used = vals.size();
    if (vals.size() < 2) return res;
    std::array<double, 9> sd{};
    for (std::size_t i = 0; i < 9; ++i) {
        double mean = 0.0;
        for (const auto& v : vals) mean += v[i];
        mean /= static_cast<double>(vals.size());
        double ss = 0.0;
        for (const auto& v : vals) ss += (v[i] - mean) * (v[i] - mean);
        sd[i] = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    res.sigma = {sd[0], sd[1], sd[2], sd[3], sd[4], sd[5], sd[6], sd[7], sd[8]};
    return res;
}

inline nlohmann::json to_json(const AnalysisResult& a, double alpha_sq) {
    Report rep = report(a.estimate.inversion, alpha_sq);
    rep.errors = {{"p", {a.sigma.p0, a.sigma.p1, a.sigma.p2}},
                  {"lambda", a.sigma.lambda},
                  {"purity", a.sigma.purity},
                  {"g2", a.sigma.g2},
                  {"cat_fidelity", a.sigma.cat_fidelity},
                  {"v1", a.sigma.v1},
                  {"v2", a.sigma.v2}};
    auto j = to_json(rep);
    j["measured"] = {{"v1", a.estimate.v1.v},
                     {"v1_fit_err", a.estimate.v1.std_error},
                     {"v2", a.estimate.coincidences.v2},
                     {"g2", a.estimate.coincidences.g2}};
    j["bootstrap"] = {{"used", a.bootstrap_used}, {"failed", a.bootstrap_failed}};
    return j;
}

inline void write_phase_curve_csv(std::ostream& os, const AnalysisResult& a) {
    const auto old = os.precision(15);
    os << "phi,occupancy,mean_cos2phi,zero_delay,pedestal,Cbar\n";
    for (const auto& b : a.estimate.coincidences.bins)
        os << b.phase << ',' << b.occupancy << ',' << b.mean_cos2 << ',' << b.zero << ',' << b.pedestal << ','
           << b.cbar << '\n';
    os.precision(old);
}

}  // namespace pnsim

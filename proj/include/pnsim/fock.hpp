#pragma once

// Photon-number states, their density matrices and scalar observables.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"

namespace pnsim {

using complex = std::complex<double>;

// Populations summing to within this of one are renormalised on construction;
// anything further off is rejected.
inline constexpr double kNormalizationTolerance = 1e-9;

/// One emitted wavepacket in the Fock basis:
///   rho = lambda |psi><psi| + (1 - lambda) diag(p),
///   |psi> = sum_n sqrt(p_n) e^{i alpha_n} |n>,  alpha_0 = 0.
///
/// `phases()` holds alpha_1..alpha_m, so it is one shorter than `populations()`.
class NumberState {
public:
    NumberState() : NumberState(std::vector<double>{1.0}) {}

    explicit NumberState(std::vector<double> populations, double lambda = 1.0,
                         std::vector<double> phases = {})
        : p_(std::move(populations)), alpha_(std::move(phases)), lambda_(lambda) {
        if (p_.empty()) throw ValidationError("NumberState needs at least one population");
        for (double& v : p_) {
            if (!std::isfinite(v)) throw ValidationError("population is not finite");
            if (v < 0.0) {
                if (v < -1e-12) throw ValidationError("negative population " + std::to_string(v));
                v = 0.0;
            }
        }
        const double total = std::accumulate(p_.begin(), p_.end(), 0.0);
        if (std::abs(total - 1.0) > kNormalizationTolerance)
            throw ValidationError("populations sum to " + std::to_string(total) + ", expected 1");
        for (double& v : p_) v /= total;

        if (!(lambda_ >= 0.0 && lambda_ <= 1.0))
            throw ValidationError("lambda must lie in [0, 1], got " + std::to_string(lambda_));

        if (alpha_.empty()) alpha_.assign(cutoff(), 0.0);
        if (alpha_.size() != cutoff())
            throw ValidationError("expected " + std::to_string(cutoff()) + " phases, got " +
                                  std::to_string(alpha_.size()));
        for (double a : alpha_)
            if (!std::isfinite(a)) throw ValidationError("phase is not finite");
    }

    static NumberState fock(std::size_t n) {
        std::vector<double> p(n + 1, 0.0);
        p[n] = 1.0;
        return NumberState(std::move(p));
    }

    const std::vector<double>& populations() const noexcept { return p_; }
    const std::vector<double>& phases() const noexcept { return alpha_; }
    double lambda() const noexcept { return lambda_; }
    std::size_t cutoff() const noexcept { return p_.size() - 1; }

    double population(std::size_t n) const noexcept { return n < p_.size() ? p_[n] : 0.0; }
    // alpha_n with alpha_0 = 0.
    double phase(std::size_t n) const noexcept {
        return (n == 0 || n > alpha_.size()) ? 0.0 : alpha_[n - 1];
    }

    // sqrt(p_n) e^{i alpha_n}
    complex amplitude(std::size_t n) const {
        return std::polar(std::sqrt(population(n)), phase(n));
    }

    NumberState with_lambda(double lambda) const { return NumberState(p_, lambda, alpha_); }
    NumberState with_phases(std::vector<double> phases) const {
        return NumberState(p_, lambda_, std::move(phases));
    }

private:
    std::vector<double> p_;
    std::vector<double> alpha_;
    double lambda_;
};

/// Hermitian, unit-trace, positive semidefinite matrix in the Fock basis.
class DensityMatrix {
public:
    explicit DensityMatrix(Eigen::MatrixXcd entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols() || m_.rows() == 0)
            throw ValidationError("density matrix must be square and non-empty");
        if ((m_ - m_.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
            throw ValidationError("density matrix is not Hermitian");
        if (std::abs(m_.trace() - complex(1.0)) > 1e-12)
            throw ValidationError("density matrix trace differs from 1");
        if (min_eigenvalue() < -1e-10)
            throw ValidationError("density matrix has a negative eigenvalue");
    }

    Eigen::Index dim() const noexcept { return m_.rows(); }
    const Eigen::MatrixXcd& entries() const noexcept { return m_; }
    complex operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

private:
    Eigen::MatrixXcd m_;
};

inline DensityMatrix density_of(const NumberState& state) {
    const auto dim = static_cast<Eigen::Index>(state.cutoff() + 1);
    Eigen::MatrixXcd rho(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            const auto ui = static_cast<std::size_t>(i);
            const auto uj = static_cast<std::size_t>(j);
            if (i == j) {
                rho(i, j) = state.population(ui);
            } else {
                rho(i, j) = state.lambda() * state.amplitude(ui) * std::conj(state.amplitude(uj));
            }
        }
    }
    return DensityMatrix(std::move(rho));
}

// Tr(rho^2); for Hermitian rho this is the squared Frobenius norm.
inline double purity(const DensityMatrix& rho) { return rho.entries().squaredNorm(); }

inline double mean_photon(const NumberState& state) {
    double n = 0.0;
    for (std::size_t k = 0; k <= state.cutoff(); ++k) n += static_cast<double>(k) * state.population(k);
    return n;
}

// <n(n-1)>, the unnormalised zero-delay second-order correlation.
inline double second_factorial_moment(const NumberState& state) {
    double m = 0.0;
    for (std::size_t k = 2; k <= state.cutoff(); ++k)
        m += static_cast<double>(k * (k - 1)) * state.population(k);
    return m;
}

inline double g2_zero(const NumberState& state) {
    const double n = mean_photon(state);
    if (n <= 0.0) throw UndefinedObservableError("g2(0) is undefined for zero mean photon number");
    return second_factorial_moment(state) / (n * n);
}

/// Photon-number distribution of the even cat |alpha> + |-alpha>,
///   p_n = |alpha|^{2n} / n! / cosh|alpha|^2 for even n, 0 for odd n.
/// Filled at least up to `min_size` entries and then until an even term drops
/// below `tail_tolerance`.
inline std::vector<double> cat_populations(double alpha_sq, std::size_t min_size = 1,
                                           double tail_tolerance = 1e-12) {
    if (!(alpha_sq >= 0.0)) throw ValidationError("alpha_sq must be non-negative");
    std::vector<double> p;
    const double norm = std::cosh(alpha_sq);
    double term = 1.0 / norm;  // |alpha|^{2n}/n!/cosh, n = 0
    for (std::size_t n = 0;; ++n) {
        if (n > 0) term *= alpha_sq / static_cast<double>(n);
        p.push_back(n % 2 == 0 ? term : 0.0);
        if (p.size() >= min_size && n % 2 == 0 && term < tail_tolerance) break;
        if (n > 10000) break;
    }
    return p;
}

/// Statistical (Bhattacharyya) fidelity of the state's populations to an even
/// cat of mean-photon parameter alpha_sq. Depends on populations only.
inline double cat_fidelity(const NumberState& state, double alpha_sq,
                           double tail_tolerance = 1e-12) {
    const auto cat = cat_populations(alpha_sq, state.cutoff() + 1, tail_tolerance);
    double f = 0.0;
    for (std::size_t n = 0; n <= state.cutoff() && n < cat.size(); ++n)
        f += std::sqrt(state.population(n) * cat[n]);
    return f;
}

// JSON form {"p": [...], "alpha": [...], "lambda": x}.
inline void to_json(nlohmann::json& j, const NumberState& s) {
    j = nlohmann::json{{"p", s.populations()}, {"alpha", s.phases()}, {"lambda", s.lambda()}};
}

inline void from_json(const nlohmann::json& j, NumberState& s) {
    if (!j.is_object() || !j.contains("p"))
        throw ValidationError("NumberState JSON needs a \"p\" array");
    auto p = j.at("p").get<std::vector<double>>();
    const double lambda = j.value("lambda", 1.0);
    std::vector<double> alpha;
    if (j.contains("alpha")) alpha = j.at("alpha").get<std::vector<double>>();
    s = NumberState(std::move(p), lambda, std::move(alpha));
}

} // namespace pnsim

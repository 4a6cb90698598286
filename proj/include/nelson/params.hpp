#pragma once

#include "nelson/types.hpp"

namespace nelson {

/// Physical configuration of the elliptic state: angular-momentum scale
/// lambda, force constant mu, eccentricity e and diffusion scale eps
/// (eps^2 = hbar). The semimajor axis a = lambda^2/mu is derived.
class PhysParams {
public:
    PhysParams() : PhysParams(1.0, 1.0, 0.5, 0.1) {}

    PhysParams(double lambda, double mu, double ecc, double eps)
        : lambda_(lambda), mu_(mu), ecc_(ecc), eps_(eps), a_(lambda * lambda / mu) {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
        if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be positive");
        if (!(ecc > 0.0 && ecc < 1.0)) throw ConfigError("eccentricity must lie in (0,1)");
        if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in (0,1]");
    }

    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] double mu() const { return mu_; }
    [[nodiscard]] double ecc() const { return ecc_; }
    [[nodiscard]] double eps() const { return eps_; }
    [[nodiscard]] double a() const { return a_; }
    /// sqrt(1 - e^2)
    [[nodiscard]] double ecc_conj() const { return std::sqrt(1.0 - ecc_ * ecc_); }
    /// Bound-state energy E_n = -mu^2 / (2 lambda^2).
    [[nodiscard]] double energy() const { return -mu_ * mu_ / (2.0 * lambda_ * lambda_); }
    /// Kepler period 2 pi sqrt(a^3/mu) = 2 pi lambda^3 / mu^2.
    [[nodiscard]] double period() const { return kTwoPi * lambda_ * lambda_ * lambda_ / (mu_ * mu_); }

    [[nodiscard]] PhysParams with_eps(double eps) const { return {lambda_, mu_, ecc_, eps}; }
    [[nodiscard]] PhysParams with_ecc(double ecc) const { return {lambda_, mu_, ecc, eps_}; }

private:
    double lambda_, mu_, ecc_, eps_, a_;
};

}  // namespace nelson

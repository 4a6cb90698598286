#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace nelson {

using cplx = std::complex<double>;

/// Plain 3-vector used for points, gradients and drifts.
struct Vec3 {
    double x{0}, y{0}, z{0};

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    [[nodiscard]] constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }
    [[nodiscard]] bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

using CartesianPoint = Vec3;

/// Complex 3-vector; Z_{0,inf} and Z_{eps,n} live here.
struct ComplexVec3 {
    cplx x{}, y{}, z{};

    [[nodiscard]] Vec3 real() const { return {x.real(), y.real(), z.real()}; }
    [[nodiscard]] Vec3 imag() const { return {x.imag(), y.imag(), z.imag()}; }
    /// Bilinear square Z.Z (no conjugation).
    [[nodiscard]] cplx square() const { return x * x + y * y + z * z; }
    [[nodiscard]] double distance(const ComplexVec3& o) const {
        return std::sqrt(std::norm(x - o.x) + std::norm(y - o.y) + std::norm(z - o.z));
    }
};

/// Raised when a field is evaluated where it is singular or undefined.
class DomainError : public std::domain_error {
public:
    enum class Kind { Origin, DegenerateDenominator, OutOfRange, NoConvergence, Node, Quadrature, Resolution, InsufficientSamples, FitFailure };

    DomainError(Kind kind, const std::string& what) : std::domain_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Invalid parameters or configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

}  // namespace nelson

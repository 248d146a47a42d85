#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

namespace hmi {

using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Linear map from a 2d to a 3d inner-product space, both orthonormal;
/// the per-point differential of an immersed surface.
struct LinMap32 {
    Mat32 entries;

    LinMap32() : entries(Mat32::Zero()) {}
    explicit LinMap32(const Mat32& m) : entries(m) {}

    /// Singular values, ascending.
    Vec2 singularValues() const;
};

/// L = sigma * b with b = sqrt(L^T L) symmetric nonnegative and sigma an
/// isometric embedding. sigma is absent when L is rank deficient.
struct PolarParts {
    Mat2 b;
    std::optional<Mat32> sigma;
};

/// L = a_part + v x (.), a_part self-adjoint on the plane orthogonal to the
/// reference normal. The sign of v follows the right-handed frame (N, e1, e2).
struct ASParts {
    Mat2 a_part;
    Vec3 v;
};

/// Square root of a symmetric nonnegative 2x2 matrix, closed form.
Mat2 sqrtSpd2(const Mat2& m);

PolarParts polarDecompose(const LinMap32& L);

/// trace of sqrt(L^T L) = sum of singular values.
double schatten1(const LinMap32& L);

/// Regularized 1-Schatten norm: sqrt(tr(e^2 + L^T L) + 2 sqrt(det(e^2 + L^T L))).
double qEps(const LinMap32& L, double eps);

/// n_eps(t1,t2) = sqrt(eps^2+t1^2) + sqrt(eps^2+t2^2); q_eps in terms of
/// singular values.
double nEps(double t1, double t2, double eps);

/// d/dt q_eps((1 + tA) L) at t = 0 for A symmetric nonnegative on the target.
/// Requires eps > 0, or rank(L) = 2 when eps = 0.
double qEpsDirectionalDerivative(const LinMap32& L, const Mat3& A, double eps);

/// Decomposes L (source identified with the plane orthogonal to the unit
/// vector N) as a self-adjoint part plus a cross-product part.
ASParts asDecompose(const LinMap32& L, const Vec3& N);

struct JacobiProbeResult {
    std::vector<double> s;
    std::vector<double> u;                  ///< u(s) = ||T(s)||_1
    std::vector<double> second_differences; ///< second divided differences x2 at interior nodes
    double min_second_difference = 0.0;
};

/// Integrates the Cauchy problem d^2T/ds^2 = A(s) T with a classical 4th
/// order one-step scheme (step <= 1e-3) and samples the 1-Schatten norm on
/// the grid. A(s) must be symmetric nonnegative; otherwise the probe throws.
JacobiProbeResult jacobiConvexityProbe(const LinMap32& T0, const LinMap32& Tdot0,
                                       const std::function<Mat3(double)>& A,
                                       const std::vector<double>& grid);

}  // namespace hmi

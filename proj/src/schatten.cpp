#include "hmi/schatten.hpp"

#include <cmath>
#include <stdexcept>

namespace hmi {

Vec2 LinMap32::singularValues() const {
    Eigen::JacobiSVD<Mat32> svd(entries);
    Vec2 s = svd.singularValues();
    return Vec2(s[1], s[0]);  // ascending
}

Mat2 sqrtSpd2(const Mat2& m) {
    const double tr = m.trace();
    double det = m.determinant();
    if (det < 0.0) det = 0.0;
    const double s = std::sqrt(det);
    const double denom = tr + 2.0 * s;
    if (denom <= 0.0) return Mat2::Zero();
    return (m + s * Mat2::Identity()) / std::sqrt(denom);
}

PolarParts polarDecompose(const LinMap32& L) {
    PolarParts out;
    const Mat2 g = L.entries.transpose() * L.entries;
    out.b = sqrtSpd2(g);
    const double scale = 1.0 + g.trace();  // 1 + ||L||_F^2
    if (out.b.determinant() > 1e-12 * scale) {
        out.sigma = L.entries * out.b.inverse();
    }
    return out;
}

double schatten1(const LinMap32& L) {
    return sqrtSpd2(L.entries.transpose() * L.entries).trace();
}

double qEps(const LinMap32& L, double eps) {
    const Mat2 m = eps * eps * Mat2::Identity() + L.entries.transpose() * L.entries;
    double det = m.determinant();
    if (det < 0.0) det = 0.0;
    return std::sqrt(m.trace() + 2.0 * std::sqrt(det));
}

double nEps(double t1, double t2, double eps) {
    return std::sqrt(eps * eps + t1 * t1) + std::sqrt(eps * eps + t2 * t2);
}

double qEpsDirectionalDerivative(const LinMap32& L, const Mat3& A, double eps) {
    if (eps < 0.0) throw std::invalid_argument("qEpsDirectionalDerivative: eps < 0");
    const Mat2 g = L.entries.transpose() * L.entries;
    const Mat2 m = eps * eps * Mat2::Identity() + g;
    if (eps == 0.0) {
        const double scale = 1.0 + g.trace();
        if (g.determinant() <= 1e-24 * scale * scale)
            throw std::domain_error(
                "qEpsDirectionalDerivative: rank-deficient map at eps = 0");
    }
    const Mat2 ahat = 2.0 * L.entries.transpose() * A * L.entries;
    const double q = std::sqrt(m.trace() + 2.0 * std::sqrt(std::max(0.0, m.determinant())));
    const double det = std::max(0.0, m.determinant());
    return (ahat.trace() + std::sqrt(det) * (m.inverse() * ahat).trace()) / (2.0 * q);
}

ASParts asDecompose(const LinMap32& L, const Vec3& N) {
    if (std::abs(N.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("asDecompose: N must be a unit vector");
    // Right-handed frame (N, e1, e2): e2 = N x e1, so e1 x e2 = N.
    int k = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(N[i]) < std::abs(N[k])) k = i;
    Vec3 e1 = Vec3::Unit(k) - Vec3::Unit(k).dot(N) * N;
    e1.normalize();
    const Vec3 e2 = N.cross(e1);

    // Unknowns (a11, a22, a12, v1, v2, v3); columns of L give six equations
    //   L e_j = a_1j e1 + a_2j e2 + v x e_j.
    Eigen::Matrix<double, 6, 6> sys = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> rhs;
    const Vec3 cols[2] = {e1, e2};
    for (int j = 0; j < 2; ++j) {
        rhs.segment<3>(3 * j) = L.entries.col(j);
        for (int r = 0; r < 3; ++r) {
            const int row = 3 * j + r;
            // a-part contribution
            if (j == 0) {
                sys(row, 0) += e1[r];  // a11
                sys(row, 2) += e2[r];  // a21 = a12
            } else {
                sys(row, 2) += e1[r];  // a12
                sys(row, 1) += e2[r];  // a22
            }
            // v x e_j contribution, component r
            for (int c = 0; c < 3; ++c) {
                Vec3 unit = Vec3::Unit(c);
                sys(row, 3 + c) += unit.cross(cols[j])[r];
            }
        }
    }
    Eigen::Matrix<double, 6, 1> sol = sys.partialPivLu().solve(rhs);
    ASParts out;
    out.a_part << sol[0], sol[2], sol[2], sol[1];
    out.v = sol.segment<3>(3);
    return out;
}

namespace {

void checkAdmissible(const Mat3& a, double s) {
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + a.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("jacobiConvexityProbe: A(" + std::to_string(s) +
                                    ") is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (a + a.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
        throw std::invalid_argument("jacobiConvexityProbe: A(" + std::to_string(s) +
                                    ") is indefinite");
}

}  // namespace

JacobiProbeResult jacobiConvexityProbe(const LinMap32& T0, const LinMap32& Tdot0,
                                       const std::function<Mat3(double)>& A,
                                       const std::vector<double>& grid) {
    if (grid.size() < 2) throw std::invalid_argument("jacobiConvexityProbe: grid too small");
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw std::invalid_argument("jacobiConvexityProbe: grid not increasing");

    JacobiProbeResult res;
    res.s = grid;
    res.u.resize(grid.size());

    Mat32 t = T0.entries, td = Tdot0.entries;
    double s = grid[0];
    res.u[0] = schatten1(LinMap32(t));

    auto rk4 = [&](double s0, double h) {
        // y = (T, Td), y' = (Td, A(s) T)
        const Mat3 a1 = A(s0), a2 = A(s0 + 0.5 * h), a4 = A(s0 + h);
        checkAdmissible(a1, s0);
        checkAdmissible(a2, s0 + 0.5 * h);
        checkAdmissible(a4, s0 + h);
        Mat32 k1t = td, k1d = a1 * t;
        Mat32 k2t = td + 0.5 * h * k1d, k2d = a2 * (t + 0.5 * h * k1t);
        Mat32 k3t = td + 0.5 * h * k2d, k3d = a2 * (t + 0.5 * h * k2t);
        Mat32 k4t = td + h * k3d, k4d = a4 * (t + h * k3t);
        t += (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        td += (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
    };

    for (size_t i = 1; i < grid.size(); ++i) {
        const double span = grid[i] - s;
        const int n = std::max(1, static_cast<int>(std::ceil(span / 1e-3)));
        const double h = span / n;
        for (int k = 0; k < n; ++k) rk4(s + k * h, h);
        s = grid[i];
        res.u[i] = schatten1(LinMap32(t));
    }

    res.min_second_difference = 0.0;
    for (size_t i = 1; i + 1 < grid.size(); ++i) {
        const double h0 = grid[i] - grid[i - 1], h1 = grid[i + 1] - grid[i];
        const double dd =
            2.0 * ((res.u[i + 1] - res.u[i]) / h1 - (res.u[i] - res.u[i - 1]) / h0) / (h0 + h1);
        res.second_differences.push_back(dd);
        res.min_second_difference = std::min(res.min_second_difference, dd);
    }
    return res;
}

}  // namespace hmi

#pragma once

#include <Eigen/Dense>

#include <optional>

namespace hmi {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat2c = Eigen::Matrix2cd;

/// Minkowski bilinear form of signature (-,+,+,+) on R^{1,3}.
double minkowskiDot(const Vec4& a, const Vec4& b);

/// The matrix eta = diag(-1,1,1,1).
const Mat4& minkowskiForm();

/// Point on the upper hyperboloid sheet {<x,x> = -1, x0 > 0}.
///
/// H^2 is embedded as the slice {x3 = 0}; all H^2 geometry in the library
/// runs through the same kernels.
struct HPoint {
    Vec4 x;

    HPoint() : x(1, 0, 0, 0) {}
    explicit HPoint(const Vec4& v) : x(v) {}

    static HPoint origin() { return HPoint(); }

    /// Rescales onto the sheet; call after composite operations to bound drift.
    void renormalize();

    /// |<x,x> + 1|, the constraint violation.
    double sheetDefect() const;
};

/// Tangent vector at a base point, <base, v> = 0.
struct TangentVec {
    HPoint base;
    Vec4 v;

    TangentVec() : v(Vec4::Zero()) {}
    TangentVec(const HPoint& p, const Vec4& w) : base(p), v(w) {}

    double norm() const;
    double orthogonalityDefect() const;
    /// Removes any component along the base point.
    void project();
};

/// Element of SO+(1,3), the orientation-preserving isometries of H^3.
struct IsomH3 {
    Mat4 m;

    IsomH3() : m(Mat4::Identity()) {}
    explicit IsomH3(const Mat4& a) : m(a) {}

    static IsomH3 identity() { return IsomH3(); }

    IsomH3 inverse() const;
    IsomH3 operator*(const IsomH3& o) const { return IsomH3(m * o.m); }
    HPoint operator()(const HPoint& p) const;
    TangentVec operator()(const TangentVec& t) const;

    /// ||m^T eta m - eta||_inf.
    double lorentzDefect() const;
    bool orthochronous() const { return m(0, 0) > 0; }
    /// true when this preserves the H^2 slice {x3 = 0}.
    bool preservesH2(double tol = 1e-9) const;
};

double dist(const HPoint& x, const HPoint& y);

/// Geodesic exponential: cosh(|v|) x + sinh(|v|) v/|v|; returns x for v = 0.
HPoint expPoint(const TangentVec& t);

/// Inverse of expPoint: the tangent at x pointing to y with |v| = dist(x,y).
TangentVec logPoint(const HPoint& x, const HPoint& y);

/// Parallel transport of t along the geodesic from x to y (t based at x).
TangentVec parallelTransport(const TangentVec& t, const HPoint& x, const HPoint& y);

/// Oriented cross product on T_x H^3; (u, v, u x v) is positively oriented
/// and |u x v| is the area of the parallelogram.
TangentVec crossProduct(const HPoint& x, const TangentVec& u, const TangentVec& v);

/// Nearest-point retraction onto the totally geodesic plane {x3 = 0}.
HPoint retractToH2(const HPoint& p);

/// SO+(1,3) -> PSL(2,C). The returned matrix has determinant 1 and is
/// well defined up to global sign. Throws on non-orthochronous input.
Mat2c toPsl2(const IsomH3& g);

/// PSL(2,C) -> SO+(1,3); inverse of toPsl2 (both signs map to the same image).
IsomH3 fromPsl2(const Mat2c& a);

/// Nearest matrix in SO+(1,3) (indefinite polar iteration). Used to clean up
/// least-squares fits; input must be close to the group.
IsomH3 projectToLorentz(const Mat4& g);

/// exp of a 4x4 matrix (used on so(1,3) increments).
Mat4 lorentzExp(const Mat4& a);

}  // namespace hmi

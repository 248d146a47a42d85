#include "hmi/hyperbolic.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

namespace hmi {

double minkowskiDot(const Vec4& a, const Vec4& b) {
    return -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
}

const Mat4& minkowskiForm() {
    static const Mat4 eta = [] {
        Mat4 e = Mat4::Identity();
        e(0, 0) = -1.0;
        return e;
    }();
    return eta;
}

void HPoint::renormalize() {
    const double q = -minkowskiDot(x, x);
    if (q <= 0.0) throw std::domain_error("HPoint off the timelike cone");
    x /= std::sqrt(q);
    if (x[0] < 0.0) x = -x;
}

double HPoint::sheetDefect() const { return std::abs(minkowskiDot(x, x) + 1.0); }

double TangentVec::norm() const {
    const double q = minkowskiDot(v, v);
    return q > 0.0 ? std::sqrt(q) : 0.0;
}

double TangentVec::orthogonalityDefect() const { return std::abs(minkowskiDot(base.x, v)); }

void TangentVec::project() {
    v += minkowskiDot(base.x, v) * base.x;
}

IsomH3 IsomH3::inverse() const {
    // m^-1 = eta m^T eta for Lorentz matrices.
    return IsomH3(minkowskiForm() * m.transpose() * minkowskiForm());
}

HPoint IsomH3::operator()(const HPoint& p) const {
    HPoint q(m * p.x);
    q.renormalize();
    return q;
}

TangentVec IsomH3::operator()(const TangentVec& t) const {
    TangentVec s((*this)(t.base), m * t.v);
    s.project();
    return s;
}

double IsomH3::lorentzDefect() const {
    return (m.transpose() * minkowskiForm() * m - minkowskiForm()).cwiseAbs().maxCoeff();
}

bool IsomH3::preservesH2(double tol) const {
    for (int i = 0; i < 3; ++i)
        if (std::abs(m(3, i)) > tol || std::abs(m(i, 3)) > tol) return false;
    return true;
}

double dist(const HPoint& x, const HPoint& y) {
    const double c = -minkowskiDot(x.x, y.x);
    return c <= 1.0 ? 0.0 : std::acosh(c);
}

HPoint expPoint(const TangentVec& t) {
    const double r = t.norm();
    if (r < 1e-300) return t.base;
    HPoint p(std::cosh(r) * t.base.x + (std::sinh(r) / r) * t.v);
    p.renormalize();
    return p;
}

TangentVec logPoint(const HPoint& x, const HPoint& y) {
    const double c = -minkowskiDot(x.x, y.x);
    if (c <= 1.0 + 1e-15) {
        // Coincident up to roundoff: direction from the raw difference.
        TangentVec t(x, y.x - x.x);
        t.project();
        return t;
    }
    const double d = std::acosh(c);
    Vec4 u = y.x - c * x.x;  // <u,u> = c^2 - 1
    const double s = std::sqrt(c * c - 1.0);
    TangentVec t(x, (d / s) * u);
    t.project();
    return t;
}

TangentVec parallelTransport(const TangentVec& t, const HPoint& x, const HPoint& y) {
    const double c = -minkowskiDot(x.x, y.x);
    const double a = minkowskiDot(t.v, y.x) / (1.0 + c);
    TangentVec s(y, t.v + a * (x.x + y.x));
    s.project();
    return s;
}

TangentVec crossProduct(const HPoint& x, const TangentVec& u, const TangentVec& v) {
    if ((u.base.x - x.x).cwiseAbs().maxCoeff() > 1e-9 ||
        (v.base.x - x.x).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("crossProduct: mismatched base points");
    // w_mu = cofactor expansion of [x u v]; raised with eta and oriented so
    // that at the pole cross(e1, e2) = +e3.
    Eigen::Matrix<double, 4, 3> m;
    m.col(0) = x.x;
    m.col(1) = u.v;
    m.col(2) = v.v;
    Vec4 c;
    for (int mu = 0; mu < 4; ++mu) {
        Eigen::Matrix3d minor3;
        int r = 0;
        for (int row = 0; row < 4; ++row) {
            if (row == mu) continue;
            minor3.row(r++) = m.row(row);
        }
        const double sign = (mu % 2 == 0) ? 1.0 : -1.0;
        c[mu] = sign * minor3.determinant();
    }
    Vec4 w;
    w[0] = c[0];
    w[1] = -c[1];
    w[2] = -c[2];
    w[3] = -c[3];
    TangentVec out(x, w);
    out.project();
    return out;
}

HPoint retractToH2(const HPoint& p) {
    Vec4 q = p.x;
    q[3] = 0.0;
    HPoint r(q);
    r.renormalize();
    return r;
}

namespace {

// Hermitian matrix of a Minkowski vector: det H = -<x,x>.
Mat2c hermitianOf(const Vec4& x) {
    Mat2c h;
    h(0, 0) = std::complex<double>(x[0] + x[1], 0.0);
    h(1, 1) = std::complex<double>(x[0] - x[1], 0.0);
    h(0, 1) = std::complex<double>(x[2], x[3]);
    h(1, 0) = std::conj(h(0, 1));
    return h;
}

Vec4 vectorOf(const Mat2c& h) {
    Vec4 x;
    x[0] = 0.5 * (h(0, 0).real() + h(1, 1).real());
    x[1] = 0.5 * (h(0, 0).real() - h(1, 1).real());
    x[2] = h(0, 1).real();
    x[3] = h(0, 1).imag();
    return x;
}

Mat2c hermitianSqrt(const Mat2c& h) {
    Eigen::SelfAdjointEigenSolver<Mat2c> es(h);
    Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
           es.eigenvectors().adjoint();
}

}  // namespace

Mat2c toPsl2(const IsomH3& g) {
    if (!g.orthochronous())
        throw std::invalid_argument("toPsl2: non-orthochronous isometry");
    // A = P U with P^2 = H(g e0). The unitary factor is recovered from the
    // rotation it induces on the Pauli-like basis (sigma_x, sigma_y, sigma_z).
    const Mat2c p2 = hermitianOf(g.m.col(0));
    const Mat2c p = hermitianSqrt(p2);
    const Mat2c pinv = p.inverse();

    // Standard Pauli matrices; in the hermitianOf convention
    //   e1 -> sigma_z, e2 -> sigma_x, e3 -> -sigma_y.
    Mat2c sx, sy, sz;
    sx << 0, 1, 1, 0;
    sy << std::complex<double>(0, 0), std::complex<double>(0, -1),
        std::complex<double>(0, 1), std::complex<double>(0, 0);
    sz << 1, 0, 0, -1;
    const Mat2c pauli[3] = {sx, sy, sz};

    // C_k = U p_k U^* for p_k the standard Pauli basis.
    Mat2c c[3];
    c[0] = pinv * hermitianOf(g.m * Vec4(0, 0, 1, 0)) * pinv;   // image of sigma_x
    {
        Mat2c c3 = pinv * hermitianOf(g.m * Vec4(0, 0, 0, 1)) * pinv;  // image of -sigma_y
        c[1] = -c3;
    }
    c[2] = pinv * hermitianOf(g.m * Vec4(0, 1, 0, 0)) * pinv;   // image of sigma_z

    Eigen::Matrix3d rot;
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
            rot(k, j) = 0.5 * (pauli[k] * c[j]).trace().real();

    // Quaternion of rot (Shepperd), then U = q0 - i (q . pauli).
    double q0, q1, q2, q3;
    const double tr = rot.trace();
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q0 = 0.25 * s;
        q1 = (rot(2, 1) - rot(1, 2)) / s;
        q2 = (rot(0, 2) - rot(2, 0)) / s;
        q3 = (rot(1, 0) - rot(0, 1)) / s;
    } else if (rot(0, 0) > rot(1, 1) && rot(0, 0) > rot(2, 2)) {
        double s = std::sqrt(1.0 + rot(0, 0) - rot(1, 1) - rot(2, 2)) * 2.0;
        q0 = (rot(2, 1) - rot(1, 2)) / s;
        q1 = 0.25 * s;
        q2 = (rot(0, 1) + rot(1, 0)) / s;
        q3 = (rot(0, 2) + rot(2, 0)) / s;
    } else if (rot(1, 1) > rot(2, 2)) {
        double s = std::sqrt(1.0 + rot(1, 1) - rot(0, 0) - rot(2, 2)) * 2.0;
        q0 = (rot(0, 2) - rot(2, 0)) / s;
        q1 = (rot(0, 1) + rot(1, 0)) / s;
        q2 = 0.25 * s;
        q3 = (rot(1, 2) + rot(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + rot(2, 2) - rot(0, 0) - rot(1, 1)) * 2.0;
        q0 = (rot(1, 0) - rot(0, 1)) / s;
        q1 = (rot(0, 2) + rot(2, 0)) / s;
        q2 = (rot(1, 2) + rot(2, 1)) / s;
        q3 = 0.25 * s;
    }
    const std::complex<double> im(0, 1);
    Mat2c u = q0 * Mat2c::Identity() - im * (q1 * sx + q2 * sy + q3 * sz);
    Mat2c a = p * u;
    a /= std::sqrt(a.determinant());
    return a;
}

IsomH3 fromPsl2(const Mat2c& a0) {
    Mat2c a = a0 / std::sqrt(a0.determinant());
    Mat4 m;
    const Vec4 basis[4] = {Vec4(1, 0, 0, 0), Vec4(0, 1, 0, 0), Vec4(0, 0, 1, 0),
                           Vec4(0, 0, 0, 1)};
    for (int j = 0; j < 4; ++j) {
        Mat2c img = a * hermitianOf(basis[j]) * a.adjoint();
        m.col(j) = vectorOf(img);
    }
    return IsomH3(m);
}

IsomH3 projectToLorentz(const Mat4& g) {
    const Mat4& eta = minkowskiForm();
    Mat4 x = g;
    for (int it = 0; it < 60; ++it) {
        Mat4 y = 0.5 * (x + eta * x.inverse().transpose() * eta);
        if ((y - x).cwiseAbs().maxCoeff() < 1e-15) {
            x = y;
            break;
        }
        x = y;
    }
    if (x(0, 0) < 0) x = -x;
    return IsomH3(x);
}

Mat4 lorentzExp(const Mat4& a) { return a.exp(); }

}  // namespace hmi

#include "hmi/codazzi.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace hmi {

namespace {

const Mat2 kJ = (Mat2() << 0, -1, 1, 0).finished();
const Mat2c kJc = kJ.cast<Complex>();

Mat2 rot2(double th) {
    Mat2 r;
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return r;
}

double minEig2(const Mat2& m) {
    const double tr = 0.5 * (m(0, 0) + m(1, 1));
    const double d = std::hypot(0.5 * (m(0, 0) - m(1, 1)), 0.5 * (m(0, 1) + m(1, 0)));
    return tr - d;
}

}  // namespace

OperatorField cod(const SurfaceMesh& mesh, const ScalarField& u) {
    OperatorField h = hess(mesh, u);
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        Complex um = 0.0;
        for (int i = 0; i < 3; ++i) um += u[mesh.vclass[t.v[i]]];
        um /= 3.0;
        h[ti] = um * Mat2c::Identity() - h[ti];
    }
    return h;
}

Eigen::SparseMatrix<double> codTraceOperator(const SurfaceMesh& mesh) {
    const int nc = mesh.numClasses();
    const auto& coeff = mesh.hessianCoefficients();
    std::vector<Eigen::Triplet<double>> trips;
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        const double w = t.area / 3.0;
        for (int i = 0; i < 3; ++i) {
            const int row = mesh.vclass[t.v[i]];
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(row, mesh.vclass[t.v[j]], w * (2.0 / 3.0));
            for (const auto& [cl, m] : coeff[ti])
                trips.emplace_back(row, cl, -w * m.trace());
        }
    }
    Eigen::SparseMatrix<double> op(nc, nc);
    op.setFromTriplets(trips.begin(), trips.end());
    // normalize rows by the lumped vertex mass
    for (int k = 0; k < op.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op, k); it; ++it)
            it.valueRef() /= mesh.vertexMass()[it.row()];
    return op;
}

QDBasis qdBasis(const SurfaceMesh& mesh) {
    if (mesh.level < 1)
        throw std::invalid_argument("qdBasis: refinement level too coarse");
    const int nc = mesh.numClasses();
    const int nt = mesh.numTris();
    const int dim = 6 * mesh.genus - 6;

    // Vertex-based traceless symmetric fields, components (p, r) in the class
    // frame; under a frame rotation by theta the pair rotates by 2 theta.
    // Rows: trapezoid loop integral of the field around each vertex link
    // (consistent with dnabla), plus per-triangle curls of the linear
    // interpolant at a relative weight h to pin down spurious modes.
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2 * nc + 2 * nt, 2 * nc);
    Eigen::VectorXd colscale(2 * nc);
    for (int cl = 0; cl < nc; ++cl) {
        const double s = std::sqrt(2.0 * mesh.vertexMass()[cl]);
        colscale[2 * cl] = s;
        colscale[2 * cl + 1] = s;
    }

    for (int cl = 0; cl < nc; ++cl) {
        const int rep = mesh.class_rep[cl];
        const HPoint& p = mesh.verts[rep];
        double area2 = 0.0;
        std::vector<std::pair<int, Mat2>> row;  // column class -> 2x2 block
        std::map<int, Mat2> acc;
        for (const auto& [ti, c] : mesh.class_ring[cl]) {
            const auto& t = mesh.tris[ti];
            const IsomH3 winv = mesh.vert_word_mat[t.v[c]].inverse();
            auto coords = [&](int corner) {
                TangentVec lg = logPoint(p, winv(mesh.verts[t.v[corner]]));
                return Vec2(minkowskiDot(lg.v, mesh.class_fu[cl]),
                            minkowskiDot(lg.v, mesh.class_fv[cl]));
            };
            const int ca = (c + 1) % 3, cb = (c + 2) % 3;
            const Vec2 za = coords(ca), zb = coords(cb);
            const Vec2 chord = zb - za;
            area2 += za.x() * zb.y() - za.y() * zb.x();
            Mat2 cm;
            cm << chord[0], chord[1], -chord[1], chord[0];
            for (int corner : {ca, cb}) {
                const int w = mesh.vclass[t.v[corner]];
                // (p, r) at w -> class cl frame
                const Mat2 rot = rot2(2.0 * (t.corner_angle[corner] - t.corner_angle[c]));
                const Mat2 block = 0.5 * cm * rot;
                auto it = acc.find(w);
                if (it == acc.end())
                    acc.emplace(w, block);
                else
                    it->second += block;
            }
        }
        const double scale = std::sqrt(mesh.vertexMass()[cl]) / (0.5 * area2);
        for (const auto& [w, m] : acc)
            d.block<2, 2>(2 * cl, 2 * w) += scale * m / colscale[2 * w];
    }

    const double hscale = std::sqrt(mesh.totalArea() / nt);
    for (int ti = 0; ti < nt; ++ti) {
        const auto& t = mesh.tris[ti];
        const double rs = hscale * std::sqrt(t.area);
        for (int i = 0; i < 3; ++i) {
            const int cl = mesh.vclass[t.v[i]];
            const Mat2 rot = rot2(2.0 * t.corner_angle[i]);
            const Vec2 w = kJ * t.grad_bary[i];
            Mat2 c;
            c << w[0], w[1], -w[1], w[0];
            d.block<2, 2>(2 * nc + 2 * ti, 2 * cl) += rs * c * rot / colscale[2 * cl];
        }
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    const int n = static_cast<int>(sv.size());

    QDBasis out;
    out.singular_values = sv.tail(std::min(n, 2 * dim)).reverse();
    // sv is descending; the kernel candidates are the last `dim` values
    out.spectral_gap_ratio = sv[n - dim - 1] / std::max(sv[n - dim], 1e-300);
    out.coarse_warning = out.spectral_gap_ratio < 10.0;

    for (int k = 0; k < dim; ++k) {
        const Eigen::VectorXd y = svd.matrixV().col(n - 1 - k);
        RealOperatorField f(nt, Mat2::Zero());
        for (int ti = 0; ti < nt; ++ti) {
            const auto& t = mesh.tris[ti];
            // evaluate the interpolant at the chart origin (triangle center)
            double lam[3];
            for (int i = 0; i < 3; ++i) {
                const Vec2 a = t.xi[(i + 1) % 3], b = t.xi[(i + 2) % 3];
                lam[i] = (a.x() * b.y() - a.y() * b.x()) / (2.0 * t.chart_area);
            }
            Vec2 pr = Vec2::Zero();
            for (int i = 0; i < 3; ++i) {
                const int cl = mesh.vclass[t.v[i]];
                const Vec2 v(y[2 * cl] / colscale[2 * cl], y[2 * cl + 1] / colscale[2 * cl]);
                pr += lam[i] * (rot2(2.0 * t.corner_angle[i]) * v);
            }
            f[ti] << pr[0], pr[1], pr[1], -pr[0];
        }
        out.basis.push_back(std::move(f));
    }

    // L2 orthonormalization (modified Gram-Schmidt)
    for (int k = 0; k < dim; ++k) {
        for (int j = 0; j < k; ++j) {
            const double c = operatorInner(mesh, out.basis[k], out.basis[j]);
            for (int ti = 0; ti < nt; ++ti) out.basis[k][ti] -= c * out.basis[j][ti];
        }
        const double nrm = std::sqrt(operatorInner(mesh, out.basis[k], out.basis[k]));
        for (int ti = 0; ti < nt; ++ti) out.basis[k][ti] /= nrm;
    }
    out.gram.resize(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            out.gram(i, j) = operatorInner(mesh, out.basis[i], out.basis[j]);
    return out;
}

RealOperatorField assembleQD(const QDBasis& qd, const Eigen::VectorXd& coeff) {
    if (coeff.size() != static_cast<Eigen::Index>(qd.basis.size()))
        throw std::invalid_argument("assembleQD: coefficient size mismatch");
    const int nt = static_cast<int>(qd.basis.front().size());
    RealOperatorField f(nt, Mat2::Zero());
    for (size_t k = 0; k < qd.basis.size(); ++k)
        for (int ti = 0; ti < nt; ++ti) f[ti] += coeff[k] * qd.basis[k][ti];
    return f;
}

OperatorField assembleCodazzi(const SurfaceMesh& mesh, const QDBasis& qd,
                              const ScalarField& u, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& qprime) {
    OperatorField phi = cod(mesh, u);
    const RealOperatorField bq = assembleQD(qd, q);
    const RealOperatorField bqp = assembleQD(qd, qprime);
    for (int ti = 0; ti < mesh.numTris(); ++ti)
        phi[ti] += bq[ti].cast<Complex>() + Complex(0, 1) * bqp[ti].cast<Complex>();
    return phi;
}

DecompositionTriple decompose(const SurfaceMesh& mesh, const QDBasis& qd,
                              const OperatorField& phi) {
    const int nc = mesh.numClasses();
    const int nt = mesh.numTris();
    // vertex-lumped trace of phi
    Eigen::VectorXd rr = Eigen::VectorXd::Zero(nc), ri = Eigen::VectorXd::Zero(nc);
    for (int ti = 0; ti < nt; ++ti) {
        const auto& t = mesh.tris[ti];
        const Complex tr = phi[ti].trace();
        for (int i = 0; i < 3; ++i) {
            rr[mesh.vclass[t.v[i]]] += t.area / 3.0 * tr.real();
            ri[mesh.vclass[t.v[i]]] += t.area / 3.0 * tr.imag();
        }
    }
    rr.array() /= mesh.vertexMass().array();
    ri.array() /= mesh.vertexMass().array();

    Eigen::SparseMatrix<double> op = codTraceOperator(mesh);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(op);
    if (lu.info() != Eigen::Success) throw std::runtime_error("decompose: trace solve failed");

    DecompositionTriple out;
    out.u = lu.solve(rr) + Complex(0, 1) * lu.solve(ri);

    OperatorField rem = cod(mesh, out.u);
    for (int ti = 0; ti < nt; ++ti) rem[ti] = phi[ti] - rem[ti];

    const int dim = static_cast<int>(qd.basis.size());
    out.q.resize(dim);
    out.qprime.resize(dim);
    RealOperatorField rem_re = realPart(rem), rem_im = imagPart(rem);
    for (int k = 0; k < dim; ++k) {
        out.q[k] = operatorInner(mesh, rem_re, qd.basis[k]);
        out.qprime[k] = operatorInner(mesh, rem_im, qd.basis[k]);
    }

    OperatorField recon = assembleCodazzi(mesh, qd, out.u, out.q, out.qprime);
    OperatorField diff(nt);
    for (int ti = 0; ti < nt; ++ti) diff[ti] = phi[ti] - recon[ti];
    const double remnorm = operatorNorm(mesh, rem);
    out.projection_residual = operatorNorm(mesh, diff);
    out.reassembly_error = out.projection_residual;
    if (remnorm > 1e-12 && out.projection_residual > 0.05 * operatorNorm(mesh, phi))
        throw std::domain_error("decompose: input is not Codazzi enough (residual " +
                                std::to_string(out.projection_residual / remnorm) + ")");
    return out;
}

std::vector<Complex> pi1Triangles(const SurfaceMesh& mesh, const OperatorField& phi) {
    std::vector<Complex> v(mesh.numTris());
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const Mat2c jp = kJc * phi[ti];
        v[ti] = (jp * jp).trace();
    }
    return v;
}

namespace {

ScalarField vertexAverage(const SurfaceMesh& mesh, const std::vector<Complex>& tri_values) {
    ScalarField f = ScalarField::Zero(mesh.numClasses());
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        for (int i = 0; i < 3; ++i)
            f[mesh.vclass[t.v[i]]] += t.area / 3.0 * tri_values[ti];
    }
    for (int cl = 0; cl < mesh.numClasses(); ++cl) f[cl] /= mesh.vertexMass()[cl];
    return f;
}

}  // namespace

ScalarField pi1(const SurfaceMesh& mesh, const OperatorField& phi) {
    return vertexAverage(mesh, pi1Triangles(mesh, phi));
}

ScalarField lphiApply(const SurfaceMesh& mesh, const OperatorField& phi,
                      const ScalarField& udot) {
    const OperatorField c = cod(mesh, udot);
    std::vector<Complex> tri(mesh.numTris());
    for (int ti = 0; ti < mesh.numTris(); ++ti)
        tri[ti] = 2.0 * (kJc * phi[ti] * kJc * c[ti]).trace();
    return vertexAverage(mesh, tri);
}

namespace {

/// Exact Jacobian of u -> vertex-averaged pi1(cod(u) + b) at the current phi.
Eigen::SparseMatrix<Complex> newtonJacobian(const SurfaceMesh& mesh,
                                            const OperatorField& phi) {
    const int nc = mesh.numClasses();
    const auto& coeff = mesh.hessianCoefficients();
    std::vector<Eigen::Triplet<Complex>> trips;
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        const Mat2c jpj = kJc * phi[ti] * kJc;
        const double w = t.area / 3.0;
        // d pi1 = 2 tr(J phi J dphi), dphi = du 1 - Hess(du)
        for (int i = 0; i < 3; ++i) {
            const int row = mesh.vclass[t.v[i]];
            const Complex mult = 2.0 * w / mesh.vertexMass()[row];
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(row, mesh.vclass[t.v[j]],
                                   mult * jpj.trace() / 3.0);
            for (const auto& [cl, m] : coeff[ti])
                trips.emplace_back(row, cl, -mult * (jpj * m.cast<Complex>()).trace());
        }
    }
    Eigen::SparseMatrix<Complex> jac(nc, nc);
    jac.setFromTriplets(trips.begin(), trips.end());
    return jac;
}

double positivityMargin(const OperatorField& phi) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : phi) m = std::min(m, minEig2(p.real()));
    return m;
}

MinimizingDatum newtonDetDirect(const SurfaceMesh& mesh, const QDBasis& qd,
                                const Eigen::VectorXd& q, const Eigen::VectorXd& qprime,
                                const ScalarField& u_init, const NewtonOptions& opts) {
    MinimizingDatum out;
    ScalarField u = u_init;
    RealOperatorField bq = assembleQD(qd, q), bqp = assembleQD(qd, qprime);

    auto buildPhi = [&](const ScalarField& uu) {
        OperatorField phi = cod(mesh, uu);
        for (int ti = 0; ti < mesh.numTris(); ++ti)
            phi[ti] += bq[ti].cast<Complex>() + Complex(0, 1) * bqp[ti].cast<Complex>();
        return phi;
    };
    auto residual = [&](const OperatorField& phi) {
        ScalarField r = pi1(mesh, phi);
        r.array() += 2.0;
        return r;
    };

    OperatorField phi = buildPhi(u);
    ScalarField res = residual(phi);
    double rnorm = res.cwiseAbs().maxCoeff();
    out.residual_history.push_back(rnorm);

    for (int it = 0; it < opts.max_iterations && rnorm > opts.tol; ++it) {
        Eigen::SparseMatrix<Complex> jac = newtonJacobian(mesh, phi);
        Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu(jac);
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("newtonDet: Jacobian factorization failed");
        const ScalarField du = lu.solve(-res);

        double step = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 30; ++bt) {
            ScalarField u_try = u + step * du;
            OperatorField phi_try = buildPhi(u_try);
            if (positivityMargin(phi_try) <= 0.0) {
                step *= 0.5;  // keep Re(phi) positive definite
                continue;
            }
            ScalarField res_try = residual(phi_try);
            const double rn = res_try.cwiseAbs().maxCoeff();
            if (rn < rnorm || rn < opts.tol) {
                u = u_try;
                phi = std::move(phi_try);
                res = std::move(res_try);
                rnorm = rn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        out.iterations = it + 1;
        out.residual_history.push_back(rnorm);
        if (!accepted) break;
    }

    out.u = u;
    out.phi = phi;
    out.det_residual = rnorm;
    out.codazzi_residual = dnablaNorm(mesh, dnabla(mesh, phi));
    out.positivity_margin = positivityMargin(phi);
    out.converged = rnorm <= std::max(opts.tol, 1e-9);
    if (out.positivity_margin <= 0.0)
        throw std::runtime_error("newtonDet: lost positivity of Re(phi)");
    return out;
}

}  // namespace

MinimizingDatum newtonDet(const SurfaceMesh& mesh, const QDBasis& qd,
                          const Eigen::VectorXd& q, const Eigen::VectorXd& qprime,
                          const ScalarField& u_init, const NewtonOptions& opts) {
    MinimizingDatum direct = newtonDetDirect(mesh, qd, q, qprime, u_init, opts);
    if (direct.converged || !opts.allow_continuation) return direct;
    // continuation in ||(q, q')||: walk up in a few stages from the Fuchsian point
    ScalarField u = ScalarField::Constant(mesh.numClasses(), 1.0);
    const int stages = 4;
    MinimizingDatum last;
    for (int s = 1; s <= stages; ++s) {
        const double f = static_cast<double>(s) / stages;
        last = newtonDetDirect(mesh, qd, f * q, f * qprime, u, opts);
        if (!last.converged)
            throw std::runtime_error("newtonDet: continuation failed at stage " +
                                     std::to_string(s));
        u = last.u;
    }
    return last;
}

double ElResiduals::maxResidual() const {
    return std::max({dnabla_b, dnabla_ba, tr_jb, tr_ba, tr_jb2a, gauss});
}

ElResiduals elResiduals(const SurfaceMesh& mesh, const RealOperatorField& b,
                        const RealOperatorField& a) {
    ElResiduals out;
    out.dnabla_b = dnablaNorm(mesh, dnabla(mesh, b));
    RealOperatorField ba(mesh.numTris());
    for (int ti = 0; ti < mesh.numTris(); ++ti) ba[ti] = b[ti] * a[ti];
    out.dnabla_ba = dnablaNorm(mesh, dnabla(mesh, ba));
    double s_jb = 0, s_ba = 0, s_jb2a = 0, s_g = 0;
    out.min_eig_b = std::numeric_limits<double>::infinity();
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const double area = mesh.tris[ti].area;
        const double tjb = (kJ * b[ti]).trace();
        const double tba = ba[ti].trace();
        const double tjb2a = (kJ * b[ti] * ba[ti]).trace();
        const double g = b[ti].determinant() - ba[ti].determinant() - 1.0;
        s_jb += area * tjb * tjb;
        s_ba += area * tba * tba;
        s_jb2a += area * tjb2a * tjb2a;
        s_g += area * g * g;
        out.min_eig_b = std::min(out.min_eig_b, minEig2(b[ti]));
    }
    out.tr_jb = std::sqrt(s_jb);
    out.tr_ba = std::sqrt(s_ba);
    out.tr_jb2a = std::sqrt(s_jb2a);
    out.gauss = std::sqrt(s_g);
    return out;
}

std::pair<Complex, Complex> divergenceIdentityCheck(const SurfaceMesh& mesh,
                                                    const OperatorField& phi_real,
                                                    const ScalarField& udot,
                                                    const ScalarField& udotp) {
    const OperatorField hs = hess(mesh, udotp);
    const VectorField gu = grad(mesh, udot), gup = grad(mesh, udotp);
    Complex lhs = 0.0, rhs = 0.0;
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        Complex um = 0.0;
        for (int i = 0; i < 3; ++i) um += udot[mesh.vclass[t.v[i]]];
        um /= 3.0;
        lhs += t.area * um * (kJc * phi_real[ti] * kJc * hs[ti]).trace();
        // det(phi) phi^-1 = adj(phi) = -J phi J for self-adjoint phi;
        // the pairing is bilinear, no conjugation
        const Mat2c adj = -kJc * phi_real[ti] * kJc;
        rhs += t.area * (adj * gu[ti]).cwiseProduct(gup[ti]).sum();
    }
    return {lhs, rhs};
}

double meshTolerance(const SurfaceMesh& mesh) {
    // deterministic smooth calibration field
    const int nc = mesh.numClasses();
    ScalarField f(nc);
    for (int cl = 0; cl < nc; ++cl) {
        const auto& p = mesh.verts[mesh.class_rep[cl]].x;
        f[cl] = Complex(std::sin(1.3 * p[1] + 0.7 * p[2]), std::cos(0.9 * p[1] - 1.1 * p[2]));
    }
    const ScalarField u0 = laplacianSolve(mesh, laplacianSolve(mesh, f, 2.0).u, 2.0).u;
    const OperatorField c = cod(mesh, u0);
    return dnablaNorm(mesh, dnabla(mesh, c)) / std::max(operatorNorm(mesh, c), 1e-300);
}

void splitPhi(const OperatorField& phi, RealOperatorField& b, RealOperatorField& a) {
    const int nt = static_cast<int>(phi.size());
    b.assign(nt, Mat2::Zero());
    a.assign(nt, Mat2::Zero());
    for (int ti = 0; ti < nt; ++ti) {
        b[ti] = phi[ti].real();
        a[ti] = b[ti].inverse() * kJ * phi[ti].imag();
    }
}

OperatorField assemblePhi(const RealOperatorField& b, const RealOperatorField& a) {
    OperatorField phi(b.size());
    for (size_t ti = 0; ti < b.size(); ++ti)
        phi[ti] = b[ti].cast<Complex>() -
                  Complex(0, 1) * (kJ * b[ti] * a[ti]).cast<Complex>();
    return phi;
}

}  // namespace hmi

#pragma once

#include "hmi/surface.hpp"

#include <vector>

namespace hmi {

/// cod(u) = u 1 - Hess(u), a Codazzi self-adjoint operator field for every
/// complex function u.
OperatorField cod(const SurfaceMesh& mesh, const ScalarField& u);

/// Discrete (-Laplace + 2) compatible with cod: the matrix of the map
/// u -> vertex average of tr(cod(u)). Row/column indices are vertex classes.
Eigen::SparseMatrix<double> codTraceOperator(const SurfaceMesh& mesh);

/// Basis of the discrete J-holomorphic quadratic differentials: traceless
/// self-adjoint Codazzi fields, the small singular subspace of the discrete
/// d^nabla restricted to traceless symmetric fields.
struct QDBasis {
    std::vector<RealOperatorField> basis;  ///< 6g-6 fields, L2-orthonormal
    Eigen::MatrixXd gram;
    Eigen::VectorXd singular_values;  ///< ascending, first 2(6g-6) entries kept
    double spectral_gap_ratio = 0.0;  ///< (6g-5)-th smallest / (6g-6)-th smallest
    bool coarse_warning = false;      ///< gap ratio below 10
};
QDBasis qdBasis(const SurfaceMesh& mesh);

/// Linear combination of basis elements with real coefficients.
RealOperatorField assembleQD(const QDBasis& qd, const Eigen::VectorXd& coeff);

/// phi = cod(u) + b_q + i b_q'.
OperatorField assembleCodazzi(const SurfaceMesh& mesh, const QDBasis& qd,
                              const ScalarField& u, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& qprime);

struct DecompositionTriple {
    ScalarField u;
    Eigen::VectorXd q, qprime;
    double projection_residual = 0.0;  ///< L2 distance of the remainder to the span
    double reassembly_error = 0.0;
};

/// Unique triple with phi = cod(u) + b_q + i b_q'; throws when the remainder
/// is farther than 5% from the quadratic differential span.
DecompositionTriple decompose(const SurfaceMesh& mesh, const QDBasis& qd,
                              const OperatorField& phi);

/// tr((J phi)^2) as a vertex field (area-weighted average of the one-ring).
ScalarField pi1(const SurfaceMesh& mesh, const OperatorField& phi);
/// tr((J phi)^2) per triangle.
std::vector<Complex> pi1Triangles(const SurfaceMesh& mesh, const OperatorField& phi);

/// L_phi(udot) = 2 tr(J phi J cod(udot)), the linearization of pi1 along cod.
ScalarField lphiApply(const SurfaceMesh& mesh, const OperatorField& phi,
                      const ScalarField& udot);

struct MinimizingDatum {
    OperatorField phi;
    ScalarField u;
    double det_residual = 0.0;      ///< max vertex |pi1(phi) + 2|
    double codazzi_residual = 0.0;  ///< L2 dnabla residual of phi
    double positivity_margin = 0.0; ///< min eigenvalue of Re phi over triangles
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;
};

struct NewtonOptions {
    double tol = 1e-10;
    int max_iterations = 50;
    bool allow_continuation = true;
};

/// Solves pi1(cod(u) + b_q + i b_q') = -2 by Newton iteration on u with the
/// elliptic linearization L_phi; keeps Re(phi) positive definite by damping.
MinimizingDatum newtonDet(const SurfaceMesh& mesh, const QDBasis& qd,
                          const Eigen::VectorXd& q, const Eigen::VectorXd& qprime,
                          const ScalarField& u_init, const NewtonOptions& opts = {});

struct ElResiduals {
    double dnabla_b = 0.0;
    double dnabla_ba = 0.0;
    double tr_jb = 0.0;
    double tr_ba = 0.0;
    double tr_jb2a = 0.0;
    double gauss = 0.0;  ///< L2 of det b - det(ba) - 1
    double min_eig_b = 0.0;
    double maxResidual() const;
};

/// The six Euler-Lagrange residuals of a candidate immersion datum (b, a).
ElResiduals elResiduals(const SurfaceMesh& mesh, const RealOperatorField& b,
                        const RealOperatorField& a);

/// Both sides of the divergence identity
///   int u . tr((J phi J) Hess(u')) = int det(phi) <phi^-1 grad u, grad u'>.
std::pair<Complex, Complex> divergenceIdentityCheck(const SurfaceMesh& mesh,
                                                    const OperatorField& phi_real,
                                                    const ScalarField& udot,
                                                    const ScalarField& udotp);

/// Discretization tolerance of this mesh: relative Codazzi residual of a
/// smooth cod-type calibration field.
double meshTolerance(const SurfaceMesh& mesh);

/// Splits phi = b - i J b a into the immersion datum (b, a).
void splitPhi(const OperatorField& phi, RealOperatorField& b, RealOperatorField& a);
/// Reassembles phi = b - i J b a.
OperatorField assemblePhi(const RealOperatorField& b, const RealOperatorField& a);

}  // namespace hmi

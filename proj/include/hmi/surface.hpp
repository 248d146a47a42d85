#pragma once

#include "hmi/hyperbolic.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <complex>
#include <memory>
#include <vector>

namespace hmi {

using Vec2c = Eigen::Vector2cd;
using Mat2c = Eigen::Matrix2cd;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using Complex = std::complex<double>;

/// Letter of a word in the side-pairing generators.
struct GenLetter {
    int gen;
    bool inv;
};
using GenWord = std::vector<GenLetter>;

/// Regular fundamental 4g-gon of a genus g surface with its side pairings.
struct FuchsianDomain {
    int genus = 2;
    double circumradius = 0.0;
    std::vector<HPoint> polygon;   ///< 4g vertices in the plane {x3 = 0}, ccw
    std::vector<IsomH3> pairings;  ///< 2g generators: [a1, b1, a2, b2, ...]

    /// Edge pair glued by one generator: gen^{-1 if inv} maps (b0,b1) onto (a1,a0).
    struct EdgePair {
        int edge_a, edge_b;  ///< polygon edge indices
        int gen;
        bool inv;
    };
    std::vector<EdgePair> pairs;

    double angleSum() const;
    double area() const;  ///< (4g-2)pi - angle sum
    /// max-norm distance of prod [a_i, b_i] from the identity.
    double relationResidual() const;
    /// Evaluates a generator word under an arbitrary assignment of generators.
    static IsomH3 evalWord(const GenWord& w, const std::vector<IsomH3>& gens);
};

/// genus >= 2; interior angle 2pi/4g found by bisection on the circumradius.
FuchsianDomain buildDomain(int genus);

/// Scalar fields live on quotient vertices; vector/operator fields live per
/// triangle in the local frame.
using ScalarField = Eigen::VectorXcd;
using VectorField = std::vector<Vec2c>;
using OperatorField = std::vector<Mat2c>;
using RealOperatorField = std::vector<Mat2>;

OperatorField toComplexField(const RealOperatorField& re);
OperatorField toComplexField(const RealOperatorField& re, const RealOperatorField& im);
RealOperatorField realPart(const OperatorField& f);
RealOperatorField imagPart(const OperatorField& f);

/// Triangulated fundamental domain with side identifications.
///
/// The mesh is the cut complex: every triangle has its own copies of the
/// polygon-boundary vertices, and a union-find over the side pairings gives
/// the quotient vertex classes. Each triangle carries an intrinsic chart
/// (normal coordinates at its center) and SO(2) transitions to its neighbors
/// and to the reference frames of its corner classes.
class SurfaceMesh {
public:
    struct Tri {
        std::array<int, 3> v;             ///< closed-domain vertex ids, ccw
        std::array<Vec2, 3> xi;           ///< corner coordinates in the chart
        std::array<double, 3> elen;       ///< length of edge (i, i+1)
        std::array<double, 3> angle;      ///< hyperbolic corner angles
        double area = 0.0;                ///< hyperbolic area
        double chart_area = 0.0;
        std::array<Vec2, 3> grad_bary;    ///< gradients of the hat functions
        std::array<int, 3> nbr;           ///< neighbor across edge (i, i+1)
        std::array<int, 3> nbr_edge;
        std::array<double, 3> nbr_angle;  ///< R(theta): nbr frame -> this frame
        std::array<Vec2, 3> nbr_center;   ///< neighbor center in this chart
        std::array<double, 3> corner_angle;  ///< R(theta): class frame -> this frame
        std::array<bool, 3> cut;          ///< edge crosses a side pairing
        HPoint center;
        Vec4 fu, fv;                      ///< chart frame at the center
    };

    struct BoundaryPair {
        int a0, a1, b0, b1;  ///< vertex ids; g^sign(b0)=a1, g^sign(b1)=a0
        int gen;
        bool inv;
        int tri_a, edge_a, tri_b, edge_b;
    };

    int genus = 2;
    int level = 0;
    FuchsianDomain domain;
    std::vector<HPoint> verts;  ///< closed-domain positions, x3 = 0
    std::vector<Tri> tris;
    std::vector<BoundaryPair> bpairs;

    // quotient structure
    std::vector<int> vclass;            ///< vertex -> class
    std::vector<int> class_rep;         ///< class -> representative vertex
    std::vector<GenWord> vert_word;     ///< pos(v) = word(pos(rep))
    std::vector<IsomH3> vert_word_mat;  ///< the word evaluated in the pairings
    std::vector<Vec4> class_fu, class_fv;  ///< reference frame at the rep

    /// (triangle, corner) incidences around a class, ccw.
    std::vector<std::vector<std::pair<int, int>>> class_ring;
    /// chart coordinates of each ring triangle's center at the class rep.
    std::vector<std::vector<Vec2>> class_ring_center;

    int numClasses() const { return static_cast<int>(class_rep.size()); }
    int numTris() const { return static_cast<int>(tris.size()); }
    int classOf(int vert) const { return vclass[vert]; }

    double totalArea() const;
    double maxEdgeLength() const;
    /// lumped vertex area: sum of incident triangle areas / 3.
    const Eigen::VectorXd& vertexMass() const { return vertex_mass_; }
    const Eigen::SparseMatrix<double>& stiffness() const { return stiffness_; }
    const Eigen::SparseMatrix<double>& mass() const { return mass_; }

    /// worst hyperbolic angle defect around a glued vertex class.
    double maxAngleDefect() const;
    /// total cone curvature of the edge-length layout minus 2 pi chi(S).
    double gaussBonnetDefect() const;
    /// L1 deviation of per-vertex cone curvature from -K = 1 times the vertex
    /// area, relative to the total area.
    double curvatureDefectL1() const;

    /// Per-triangle linear coefficients of the one-ring least-squares Hessian:
    /// Hess_T(u) = sum_k coeff[T][k].second * u[class coeff[T][k].first].
    const std::vector<std::vector<std::pair<int, Mat2>>>& hessianCoefficients() const;

    void buildDerivedData();

private:
    Eigen::SparseMatrix<double> stiffness_, mass_;
    Eigen::VectorXd vertex_mass_;
    mutable std::vector<std::vector<std::pair<int, Mat2>>> hess_coeff_;
};

/// Geodesic midpoint subdivision, 4^level triangles over the level-0 fan.
SurfaceMesh refine(const FuchsianDomain& domain, int level);

/// Solves (-Laplace + shift) u = rhs in the linear finite element sense.
struct LaplaceResult {
    ScalarField u;
    double relative_residual;
};
LaplaceResult laplacianSolve(const SurfaceMesh& mesh, const ScalarField& rhs, double shift);

/// Piecewise-linear gradient per triangle.
VectorField grad(const SurfaceMesh& mesh, const ScalarField& u);

/// One-ring least-squares Hessian with frame transport, symmetrized.
OperatorField hess(const SurfaceMesh& mesh, const ScalarField& u);

/// Discrete Codazzi residual: loop integral of phi around each vertex class
/// divided by the enclosed area; a 2-vector per class in the class frame.
std::vector<Vec2c> dnabla(const SurfaceMesh& mesh, const OperatorField& phi);
std::vector<Vec2> dnabla(const SurfaceMesh& mesh, const RealOperatorField& phi);

/// L2 norm of a dnabla residual (lumped vertex measure).
double dnablaNorm(const SurfaceMesh& mesh, const std::vector<Vec2c>& residual);
double dnablaNorm(const SurfaceMesh& mesh, const std::vector<Vec2>& residual);

/// Integral of a vertex scalar field: sum of triangle area times corner mean.
Complex integrate(const SurfaceMesh& mesh, const ScalarField& f);

/// L2 inner product of operator fields: integral of tr(A^T conj(B)).
Complex operatorInner(const SurfaceMesh& mesh, const OperatorField& a, const OperatorField& b);
double operatorInner(const SurfaceMesh& mesh, const RealOperatorField& a,
                     const RealOperatorField& b);
double operatorNorm(const SurfaceMesh& mesh, const OperatorField& a);

}  // namespace hmi

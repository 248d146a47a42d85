// Scratch validation of the foundations; removed once unit tests cover it.
#include "hmi/surface.hpp"

#include <cstdio>

using namespace hmi;

int main() {
    auto dom = buildDomain(2);
    std::printf("circumradius        %.15f\n", dom.circumradius);
    std::printf("angle sum - 2pi     %.3e\n", dom.angleSum() - 2 * 3.14159265358979323846);
    std::printf("area - 4pi          %.3e\n", dom.area() - 4 * 3.14159265358979323846);
    std::printf("relation residual   %.3e\n", dom.relationResidual());
    for (auto& p : dom.pairings) std::printf("pairing defect %.3e\n", p.lorentzDefect());

    for (int lvl = 0; lvl <= 3; ++lvl) {
        auto mesh = refine(dom, lvl);
        std::printf("level %d: T=%d V=%d C=%d area=%.12f angdef=%.3e gb=%.3e\n", lvl,
                    mesh.numTris(), (int)mesh.verts.size(), mesh.numClasses(),
                    mesh.totalArea(), mesh.maxAngleDefect(), mesh.gaussBonnetDefect());
    }

    // FEM: (-Δ+2)u = 2 -> u = 1
    auto mesh = refine(dom, 2);
    ScalarField rhs = ScalarField::Constant(mesh.numClasses(), 2.0);
    auto r = laplacianSolve(mesh, rhs, 2.0);
    std::printf("laplace u=1 err     %.3e (res %.3e)\n",
                (r.u - ScalarField::Constant(mesh.numClasses(), 1.0)).cwiseAbs().maxCoeff(),
                r.relative_residual);

    // dnabla of a constant multiple of the identity
    OperatorField id(mesh.numTris(), Mat2c::Identity() * 3.7);
    auto res = dnabla(mesh, id);
    double worst = 0;
    for (auto& v : res) worst = std::max(worst, v.norm());
    std::printf("dnabla(c*Id) max    %.3e\n", worst);
    return 0;
}

#include "hmi/surface.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace hmi {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec4 e3Tangent(const HPoint& p) {
    (void)p;
    return Vec4(0, 0, 0, 1);  // tangent to H^2 slice points, normal to the slice
}

/// +90 degree rotation of an H^2 tangent vector (orientation of the slice).
TangentVec rotate90(const HPoint& p, const TangentVec& t) {
    return crossProduct(p, TangentVec(p, e3Tangent(p)), t);
}

double frameAngle(const TangentVec& w, const Vec4& fu, const Vec4& fv) {
    return std::atan2(minkowskiDot(w.v, fv), minkowskiDot(w.v, fu));
}

HPoint geodesicMidpoint(const HPoint& a, const HPoint& b) {
    HPoint m(a.x + b.x);
    m.renormalize();
    return m;
}

/// Lorentz frame [p, t, Jt, e3] adapted to the segment p -> q in the slice.
Mat4 adaptedFrame(const HPoint& p, const HPoint& q) {
    TangentVec t = logPoint(p, q);
    const double n = t.norm();
    t.v /= n;
    TangentVec jt = rotate90(p, t);
    Mat4 f;
    f.col(0) = p.x;
    f.col(1) = t.v;
    f.col(2) = jt.v;
    f.col(3) = e3Tangent(p);
    return f;
}

/// Orientation-preserving isometry of the slice with g(p1) = p2, g(q1) = q2.
IsomH3 segmentIsometry(const HPoint& p1, const HPoint& q1, const HPoint& p2,
                       const HPoint& q2) {
    const Mat4 f1 = adaptedFrame(p1, q1);
    const Mat4 f2 = adaptedFrame(p2, q2);
    return IsomH3(f2 * (minkowskiForm() * f1.transpose() * minkowskiForm()));
}

double interiorAngle(int n, double radius) {
    // angle of the regular n-gon with circumradius `radius` at a vertex
    HPoint v0(Vec4(std::cosh(radius), std::sinh(radius), 0, 0));
    const double th = 2.0 * kPi / n;
    HPoint v1(Vec4(std::cosh(radius), std::sinh(radius) * std::cos(th),
                   std::sinh(radius) * std::sin(th), 0));
    HPoint vm(Vec4(std::cosh(radius), std::sinh(radius) * std::cos(th),
                   -std::sinh(radius) * std::sin(th), 0));
    TangentVec t1 = logPoint(v0, v1), t2 = logPoint(v0, vm);
    const double c = minkowskiDot(t1.v, t2.v) / (t1.norm() * t2.norm());
    return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

double FuchsianDomain::angleSum() const {
    const int n = static_cast<int>(polygon.size());
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        TangentVec t1 = logPoint(polygon[k], polygon[(k + 1) % n]);
        TangentVec t2 = logPoint(polygon[k], polygon[(k + n - 1) % n]);
        const double c = minkowskiDot(t1.v, t2.v) / (t1.norm() * t2.norm());
        sum += std::acos(std::clamp(c, -1.0, 1.0));
    }
    return sum;
}

double FuchsianDomain::area() const {
    const int n = static_cast<int>(polygon.size());
    return (n - 2) * kPi - angleSum();
}

double FuchsianDomain::relationResidual() const {
    Mat4 prod = Mat4::Identity();
    for (int i = 0; i < genus; ++i) {
        const Mat4& a = pairings[2 * i].m;
        const Mat4& b = pairings[2 * i + 1].m;
        prod = prod * a * b * a.inverse() * b.inverse();
    }
    return (prod - Mat4::Identity()).cwiseAbs().maxCoeff();
}

IsomH3 FuchsianDomain::evalWord(const GenWord& w, const std::vector<IsomH3>& gens) {
    IsomH3 g;
    for (const auto& l : w) g = g * (l.inv ? gens[l.gen].inverse() : gens[l.gen]);
    return g;
}

FuchsianDomain buildDomain(int genus) {
    if (genus < 2) throw std::invalid_argument("buildDomain: genus must be >= 2");
    const int n = 4 * genus;
    const double target = 2.0 * kPi / n;

    // interiorAngle decreases from the Euclidean value to 0 as R grows
    double lo = 1e-6, hi = 12.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (interiorAngle(n, mid) > target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15) break;
    }
    const double radius = 0.5 * (lo + hi);

    FuchsianDomain dom;
    dom.genus = genus;
    dom.circumradius = radius;
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * kPi * k / n;
        dom.polygon.emplace_back(Vec4(std::cosh(radius), std::sinh(radius) * std::cos(th),
                                      std::sinh(radius) * std::sin(th), 0));
    }

    // Edges in groups of four read a_i b_i a_i^-1 b_i^-1. The a_i generator
    // maps the edge labeled a_i^-1 onto the edge labeled a_i, reversed; the
    // b_i generator is oriented so that prod [a_i, b_i] is the identity.
    for (int i = 0; i < genus; ++i) {
        const int ea = 4 * i, eb = 4 * i + 2;
        dom.pairings.push_back(projectToLorentz(
            segmentIsometry(dom.polygon[(eb + 0) % n], dom.polygon[(eb + 1) % n],
                            dom.polygon[(ea + 1) % n], dom.polygon[(ea + 0) % n])
                .m));
        dom.pairs.push_back({ea, eb, 2 * i, false});
        const int fa = 4 * i + 1, fb = 4 * i + 3;
        dom.pairings.push_back(projectToLorentz(
            segmentIsometry(dom.polygon[(fb + 0) % n], dom.polygon[(fb + 1) % n],
                            dom.polygon[(fa + 1) % n], dom.polygon[(fa + 0) % n])
                .inverse()
                .m));
        dom.pairs.push_back({fa, fb, 2 * i + 1, true});
    }
    return dom;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

SurfaceMesh refine(const FuchsianDomain& domain, int level) {
    if (level < 0) throw std::invalid_argument("refine: level must be >= 0");
    SurfaceMesh mesh;
    mesh.genus = domain.genus;
    mesh.level = level;
    mesh.domain = domain;

    const int n = 4 * domain.genus;
    mesh.verts.emplace_back(Vec4(1, 0, 0, 0));
    for (int k = 0; k < n; ++k) mesh.verts.push_back(domain.polygon[k]);

    struct RawTri {
        std::array<int, 3> v;
    };
    std::vector<RawTri> tris;
    for (int k = 0; k < n; ++k)
        tris.push_back({{0, 1 + k, 1 + (k + 1) % n}});

    struct RawPair {
        int a0, a1, b0, b1, gen;
        bool inv;
    };
    std::vector<RawPair> pairs;
    for (const auto& p : domain.pairs)
        pairs.push_back({1 + p.edge_a, 1 + (p.edge_a + 1) % n, 1 + p.edge_b,
                         1 + (p.edge_b + 1) % n, p.gen, p.inv});

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int id = static_cast<int>(mesh.verts.size());
            mesh.verts.push_back(geodesicMidpoint(mesh.verts[a], mesh.verts[b]));
            midpoint[key] = id;
            return id;
        };
        // Split boundary pairs first so partner midpoints are exact images.
        std::vector<RawPair> next_pairs;
        for (const auto& p : pairs) {
            const int ma = mid(p.a0, p.a1);
            const IsomH3 g = p.inv ? domain.pairings[p.gen].inverse() : domain.pairings[p.gen];
            const int mb = static_cast<int>(mesh.verts.size());
            mesh.verts.push_back(g.inverse()(mesh.verts[ma]));
            midpoint[std::minmax(p.b0, p.b1)] = mb;
            // g(b0) = a1 and g(mb) = ma, so (b0, mb) pairs with (ma, a1)
            // and (mb, b1) pairs with (a0, ma).
            next_pairs.push_back({ma, p.a1, p.b0, mb, p.gen, p.inv});
            next_pairs.push_back({p.a0, ma, mb, p.b1, p.gen, p.inv});
        }
        std::vector<RawTri> next;
        for (const auto& t : tris) {
            const int m01 = mid(t.v[0], t.v[1]);
            const int m12 = mid(t.v[1], t.v[2]);
            const int m20 = mid(t.v[2], t.v[0]);
            next.push_back({{t.v[0], m01, m20}});
            next.push_back({{m01, t.v[1], m12}});
            next.push_back({{m20, m12, t.v[2]}});
            next.push_back({{m01, m12, m20}});
        }
        tris = std::move(next);
        pairs = std::move(next_pairs);
    }

    mesh.tris.resize(tris.size());
    for (size_t i = 0; i < tris.size(); ++i) mesh.tris[i].v = tris[i].v;
    for (const auto& p : pairs)
        mesh.bpairs.push_back({p.a0, p.a1, p.b0, p.b1, p.gen, p.inv, -1, -1, -1, -1});

    mesh.buildDerivedData();
    return mesh;
}

double SurfaceMesh::totalArea() const {
    double a = 0.0;
    for (const auto& t : tris) a += t.area;
    return a;
}

double SurfaceMesh::maxEdgeLength() const {
    double m = 0.0;
    for (const auto& t : tris)
        for (double l : t.elen) m = std::max(m, l);
    return m;
}

double SurfaceMesh::maxAngleDefect() const {
    std::vector<double> sums(numClasses(), 0.0);
    for (const auto& t : tris)
        for (int c = 0; c < 3; ++c) sums[vclass[t.v[c]]] += t.angle[c];
    double worst = 0.0;
    for (double s : sums) worst = std::max(worst, std::abs(s - 2.0 * kPi));
    return worst;
}

namespace {

// Euclidean corner angles of the triangle laid out by its hyperbolic edge lengths.
std::array<double, 3> layoutAngles(const SurfaceMesh::Tri& t) {
    std::array<double, 3> a;
    for (int c = 0; c < 3; ++c) {
        const double l0 = t.elen[c], l1 = t.elen[(c + 2) % 3], lo = t.elen[(c + 1) % 3];
        a[c] = std::acos(std::clamp((l0 * l0 + l1 * l1 - lo * lo) / (2.0 * l0 * l1),
                                    -1.0, 1.0));
    }
    return a;
}

}  // namespace

double SurfaceMesh::gaussBonnetDefect() const {
    std::vector<double> sums(numClasses(), 0.0);
    for (const auto& t : tris) {
        const auto ang = layoutAngles(t);
        for (int c = 0; c < 3; ++c) sums[vclass[t.v[c]]] += ang[c];
    }
    double total = 0.0;
    for (double s : sums) total += 2.0 * kPi - s;
    const double chi = 2.0 - 2.0 * genus;
    return total - 2.0 * kPi * chi;
}

double SurfaceMesh::curvatureDefectL1() const {
    std::vector<double> sums(numClasses(), 0.0);
    for (const auto& t : tris) {
        const auto ang = layoutAngles(t);
        for (int c = 0; c < 3; ++c) sums[vclass[t.v[c]]] += ang[c];
    }
    double dev = 0.0;
    for (int cl = 0; cl < numClasses(); ++cl)
        dev += std::abs((sums[cl] - 2.0 * kPi) - vertex_mass_[cl]);
    return dev / totalArea();
}

void SurfaceMesh::buildDerivedData() {
    const int nv = static_cast<int>(verts.size());
    const int nt = static_cast<int>(tris.size());

    // ---- quotient classes from the boundary identifications
    UnionFind uf(nv);
    for (const auto& p : bpairs) {
        uf.unite(p.b0, p.a1);
        uf.unite(p.b1, p.a0);
    }
    std::map<int, int> root_to_class;
    vclass.assign(nv, -1);
    class_rep.clear();
    for (int v = 0; v < nv; ++v) {
        const int r = uf.find(v);
        auto it = root_to_class.find(r);
        if (it == root_to_class.end()) {
            root_to_class[r] = static_cast<int>(class_rep.size());
            vclass[v] = static_cast<int>(class_rep.size());
            class_rep.push_back(v);
        } else {
            vclass[v] = it->second;
        }
    }
    for (int v = 0; v < nv; ++v)
        if (vclass[class_rep[vclass[v]]] != vclass[v])
            throw std::logic_error("class table inconsistent");
    // representative = smallest vertex id in the class
    for (int v = 0; v < nv; ++v)
        if (v < class_rep[vclass[v]]) class_rep[vclass[v]] = v;

    // ---- words: pos(v) = word(pos(rep)), BFS over the identification graph
    struct Link {
        int from, to, gen;
        bool inv;  // pos(to) = gen^{+-1}(pos(from)) with that sign inverted below
    };
    // g(b0) = a1  =>  pos(a1) = g(pos(b0)), pos(b0) = g^{-1}(pos(a1))
    std::vector<std::vector<std::pair<int, GenLetter>>> adj(nv);
    for (const auto& p : bpairs) {
        adj[p.b0].push_back({p.a1, GenLetter{p.gen, p.inv}});
        adj[p.a1].push_back({p.b0, GenLetter{p.gen, !p.inv}});
        adj[p.b1].push_back({p.a0, GenLetter{p.gen, p.inv}});
        adj[p.a0].push_back({p.b1, GenLetter{p.gen, !p.inv}});
    }
    vert_word.assign(nv, GenWord{});
    vert_word_mat.assign(nv, IsomH3());
    std::vector<char> seen(nv, 0);
    for (int c = 0; c < numClasses(); ++c) {
        std::queue<int> q;
        const int rep = class_rep[c];
        q.push(rep);
        seen[rep] = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (const auto& [w, letter] : adj[u]) {
                if (seen[w]) continue;
                seen[w] = 1;
                GenWord word;
                word.push_back(letter);
                for (const auto& l : vert_word[u]) word.push_back(l);
                vert_word[w] = word;
                vert_word_mat[w] = (letter.inv ? domain.pairings[letter.gen].inverse()
                                               : domain.pairings[letter.gen]) *
                                   vert_word_mat[u];
                q.push(w);
            }
        }
    }
    for (int v = 0; v < nv; ++v) {
        const HPoint img = vert_word_mat[v](verts[class_rep[vclass[v]]]);
        if ((img.x - verts[v].x).cwiseAbs().maxCoeff() > 1e-8)
            throw std::logic_error("vertex word does not reproduce the copy position");
    }

    // ---- per-triangle charts
    for (auto& t : tris) {
        const HPoint &x0 = verts[t.v[0]], &x1 = verts[t.v[1]], &x2 = verts[t.v[2]];
        HPoint c(x0.x + x1.x + x2.x);
        c.renormalize();
        t.center = c;
        TangentVec u = logPoint(c, x0);
        u.v /= u.norm();
        TangentVec v = rotate90(c, u);
        t.fu = u.v;
        t.fv = v.v;
        for (int i = 0; i < 3; ++i) {
            TangentVec lg = logPoint(c, verts[t.v[i]]);
            t.xi[i] = Vec2(minkowskiDot(lg.v, t.fu), minkowskiDot(lg.v, t.fv));
        }
        const double cross2 = (t.xi[1] - t.xi[0]).x() * (t.xi[2] - t.xi[0]).y() -
                              (t.xi[1] - t.xi[0]).y() * (t.xi[2] - t.xi[0]).x();
        if (cross2 <= 0.0) throw std::logic_error("triangle not ccw in its chart");
        t.chart_area = 0.5 * cross2;
        double angsum = 0.0;
        for (int i = 0; i < 3; ++i) {
            t.elen[i] = dist(verts[t.v[i]], verts[t.v[(i + 1) % 3]]);
            TangentVec ta = logPoint(verts[t.v[i]], verts[t.v[(i + 1) % 3]]);
            TangentVec tb = logPoint(verts[t.v[i]], verts[t.v[(i + 2) % 3]]);
            t.angle[i] = std::acos(std::clamp(
                minkowskiDot(ta.v, tb.v) / (ta.norm() * tb.norm()), -1.0, 1.0));
            angsum += t.angle[i];
        }
        t.area = kPi - angsum;
        for (int i = 0; i < 3; ++i) {
            const Vec2 opp = t.xi[(i + 2) % 3] - t.xi[(i + 1) % 3];
            t.grad_bary[i] = Vec2(-opp.y(), opp.x()) / (2.0 * t.chart_area);
        }
    }

    // ---- adjacency: interior edges share vertex ids, cut edges go through bpairs
    std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;
    for (int ti = 0; ti < nt; ++ti)
        for (int e = 0; e < 3; ++e) {
            const int a = tris[ti].v[e], b = tris[ti].v[(e + 1) % 3];
            edge_owner[{a, b}] = {ti, e};
        }
    for (int ti = 0; ti < nt; ++ti)
        for (int e = 0; e < 3; ++e) {
            tris[ti].nbr[e] = -1;
            tris[ti].cut[e] = false;
            const int a = tris[ti].v[e], b = tris[ti].v[(e + 1) % 3];
            auto it = edge_owner.find({b, a});
            if (it != edge_owner.end()) {
                tris[ti].nbr[e] = it->second.first;
                tris[ti].nbr_edge[e] = it->second.second;
            }
        }
    for (auto& p : bpairs) {
        const auto ea = edge_owner.find({p.a0, p.a1});
        const auto eb = edge_owner.find({p.b0, p.b1});
        if (ea == edge_owner.end() || eb == edge_owner.end())
            throw std::logic_error("boundary pair without owning triangle");
        p.tri_a = ea->second.first;
        p.edge_a = ea->second.second;
        p.tri_b = eb->second.first;
        p.edge_b = eb->second.second;
        auto& ta = tris[p.tri_a];
        auto& tb = tris[p.tri_b];
        ta.nbr[p.edge_a] = p.tri_b;
        ta.nbr_edge[p.edge_a] = p.edge_b;
        ta.cut[p.edge_a] = true;
        tb.nbr[p.edge_b] = p.tri_a;
        tb.nbr_edge[p.edge_b] = p.edge_a;
        tb.cut[p.edge_b] = true;
    }
    for (int ti = 0; ti < nt; ++ti)
        for (int e = 0; e < 3; ++e)
            if (tris[ti].nbr[e] < 0) throw std::logic_error("unmatched edge");

    // Pull map for a cut edge: isometry bringing the neighbor-side copy of the
    // surface into this triangle's side.
    auto pullAcross = [&](int ti, int e) -> IsomH3 {
        for (const auto& p : bpairs) {
            if (p.tri_a == ti && p.edge_a == e)
                return p.inv ? domain.pairings[p.gen].inverse() : domain.pairings[p.gen];
            if (p.tri_b == ti && p.edge_b == e)
                return p.inv ? domain.pairings[p.gen] : domain.pairings[p.gen].inverse();
        }
        throw std::logic_error("pullAcross: not a cut edge");
    };

    // ---- frame transitions across edges
    for (int ti = 0; ti < nt; ++ti) {
        auto& t = tris[ti];
        for (int e = 0; e < 3; ++e) {
            const int tj = t.nbr[e], ej = t.nbr_edge[e];
            const auto& t2 = tris[tj];
            const HPoint &xa = verts[t.v[e]], &xb = verts[t.v[(e + 1) % 3]];
            const HPoint m = geodesicMidpoint(xa, xb);
            TangentVec d = logPoint(m, xb);
            d.v /= d.norm();
            const double a1 = frameAngle(parallelTransport(d, m, t.center), t.fu, t.fv);

            const HPoint &ya = verts[t2.v[ej]], &yb = verts[t2.v[(ej + 1) % 3]];
            const HPoint m2 = geodesicMidpoint(ya, yb);
            TangentVec d2 = logPoint(m2, yb);
            d2.v /= d2.norm();
            const double a2 = frameAngle(parallelTransport(d2, m2, t2.center), t2.fu, t2.fv);

            double th = a1 - (a2 + kPi);
            while (th > kPi) th -= 2.0 * kPi;
            while (th <= -kPi) th += 2.0 * kPi;
            t.nbr_angle[e] = th;

            HPoint c2 = t2.center;
            if (t.cut[e]) c2 = pullAcross(ti, e)(c2);
            TangentVec lg = logPoint(t.center, c2);
            t.nbr_center[e] = Vec2(minkowskiDot(lg.v, t.fu), minkowskiDot(lg.v, t.fv));
        }
    }

    // ---- class frames and corner transitions
    class_ring.assign(numClasses(), {});
    std::vector<std::vector<std::pair<int, int>>> incid(numClasses());
    for (int ti = 0; ti < nt; ++ti)
        for (int c = 0; c < 3; ++c) incid[vclass[tris[ti].v[c]]].push_back({ti, c});

    class_fu.assign(numClasses(), Vec4::Zero());
    class_fv.assign(numClasses(), Vec4::Zero());
    for (int cl = 0; cl < numClasses(); ++cl) {
        const int rep = class_rep[cl];
        const HPoint& p = verts[rep];
        // direction toward the center of the first triangle incident to the rep
        int t0 = -1;
        for (const auto& [ti, c] : incid[cl])
            if (tris[ti].v[c] == rep && (t0 < 0 || ti < t0)) t0 = ti;
        if (t0 < 0) t0 = incid[cl].front().first;
        TangentVec u = logPoint(p, tris[t0].center);
        u.v /= u.norm();
        class_fu[cl] = u.v;
        class_fv[cl] = rotate90(p, u).v;
    }
    for (int ti = 0; ti < nt; ++ti) {
        auto& t = tris[ti];
        for (int c = 0; c < 3; ++c) {
            const int v = t.v[c];
            const int cl = vclass[v];
            const HPoint& pv = verts[v];
            // class frame mapped to this copy, then transported to the center
            const IsomH3& w = vert_word_mat[v];
            TangentVec wu(pv, w.m * class_fu[cl]);
            wu.project();
            const double beta = frameAngle(parallelTransport(wu, pv, t.center), t.fu, t.fv);
            t.corner_angle[c] = beta;
        }
    }

    // ---- ordered rings (by angle in the class chart)
    class_ring_center.assign(numClasses(), {});
    for (int cl = 0; cl < numClasses(); ++cl) {
        auto ring = incid[cl];
        const int rep = class_rep[cl];
        const HPoint& p = verts[rep];
        std::vector<double> ang(ring.size());
        std::vector<Vec2> ctr(ring.size());
        for (size_t k = 0; k < ring.size(); ++k) {
            const auto& [ti, c] = ring[k];
            const IsomH3 winv = vert_word_mat[tris[ti].v[c]].inverse();
            const HPoint cc = winv(tris[ti].center);
            TangentVec lg = logPoint(p, cc);
            ctr[k] = Vec2(minkowskiDot(lg.v, class_fu[cl]), minkowskiDot(lg.v, class_fv[cl]));
            ang[k] = std::atan2(ctr[k].y(), ctr[k].x());
        }
        std::vector<size_t> order(ring.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ang[a] < ang[b]; });
        for (size_t k : order) {
            class_ring[cl].push_back(ring[k]);
            class_ring_center[cl].push_back(ctr[k]);
        }
    }

    // ---- FEM matrices on classes
    const int nc = numClasses();
    std::vector<Eigen::Triplet<double>> ks, ms;
    vertex_mass_ = Eigen::VectorXd::Zero(nc);
    for (const auto& t : tris) {
        int cl[3];
        for (int i = 0; i < 3; ++i) cl[i] = vclass[t.v[i]];
        for (int i = 0; i < 3; ++i) {
            vertex_mass_[cl[i]] += t.area / 3.0;
            for (int j = 0; j < 3; ++j) {
                ks.emplace_back(cl[i], cl[j],
                                t.chart_area * t.grad_bary[i].dot(t.grad_bary[j]));
                ms.emplace_back(cl[i], cl[j], t.area * (i == j ? 1.0 : 0.5) / 6.0);
            }
        }
    }
    stiffness_.resize(nc, nc);
    stiffness_.setFromTriplets(ks.begin(), ks.end());
    mass_.resize(nc, nc);
    mass_.setFromTriplets(ms.begin(), ms.end());
    hess_coeff_.clear();
}

namespace {

Mat2 rotation2(double th) {
    Mat2 r;
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return r;
}

}  // namespace

const std::vector<std::vector<std::pair<int, Mat2>>>& SurfaceMesh::hessianCoefficients() const {
    if (!hess_coeff_.empty()) return hess_coeff_;
    const int nt = numTris();
    const int nc = numClasses();

    // Stage 1: weak recovery at vertices. Testing Hess(u) against the hat
    // function of a class and integrating by parts gives
    //   H_cl = -(1/m_cl) sum_{(T,c)} area_T (R g_T)(R grad hat_c)^T
    // in the class frame. Its trace is exactly the lumped FEM Laplacian,
    // which keeps the trace part of cod invertible.
    std::vector<std::vector<std::pair<int, Mat2>>> hvert(nc);
    for (int cl = 0; cl < nc; ++cl) {
        std::map<int, Mat2> acc;
        for (const auto& [ti, c] : class_ring[cl]) {
            const auto& t = tris[ti];
            const Mat2 rot = rotation2(-t.corner_angle[c]);  // tri -> class frame
            const Vec2 hb = rot * t.grad_bary[c];
            for (int i = 0; i < 3; ++i) {
                const Mat2 contrib =
                    -(t.area / vertexMass()[cl]) * (rot * t.grad_bary[i]) * hb.transpose();
                auto it = acc.find(vclass[t.v[i]]);
                if (it == acc.end())
                    acc.emplace(vclass[t.v[i]], contrib);
                else
                    it->second += contrib;
            }
        }
        for (auto& [w, m] : acc) hvert[cl].emplace_back(w, 0.5 * (m + m.transpose()));
    }

    // Stage 2: triangle value = mean of the corner recoveries in this frame.
    hess_coeff_.resize(nt);
    for (int ti = 0; ti < nt; ++ti) {
        const auto& t = tris[ti];
        std::map<int, Mat2> acc;
        for (int c = 0; c < 3; ++c) {
            const Mat2 rot = rotation2(t.corner_angle[c]);  // class -> tri frame
            for (const auto& [w, m] : hvert[vclass[t.v[c]]]) {
                const Mat2 contrib = (rot * m * rot.transpose()) / 3.0;
                auto it = acc.find(w);
                if (it == acc.end())
                    acc.emplace(w, contrib);
                else
                    it->second += contrib;
            }
        }
        auto& out = hess_coeff_[ti];
        for (const auto& [cl, m] : acc) out.emplace_back(cl, m);
    }
    return hess_coeff_;
}

LaplaceResult laplacianSolve(const SurfaceMesh& mesh, const ScalarField& rhs, double shift) {
    if (shift <= 0.0) throw std::invalid_argument("laplacianSolve: shift must be positive");
    Eigen::SparseMatrix<double> op = mesh.stiffness() + shift * mesh.mass();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(op);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("laplacianSolve: factorization failed");
    const Eigen::VectorXd br = mesh.mass() * rhs.real();
    const Eigen::VectorXd bi = mesh.mass() * rhs.imag();
    Eigen::VectorXd ur = solver.solve(br), ui = solver.solve(bi);
    LaplaceResult res;
    res.u = ur + Complex(0, 1) * ui;
    const double num = (op * ur - br).norm() + (op * ui - bi).norm();
    const double den = br.norm() + bi.norm();
    res.relative_residual = den > 0 ? num / den : num;
    if (res.relative_residual > 1e-8)
        throw std::runtime_error("laplacianSolve: residual " +
                                 std::to_string(res.relative_residual));
    return res;
}

VectorField grad(const SurfaceMesh& mesh, const ScalarField& u) {
    VectorField g(mesh.numTris(), Vec2c::Zero());
    for (int ti = 0; ti < mesh.numTris(); ++ti) {
        const auto& t = mesh.tris[ti];
        for (int i = 0; i < 3; ++i)
            g[ti] += u[mesh.vclass[t.v[i]]] * t.grad_bary[i].cast<Complex>();
    }
    return g;
}

OperatorField hess(const SurfaceMesh& mesh, const ScalarField& u) {
    OperatorField h(mesh.numTris(), Mat2c::Zero());
    const auto& coeff = mesh.hessianCoefficients();
    for (int ti = 0; ti < mesh.numTris(); ++ti)
        for (const auto& [cl, m] : coeff[ti]) h[ti] += u[cl] * m.cast<Complex>();
    return h;
}

namespace {

Mat2 rot2(double th) {
    Mat2 r;
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return r;
}

template <typename Mat, typename Vec>
std::vector<Vec> dnablaImpl(const SurfaceMesh& mesh, const std::vector<Mat>& phi) {
    const int nc = mesh.numClasses();
    // vertex-averaged field in the class frames
    std::vector<Mat> phat(nc, Mat::Zero());
    std::vector<double> wsum(nc, 0.0);
    for (int cl = 0; cl < nc; ++cl) {
        for (const auto& [ti, c] : mesh.class_ring[cl]) {
            const auto& t = mesh.tris[ti];
            const Mat2 r = rot2(-t.corner_angle[c]);  // triangle -> class frame
            phat[cl] += t.area * (r.template cast<typename Mat::Scalar>() * phi[ti] *
                                  r.transpose().template cast<typename Mat::Scalar>());
            wsum[cl] += t.area;
        }
        phat[cl] /= wsum[cl];
    }

    // trapezoid loop integral over the link polygon in the class chart;
    // the values at the link vertices travel through the shared triangle
    std::vector<Vec> res(nc, Vec::Zero());
    for (int cl = 0; cl < nc; ++cl) {
        const int rep = mesh.class_rep[cl];
        const HPoint& p = mesh.verts[rep];
        Vec sum = Vec::Zero();
        double area2 = 0.0;  // twice the shoelace area of the link polygon
        for (const auto& [ti, c] : mesh.class_ring[cl]) {
            const auto& t = mesh.tris[ti];
            const IsomH3 winv = mesh.vert_word_mat[t.v[c]].inverse();
            auto coords = [&](int corner) {
                TangentVec lg = logPoint(p, winv(mesh.verts[t.v[corner]]));
                return Vec2(minkowskiDot(lg.v, mesh.class_fu[cl]),
                            minkowskiDot(lg.v, mesh.class_fv[cl]));
            };
            auto valueAt = [&](int corner) {
                const int cl2 = mesh.vclass[t.v[corner]];
                // class cl2 frame -> triangle frame -> class cl frame
                const Mat2 r = rot2(t.corner_angle[corner] - t.corner_angle[c]);
                return Mat(r.template cast<typename Mat::Scalar>() * phat[cl2] *
                           r.transpose().template cast<typename Mat::Scalar>());
            };
            const int ca = (c + 1) % 3, cb = (c + 2) % 3;
            const Vec2 za = coords(ca), zb = coords(cb);
            sum += (0.5 * (valueAt(ca) + valueAt(cb))) *
                   (zb - za).template cast<typename Mat::Scalar>();
            area2 += za.x() * zb.y() - za.y() * zb.x();
        }
        res[cl] = sum / (0.5 * area2);
    }
    return res;
}

}  // namespace

std::vector<Vec2c> dnabla(const SurfaceMesh& mesh, const OperatorField& phi) {
    return dnablaImpl<Mat2c, Vec2c>(mesh, phi);
}

std::vector<Vec2> dnabla(const SurfaceMesh& mesh, const RealOperatorField& phi) {
    return dnablaImpl<Mat2, Vec2>(mesh, phi);
}

double dnablaNorm(const SurfaceMesh& mesh, const std::vector<Vec2c>& r) {
    double s = 0.0;
    for (int cl = 0; cl < mesh.numClasses(); ++cl)
        s += mesh.vertexMass()[cl] * r[cl].squaredNorm();
    return std::sqrt(s);
}

double dnablaNorm(const SurfaceMesh& mesh, const std::vector<Vec2>& r) {
    double s = 0.0;
    for (int cl = 0; cl < mesh.numClasses(); ++cl)
        s += mesh.vertexMass()[cl] * r[cl].squaredNorm();
    return std::sqrt(s);
}

Complex integrate(const SurfaceMesh& mesh, const ScalarField& f) {
    Complex s = 0.0;
    for (const auto& t : mesh.tris) {
        Complex m = 0.0;
        for (int i = 0; i < 3; ++i) m += f[mesh.vclass[t.v[i]]];
        s += t.area * m / 3.0;
    }
    return s;
}

Complex operatorInner(const SurfaceMesh& mesh, const OperatorField& a, const OperatorField& b) {
    Complex s = 0.0;
    for (int ti = 0; ti < mesh.numTris(); ++ti)
        s += mesh.tris[ti].area * (a[ti].transpose() * b[ti].conjugate()).trace();
    return s;
}

double operatorInner(const SurfaceMesh& mesh, const RealOperatorField& a,
                     const RealOperatorField& b) {
    double s = 0.0;
    for (int ti = 0; ti < mesh.numTris(); ++ti)
        s += mesh.tris[ti].area * (a[ti].transpose() * b[ti]).trace();
    return s;
}

double operatorNorm(const SurfaceMesh& mesh, const OperatorField& a) {
    return std::sqrt(std::abs(operatorInner(mesh, a, a)));
}

OperatorField toComplexField(const RealOperatorField& re) {
    OperatorField f(re.size());
    for (size_t i = 0; i < re.size(); ++i) f[i] = re[i].cast<Complex>();
    return f;
}

OperatorField toComplexField(const RealOperatorField& re, const RealOperatorField& im) {
    OperatorField f(re.size());
    for (size_t i = 0; i < re.size(); ++i)
        f[i] = re[i].cast<Complex>() + Complex(0, 1) * im[i].cast<Complex>();
    return f;
}

RealOperatorField realPart(const OperatorField& f) {
    RealOperatorField r(f.size());
    for (size_t i = 0; i < f.size(); ++i) r[i] = f[i].real();
    return r;
}

RealOperatorField imagPart(const OperatorField& f) {
    RealOperatorField r(f.size());
    for (size_t i = 0; i < f.size(); ++i) r[i] = f[i].imag();
    return r;
}

}  // namespace hmi

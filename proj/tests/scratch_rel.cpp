#include "hmi/surface.hpp"

#include <cstdio>

using namespace hmi;

static double resid(const Mat4& m) {
    return (m - Mat4::Identity()).cwiseAbs().maxCoeff();
}

int main() {
    auto dom = buildDomain(2);
    const Mat4 A = dom.pairings[0].m, B = dom.pairings[1].m;
    const Mat4 C = dom.pairings[2].m, D = dom.pairings[3].m;
    auto inv = [](const Mat4& m) { return Mat4(m.inverse()); };

    struct Cand {
        const char* name;
        Mat4 m;
    };
    std::vector<Cand> cands;
    cands.push_back({"[A,B][C,D]", A * B * inv(A) * inv(B) * C * D * inv(C) * inv(D)});
    cands.push_back({"[B,A][D,C]", B * A * inv(B) * inv(A) * D * C * inv(D) * inv(C)});
    cands.push_back({"[A-,B-][C-,D-]",
                     inv(A) * inv(B) * A * B * inv(C) * inv(D) * C * D});
    cands.push_back({"[D,C][B,A] rev", D * C * inv(D) * inv(C) * B * A * inv(B) * inv(A)});
    cands.push_back({"[A,B-][C,D-]", A * inv(B) * inv(A) * B * C * inv(D) * inv(C) * D});
    cands.push_back({"[A-,B][C-,D]", inv(A) * B * A * inv(B) * inv(C) * D * C * inv(D)});
    cands.push_back({"[B-,A][D-,C]", inv(B) * A * B * inv(A) * inv(D) * C * D * inv(C)});
    cands.push_back({"[B,A-][D,C-]", B * inv(A) * inv(B) * A * D * inv(C) * inv(D) * C});
    cands.push_back({"ABA-B- interleave rev",
                     inv(D) * inv(C) * D * C * inv(B) * inv(A) * B * A});
    for (auto& c : cands) std::printf("%-24s %.3e\n", c.name, resid(c.m));

    // holonomy around the corner class: walk the glue graph
    auto mesh = refine(dom, 0);
    std::printf("corner class ring size: %zu\n",
                mesh.class_ring[mesh.vclass[1]].size());
    return 0;
}

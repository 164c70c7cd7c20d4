#pragma once

// Polyphase grid model: per-frequency compound admittance assembly from
// sequence-parameter cables, Kron reduction of passive nodes, the hybrid
// (I_S, V_R) -> (V_S, I_R) partition, its harmonic lift, and the grid/resource
// sorting permutations.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpfx/frames.hpp"
#include "hpfx/spectral.hpp"

namespace hpfx {

// Sequence parameters of a cable type, per km.
struct LineParams {
    std::string id;
    double r1_ohm_per_km = 0.0;  // positive/negative sequence resistance
    double r0_ohm_per_km = 0.0;
    double l1_mh_per_km = 0.0;
    double l0_mh_per_km = 0.0;
    double c1_nf_per_km = 0.0;
    double c0_nf_per_km = 0.0;
};

// Series impedance and one shunt end-admittance (pi model, half at each end)
// of a line segment at frequency f. At f = 0 the reactive parts vanish.
inline std::pair<MatrixXcd, MatrixXcd> sequence_to_phase(const LineParams& lp, double length_m,
                                                         double f) {
    if (length_m <= 0.0) throw ValidationError("sequence_to_phase: length must be positive");
    const double km = length_m / 1000.0;
    const double w = 2.0 * kPi * f;
    const Complex z1 = Complex(lp.r1_ohm_per_km, w * lp.l1_mh_per_km * 1e-3) * km;
    const Complex z0 = Complex(lp.r0_ohm_per_km, w * lp.l0_mh_per_km * 1e-3) * km;
    const Complex y1 = Complex(0.0, w * lp.c1_nf_per_km * 1e-9) * km / 2.0;
    const Complex y0 = Complex(0.0, w * lp.c0_nf_per_km * 1e-9) * km / 2.0;
    return {sequence_to_phase_matrix(z0, z1, z1), sequence_to_phase_matrix(y0, y1, y1)};
}

struct Branch {
    int from = 0;  // node indices into GridTopology::nodes
    int to = 0;
    LineParams line;
    double length_m = 0.0;

    MatrixXcd series_impedance(double f) const {
        return sequence_to_phase(line, length_m, f).first;
    }
    MatrixXcd shunt_end_admittance(double f) const {
        return sequence_to_phase(line, length_m, f).second;
    }
};

// Shunt passive load, series R-L per phase (diagonal compound matrices).
struct PassiveLoad {
    int node = 0;
    Eigen::Vector3d r_ohm = Eigen::Vector3d::Zero();
    Eigen::Vector3d l_h = Eigen::Vector3d::Zero();

    MatrixXcd impedance(double f) const {
        MatrixXcd z = MatrixXcd::Zero(3, 3);
        for (int p = 0; p < 3; ++p) z(p, p) = Complex(r_ohm(p), 2.0 * kPi * f * l_h(p));
        return z;
    }
    MatrixXcd admittance(double f) const {
        MatrixXcd y = MatrixXcd::Zero(3, 3);
        for (int p = 0; p < 3; ++p) {
            const Complex z(r_ohm(p), 2.0 * kPi * f * l_h(p));
            y(p, p) = 1.0 / z;
        }
        return y;
    }
};

struct GridTopology {
    std::vector<std::string> nodes;  // three-phase buses
    std::vector<Branch> branches;
    std::vector<PassiveLoad> loads;
    std::vector<int> forming_nodes;    // S, ordered
    std::vector<int> following_nodes;  // R, ordered
    bool include_line_shunts = true;

    int node_index(const std::string& name) const {
        auto it = std::find(nodes.begin(), nodes.end(), name);
        if (it == nodes.end()) throw ValidationError("unknown node '" + name + "'");
        return static_cast<int>(it - nodes.begin());
    }

    void validate() const {
        if (forming_nodes.empty())
            throw ValidationError("topology: S must contain at least one forming resource");
        for (int s : forming_nodes)
            for (int r : following_nodes)
                if (s == r) throw ValidationError("topology: S and R are not disjoint");
        for (const auto& b : branches) {
            if (b.from < 0 || b.from >= static_cast<int>(nodes.size()) || b.to < 0 ||
                b.to >= static_cast<int>(nodes.size()))
                throw ValidationError("topology: branch endpoint out of range");
            if (b.from == b.to) throw ValidationError("topology: degenerate branch");
        }
        // connectivity over branches
        std::vector<int> mark(nodes.size(), 0);
        std::vector<int> stack{0};
        mark[0] = 1;
        while (!stack.empty()) {
            int n = stack.back();
            stack.pop_back();
            for (const auto& b : branches) {
                int other = -1;
                if (b.from == n) other = b.to;
                if (b.to == n) other = b.from;
                if (other >= 0 && !mark[other]) {
                    mark[other] = 1;
                    stack.push_back(other);
                }
            }
        }
        if (std::any_of(mark.begin(), mark.end(), [](int m) { return m == 0; }))
            throw ValidationError("topology: graph is not connected");
    }
};

struct HypothesisReport {
    double worst_asymmetry = 0.0;
    double worst_re_eigenvalue = 0.0;  // most negative eigenvalue of Re part
    double worst_rcond = 1.0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {

inline double rcond_estimate(const MatrixXcd& m) {
    Eigen::FullPivLU<MatrixXcd> lu(m);
    if (!lu.isInvertible()) return 0.0;
    const double mn = inf_norm(m);
    const double in = inf_norm(MatrixXcd(lu.inverse()));
    return (mn > 0.0 && in > 0.0) ? 1.0 / (mn * in) : 0.0;
}

inline void audit_matrix(const MatrixXcd& m, const std::string& what, double f,
                         HypothesisReport& rep) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
    rep.worst_asymmetry = std::max(rep.worst_asymmetry, asym);
    if (asym > 1e-12)
        rep.violations.push_back(what + " not symmetric at f=" + std::to_string(f));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (m.real() + m.real().transpose()));
    const double lmin = es.eigenvalues().minCoeff();
    rep.worst_re_eigenvalue = std::min(rep.worst_re_eigenvalue, lmin);
    if (lmin < -1e-9 * scale)
        rep.violations.push_back(what + " not lossy at f=" + std::to_string(f));
    const double rc = rcond_estimate(m);
    rep.worst_rcond = std::min(rep.worst_rcond, rc);
    if (rc < 1e-14)
        rep.violations.push_back(what + " singular at f=" + std::to_string(f));
}

}  // namespace detail

// Symmetric/invertible/lossy audit of every branch (and nonzero shunt) at f.
inline HypothesisReport audit_hypotheses(const GridTopology& topo, double f) {
    HypothesisReport rep;
    for (std::size_t i = 0; i < topo.branches.size(); ++i) {
        const auto& b = topo.branches[i];
        detail::audit_matrix(b.series_impedance(f),
                             "branch " + topo.nodes[b.from] + "-" + topo.nodes[b.to], f, rep);
        if (topo.include_line_shunts && f != 0.0) {
            const MatrixXcd ysh = b.shunt_end_admittance(f);
            if (ysh.cwiseAbs().maxCoeff() > 0.0)
                detail::audit_matrix(ysh, "shunt of branch " + topo.nodes[b.from] + "-" +
                                              topo.nodes[b.to],
                                     f, rep);
        }
    }
    for (const auto& ld : topo.loads)
        detail::audit_matrix(ld.impedance(f), "load at " + topo.nodes[ld.node], f, rep);
    return rep;
}

struct NodalAdmittance {
    double f = 0.0;
    MatrixXcd y;  // 3|N| x 3|N|
};

// Y(f) = A_B^T Y_L(f) A_B + Y_T(f) + Y_P(f), with pi-model line shunts lumped
// half at each branch end and passive loads entering as shunt admittances.
inline NodalAdmittance assemble_admittance(const GridTopology& topo, double f) {
    const int n = static_cast<int>(topo.nodes.size());
    MatrixXcd y = MatrixXcd::Zero(3 * n, 3 * n);
    for (const auto& b : topo.branches) {
        const MatrixXcd z = b.series_impedance(f);
        Eigen::FullPivLU<MatrixXcd> lu(z);
        if (!lu.isInvertible())
            throw HypothesisError("assemble_admittance: singular series impedance of branch " +
                                  topo.nodes[b.from] + "-" + topo.nodes[b.to]);
        const MatrixXcd yb = lu.inverse();
        y.block(3 * b.from, 3 * b.from, 3, 3) += yb;
        y.block(3 * b.to, 3 * b.to, 3, 3) += yb;
        y.block(3 * b.from, 3 * b.to, 3, 3) -= yb;
        y.block(3 * b.to, 3 * b.from, 3, 3) -= yb;
        if (topo.include_line_shunts) {
            const MatrixXcd ysh = b.shunt_end_admittance(f);
            y.block(3 * b.from, 3 * b.from, 3, 3) += ysh;
            y.block(3 * b.to, 3 * b.to, 3, 3) += ysh;
        }
    }
    for (const auto& ld : topo.loads) y.block(3 * ld.node, 3 * ld.node, 3, 3) += ld.admittance(f);
    return {f, std::move(y)};
}

// Kron elimination of the given nodes (exact for zero-injection nodes).
// Keeps the factors needed to recover eliminated voltages afterwards.
struct KronReduction {
    std::vector<int> retained;    // node indices, in the order of the reduced matrix
    std::vector<int> eliminated;  // node indices
    MatrixXcd y_reduced;
    MatrixXcd recover;  // V_elim = recover * V_retained

    static KronReduction eliminate(const NodalAdmittance& adm, const std::vector<int>& retained,
                                   const std::vector<int>& eliminated) {
        auto gather = [&](const std::vector<int>& ri, const std::vector<int>& ci) {
            MatrixXcd m(3 * ri.size(), 3 * ci.size());
            for (std::size_t i = 0; i < ri.size(); ++i)
                for (std::size_t j = 0; j < ci.size(); ++j)
                    m.block(3 * i, 3 * j, 3, 3) = adm.y.block(3 * ri[i], 3 * ci[j], 3, 3);
            return m;
        };
        KronReduction k;
        k.retained = retained;
        k.eliminated = eliminated;
        if (eliminated.empty()) {
            k.y_reduced = gather(retained, retained);
            k.recover = MatrixXcd::Zero(0, 3 * retained.size());
            return k;
        }
        const MatrixXcd yrr = gather(retained, retained);
        const MatrixXcd yre = gather(retained, eliminated);
        const MatrixXcd yer = gather(eliminated, retained);
        const MatrixXcd yee = gather(eliminated, eliminated);
        Eigen::PartialPivLU<MatrixXcd> lu(yee);
        k.recover = -lu.solve(yer);
        k.y_reduced = yrr + yre * k.recover;
        return k;
    }
};

struct HybridBlocks {
    double f = 0.0;
    MatrixXcd ss, sr, rs, rr;  // (V_S; I_R) = [ss sr; rs rr] (I_S; V_R)
};

// Partial inversion of the admittance relation w.r.t. the S block. Positions
// are block indices into the (already reduced) admittance matrix.
inline HybridBlocks hybrid_partition(const NodalAdmittance& adm, const std::vector<int>& s_pos,
                                     const std::vector<int>& r_pos) {
    if (s_pos.empty()) throw ValidationError("hybrid_partition: S must be nonempty");
    if (3 * (s_pos.size() + r_pos.size()) != static_cast<std::size_t>(adm.y.rows()))
        throw ShapeError("hybrid_partition: S and R must cover the retained nodes");
    auto gather = [&](const std::vector<int>& ri, const std::vector<int>& ci) {
        MatrixXcd m(3 * ri.size(), 3 * ci.size());
        for (std::size_t i = 0; i < ri.size(); ++i)
            for (std::size_t j = 0; j < ci.size(); ++j)
                m.block(3 * i, 3 * j, 3, 3) = adm.y.block(3 * ri[i], 3 * ci[j], 3, 3);
        return m;
    };
    const MatrixXcd yss = gather(s_pos, s_pos);
    if (detail::rcond_estimate(yss) < 1e-14)
        throw SolvabilityError("hybrid_partition: Y_SxS singular at f=" + std::to_string(adm.f) +
                               "; hybrid matrix does not exist");
    Eigen::PartialPivLU<MatrixXcd> lu(yss);
    HybridBlocks h;
    h.f = adm.f;
    h.ss = lu.solve(MatrixXcd::Identity(yss.rows(), yss.cols()));
    if (!r_pos.empty()) {
        const MatrixXcd ysr = gather(s_pos, r_pos);
        const MatrixXcd yrs = gather(r_pos, s_pos);
        const MatrixXcd yrr = gather(r_pos, r_pos);
        h.sr = -lu.solve(ysr);
        h.rs = yrs * h.ss;
        h.rr = yrr + yrs * h.sr;
    } else {
        h.sr = MatrixXcd::Zero(3 * s_pos.size(), 0);
        h.rs = MatrixXcd::Zero(0, 3 * s_pos.size());
        h.rr = MatrixXcd::Zero(0, 0);
    }
    return h;
}

// Grid-sorted <-> resource-sorted permutation, stored as a block index map:
// resource-sorted block i holds grid-sorted block grid_of[i]. Blocks are one
// node's channels at one harmonic.
struct Permutation {
    int node_count = 0;
    int channels = 3;
    HarmonicSet harmonics;
    std::vector<int> grid_of;  // size node_count*|H|

    Eigen::Index dim() const {
        return static_cast<Eigen::Index>(node_count) * channels * harmonics.size();
    }

    // x_resource = P x_grid
    VectorXcd to_resource(const VectorXcd& x) const {
        VectorXcd out(x.size());
        for (std::size_t i = 0; i < grid_of.size(); ++i)
            out.segment(channels * i, channels) = x.segment(channels * grid_of[i], channels);
        return out;
    }
    VectorXcd to_grid(const VectorXcd& x) const {
        VectorXcd out(x.size());
        for (std::size_t i = 0; i < grid_of.size(); ++i)
            out.segment(channels * grid_of[i], channels) = x.segment(channels * i, channels);
        return out;
    }
    MatrixXcd resort_rows_cols(const MatrixXcd& m, const Permutation& col_perm) const {
        MatrixXcd out(m.rows(), m.cols());
        for (std::size_t i = 0; i < grid_of.size(); ++i)
            for (std::size_t j = 0; j < col_perm.grid_of.size(); ++j)
                out.block(channels * i, col_perm.channels * j, channels, col_perm.channels) =
                    m.block(channels * grid_of[i], col_perm.channels * col_perm.grid_of[j],
                            channels, col_perm.channels);
        return out;
    }
    MatrixXcd dense() const {
        MatrixXcd p = MatrixXcd::Zero(dim(), dim());
        for (std::size_t i = 0; i < grid_of.size(); ++i)
            p.block(channels * i, channels * grid_of[i], channels, channels) =
                MatrixXcd::Identity(channels, channels);
        return p;
    }
};

struct PermutationSpec {
    Permutation p_s;
    Permutation p_r;
};

// Block index formula: resource-sorted block i = (s-1)|H| + h + (h_max+1)
// pairs with grid-sorted block j = (h+h_max)|S| + s (1-based blocks).
inline Permutation build_permutation(int node_count, const HarmonicSet& h, int channels = 3) {
    if (node_count <= 0) throw ValidationError("build_permutation: node count must be positive");
    Permutation p;
    p.node_count = node_count;
    p.channels = channels;
    p.harmonics = h;
    p.grid_of.assign(static_cast<std::size_t>(node_count) * h.size(), 0);
    for (int s = 1; s <= node_count; ++s) {
        for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
            const int i = (s - 1) * h.size() + hh + (h.h_max + 1);  // 1-based
            const int j = (hh + h.h_max) * node_count + s;          // 1-based
            p.grid_of[static_cast<std::size_t>(i - 1)] = j - 1;
        }
    }
    return p;
}

inline PermutationSpec build_permutations(int s_count, int r_count, const HarmonicSet& h) {
    PermutationSpec spec;
    spec.p_s = build_permutation(s_count, h);
    spec.p_r = r_count > 0 ? build_permutation(r_count, h)
                           : Permutation{0, 3, h, {}};
    return spec;
}

// Hybrid blocks lifted over H. Grid-sorted lifts are block-diagonal over the
// harmonics; resource-sorted variants are their permutations.
struct HybridHarmonicMatrix {
    HarmonicSet harmonics;
    int s_count = 0, r_count = 0;
    MatrixXcd hat_ss, hat_sr, hat_rs, hat_rr;      // grid-sorted
    MatrixXcd tld_ss, tld_sr, tld_rs, tld_rr;      // resource-sorted
    PermutationSpec perm;
};

inline HybridHarmonicMatrix lift_hybrid(const std::map<int, HybridBlocks>& per_h,
                                        const HarmonicSet& h, int s_count, int r_count) {
    for (int hh = -h.h_max; hh <= h.h_max; ++hh)
        if (!per_h.count(hh))
            throw ValidationError("lift_hybrid: missing hybrid blocks for harmonic " +
                                  std::to_string(hh));
    HybridHarmonicMatrix out;
    out.harmonics = h;
    out.s_count = s_count;
    out.r_count = r_count;
    const Eigen::Index ns = 3 * s_count, nr = 3 * r_count;
    out.hat_ss = MatrixXcd::Zero(ns * h.size(), ns * h.size());
    out.hat_sr = MatrixXcd::Zero(ns * h.size(), nr * h.size());
    out.hat_rs = MatrixXcd::Zero(nr * h.size(), ns * h.size());
    out.hat_rr = MatrixXcd::Zero(nr * h.size(), nr * h.size());
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
        const auto& b = per_h.at(hh);
        const Eigen::Index k = h.index(hh);
        out.hat_ss.block(k * ns, k * ns, ns, ns) = b.ss;
        if (r_count > 0) {
            out.hat_sr.block(k * ns, k * nr, ns, nr) = b.sr;
            out.hat_rs.block(k * nr, k * ns, nr, ns) = b.rs;
            out.hat_rr.block(k * nr, k * nr, nr, nr) = b.rr;
        }
    }
    out.perm = build_permutations(s_count, r_count, h);
    out.tld_ss = out.perm.p_s.resort_rows_cols(out.hat_ss, out.perm.p_s);
    if (r_count > 0) {
        out.tld_sr = out.perm.p_s.resort_rows_cols(out.hat_sr, out.perm.p_r);
        out.tld_rs = out.perm.p_r.resort_rows_cols(out.hat_rs, out.perm.p_s);
        out.tld_rr = out.perm.p_r.resort_rows_cols(out.hat_rr, out.perm.p_r);
    } else {
        out.tld_sr = out.hat_sr;
        out.tld_rs = out.hat_rs;
        out.tld_rr = out.hat_rr;
    }
    return out;
}

}  // namespace hpfx

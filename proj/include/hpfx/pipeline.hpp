#pragma once

// Study case -> solver pipeline: per-frequency admittance assembly with the
// hypothesis audit, Kron reduction to the resource nodes, harmonic lift,
// resource grid-response construction, the reduced fixed-point system, and
// phasor extraction (including voltages recovered at eliminated nodes).

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hpfx/solver.hpp"
#include "hpfx/studycase.hpp"

namespace hpfx {

struct CaseOverrides {
    std::optional<int> h_max;
    std::optional<double> tol_x, tol_f;
    std::optional<int> max_iter;
    std::optional<double> scale;
    std::optional<int> order;  // reference truncation for all PQ followers
};

inline StudyCase apply_overrides(StudyCase sc, const CaseOverrides& ov) {
    if (ov.h_max) sc.spectrum = HarmonicSet(*ov.h_max, sc.spectrum.f1);
    if (ov.tol_x) sc.solver.tol_x = *ov.tol_x;
    if (ov.tol_f) sc.solver.tol_f = *ov.tol_f;
    if (ov.max_iter) sc.solver.max_iter = *ov.max_iter;
    if (ov.order)
        for (auto& res : sc.resources)
            if (auto* fd = std::get_if<FollowingSpec>(&res)) fd->order = *ov.order;
    if (ov.scale) sc = apply_scale(sc, *ov.scale);
    return sc;
}

struct PreparedCase {
    StudyCase sc;
    GridTopology topo;
    HarmonicSet h;
    std::vector<int> retained;  // node indices, S nodes first then R nodes
    std::vector<int> eliminated;
    std::map<int, KronReduction> kron;  // per harmonic order
    HybridHarmonicMatrix hybrid;
    ReducedSystem sys;
    std::vector<std::string> s_nodes, r_nodes;  // names, solver order
    HypothesisReport audit;
};

namespace detail {

inline HarmonicSourceEquivalent te_equivalent(const TeSourceSpec& te, const HarmonicSet& h) {
    HarmonicSourceEquivalent src;
    src.kind = HarmonicSourceEquivalent::Kind::Thevenin;
    src.harmonics = h;
    const double r = te.r_ohm();
    const double l = te.l_h(h.f1);
    src.z_or_y = [r, l](double f) {
        return MatrixXcd(Complex(r, 2.0 * kPi * f * l) * MatrixXcd::Identity(3, 3));
    };
    src.source = source_spectrum(te.harmonics, te.v_nominal_v, h);
    return src;
}

inline HarmonicSourceEquivalent ne_equivalent(const NeSourceSpec& ne, const HarmonicSet& h) {
    HarmonicSourceEquivalent src;
    src.kind = HarmonicSourceEquivalent::Kind::Norton;
    src.harmonics = h;
    const double r = ne.y_r_ohm, l = ne.y_l_h;
    src.z_or_y = [r, l](double f) -> MatrixXcd {
        if (r == 0.0 && l == 0.0) return MatrixXcd::Zero(3, 3);
        return MatrixXcd((1.0 / Complex(r, 2.0 * kPi * f * l)) * MatrixXcd::Identity(3, 3));
    };
    // current rows are amperes RMS
    src.source = source_spectrum(ne.harmonics, 1.0, h);
    return src;
}

// Closed-loop responses depend only on the design parameters; cache them per
// parameter set so identical units are lifted once.
struct ResponseCache {
    std::map<std::string, CiderGridResponse> fd1, fm1;

    static std::string key_of(const Fd1Params& p) {
        std::ostringstream os;
        os << p.filter_l_h << ':' << p.filter_r_ohm << ':' << p.kp_a << ':' << p.ki_a << ':'
           << static_cast<int>(p.interface);
        return os.str();
    }
    static std::string key_of(const Fm1Params& p) {
        std::ostringstream os;
        os << p.filter_l_h << ':' << p.filter_r_ohm << ':' << p.filter_c_f << ':'
           << p.damping_r_ohm << ':' << p.kp_v << ':' << p.ki_v << ':' << p.kp_c << ':'
           << p.ki_c << ':' << static_cast<int>(p.interface);
        return os.str();
    }

    const CiderGridResponse& get(const Fd1Params& p, const HarmonicSet& h) {
        const std::string key = key_of(p);
        auto it = fd1.find(key);
        if (it == fd1.end()) {
            auto [sys, fb] = build_fd1(p);
            it = fd1.emplace(key, grid_response(close_loop(sys, fb, h), fb,
                                                CiderKind::Following))
                     .first;
        }
        return it->second;
    }
    const CiderGridResponse& get(const Fm1Params& p, const HarmonicSet& h) {
        const std::string key = key_of(p);
        auto it = fm1.find(key);
        if (it == fm1.end()) {
            auto [sys, fb] = build_fm1(p);
            it = fm1.emplace(key,
                             grid_response(close_loop(sys, fb, h), fb, CiderKind::Forming))
                     .first;
        }
        return it->second;
    }
};

}  // namespace detail

inline PreparedCase prepare_case(const StudyCase& input, const CaseOverrides& ov = {}) {
    PreparedCase pc;
    pc.sc = apply_overrides(input, ov);
    pc.h = pc.sc.spectrum;
    pc.topo = build_topology(pc.sc);

    // retained nodes: S then R, in resource order; all else Kron-eliminated
    pc.retained = pc.topo.forming_nodes;
    pc.retained.insert(pc.retained.end(), pc.topo.following_nodes.begin(),
                       pc.topo.following_nodes.end());
    {
        std::vector<int> seen;
        for (int n : pc.retained) {
            for (int s : seen)
                if (s == n)
                    throw ValidationError("node '" + pc.topo.nodes[n] +
                                          "' hosts more than one resource");
            seen.push_back(n);
        }
    }
    for (int n = 0; n < static_cast<int>(pc.topo.nodes.size()); ++n)
        if (std::find(pc.retained.begin(), pc.retained.end(), n) == pc.retained.end())
            pc.eliminated.push_back(n);

    const int n_s = static_cast<int>(pc.topo.forming_nodes.size());
    const int n_r = static_cast<int>(pc.topo.following_nodes.size());
    std::vector<int> s_pos(n_s), r_pos(n_r);
    for (int i = 0; i < n_s; ++i) s_pos[i] = i;
    for (int i = 0; i < n_r; ++i) r_pos[i] = n_s + i;

    std::map<int, HybridBlocks> per_h;
    for (int hh = -pc.h.h_max; hh <= pc.h.h_max; ++hh) {
        const double f = pc.h.freq(hh);
        const auto rep = audit_hypotheses(pc.topo, f);
        pc.audit.worst_asymmetry = std::max(pc.audit.worst_asymmetry, rep.worst_asymmetry);
        pc.audit.worst_re_eigenvalue =
            std::min(pc.audit.worst_re_eigenvalue, rep.worst_re_eigenvalue);
        pc.audit.worst_rcond = std::min(pc.audit.worst_rcond, rep.worst_rcond);
        if (!rep.ok())
            throw HypothesisError("hypothesis audit failed at f=" + std::to_string(f) + ": " +
                                  rep.violations.front());
        const auto adm = assemble_admittance(pc.topo, f);
        auto kron = KronReduction::eliminate(adm, pc.retained, pc.eliminated);
        per_h[hh] = hybrid_partition({f, kron.y_reduced}, s_pos, r_pos);
        pc.kron.emplace(hh, std::move(kron));
    }
    pc.hybrid = lift_hybrid(per_h, pc.h, n_s, n_r);

    // resource grid responses, in S / R order
    detail::ResponseCache cache;
    std::vector<SolverResource> forming(n_s), following(n_r);
    const MatrixXcd park = park_abc_to_dq_lift(pc.h).realized();
    const double vd_floor = 1e-6 * kDqOfPhaseRms * pc.sc.bases.voltage_v;
    int si = 0, ri = 0;
    for (const auto& res : pc.sc.resources) {
        if (const auto* te = std::get_if<TeSourceSpec>(&res)) {
            const auto src = detail::te_equivalent(*te, pc.h);
            SolverResource sr;
            sr.name = te->node;
            sr.kappa_channels = 3;
            sr.w_kappa_const = src.source.coeffs();
            if (te->forming) {
                sr.kind = CiderKind::Forming;
                const auto resp = source_as_grid_response(src, CiderKind::Forming);
                sr.g_pp = resp.g_pp;
                sr.g_pk = resp.g_pk;
                forming[si++] = std::move(sr);
            } else {
                sr.kind = CiderKind::Following;
                const auto resp = source_as_grid_response(src, CiderKind::Following);
                sr.g_pp = resp.g_pp;
                sr.g_pk = resp.g_pk;
                sr.t_kappa_gamma =
                    MatrixXcd::Identity(3 * pc.h.size(), 3 * pc.h.size());
                following[ri++] = std::move(sr);
            }
        } else if (const auto* ne = std::get_if<NeSourceSpec>(&res)) {
            const auto src = detail::ne_equivalent(*ne, pc.h);
            const auto resp = source_as_grid_response(src, CiderKind::Following);
            SolverResource sr;
            sr.name = ne->node;
            sr.kind = CiderKind::Following;
            sr.kappa_channels = 3;
            sr.w_kappa_const = src.source.coeffs();
            sr.g_pp = resp.g_pp;
            sr.g_pk = resp.g_pk;
            sr.t_kappa_gamma = MatrixXcd::Identity(3 * pc.h.size(), 3 * pc.h.size());
            following[ri++] = std::move(sr);
        } else if (const auto* fm = std::get_if<FormingSpec>(&res)) {
            const auto& resp = cache.get(fm->params, pc.h);
            SolverResource sr;
            sr.name = fm->node;
            sr.kind = CiderKind::Forming;
            sr.kappa_channels = 2;
            sr.g_pp = resp.g_pp;
            sr.g_pk = resp.g_pk;
            sr.w_kappa_const = forming_reference(fm->v_set_v, fm->f_set_hz, pc.h).coeffs();
            forming[si++] = std::move(sr);
        } else if (const auto* fd = std::get_if<FollowingSpec>(&res)) {
            const auto& resp = cache.get(fd->params, pc.h);
            SolverResource sr;
            sr.name = fd->node;
            sr.kind = CiderKind::Following;
            sr.kappa_channels = 2;
            sr.g_pp = resp.g_pp;
            sr.g_pk = resp.g_pk;
            sr.t_kappa_gamma = park;
            PqReference ref{fd->p_w, fd->q_var, fd->order, vd_floor};
            const HarmonicSet h = pc.h;
            sr.reference = [ref, h](const VectorXcd& w) {
                return following_reference(ref, SpectralVector(h, 2, w)).coeffs();
            };
            sr.reference_jacobian = [ref, h](const VectorXcd& w) {
                return following_reference_jacobian(ref, SpectralVector(h, 2, w));
            };
            following[ri++] = std::move(sr);
        }
    }
    for (const auto& sr : forming) pc.s_nodes.push_back(sr.name);
    for (const auto& sr : following) pc.r_nodes.push_back(sr.name);

    pc.sys = build_reduced_system(pc.hybrid, std::move(forming), std::move(following));
    return pc;
}

// ---------------------------------------------------------------------------
// Solution extraction
// ---------------------------------------------------------------------------

struct CaseSolution {
    FixedPointReport report;
    Mismatch mismatch;  // at the returned state (converged or last iterate)
    std::map<std::string, SpectralVector> node_voltage;  // all nodes
    std::map<std::string, SpectralVector> node_current;  // resource nodes
};

namespace detail {

inline SpectralVector slice_resource(const VectorXcd& stacked, std::size_t index,
                                     const HarmonicSet& h) {
    const Eigen::Index len = 3 * static_cast<Eigen::Index>(h.size());
    return SpectralVector(h, 3, stacked.segment(index * len, len));
}

}  // namespace detail

inline CaseSolution solve_case(const PreparedCase& pc) {
    SolverConfig cfg;
    cfg.tol_x = pc.sc.solver.tol_x;
    cfg.tol_f = pc.sc.solver.tol_f;
    cfg.max_iter = pc.sc.solver.max_iter;
    CaseSolution out;
    out.report = solve(pc.sys, cfg, pc.sc.bases.voltage_v);
    if (!out.report.converged) return out;

    const HarmonicSet& h = pc.h;
    const std::size_t n_s = pc.s_nodes.size(), n_r = pc.r_nodes.size();
    for (std::size_t i = 0; i < n_s; ++i) {
        out.node_voltage.emplace(pc.s_nodes[i], detail::slice_resource(out.report.v_s, i, h));
        out.node_current.emplace(pc.s_nodes[i], detail::slice_resource(out.report.i_s, i, h));
    }
    for (std::size_t i = 0; i < n_r; ++i) {
        out.node_voltage.emplace(pc.r_nodes[i], detail::slice_resource(out.report.v_r, i, h));
        out.node_current.emplace(pc.r_nodes[i], detail::slice_resource(out.report.i_r, i, h));
    }
    // recover eliminated node voltages per harmonic
    if (!pc.eliminated.empty()) {
        std::map<std::string, SpectralVector> rec;
        for (int n : pc.eliminated) rec.emplace(pc.topo.nodes[n], SpectralVector(h, 3));
        for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
            VectorXcd v_ret(3 * pc.retained.size());
            for (std::size_t i = 0; i < n_s + n_r; ++i) {
                const std::string& name =
                    i < n_s ? pc.s_nodes[i] : pc.r_nodes[i - n_s];
                const SpectralVector& v = out.node_voltage.at(name);
                for (int p = 0; p < 3; ++p) v_ret(3 * i + p) = v(hh, p);
            }
            const VectorXcd v_elim = pc.kron.at(hh).recover * v_ret;
            for (std::size_t e = 0; e < pc.eliminated.size(); ++e) {
                SpectralVector& dst = rec.at(pc.topo.nodes[pc.eliminated[e]]);
                for (int p = 0; p < 3; ++p) dst(hh, p) = v_elim(3 * e + p);
            }
        }
        for (auto& [name, v] : rec) out.node_voltage.emplace(name, std::move(v));
    }
    out.mismatch = residual_mismatch(pc.sys, out.report.i_s, out.report.v_r);
    return out;
}

}  // namespace hpfx

#pragma once

// Desk-scale time-domain simulator of the interconnected grid and CIDER
// closed loops; the validation oracle for the harmonic-domain solver.
//
// The system is assembled in descriptor form M u' = A(t) u + b(t) with the
// same component models and parameters as the harmonic-domain build. Rows
// with zero mass are algebraic: node balances at capacitance-free nodes, the
// grid-forming PCC relation, and the PQ current references. The reference
// rows carry the one nonlinearity (1/v_D); each implicit step re-freezes it
// from the current iterate until the step converges.
//
// Nodes touched by line shunt capacitance integrate their voltage; all others
// are solved algebraically. A grid-forming unit needs damping_r_ohm > 0 so
// its output current is well defined from the PCC relation.

#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hpfx/pipeline.hpp"
#include "hpfx/studycase.hpp"

namespace hpfx {

struct TdsConfig {
    int samples_per_period = 2048;
    int settle_periods = 60;
    int capture_periods = 4;
    bool rk4 = false;
    double settle_rms_tol = 1e-9;

    static TdsConfig from(const TdsFileConfig& f) {
        TdsConfig c;
        if (f.samples_per_period < 512)
            throw ConfigError("tds: need at least 512 samples per period");
        if (f.capture_periods < 1) throw ConfigError("tds: capture_periods must be >= 1");
        c.samples_per_period = f.samples_per_period;
        c.settle_periods = f.settle_periods;
        c.capture_periods = f.capture_periods;
        if (f.integrator == "rk4")
            c.rk4 = true;
        else if (f.integrator != "trapezoidal")
            throw ConfigError("tds: unknown integrator '" + f.integrator + "'");
        return c;
    }
};

struct TdsResult {
    bool settled = false;
    bool unstable = false;
    int periods_run = 0;
    std::map<std::string, SpectralVector> node_voltage;
    std::map<std::string, SpectralVector> node_current;  // resource nodes
    double energy_defect_pu = 0.0;
    // capture buffer: one row per sample, columns = recorded channels
    std::vector<std::string> channel_names;
    Eigen::MatrixXd capture;  // (capture_periods*spp) x channels
    double dt = 0.0;
};

namespace tdsd {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

struct FdUnit {
    int node = 0;
    Fd1Params p;
    double p_w = 0.0, q_var = 0.0;
    int i_f = 0, x_c = 0, i_star = 0;  // slice offsets
    Eigen::MatrixXd gi;
};

struct FmUnit {
    int node = 0;
    Fm1Params p;
    double v_set = 0.0;
    int i_f = 0, v_c = 0, x_v = 0, x_c = 0, i_out = 0;
    Eigen::MatrixXd gi;
};

struct TeUnit {
    int node = 0;
    double r = 0.0, l = 0.0;
    SpectralVector emf;  // voltage spectrum
    int i = 0;
};

struct NeUnit {
    int node = 0;
    bool has_y = false;
    double r = 0.0, l = 0.0;
    SpectralVector src;  // current spectrum
    int i_y = 0;         // valid when has_y
};

struct BranchSlot {
    const Branch* br;
    MatrixXd l, r;  // series phase matrices
    int i = 0;
};

struct LoadSlot {
    const PassiveLoad* ld;
    int i = 0;
};

struct System {
    const StudyCase* sc = nullptr;
    GridTopology topo;
    double f1 = 50.0;
    int dim = 0;
    MatrixXd mass;             // constant
    std::vector<int> v_node;   // slice offset of each node's voltage
    std::vector<bool> v_differential;
    std::vector<MatrixXd> c_node;  // per-node shunt capacitance
    std::vector<BranchSlot> branches;
    std::vector<LoadSlot> loads;
    std::vector<TeUnit> tes;
    std::vector<NeUnit> nes;
    std::vector<FdUnit> fds;
    std::vector<FmUnit> fms;
    double vd_floor = 1.0;

    int alloc(int n, int& cursor) {
        const int at = cursor;
        cursor += n;
        return at;
    }
};

inline System build_system(const StudyCase& sc) {
    System s;
    s.sc = &sc;
    s.topo = build_topology(sc);
    s.f1 = sc.spectrum.f1;
    s.vd_floor = 0.2 * kDqOfPhaseRms * sc.bases.voltage_v;
    const int n_nodes = static_cast<int>(s.topo.nodes.size());

    // node shunt capacitance from the pi-model halves
    s.c_node.assign(n_nodes, MatrixXd::Zero(3, 3));
    for (const auto& br : s.topo.branches) {
        if (!s.topo.include_line_shunts) break;
        const double km = br.length_m / 1000.0;
        const MatrixXd c_half =
            sequence_to_phase_matrix(Complex(br.line.c0_nf_per_km, 0.0),
                                     Complex(br.line.c1_nf_per_km, 0.0),
                                     Complex(br.line.c1_nf_per_km, 0.0))
                .real() *
            (1e-9 * km / 2.0);
        s.c_node[br.from] += c_half;
        s.c_node[br.to] += c_half;
    }

    int cursor = 0;
    for (const auto& br : s.topo.branches) {
        BranchSlot slot;
        slot.br = &br;
        const MatrixXcd z50 = br.series_impedance(s.f1);
        slot.r = br.series_impedance(0.0).real();
        slot.l = (z50.imag() / (2.0 * kPi * s.f1));
        slot.i = s.alloc(3, cursor);
        s.branches.push_back(std::move(slot));
    }
    for (const auto& ld : s.topo.loads) s.loads.push_back({&ld, s.alloc(3, cursor)});

    for (const auto& res : sc.resources) {
        if (const auto* te = std::get_if<TeSourceSpec>(&res)) {
            TeUnit u;
            u.node = s.topo.node_index(te->node);
            u.r = te->r_ohm();
            u.l = te->l_h(s.f1);
            u.emf = source_spectrum(te->harmonics, te->v_nominal_v, sc.spectrum);
            u.i = s.alloc(3, cursor);
            s.tes.push_back(std::move(u));
        } else if (const auto* ne = std::get_if<NeSourceSpec>(&res)) {
            NeUnit u;
            u.node = s.topo.node_index(ne->node);
            u.has_y = (ne->y_r_ohm != 0.0 || ne->y_l_h != 0.0);
            u.r = ne->y_r_ohm;
            u.l = ne->y_l_h;
            u.src = source_spectrum(ne->harmonics, 1.0, sc.spectrum);
            if (u.has_y) u.i_y = s.alloc(3, cursor);
            s.nes.push_back(std::move(u));
        } else if (const auto* fd = std::get_if<FollowingSpec>(&res)) {
            FdUnit u;
            u.node = s.topo.node_index(fd->node);
            u.p = fd->params;
            u.p_w = fd->p_w;
            u.q_var = fd->q_var;
            u.gi = detail::interface_matrix(fd->params.interface);
            u.i_f = s.alloc(3, cursor);
            u.x_c = s.alloc(2, cursor);
            s.fds.push_back(std::move(u));
        } else if (const auto* fm = std::get_if<FormingSpec>(&res)) {
            if (fm->params.damping_r_ohm <= 0.0)
                throw ConfigError("tds: FM-1 needs damping_r_ohm > 0");
            FmUnit u;
            u.node = s.topo.node_index(fm->node);
            u.p = fm->params;
            u.v_set = kDqOfPhaseRms * fm->v_set_v;
            u.gi = detail::interface_matrix(fm->params.interface);
            u.i_f = s.alloc(3, cursor);
            u.v_c = s.alloc(3, cursor);
            u.x_v = s.alloc(2, cursor);
            u.x_c = s.alloc(2, cursor);
            s.fms.push_back(std::move(u));
        }
    }

    s.v_node.resize(n_nodes);
    s.v_differential.resize(n_nodes);
    for (int n = 0; n < n_nodes; ++n) {
        s.v_node[n] = s.alloc(3, cursor);
        s.v_differential[n] = s.c_node[n].cwiseAbs().maxCoeff() > 0.0;
    }
    for (auto& fm : s.fms) fm.i_out = s.alloc(3, cursor);
    for (auto& fd : s.fds) fd.i_star = s.alloc(2, cursor);
    s.dim = cursor;

    s.mass = MatrixXd::Zero(s.dim, s.dim);
    for (const auto& b : s.branches) s.mass.block(b.i, b.i, 3, 3) = b.l;
    for (const auto& l : s.loads)
        s.mass.block(l.i, l.i, 3, 3) = l.ld->l_h.asDiagonal();
    for (const auto& te : s.tes) s.mass.block(te.i, te.i, 3, 3) = te.l * MatrixXd::Identity(3, 3);
    for (const auto& ne : s.nes)
        if (ne.has_y) s.mass.block(ne.i_y, ne.i_y, 3, 3) = ne.l * MatrixXd::Identity(3, 3);
    for (const auto& fd : s.fds) {
        s.mass.block(fd.i_f, fd.i_f, 3, 3) = fd.p.filter_l_h * MatrixXd::Identity(3, 3);
        s.mass.block(fd.x_c, fd.x_c, 2, 2) = MatrixXd::Identity(2, 2);
    }
    for (const auto& fm : s.fms) {
        s.mass.block(fm.i_f, fm.i_f, 3, 3) = fm.p.filter_l_h * MatrixXd::Identity(3, 3);
        s.mass.block(fm.v_c, fm.v_c, 3, 3) = fm.p.filter_c_f * MatrixXd::Identity(3, 3);
        s.mass.block(fm.x_v, fm.x_v, 2, 2) = MatrixXd::Identity(2, 2);
        s.mass.block(fm.x_c, fm.x_c, 2, 2) = MatrixXd::Identity(2, 2);
    }
    for (int n = 0; n < n_nodes; ++n)
        if (s.v_differential[n]) s.mass.block(s.v_node[n], s.v_node[n], 3, 3) = s.c_node[n];
    return s;
}

// Linear part at time t. The PQ reference rows read `lag` (the current
// iterate) to freeze 1/v_D; everything else is exact.
inline void assemble(const System& s, double t, const VectorXd& lag, MatrixXd& a, VectorXd& b) {
    a.setZero();
    b.setZero();
    const MatrixXd park = park_abc_to_dq(2.0 * kPi * s.f1 * t);
    const MatrixXd ipark = park.transpose();
    const MatrixXd i3 = MatrixXd::Identity(3, 3);

    for (const auto& br : s.branches) {
        a.block(br.i, s.v_node[br.br->from], 3, 3) += i3;
        a.block(br.i, s.v_node[br.br->to], 3, 3) -= i3;
        a.block(br.i, br.i, 3, 3) -= br.r;
    }
    for (const auto& ld : s.loads) {
        a.block(ld.i, s.v_node[ld.ld->node], 3, 3) += i3;
        a.block(ld.i, ld.i, 3, 3) -= ld.ld->r_ohm.asDiagonal();
    }
    for (const auto& te : s.tes) {
        b.segment(te.i, 3) = te.emf.time_value(t).real();
        a.block(te.i, te.i, 3, 3) -= te.r * i3;
        a.block(te.i, s.v_node[te.node], 3, 3) -= i3;
    }
    for (const auto& ne : s.nes)
        if (ne.has_y) {
            a.block(ne.i_y, s.v_node[ne.node], 3, 3) += i3;
            a.block(ne.i_y, ne.i_y, 3, 3) -= ne.r * i3;
        }
    for (const auto& fd : s.fds) {
        const double il = 1.0 / fd.p.filter_l_h;
        // L i_f' = T_pi|k (Kp (i* - park i_f) + Ki x_c) - R i_f - gi v_n
        a.block(fd.i_f, fd.i_star, 3, 2) += il * fd.p.kp_a * ipark;
        a.block(fd.i_f, fd.i_f, 3, 3) +=
            -il * fd.p.kp_a * ipark * park - (fd.p.filter_r_ohm * il) * i3;
        a.block(fd.i_f, fd.x_c, 3, 2) += il * fd.p.ki_a * ipark;
        a.block(fd.i_f, s.v_node[fd.node], 3, 3) -= il * fd.gi;
        // x_c' = i* - park i_f
        a.block(fd.x_c, fd.i_star, 2, 2) += MatrixXd::Identity(2, 2);
        a.block(fd.x_c, fd.i_f, 2, 3) -= park;
        // i* definition (algebraic, frozen v_D)
        Eigen::Vector2d vdq = park * lag.segment(s.v_node[fd.node], 3);
        double vd = vdq(0);
        if (std::abs(vd) < s.vd_floor) vd = vd >= 0.0 ? s.vd_floor : -s.vd_floor;
        a.block(fd.i_star, fd.i_star, 2, 2) -= MatrixXd::Identity(2, 2);
        b(fd.i_star + 0) = fd.p_w / vd;
        b(fd.i_star + 1) = -fd.q_var / vd;
    }
    for (const auto& fm : s.fms) {
        const double il = 1.0 / fm.p.filter_l_h;
        const double rd = fm.p.damping_r_ohm;
        // v_pcc = v_c + R_d i_f - R_d gi i_out as row coefficients
        auto stamp_vpcc = [&](int row, const MatrixXd& coef, int rows) {
            a.block(row, fm.v_c, rows, 3) += coef;
            a.block(row, fm.i_f, rows, 3) += rd * coef;
            a.block(row, fm.i_out, rows, 3) += -rd * coef * fm.gi;
        };
        // i* = Kpv (v*_dq - park v_pcc) + Kiv x_v; v_act = T (Kpc (i* - park i_f) + Kic x_c)
        // L i_f' = v_act - R_f i_f - v_pcc
        a.block(fm.i_f, fm.i_f, 3, 3) -= fm.p.filter_r_ohm * il * i3;
        stamp_vpcc(fm.i_f, -il * i3, 3);
        {
            const MatrixXd tk = il * ipark;  // actuator path into the i_f rows
            // + T Kpc Kpv v* (source term)
            b.segment(fm.i_f, 3) +=
                tk * fm.p.kp_c * fm.p.kp_v * Eigen::Vector2d(fm.v_set, 0.0);
            // - T Kpc Kpv park v_pcc
            stamp_vpcc(fm.i_f, -(tk * fm.p.kp_c * fm.p.kp_v) * park, 3);
            // + T Kpc Kiv x_v - T Kpc park i_f + T Kic x_c
            a.block(fm.i_f, fm.x_v, 3, 2) += tk * fm.p.kp_c * fm.p.ki_v;
            a.block(fm.i_f, fm.i_f, 3, 3) -= tk * fm.p.kp_c * park;
            a.block(fm.i_f, fm.x_c, 3, 2) += tk * fm.p.ki_c;
        }
        // C v_c' = i_f - gi i_out
        a.block(fm.v_c, fm.i_f, 3, 3) += i3;
        a.block(fm.v_c, fm.i_out, 3, 3) -= fm.gi;
        // x_v' = v* - park v_pcc
        b.segment(fm.x_v, 2) += Eigen::Vector2d(fm.v_set, 0.0);
        stamp_vpcc(fm.x_v, -park, 2);
        // x_c' = i* - park i_f = Kpv v* - Kpv park v_pcc + Kiv x_v - park i_f
        b.segment(fm.x_c, 2) += fm.p.kp_v * Eigen::Vector2d(fm.v_set, 0.0);
        stamp_vpcc(fm.x_c, -fm.p.kp_v * park, 2);
        a.block(fm.x_c, fm.x_v, 2, 2) += fm.p.ki_v * MatrixXd::Identity(2, 2);
        a.block(fm.x_c, fm.i_f, 2, 3) -= park;
        // PCC relation: v_n = gi v_pcc, written on the i_out rows (the node
        // rows carry the KCL; see below)
        a.block(fm.i_out, s.v_node[fm.node], 3, 3) -= i3;
        stamp_vpcc(fm.i_out, fm.gi, 3);
    }
    // node balances
    for (int n = 0; n < static_cast<int>(s.topo.nodes.size()); ++n) {
        const int row = s.v_node[n];
        for (const auto& br : s.branches) {
            if (br.br->to == n) a.block(row, br.i, 3, 3) += i3;
            if (br.br->from == n) a.block(row, br.i, 3, 3) -= i3;
        }
        for (const auto& ld : s.loads)
            if (ld.ld->node == n) a.block(row, ld.i, 3, 3) -= i3;
        for (const auto& te : s.tes)
            if (te.node == n) a.block(row, te.i, 3, 3) += i3;
        for (const auto& ne : s.nes)
            if (ne.node == n) {
                b.segment(row, 3) += ne.src.time_value(t).real();
                if (ne.has_y) a.block(row, ne.i_y, 3, 3) -= i3;
            }
        for (const auto& fd : s.fds)
            if (fd.node == n) a.block(row, fd.i_f, 3, 3) += fd.gi;
        for (const auto& fm : s.fms)
            if (fm.node == n) a.block(row, fm.i_out, 3, 3) += i3;
    }
}

inline VectorXd initial_state(const System& s) {
    VectorXd u = VectorXd::Zero(s.dim);
    const double v_amp = std::sqrt(2.0) * s.sc->bases.voltage_v;
    auto balanced = [&](double t) {
        Vector3d v;
        for (int p = 0; p < 3; ++p) v(p) = v_amp * std::cos(-2.0 * kPi * p / 3.0);
        (void)t;
        return v;
    };
    for (int n = 0; n < static_cast<int>(s.topo.nodes.size()); ++n)
        u.segment(s.v_node[n], 3) = balanced(0.0);
    for (const auto& fm : s.fms) u.segment(fm.v_c, 3) = balanced(0.0);
    for (const auto& fd : s.fds) {
        u(fd.i_star + 0) = fd.p_w / (kDqOfPhaseRms * s.sc->bases.voltage_v);
        u(fd.i_star + 1) = -fd.q_var / (kDqOfPhaseRms * s.sc->bases.voltage_v);
    }
    return u;
}

// One trapezoidal step with frozen-coefficient iteration on the references.
struct Stepper {
    const System& s;
    double dt;
    MatrixXd a_now, a_next;
    VectorXd b_now, b_next;
    MatrixXd lhs;
    std::vector<char> is_diff;

    explicit Stepper(const System& sys, double step)
        : s(sys), dt(step), a_now(sys.dim, sys.dim), a_next(sys.dim, sys.dim),
          b_now(sys.dim), b_next(sys.dim), lhs(sys.dim, sys.dim) {
        is_diff.assign(sys.dim, 0);
        for (int i = 0; i < sys.dim; ++i)
            if (s.mass.row(i).cwiseAbs().maxCoeff() > 0.0) is_diff[i] = 1;
    }

    bool advance(double t, VectorXd& u) {
        assemble(s, t, u, a_now, b_now);
        const VectorXd f_now = a_now * u + b_now;
        VectorXd lag = u;
        VectorXd next = u;
        for (int it = 0; it < 12; ++it) {
            assemble(s, t + dt, lag, a_next, b_next);
            lhs = -0.5 * dt * a_next;
            lhs += s.mass;
            VectorXd rhs = s.mass * u + 0.5 * dt * (f_now + b_next);
            for (int i = 0; i < s.dim; ++i)
                if (!is_diff[i]) {
                    lhs.row(i) = -a_next.row(i);
                    rhs(i) = b_next(i);
                }
            next = lhs.partialPivLu().solve(rhs);
            if (!next.allFinite()) return false;
            const double delta = (next - lag).cwiseAbs().maxCoeff();
            lag = next;
            if (delta < 1e-9 * std::max(1.0, next.cwiseAbs().maxCoeff())) break;
        }
        u = lag;
        return true;
    }
};

// Explicit RK4 over the differential states with per-stage algebraic solves;
// usable on mildly stiff cases.
struct Rk4Stepper {
    const System& s;
    double dt;
    MatrixXd a_t;
    VectorXd b_t;
    std::vector<int> diff_rows, alg_rows;
    Eigen::PartialPivLU<MatrixXd> mass_lu;

    explicit Rk4Stepper(const System& sys, double step)
        : s(sys), dt(step), a_t(sys.dim, sys.dim), b_t(sys.dim) {
        for (int i = 0; i < sys.dim; ++i) {
            if (s.mass.row(i).cwiseAbs().maxCoeff() > 0.0)
                diff_rows.push_back(i);
            else
                alg_rows.push_back(i);
        }
        MatrixXd m_dd(diff_rows.size(), diff_rows.size());
        for (std::size_t i = 0; i < diff_rows.size(); ++i)
            for (std::size_t j = 0; j < diff_rows.size(); ++j)
                m_dd(i, j) = s.mass(diff_rows[i], diff_rows[j]);
        mass_lu.compute(m_dd);
    }

    // complete u at stage time: solve algebraic rows for the algebraic vars
    bool complete(double t, VectorXd& u) {
        const auto na = static_cast<Eigen::Index>(alg_rows.size());
        if (na == 0) return true;
        VectorXd lag = u;
        for (int it = 0; it < 12; ++it) {
            assemble(s, t, lag, a_t, b_t);
            MatrixXd aa(na, na);
            VectorXd rr(na);
            for (Eigen::Index i = 0; i < na; ++i) {
                double acc = b_t(alg_rows[i]);
                for (std::size_t j = 0; j < diff_rows.size(); ++j)
                    acc += a_t(alg_rows[i], diff_rows[j]) * u(diff_rows[j]);
                rr(i) = -acc;
                for (Eigen::Index j = 0; j < na; ++j)
                    aa(i, j) = a_t(alg_rows[i], alg_rows[j]);
            }
            const VectorXd q = aa.partialPivLu().solve(rr);
            if (!q.allFinite()) return false;
            VectorXd next = u;
            for (Eigen::Index i = 0; i < na; ++i) next(alg_rows[i]) = q(i);
            const double delta = (next - lag).cwiseAbs().maxCoeff();
            lag = next;
            if (delta < 1e-10 * std::max(1.0, lag.cwiseAbs().maxCoeff())) break;
        }
        u = lag;
        return true;
    }

    bool derivative(double t, const VectorXd& u, VectorXd& du) {
        assemble(s, t, u, a_t, b_t);
        const VectorXd f = a_t * u + b_t;
        VectorXd fd(diff_rows.size());
        for (std::size_t i = 0; i < diff_rows.size(); ++i) fd(i) = f(diff_rows[i]);
        const VectorXd zd = mass_lu.solve(fd);
        du = VectorXd::Zero(s.dim);
        for (std::size_t i = 0; i < diff_rows.size(); ++i) du(diff_rows[i]) = zd(i);
        return du.allFinite();
    }

    bool advance(double t, VectorXd& u) {
        VectorXd k1, k2, k3, k4;
        VectorXd w = u;
        if (!complete(t, w) || !derivative(t, w, k1)) return false;
        VectorXd u2 = w + 0.5 * dt * k1;
        if (!complete(t + 0.5 * dt, u2) || !derivative(t + 0.5 * dt, u2, k2)) return false;
        VectorXd u3 = w + 0.5 * dt * k2;
        if (!complete(t + 0.5 * dt, u3) || !derivative(t + 0.5 * dt, u3, k3)) return false;
        VectorXd u4 = w + dt * k3;
        if (!complete(t + dt, u4) || !derivative(t + dt, u4, k4)) return false;
        u = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        return complete(t + dt, u);
    }
};

}  // namespace tdsd

// Synchronous DFT of a capture window spanning an integer number of
// fundamental periods; leakage-free at the harmonic frequencies.
inline SpectralVector dft_spectrum(const Eigen::MatrixXd& window, int first_col, int channels,
                                   int samples_per_period, const HarmonicSet& h) {
    if (window.rows() % samples_per_period != 0)
        throw ConfigError("dft_spectrum: window must cover whole periods");
    SpectralVector out(h, channels);
    const auto n = static_cast<double>(window.rows());
    for (int c = 0; c < channels; ++c) {
        for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
            Complex acc(0.0, 0.0);
            for (Eigen::Index k = 0; k < window.rows(); ++k) {
                const double angle =
                    -2.0 * kPi * hh * static_cast<double>(k) / samples_per_period;
                acc += window(k, first_col + c) * std::exp(Complex(0.0, angle));
            }
            out(hh, c) = acc / n;
        }
    }
    return out;
}

inline TdsResult simulate(const StudyCase& sc, const TdsConfig& cfg) {
    using namespace tdsd;
    const System sys = build_system(sc);
    const double T = 1.0 / sys.f1;
    const double dt = T / cfg.samples_per_period;

    VectorXd u = initial_state(sys);
    TdsResult res;
    res.dt = dt;

    Stepper trap(sys, dt);
    Rk4Stepper rk4(sys, dt);
    const double guard = 1e7 * std::max(1.0, u.cwiseAbs().maxCoeff());

    auto run_period = [&](int period, VectorXd& rms) -> bool {
        rms.setZero();
        for (int k = 0; k < cfg.samples_per_period; ++k) {
            const double t = (period * static_cast<double>(cfg.samples_per_period) + k) * dt;
            const bool ok = cfg.rk4 ? rk4.advance(t, u) : trap.advance(t, u);
            if (!ok || u.cwiseAbs().maxCoeff() > guard) return false;
            rms += u.cwiseAbs2();
        }
        rms = (rms / cfg.samples_per_period).cwiseSqrt();
        return true;
    };

    VectorXd rms_prev = VectorXd::Zero(sys.dim), rms(sys.dim);
    int period = 0;
    for (; period < cfg.settle_periods; ++period) {
        if (!run_period(period, rms)) {
            res.unstable = true;
            res.periods_run = period;
            return res;
        }
        const double scale = std::max(1.0, rms.maxCoeff());
        if (period > 2 && (rms - rms_prev).cwiseAbs().maxCoeff() < cfg.settle_rms_tol * scale) {
            res.settled = true;
            ++period;
            break;
        }
        rms_prev = rms;
    }
    if (!res.settled && period == cfg.settle_periods) res.settled = false;

    // capture channels: node voltages, then one injection per resource node
    const int n_nodes = static_cast<int>(sys.topo.nodes.size());
    std::vector<std::pair<std::string, std::function<Vector3d(const VectorXd&, double)>>> chans;
    for (int n = 0; n < n_nodes; ++n) {
        const int off = sys.v_node[n];
        chans.emplace_back("v:" + sys.topo.nodes[n], [off](const VectorXd& x, double) {
            return Vector3d(x.segment(off, 3));
        });
    }
    for (const auto& te : sys.tes)
        chans.emplace_back("i:" + sys.topo.nodes[te.node],
                           [&te](const VectorXd& x, double) {
                               return Vector3d(x.segment(te.i, 3));
                           });
    for (const auto& ne : sys.nes)
        chans.emplace_back("i:" + sys.topo.nodes[ne.node], [&ne](const VectorXd& x, double t) {
            Vector3d inj = ne.src.time_value(t).real();
            if (ne.has_y) inj -= Vector3d(x.segment(ne.i_y, 3));
            return inj;
        });
    for (const auto& fd : sys.fds)
        chans.emplace_back("i:" + sys.topo.nodes[fd.node], [&fd](const VectorXd& x, double) {
            return Vector3d(fd.gi * x.segment(fd.i_f, 3));
        });
    for (const auto& fm : sys.fms)
        chans.emplace_back("i:" + sys.topo.nodes[fm.node], [&fm](const VectorXd& x, double) {
            return Vector3d(x.segment(fm.i_out, 3));
        });

    const int n_chan = static_cast<int>(chans.size());
    res.capture.resize(cfg.capture_periods * cfg.samples_per_period, 3 * n_chan);
    for (const auto& [name, fn] : chans) res.channel_names.push_back(name);

    double p_balance = 0.0, p_loss = 0.0, p_load = 0.0;
    Eigen::Index row = 0;
    for (int cp = 0; cp < cfg.capture_periods; ++cp) {
        for (int k = 0; k < cfg.samples_per_period; ++k, ++row) {
            const double t = (period * static_cast<double>(cfg.samples_per_period) +
                              cp * static_cast<double>(cfg.samples_per_period) + k) *
                             dt;
            const bool ok = cfg.rk4 ? rk4.advance(t, u) : trap.advance(t, u);
            if (!ok || u.cwiseAbs().maxCoeff() > guard) {
                res.unstable = true;
                res.periods_run = period + cp;
                return res;
            }
            for (int c = 0; c < n_chan; ++c)
                res.capture.block(row, 3 * c, 1, 3) = chans[c].second(u, t + dt).transpose();
            // instantaneous power audit
            for (const auto& te : sys.tes)
                p_balance += u.segment(sys.v_node[te.node], 3).dot(u.segment(te.i, 3));
            for (const auto& ne : sys.nes) {
                Vector3d inj = ne.src.time_value(t + dt).real();
                if (ne.has_y) inj -= Vector3d(u.segment(ne.i_y, 3));
                p_balance += u.segment(sys.v_node[ne.node], 3).dot(inj);
            }
            for (const auto& fd : sys.fds)
                p_balance += u.segment(sys.v_node[fd.node], 3)
                                 .dot(fd.gi * u.segment(fd.i_f, 3));
            for (const auto& fm : sys.fms)
                p_balance += u.segment(sys.v_node[fm.node], 3).dot(u.segment(fm.i_out, 3));
            for (const auto& ld : sys.loads)
                p_load += u.segment(sys.v_node[ld.ld->node], 3).dot(u.segment(ld.i, 3));
            for (const auto& br : sys.branches) {
                const Vector3d ib = u.segment(br.i, 3);
                p_loss += ib.dot(br.r * ib);
            }
        }
    }
    res.periods_run = period + cfg.capture_periods;
    const double nsamp = static_cast<double>(res.capture.rows());
    res.energy_defect_pu =
        std::abs(p_balance - p_load - p_loss) / nsamp / sc.bases.power_w;

    // spectra
    for (int c = 0; c < n_chan; ++c) {
        const SpectralVector spec =
            dft_spectrum(res.capture, 3 * c, 3, cfg.samples_per_period, sc.spectrum);
        const std::string& name = chans[c].first;
        if (name.rfind("v:", 0) == 0)
            res.node_voltage.emplace(name.substr(2), spec);
        else
            res.node_current.emplace(name.substr(2), spec);
    }
    return res;
}

// ---------------------------------------------------------------------------
// KPI comparison
// ---------------------------------------------------------------------------

struct KpiTable {
    std::vector<std::string> nodes;
    int h_max = 0;
    Eigen::MatrixXd e_abs;  // node x (h = 0..h_max), per-unit magnitudes
    Eigen::MatrixXd e_arg;  // wrapped phase errors, rad
    double max_e_abs = 0.0;
    double max_e_arg = 0.0;
};

struct KpiResult {
    KpiTable voltage;
    KpiTable current;
};

namespace detail {

inline double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a < -kPi) a += 2.0 * kPi;
    return std::abs(a);
}

// Phase errors are reported only where the coefficient is observable; below
// the floor the angle of a near-zero phasor is numerical noise.
inline KpiTable kpi_table(const std::map<std::string, SpectralVector>& a,
                          const std::map<std::string, SpectralVector>& b, double base_rms,
                          double phase_floor_pu) {
    KpiTable t;
    if (a.empty()) return t;
    const double to_pu = std::sqrt(2.0) / base_rms;
    int h_max = 0;
    for (const auto& [name, spec] : a)
        if (b.count(name)) {
            t.nodes.push_back(name);
            h_max = spec.harmonics().h_max;
            if (spec.harmonics() != b.at(name).harmonics())
                throw ComparisonError("kpi: harmonic sets differ for node " + name);
        }
    t.h_max = h_max;
    t.e_abs = Eigen::MatrixXd::Zero(t.nodes.size(), h_max + 1);
    t.e_arg = Eigen::MatrixXd::Zero(t.nodes.size(), h_max + 1);
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        const SpectralVector& x = a.at(t.nodes[n]);
        const SpectralVector& y = b.at(t.nodes[n]);
        for (int hh = 0; hh <= h_max; ++hh) {
            double ea = 0.0, eg = 0.0;
            for (int p = 0; p < x.channels(); ++p) {
                const Complex xa = x(hh, p), yb = y(hh, p);
                ea = std::max(ea, std::abs(std::abs(xa) - std::abs(yb)) * to_pu);
                const double mag = std::max(std::abs(xa), std::abs(yb)) * to_pu;
                if (mag > phase_floor_pu)
                    eg = std::max(eg, wrap_angle(std::arg(xa) - std::arg(yb)));
            }
            t.e_abs(n, hh) = ea;
            t.e_arg(n, hh) = eg;
            t.max_e_abs = std::max(t.max_e_abs, ea);
            t.max_e_arg = std::max(t.max_e_arg, eg);
        }
    }
    return t;
}

}  // namespace detail

inline KpiResult compare(const std::map<std::string, SpectralVector>& hpf_v,
                         const std::map<std::string, SpectralVector>& hpf_i,
                         const TdsResult& tds, const Bases& bases,
                         double phase_floor_pu = 1e-6) {
    KpiResult out;
    out.voltage = detail::kpi_table(hpf_v, tds.node_voltage, bases.voltage_v, phase_floor_pu);
    out.current = detail::kpi_table(hpf_i, tds.node_current, bases.current_a(), phase_floor_pu);
    return out;
}

}  // namespace hpfx

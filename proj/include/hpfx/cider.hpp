#pragma once

// Converter-interfaced resource models in the harmonic domain.
//
// Two reference designs are shipped; their RLC and gain values live in the
// study-case file, not in the paper:
//   FM-1  grid-forming: LC output filter with damped capacitor branch,
//         cascaded voltage/current PI in the synchronous DQ frame.
//   FD-1  grid-following: L output filter, current PI in DQ, PQ reference
//         computed from the direct-axis voltage by a truncated 1/v_D series.
//
// Non-converter harmonic sources (Thevenin / Norton equivalents) are packaged
// behind the same grid-response interface so they enter the power-flow
// uniformly. Injected current follows the nodal convention of I = Y V
// (positive into the grid).

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hpfx/frames.hpp"
#include "hpfx/ltp.hpp"
#include "hpfx/spectral.hpp"

namespace hpfx {

enum class CiderKind { Forming, Following };
enum class GridInterface { ThreeLeg, FourLeg };

// ---------------------------------------------------------------------------
// Reference calculation
// ---------------------------------------------------------------------------

// Grid-forming Vf reference: DQ-frame voltage setpoint, direct component at
// harmonic zero of the control frame (the fundamental in the grid frame).
// v_sigma is the phase-RMS setpoint; f_sigma must equal the fundamental.
inline SpectralVector forming_reference(double v_sigma, double f_sigma, const HarmonicSet& h) {
    if (v_sigma < 0.0) throw ValidationError("forming_reference: negative voltage setpoint");
    if (std::abs(f_sigma - h.f1) > 1e-9 * h.f1)
        throw ValidationError("forming_reference: setpoint frequency must equal f1");
    SpectralVector w(h, 2);
    w(0, 0) = kDqOfPhaseRms * v_sigma;
    return w;
}

// PQ reference of a grid-following CIDER. The current reference in DQ is
// i* = (1/v_D) [P; -Q]; 1/v_D is expanded about the direct-axis operating
// coefficient v_D0 as (1/v_D0)(1 - xi [+ xi^2]) with xi = (v_D - v_D0)/v_D0.
struct PqReference {
    double p_w = 0.0;
    double q_var = 0.0;
    int truncation_order = 1;     // 1 or 2
    double v_d0_floor = 1e-6;     // in volts; callers scale by the p.u. base

    void validate() const {
        if (truncation_order != 1 && truncation_order != 2)
            throw ValidationError("PqReference: truncation order must be 1 or 2");
    }
};

namespace detail {

// Spectrum of the truncated 1/v_D series (Psi), plus its complex Jacobian
// w.r.t. the direct-axis voltage coefficients. All maps are holomorphic in
// the coefficients, so the Jacobian is an ordinary complex matrix.
struct PsiSeries {
    VectorXcd psi;   // |H| coefficients
    MatrixXcd jac;   // |H| x |H|, d psi / d v_D
};

inline PsiSeries psi_series(const VectorXcd& v_d, const HarmonicSet& h, int order,
                            double v_d0_floor) {
    const int nh = h.size();
    const int i0 = h.index(0);
    const Complex v0 = v_d(i0);
    if (std::abs(v0) < v_d0_floor)
        throw DegenerateOperatingPointError(
            "PQ reference: |v_D0| below the operating-point floor");

    // xi_h = v_h / v0 for h != 0, xi_0 = 0
    VectorXcd xi = v_d / v0;
    xi(i0) = Complex(0.0, 0.0);
    MatrixXcd dxi = MatrixXcd::Zero(nh, nh);  // d xi / d v_D
    for (int k = 0; k < nh; ++k) {
        if (k == i0) continue;
        dxi(k, k) = 1.0 / v0;
        dxi(k, i0) = -v_d(k) / (v0 * v0);
    }

    // s = delta_0 - xi (+ xi * xi truncated to H)
    VectorXcd s = -xi;
    s(i0) += 1.0;
    MatrixXcd ds = -dxi;
    if (order == 2) {
        VectorXcd conv = VectorXcd::Zero(nh);
        MatrixXcd toep = MatrixXcd::Zero(nh, nh);  // (toep x)_h = sum xi_{h-k} x_k
        for (int hh = -h.h_max; hh <= h.h_max; ++hh)
            for (int kk = -h.h_max; kk <= h.h_max; ++kk) {
                if (!h.contains(hh - kk)) continue;
                conv(h.index(hh)) += xi(h.index(hh - kk)) * xi(h.index(kk));
                toep(h.index(hh), h.index(kk)) = xi(h.index(hh - kk));
            }
        s += conv;
        ds += 2.0 * toep * dxi;
    }

    PsiSeries out;
    out.psi = s / v0;
    out.jac = ds / v0;
    for (int k = 0; k < nh; ++k) out.jac(k, i0) -= s(k) / (v0 * v0);
    return out;
}

}  // namespace detail

// W_kappa spectrum of the PQ reference: D channel Psi*P, Q channel -Psi*Q.
// w_rho is the DQ-frame voltage spectrum (2 channels, harmonic-major).
inline SpectralVector following_reference(const PqReference& ref, const SpectralVector& w_rho) {
    ref.validate();
    if (w_rho.channels() != 2)
        throw IncompatibilityError("following_reference: expects a DQ spectrum (2 channels)");
    const HarmonicSet& h = w_rho.harmonics();
    VectorXcd v_d(h.size());
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) v_d(h.index(hh)) = w_rho(hh, 0);
    const auto series = detail::psi_series(v_d, h, ref.truncation_order, ref.v_d0_floor);
    SpectralVector w(h, 2);
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
        w(hh, 0) = series.psi(h.index(hh)) * ref.p_w;
        w(hh, 1) = -series.psi(h.index(hh)) * ref.q_var;
    }
    return w;
}

// d W_kappa / d W_rho, a (2|H|) x (2|H|) complex matrix in harmonic-major
// DQ layout. All quadrature-voltage columns are zero: the reference depends
// on the direct axis only.
inline MatrixXcd following_reference_jacobian(const PqReference& ref,
                                              const SpectralVector& w_rho) {
    ref.validate();
    if (w_rho.channels() != 2)
        throw IncompatibilityError("following_reference_jacobian: expects a DQ spectrum");
    const HarmonicSet& h = w_rho.harmonics();
    const int nh = h.size();
    VectorXcd v_d(nh);
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) v_d(h.index(hh)) = w_rho(hh, 0);
    const auto series = detail::psi_series(v_d, h, ref.truncation_order, ref.v_d0_floor);
    MatrixXcd jac = MatrixXcd::Zero(2 * nh, 2 * nh);
    for (int row = 0; row < nh; ++row)
        for (int col = 0; col < nh; ++col) {
            jac(2 * row + 0, 2 * col + 0) = series.jac(row, col) * ref.p_w;
            jac(2 * row + 1, 2 * col + 0) = -series.jac(row, col) * ref.q_var;
        }
    return jac;
}

// ---------------------------------------------------------------------------
// Reference hardware/control designs
// ---------------------------------------------------------------------------

struct Fd1Params {
    double filter_l_h = 2e-3;
    double filter_r_ohm = 0.05;
    double kp_a = 8.0;   // current PI, V per A
    double ki_a = 400.0;
    GridInterface interface = GridInterface::ThreeLeg;
};

struct Fm1Params {
    double filter_l_h = 1.2e-3;
    double filter_r_ohm = 0.04;
    double filter_c_f = 40e-6;
    double damping_r_ohm = 2.0;
    double kp_v = 0.5;    // voltage PI, A per V
    double ki_v = 120.0;
    double kp_c = 4.0;    // current PI, V per A
    double ki_c = 600.0;
    GridInterface interface = GridInterface::FourLeg;
};

namespace detail {

inline FourierBlocks constant_block(const Eigen::MatrixXd& m) {
    return {{0, m.cast<Complex>()}};
}

inline Eigen::MatrixXd interface_matrix(GridInterface gi) {
    return gi == GridInterface::ThreeLeg ? zero_sequence_projection()
                                         : Eigen::MatrixXd::Identity(3, 3);
}

}  // namespace detail

// FD-1 open-loop model. States: filter current i_f (abc). Inputs: actuator
// voltage (abc) and the measured DQ current. Disturbances: PCC voltage
// (abc, grid side) and the DQ current reference. Outputs: injected current
// (abc, grid side) and the actuator DQ voltage command.
inline std::pair<LtpStateSpace, FeedbackInterconnect> build_fd1(const Fd1Params& p) {
    using Eigen::MatrixXd;
    LtpStateSpace sys;
    sys.n_x = 5;      // filter current abc + PI integrator DQ
    sys.n_u = 3 + 2;  // u_pi actuator abc, u_kappa measured i_DQ
    sys.n_y = 3 + 2;  // y_pi = i_f abc, y_kappa = actuator command DQ
    sys.n_w = 3 + 2;  // w_pi = v_pcc abc, w_kappa = i*_DQ
    sys.n_y_pi = 3;
    sys.n_w_pi = 3;
    MatrixXd a = MatrixXd::Zero(5, 5);
    a.topLeftCorner(3, 3) = -(p.filter_r_ohm / p.filter_l_h) * MatrixXd::Identity(3, 3);
    MatrixXd b = MatrixXd::Zero(5, 5);
    b.topLeftCorner(3, 3) = (1.0 / p.filter_l_h) * MatrixXd::Identity(3, 3);
    b.bottomRightCorner(2, 2) = -MatrixXd::Identity(2, 2);  // integrator, -i_meas
    MatrixXd e = MatrixXd::Zero(5, 5);
    e.topLeftCorner(3, 3) = -(1.0 / p.filter_l_h) * MatrixXd::Identity(3, 3);
    e.bottomRightCorner(2, 2) = MatrixXd::Identity(2, 2);   // integrator, +i*
    MatrixXd c = MatrixXd::Zero(5, 5);
    c.topLeftCorner(3, 3) = MatrixXd::Identity(3, 3);       // y_pi = i_f
    c.bottomRightCorner(2, 2) = p.ki_a * MatrixXd::Identity(2, 2);
    MatrixXd d = MatrixXd::Zero(5, 5);
    d.bottomRightCorner(2, 2) = -p.kp_a * MatrixXd::Identity(2, 2);
    MatrixXd f = MatrixXd::Zero(5, 5);
    f.bottomRightCorner(2, 2) = p.kp_a * MatrixXd::Identity(2, 2);
    sys.a = detail::constant_block(a);
    sys.b = detail::constant_block(b);
    sys.c = detail::constant_block(c);
    sys.d = detail::constant_block(d);
    sys.e = detail::constant_block(e);
    sys.f = detail::constant_block(f);

    FeedbackInterconnect fb;
    // u = T(t) y: u_pi = T_pi|kappa y_kappa, u_kappa = T_kappa|pi y_pi.
    const FourierBlocks park = park_abc_to_dq_blocks();
    const FourierBlocks ipark = park_dq_to_abc_blocks();
    for (const auto& [k, blk] : ipark) {
        MatrixXcd t = MatrixXcd::Zero(5, 5);
        t.block(0, 3, 3, 2) = blk;
        fb.t[k] = t;
    }
    for (const auto& [k, blk] : park) {
        MatrixXcd t = fb.t.count(k) ? fb.t[k] : MatrixXcd::Zero(5, 5);
        t.block(3, 0, 2, 3) = blk;
        fb.t[k] = t;
    }
    const Eigen::MatrixXd gi = detail::interface_matrix(p.interface);
    fb.t_gamma_pi = detail::constant_block(gi);
    fb.t_pi_gamma = detail::constant_block(gi);
    // W_rho = T_kappa|pi T_pi|gamma w_gamma; the Park rows are zero-sum, so
    // the projection is absorbed exactly.
    fb.t_kappa_gamma = park;
    return {sys, fb};
}

// FM-1 open-loop model. States: filter current i_f (abc), capacitor voltage
// v_c (abc), voltage PI integrator (2), current PI integrator (2).
// w_pi is the grid current drawn from the converter node; y_pi is the PCC
// voltage (3) followed by the filter current (3) for the measurement path.
inline std::pair<LtpStateSpace, FeedbackInterconnect> build_fm1(const Fm1Params& p) {
    using Eigen::MatrixXd;
    LtpStateSpace sys;
    sys.n_x = 10;
    sys.n_u = 3 + 4;  // actuator abc + measured (v_DQ, i_DQ)
    sys.n_y = 6 + 2;  // y_pi = (v_pcc, i_f), y_kappa = actuator command DQ
    sys.n_w = 3 + 2;  // w_pi = i_grid abc, w_kappa = v*_DQ
    sys.n_y_pi = 6;
    sys.n_w_pi = 3;

    const double il = 1.0 / p.filter_l_h;
    const double ic = 1.0 / p.filter_c_f;
    MatrixXd a = MatrixXd::Zero(10, 10);
    // L i_f' = u_act - R i_f - v_pcc, v_pcc = v_c + R_d (i_f - w_pi)
    a.block(0, 0, 3, 3) = -((p.filter_r_ohm + p.damping_r_ohm) * il) * MatrixXd::Identity(3, 3);
    a.block(0, 3, 3, 3) = -il * MatrixXd::Identity(3, 3);
    // C v_c' = i_f - w_pi
    a.block(3, 0, 3, 3) = ic * MatrixXd::Identity(3, 3);
    MatrixXd b = MatrixXd::Zero(10, 7);
    b.block(0, 0, 3, 3) = il * MatrixXd::Identity(3, 3);
    // voltage integrator: x_v' = v* - v_meas
    b.block(6, 3, 2, 2) = -MatrixXd::Identity(2, 2);
    // current integrator: x_c' = i* - i_meas, i* = Kpv (v* - v_meas) + Kiv x_v
    b.block(8, 3, 2, 2) = -p.kp_v * MatrixXd::Identity(2, 2);
    b.block(8, 5, 2, 2) = -MatrixXd::Identity(2, 2);
    MatrixXd e = MatrixXd::Zero(10, 5);
    e.block(0, 0, 3, 3) = (p.damping_r_ohm * il) * MatrixXd::Identity(3, 3);
    e.block(3, 0, 3, 3) = -ic * MatrixXd::Identity(3, 3);
    e.block(6, 3, 2, 2) = MatrixXd::Identity(2, 2);
    e.block(8, 3, 2, 2) = p.kp_v * MatrixXd::Identity(2, 2);

    MatrixXd akap = MatrixXd::Zero(10, 10);
    akap.block(8, 6, 2, 2) = p.ki_v * MatrixXd::Identity(2, 2);
    a += akap;

    MatrixXd c = MatrixXd::Zero(8, 10);
    // y_pi rows 0-2: v_pcc = v_c + R_d i_f - R_d w_pi
    c.block(0, 0, 3, 3) = p.damping_r_ohm * MatrixXd::Identity(3, 3);
    c.block(0, 3, 3, 3) = MatrixXd::Identity(3, 3);
    // y_pi rows 3-5: i_f
    c.block(3, 0, 3, 3) = MatrixXd::Identity(3, 3);
    // y_kappa: u_act = Kpc (i* - i_meas) + Kic x_c
    c.block(6, 6, 2, 2) = p.kp_c * p.ki_v * MatrixXd::Identity(2, 2);
    c.block(6, 8, 2, 2) = p.ki_c * MatrixXd::Identity(2, 2);
    MatrixXd d = MatrixXd::Zero(8, 7);
    d.block(6, 3, 2, 2) = -p.kp_c * p.kp_v * MatrixXd::Identity(2, 2);
    d.block(6, 5, 2, 2) = -p.kp_c * MatrixXd::Identity(2, 2);
    MatrixXd f = MatrixXd::Zero(8, 5);
    f.block(0, 0, 3, 3) = -p.damping_r_ohm * MatrixXd::Identity(3, 3);
    f.block(6, 3, 2, 2) = p.kp_c * p.kp_v * MatrixXd::Identity(2, 2);

    sys.a = detail::constant_block(a);
    sys.b = detail::constant_block(b);
    sys.c = detail::constant_block(c);
    sys.d = detail::constant_block(d);
    sys.e = detail::constant_block(e);
    sys.f = detail::constant_block(f);

    FeedbackInterconnect fb;
    const FourierBlocks park = park_abc_to_dq_blocks();
    const FourierBlocks ipark = park_dq_to_abc_blocks();
    for (const auto& [k, blk] : ipark) {
        MatrixXcd t = MatrixXcd::Zero(7, 8);
        t.block(0, 6, 3, 2) = blk;  // actuator voltage from y_kappa
        fb.t[k] = t;
    }
    for (const auto& [k, blk] : park) {
        MatrixXcd t = fb.t.count(k) ? fb.t[k] : MatrixXcd::Zero(7, 8);
        t.block(3, 0, 2, 3) = blk;  // v measurement
        t.block(5, 3, 2, 3) = blk;  // i measurement
        fb.t[k] = t;
    }
    const Eigen::MatrixXd gi = detail::interface_matrix(p.interface);
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(3, 6);
    sel.leftCols(3) = gi;  // grid sees the PCC voltage rows of y_pi
    fb.t_gamma_pi = detail::constant_block(sel);
    fb.t_pi_gamma = detail::constant_block(gi);
    fb.t_kappa_gamma = park_abc_to_dq_blocks();
    return {sys, fb};
}

// ---------------------------------------------------------------------------
// Grid response
// ---------------------------------------------------------------------------

// Forming: V_s = g_pp I_s + g_pk W_kappa.  Following: I_r = g_pp V_r + g_pk
// W_kappa. Both operators act on grid-frame three-phase spectra.
struct CiderGridResponse {
    CiderKind kind = CiderKind::Following;
    HarmonicSet harmonics;
    MatrixXcd g_pp;  // 3|H| x 3|H|
    MatrixXcd g_pk;  // 3|H| x c_kappa |H|
    int kappa_channels = 0;

    void check_finite() const {
        if (!g_pp.allFinite() || !g_pk.allFinite())
            throw ResonanceError("grid response contains non-finite entries");
    }
};

inline CiderGridResponse grid_response(const GBlocks& g, const FeedbackInterconnect& fb,
                                       CiderKind kind) {
    const HarmonicSet& h = g.harmonics;
    const MatrixXcd tgp = lift_ltp_matrix(fb.t_gamma_pi, h).realized();
    const MatrixXcd tpg = lift_ltp_matrix(fb.t_pi_gamma, h).realized();
    CiderGridResponse out;
    out.kind = kind;
    out.harmonics = h;
    out.g_pp = tgp * g.pp * tpg;
    out.g_pk = tgp * g.pk;
    out.kappa_channels = g.n_w_k;
    out.check_finite();
    return out;
}

// ---------------------------------------------------------------------------
// Harmonic sources other than CIDERs
// ---------------------------------------------------------------------------

struct HarmonicSourceEquivalent {
    enum class Kind { Thevenin, Norton } kind = Kind::Thevenin;
    HarmonicSet harmonics;
    // Thevenin: per-frequency impedance + voltage source spectrum.
    // Norton: per-frequency admittance + current source spectrum.
    std::function<MatrixXcd(double)> z_or_y;  // 3x3 at frequency f
    SpectralVector source;                    // V_TE or I_NE, 3 channels

    ToeplitzOperator lifted_z_or_y() const {
        return ToeplitzOperator::from_frequency_response(z_or_y, harmonics);
    }
};

// Current drawn through the equivalent, Eq.-style orientation:
// Thevenin: Z^-1 (V - V_TE); Norton: I_NE - Y V.
inline SpectralVector source_injection(const HarmonicSourceEquivalent& src,
                                       const SpectralVector& v) {
    if (v.harmonics() != src.harmonics || v.channels() != 3)
        throw IncompatibilityError("source_injection: incompatible voltage spectrum");
    const HarmonicSet& h = src.harmonics;
    SpectralVector i(h, 3);
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
        const MatrixXcd m = src.z_or_y(h.freq(hh));
        Eigen::Vector3cd vv, ss;
        for (int c = 0; c < 3; ++c) {
            vv(c) = v(hh, c);
            ss(c) = src.source(hh, c);
        }
        Eigen::Vector3cd ii;
        if (src.kind == HarmonicSourceEquivalent::Kind::Thevenin) {
            Eigen::FullPivLU<MatrixXcd> lu(m);
            if (!lu.isInvertible())
                throw SolvabilityError("source_injection: singular Z_TE at harmonic " +
                                       std::to_string(hh));
            ii = lu.solve((vv - ss).matrix());
        } else {
            ii = ss - m * vv;
        }
        for (int c = 0; c < 3; ++c) i(hh, c) = ii(c);
    }
    return i;
}

// Packaging of a source as a grid response in the nodal injection convention.
// Thevenin following: I = -Z^-1 V + Z^-1 V_TE (g_pp = -Z^-1, g_pk = Z^-1).
// Thevenin forming:   V = -Z I + V_TE         (g_pp = -Z,    g_pk = I).
// Norton following:   I = -Y V + I_NE         (g_pp = -Y,    g_pk = I).
inline CiderGridResponse source_as_grid_response(const HarmonicSourceEquivalent& src,
                                                 CiderKind kind) {
    const HarmonicSet& h = src.harmonics;
    CiderGridResponse out;
    out.kind = kind;
    out.harmonics = h;
    out.kappa_channels = 3;
    const Eigen::Index n = 3 * static_cast<Eigen::Index>(h.size());
    if (src.kind == HarmonicSourceEquivalent::Kind::Thevenin) {
        const MatrixXcd z = src.lifted_z_or_y().realized();
        if (kind == CiderKind::Forming) {
            out.g_pp = -z;
            out.g_pk = MatrixXcd::Identity(n, n);
        } else {
            Eigen::PartialPivLU<MatrixXcd> lu(z);
            const MatrixXcd zinv = lu.solve(MatrixXcd::Identity(n, n));
            if (!zinv.allFinite())
                throw SolvabilityError("source: singular Z_TE in following mode");
            out.g_pp = -zinv;
            out.g_pk = zinv;
        }
    } else {
        if (kind == CiderKind::Forming)
            throw ValidationError("Norton equivalent is only supported in following mode");
        out.g_pp = -src.lifted_z_or_y().realized();
        out.g_pk = MatrixXcd::Identity(n, n);
    }
    out.check_finite();
    return out;
}

}  // namespace hpfx

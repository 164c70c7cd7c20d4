#pragma once

// Fixed-point harmonic power-flow engine.
//
// Resource-sorted mismatch equations
//   H_SS I_S + H_SR V_R - G_pp,S I_S - G_pk,S W_k,S = 0
//   H_RS I_S + H_RR V_R - G_pp,R V_R - G_pk,R W_k,R = 0
// are reduced, after the ex-ante invertibility checks of L_SS and K_RR, to a
// fixed point in the followers' control-frame disturbance W_rho:
//   W_rho = B_RR W_k,R(W_rho) + B_RS W_k,S.
//
// Note the sign of the drive term: substituting
//   I_S = L_SS^-1 (H_SR V_R - G_pk,S W_k,S)
// into the second mismatch equation yields
//   K_RR V_R = G_pk,R W_k,R + K_RS G_pk,S W_k,S,
// i.e. the forming contribution enters with a plus. A 1x1 Thevenin/follower
// network is checked against its closed-form solution in the tests.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpfx/cider.hpp"
#include "hpfx/network.hpp"
#include "hpfx/spectral.hpp"

namespace hpfx {

// One resource attached to the solver: its grid response plus, for followers,
// the control-frame transform and the (possibly nonlinear) reference map.
struct SolverResource {
    std::string name;
    CiderKind kind = CiderKind::Following;
    MatrixXcd g_pp;
    MatrixXcd g_pk;
    int kappa_channels = 0;  // channels of W_kappa (and of W_rho for followers)

    // forming: constant reference vector (c_kappa |H|)
    VectorXcd w_kappa_const;

    // following: T_kappa|gamma (c|H| x 3|H|), reference map and Jacobian in
    // the resource's own W_rho coordinates. Constant references (sources)
    // leave `reference` empty and use w_kappa_const with a zero Jacobian.
    MatrixXcd t_kappa_gamma;
    std::function<VectorXcd(const VectorXcd&)> reference;
    std::function<MatrixXcd(const VectorXcd&)> reference_jacobian;

    bool has_nonlinear_reference() const { return static_cast<bool>(reference); }
};

struct SolverConfig {
    double tol_x = 1e-8;
    double tol_f = 1e-8;
    int max_iter = 200;
    // Flat start: nominal fundamental DQ voltage for PQ followers, nominal
    // balanced fundamental for grid-frame followers. Overridden if provided.
    std::optional<VectorXcd> initial;
    double divergence_guard = 1e9;  // stop when the iterate norm exceeds this
    bool track_jacobian_norm = false;

    void validate() const {
        if (tol_x <= 0.0 || tol_f <= 0.0)
            throw ValidationError("SolverConfig: tolerances must be positive");
        if (max_iter <= 0) throw ValidationError("SolverConfig: max_iter must be positive");
    }
};

enum class Uniqueness { CertifiedUnique, Inconclusive, NotConverged };

inline const char* to_string(Uniqueness u) {
    switch (u) {
        case Uniqueness::CertifiedUnique: return "certified-unique";
        case Uniqueness::Inconclusive: return "inconclusive";
        default: return "not-converged";
    }
}

struct FixedPointReport {
    bool converged = false;
    int iterations = 0;
    VectorXcd w_rho;                 // fixed point (resource-sorted follower stack)
    VectorXcd v_r, i_s, v_s, i_r;    // back-substituted state (resource-sorted)
    std::vector<double> delta_x_history;
    std::vector<double> delta_f_history;
    std::vector<double> jac_norm_history;  // filled when tracking is enabled
    double jac_inf_norm = std::numeric_limits<double>::quiet_NaN();
    double jac_inf_norm_real_stacked = std::numeric_limits<double>::quiet_NaN();
    double rho_ln = std::numeric_limits<double>::quiet_NaN();
    double rho_log10 = std::numeric_limits<double>::quiet_NaN();
    Uniqueness uniqueness = Uniqueness::NotConverged;
    std::string note;
};

// Reduced fixed-point system, immutable once built.
class ReducedSystem {
  public:
    HarmonicSet harmonics;
    std::vector<SolverResource> forming;    // in S order
    std::vector<SolverResource> following;  // in R order

    MatrixXcd h_ss, h_sr, h_rs, h_rr;  // resource-sorted hybrid blocks
    MatrixXcd l_ss;                    // G_pp,S - H_SS
    MatrixXcd k_rs;                    // H_RS L_SS^-1
    MatrixXcd k_rr;                    // H_RR - G_pp,R + K_RS H_SR
    MatrixXcd b_rr;                    // T_kg K_RR^-1 G_pk,R
    MatrixXcd b_rs;                    // T_kg K_RR^-1 K_RS G_pk,S
    MatrixXcd t_kg;                    // blockdiag of follower T_kappa|gamma
    MatrixXcd g_pp_s, g_pk_s, g_pp_r, g_pk_r;
    MatrixXcd v_of_wk_r, v_of_wk_s;    // V_R recovery operators
    VectorXcd w_kappa_s;               // stacked forming references
    VectorXcd drive;                   // B_RS W_k,S
    double rcond_l = 0.0, rcond_k = 0.0;

    Eigen::Index dim_s() const { return h_ss.rows(); }
    Eigen::Index dim_r() const { return h_rr.rows(); }
    Eigen::Index dim_rho() const { return b_rr.rows(); }

    // Offsets of each follower's slice inside the W_rho stack.
    std::vector<Eigen::Index> rho_offsets;

    VectorXcd w_kappa_r(const VectorXcd& w_rho) const {
        VectorXcd out(dim_rho());
        for (std::size_t i = 0; i < following.size(); ++i) {
            const auto& res = following[i];
            const Eigen::Index off = rho_offsets[i];
            const Eigen::Index len = res.kappa_channels * harmonics.size();
            if (res.has_nonlinear_reference())
                out.segment(off, len) = res.reference(w_rho.segment(off, len));
            else
                out.segment(off, len) = res.w_kappa_const;
        }
        return out;
    }

    MatrixXcd w_kappa_r_jacobian(const VectorXcd& w_rho) const {
        MatrixXcd out = MatrixXcd::Zero(dim_rho(), dim_rho());
        for (std::size_t i = 0; i < following.size(); ++i) {
            const auto& res = following[i];
            const Eigen::Index off = rho_offsets[i];
            const Eigen::Index len = res.kappa_channels * harmonics.size();
            if (res.has_nonlinear_reference())
                out.block(off, off, len, len) = res.reference_jacobian(w_rho.segment(off, len));
        }
        return out;
    }
};

// Ex-ante construction: condition checks run once, before any iteration.
inline ReducedSystem build_reduced_system(const HybridHarmonicMatrix& hybrid,
                                          std::vector<SolverResource> forming,
                                          std::vector<SolverResource> following,
                                          double rcond_floor = 1e-12) {
    if (forming.empty()) throw ValidationError("build_reduced_system: S must be nonempty");
    ReducedSystem sys;
    sys.harmonics = hybrid.harmonics;
    sys.forming = std::move(forming);
    sys.following = std::move(following);
    sys.h_ss = hybrid.tld_ss;
    sys.h_sr = hybrid.tld_sr;
    sys.h_rs = hybrid.tld_rs;
    sys.h_rr = hybrid.tld_rr;

    const Eigen::Index nh = sys.harmonics.size();
    const Eigen::Index ns = sys.h_ss.rows();
    const Eigen::Index nr = sys.h_rr.rows();
    if (ns != static_cast<Eigen::Index>(sys.forming.size()) * 3 * nh)
        throw ShapeError("build_reduced_system: forming resources do not match S");
    if (nr != static_cast<Eigen::Index>(sys.following.size()) * 3 * nh)
        throw ShapeError("build_reduced_system: following resources do not match R");

    // Block-diagonal resource operators in resource-sorted order.
    Eigen::Index wks = 0, wkr = 0;
    for (const auto& r : sys.forming) wks += r.kappa_channels * nh;
    for (const auto& r : sys.following) wkr += r.kappa_channels * nh;
    sys.g_pp_s = MatrixXcd::Zero(ns, ns);
    sys.g_pk_s = MatrixXcd::Zero(ns, wks);
    sys.g_pp_r = MatrixXcd::Zero(nr, nr);
    sys.g_pk_r = MatrixXcd::Zero(nr, wkr);
    sys.t_kg = MatrixXcd::Zero(wkr, nr);
    sys.w_kappa_s = VectorXcd::Zero(wks);
    {
        Eigen::Index ro = 0, co = 0;
        for (const auto& r : sys.forming) {
            const Eigen::Index ck = r.kappa_channels * nh;
            sys.g_pp_s.block(ro, ro, 3 * nh, 3 * nh) = r.g_pp;
            sys.g_pk_s.block(ro, co, 3 * nh, ck) = r.g_pk;
            sys.w_kappa_s.segment(co, ck) = r.w_kappa_const;
            ro += 3 * nh;
            co += ck;
        }
    }
    {
        Eigen::Index ro = 0, co = 0;
        for (const auto& r : sys.following) {
            const Eigen::Index ck = r.kappa_channels * nh;
            sys.rho_offsets.push_back(co);
            sys.g_pp_r.block(ro, ro, 3 * nh, 3 * nh) = r.g_pp;
            sys.g_pk_r.block(ro, co, 3 * nh, ck) = r.g_pk;
            sys.t_kg.block(co, ro, ck, 3 * nh) = r.t_kappa_gamma;
            ro += 3 * nh;
            co += ck;
        }
    }

    // Condition 1
    sys.l_ss = sys.g_pp_s - sys.h_ss;
    sys.rcond_l = detail::rcond_estimate(sys.l_ss);
    if (sys.rcond_l < rcond_floor)
        throw SolvabilityError("ex-ante Condition 1 failed: L_SxS not invertible (rcond " +
                               std::to_string(sys.rcond_l) + ")");
    Eigen::PartialPivLU<MatrixXcd> lu_l(sys.l_ss);
    const MatrixXcd l_inv = lu_l.solve(MatrixXcd::Identity(ns, ns));

    if (nr > 0) {
        sys.k_rs = sys.h_rs * l_inv;
        sys.k_rr = sys.h_rr - sys.g_pp_r + sys.k_rs * sys.h_sr;
        sys.rcond_k = detail::rcond_estimate(sys.k_rr);
        if (sys.rcond_k < rcond_floor)
            throw SolvabilityError("ex-ante Condition 2 failed: K_RxR not invertible (rcond " +
                                   std::to_string(sys.rcond_k) + ")");
        Eigen::PartialPivLU<MatrixXcd> lu_k(sys.k_rr);
        sys.v_of_wk_r = lu_k.solve(sys.g_pk_r);
        sys.v_of_wk_s = lu_k.solve(MatrixXcd(sys.k_rs * sys.g_pk_s));
        sys.b_rr = sys.t_kg * sys.v_of_wk_r;
        sys.b_rs = sys.t_kg * sys.v_of_wk_s;
        sys.drive = sys.b_rs * sys.w_kappa_s;
    } else {
        sys.k_rs = MatrixXcd::Zero(0, ns);
        sys.k_rr = MatrixXcd::Zero(0, 0);
        sys.rcond_k = 1.0;
        sys.v_of_wk_r = MatrixXcd::Zero(0, 0);
        sys.v_of_wk_s = MatrixXcd::Zero(0, wks);
        sys.b_rr = MatrixXcd::Zero(0, 0);
        sys.b_rs = MatrixXcd::Zero(0, wks);
        sys.drive = VectorXcd::Zero(0);
    }
    return sys;
}

// One evaluation of the fixed-point map.
inline VectorXcd phi(const ReducedSystem& sys, const VectorXcd& w_rho) {
    return sys.b_rr * sys.w_kappa_r(w_rho) + sys.drive;
}

// nabla Phi = B_RR blockdiag_r dW_k,r / dW_rho,r.
inline MatrixXcd jacobian_phi(const ReducedSystem& sys, const VectorXcd& w_rho) {
    return sys.b_rr * sys.w_kappa_r_jacobian(w_rho);
}

// V_R recovered from the reference values; by construction T_kg * this equals
// Phi's output for the same W_kappa.
inline VectorXcd recover_v_r(const ReducedSystem& sys, const VectorXcd& w_kappa_r) {
    return sys.v_of_wk_r * w_kappa_r + sys.v_of_wk_s * sys.w_kappa_s;
}

inline VectorXcd recover_i_s(const ReducedSystem& sys, const VectorXcd& v_r) {
    Eigen::PartialPivLU<MatrixXcd> lu_l(sys.l_ss);
    return lu_l.solve(VectorXcd(sys.h_sr * v_r - sys.g_pk_s * sys.w_kappa_s));
}

// Mismatch of the un-reduced equations at a full state; the independent
// convergence audit.
struct Mismatch {
    VectorXcd dv_s;
    VectorXcd di_r;
    double inf() const { return std::max(inf_norm(dv_s), inf_norm(di_r)); }
};

inline Mismatch residual_mismatch(const ReducedSystem& sys, const VectorXcd& i_s,
                                  const VectorXcd& v_r) {
    const VectorXcd w_rho = sys.t_kg * v_r;
    const VectorXcd w_k_r = sys.w_kappa_r(w_rho);
    Mismatch m;
    m.dv_s = sys.h_ss * i_s + sys.h_sr * v_r - sys.g_pp_s * i_s - sys.g_pk_s * sys.w_kappa_s;
    m.di_r = sys.h_rs * i_s + sys.h_rr * v_r - sys.g_pp_r * v_r - sys.g_pk_r * w_k_r;
    return m;
}

// Flat start: nominal DQ voltage for PQ followers (direct axis, harmonic 0),
// nominal balanced fundamental for grid-frame (3-channel) followers.
inline VectorXcd flat_start(const ReducedSystem& sys, double v_nom_rms) {
    VectorXcd x = VectorXcd::Zero(sys.dim_rho());
    const HarmonicSet& h = sys.harmonics;
    for (std::size_t i = 0; i < sys.following.size(); ++i) {
        const auto& res = sys.following[i];
        const Eigen::Index off = sys.rho_offsets[i];
        if (res.kappa_channels == 2) {
            x(off + static_cast<Eigen::Index>(h.index(0)) * 2) = kDqOfPhaseRms * v_nom_rms;
        } else if (res.kappa_channels == 3 && h.h_max >= 1) {
            const double amp = std::sqrt(2.0) * v_nom_rms / 2.0;
            for (int p = 0; p < 3; ++p) {
                const Complex c = amp * std::exp(Complex(0.0, -2.0 * kPi * p / 3.0));
                x(off + static_cast<Eigen::Index>(h.index(1)) * 3 + p) = c;
                x(off + static_cast<Eigen::Index>(h.index(-1)) * 3 + p) = std::conj(c);
            }
        }
    }
    return x;
}

struct SolveOutcome {
    FixedPointReport report;
    Mismatch mismatch;  // at the final state
};

// Picard iteration with the dual stopping criterion; non-convergence is data.
// delta_f is the fixed-point residual |Phi(x_k) - x_k|_inf, the quantity that
// vanishes at a solution.
inline FixedPointReport solve(const ReducedSystem& sys, const SolverConfig& cfg,
                              double v_nom_rms = 230.0) {
    cfg.validate();
    FixedPointReport rep;
    VectorXcd x = cfg.initial ? *cfg.initial : flat_start(sys, v_nom_rms);
    if (x.size() != sys.dim_rho())
        throw ShapeError("solve: initial iterate has the wrong dimension");

    for (int k = 0; k < cfg.max_iter; ++k) {
        VectorXcd y;
        try {
            y = phi(sys, x);
        } catch (const DegenerateOperatingPointError& err) {
            rep.note = std::string("map evaluation failed: ") + err.what();
            break;
        }
        // For the Picard update x_{k+1} = Phi(x_k) the residual at x_k and
        // the iterate change towards x_{k+1} are the same number.
        const double step = inf_norm(VectorXcd(y - x));
        rep.delta_f_history.push_back(step);  // residual at x_k
        rep.delta_x_history.push_back(step);  // change producing x_{k+1}
        if (cfg.track_jacobian_norm)
            rep.jac_norm_history.push_back(inf_norm(jacobian_phi(sys, x)));
        rep.iterations = k + 1;
        x = y;
        if (!x.allFinite() || inf_norm(x) > cfg.divergence_guard) {
            rep.note = "iterates diverged";
            break;
        }
        if (step <= cfg.tol_f && step <= cfg.tol_x) {
            rep.converged = true;
            break;
        }
    }
    rep.w_rho = x;

    if (rep.converged) {
        const VectorXcd w_k_r = sys.w_kappa_r(x);
        rep.v_r = recover_v_r(sys, w_k_r);
        rep.i_s = recover_i_s(sys, rep.v_r);
        rep.v_s = sys.h_ss * rep.i_s + sys.h_sr * rep.v_r;
        rep.i_r = sys.h_rs * rep.i_s + sys.h_rr * rep.v_r;
    }
    return rep;
}

// Ex-post contraction certificate at the converged iterate.
inline void certify_uniqueness(FixedPointReport& rep, const ReducedSystem& sys) {
    if (!rep.converged) throw StateError("certify_uniqueness: solver has not converged");
    const MatrixXcd jac = jacobian_phi(sys, rep.w_rho);
    rep.jac_inf_norm = inf_norm(jac);
    rep.jac_inf_norm_real_stacked = inf_norm_real_stacked(jac);
    rep.rho_ln = std::log(rep.jac_inf_norm);
    rep.rho_log10 = std::log10(rep.jac_inf_norm);
    rep.uniqueness =
        rep.jac_inf_norm < 1.0 ? Uniqueness::CertifiedUnique : Uniqueness::Inconclusive;
}

// Least-squares slope of log(delta_x) over the convergence tail; the
// asymptotic rate of linear convergence. Returns -inf for immediate
// convergence, nullopt when fewer than four tail points exist.
inline std::optional<double> empirical_rate(const std::vector<double>& delta_x_history) {
    std::vector<double> tail;
    for (double d : delta_x_history)
        if (d > 0.0 && std::isfinite(std::log(d))) tail.push_back(std::log(d));
    if (delta_x_history.size() >= 1 && tail.empty())
        return -std::numeric_limits<double>::infinity();
    if (tail.size() < 4) return std::nullopt;
    // fit over the last half (at least 4 points) to skip burn-in
    const std::size_t n = std::max<std::size_t>(4, tail.size() / 2);
    const std::size_t start = tail.size() - n;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xk = static_cast<double>(start + i);
        sx += xk;
        sy += tail[start + i];
        sxx += xk * xk;
        sxy += xk * tail[start + i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) return std::nullopt;
    return (n * sxy - sx * sy) / denom;
}

}  // namespace hpfx

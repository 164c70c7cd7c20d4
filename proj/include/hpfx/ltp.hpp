#pragma once

// Generic linear time-periodic state-space model, its feedback closure, and
// the harmonic-domain closed-loop gain. The steady-state periodic response is
// obtained by solving the bordered system
//
//   [ Omega - A   -B*T ] [X]   [E]
//   [   -C      I - D*T ] [Y] = [F] * W
//
// where every operator is the block-Toeplitz lift over H and Omega is the
// block diagonal of j*h*2*pi*f1.

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "hpfx/spectral.hpp"

namespace hpfx {

// Open-loop LTP model with disturbance:
//   x' = A(t)x + B(t)u + E(t)w
//   y  = C(t)x + D(t)u + F(t)w
// Outputs and disturbances are split into a power-hardware part (leading
// n_y_pi / n_w_pi channels) and a control-software part (the rest).
struct LtpStateSpace {
    int n_x = 0, n_u = 0, n_y = 0, n_w = 0;
    int n_y_pi = 0;  // grid-side output channels (leading block of y)
    int n_w_pi = 0;  // grid-side disturbance channels (leading block of w)
    FourierBlocks a, b, c, d, e, f;

    void validate() const {
        auto check = [](const FourierBlocks& m, int rows, int cols, const std::string& what) {
            for (const auto& [k, blk] : m)
                if (blk.rows() != rows || blk.cols() != cols)
                    throw ShapeError("LtpStateSpace: block " + what + " has wrong shape");
        };
        check(a, n_x, n_x, "A");
        check(b, n_x, n_u, "B");
        check(c, n_y, n_x, "C");
        check(d, n_y, n_u, "D");
        check(e, n_x, n_w, "E");
        check(f, n_y, n_w, "F");
        if (n_y_pi < 0 || n_y_pi > n_y || n_w_pi < 0 || n_w_pi > n_w)
            throw ShapeError("LtpStateSpace: bad pi/kappa split");
    }
};

// Feedback u = T(t) y, with the grid-side transforms used to compose the
// grid response from the closed-loop gain.
struct FeedbackInterconnect {
    FourierBlocks t;           // n_u x n_y
    FourierBlocks t_gamma_pi;  // n_gamma x n_y_pi
    FourierBlocks t_pi_gamma;  // n_w_pi x n_gamma
    FourierBlocks t_kappa_gamma;  // control-frame image of the grid disturbance
};

struct GBlocks {
    HarmonicSet harmonics;
    int n_y_pi = 0, n_y_k = 0, n_w_pi = 0, n_w_k = 0;
    MatrixXcd pp, pk, kp, kk;  // Y_pi/Y_kappa response to W_pi/W_kappa
};

namespace detail {

// Extract rows/cols of a harmonic-major lifted matrix belonging to a channel
// range [off, off+len) of each harmonic block.
inline MatrixXcd channel_rows(const MatrixXcd& m, const HarmonicSet& h, int stride, int off,
                              int len) {
    MatrixXcd out(static_cast<Eigen::Index>(len) * h.size(), m.cols());
    for (int k = 0; k < h.size(); ++k)
        out.middleRows(static_cast<Eigen::Index>(k) * len, len) =
            m.middleRows(static_cast<Eigen::Index>(k) * stride + off, len);
    return out;
}

inline MatrixXcd channel_cols(const MatrixXcd& m, const HarmonicSet& h, int stride, int off,
                              int len) {
    MatrixXcd out(m.rows(), static_cast<Eigen::Index>(len) * h.size());
    for (int k = 0; k < h.size(); ++k)
        out.middleCols(static_cast<Eigen::Index>(k) * len, len) =
            m.middleCols(static_cast<Eigen::Index>(k) * stride + off, len);
    return out;
}

}  // namespace detail

// Closed-loop harmonic gain of the CIDER: Y_hat = G_hat W_hat, partitioned by
// the pi/kappa split. Throws ResonanceError when the lifted loop has no
// periodic steady state (singular bordered matrix).
inline GBlocks close_loop(const LtpStateSpace& sys, const FeedbackInterconnect& fb,
                          const HarmonicSet& h) {
    sys.validate();
    const Eigen::Index nh = h.size();
    const Eigen::Index nx = sys.n_x * nh, ny = sys.n_y * nh, nw = sys.n_w * nh;

    auto lift_or_zero = [&](const FourierBlocks& blocks, Eigen::Index rows, Eigen::Index cols) {
        if (blocks.empty()) return MatrixXcd(MatrixXcd::Zero(rows * nh, cols * nh));
        return MatrixXcd(lift_ltp_matrix(blocks, h).realized());
    };
    const MatrixXcd a_hat = lift_or_zero(sys.a, sys.n_x, sys.n_x);
    const MatrixXcd b_hat = lift_or_zero(sys.b, sys.n_x, sys.n_u);
    const MatrixXcd c_hat = lift_or_zero(sys.c, sys.n_y, sys.n_x);
    const MatrixXcd d_hat = lift_or_zero(sys.d, sys.n_y, sys.n_u);
    const MatrixXcd e_hat = lift_or_zero(sys.e, sys.n_x, sys.n_w);
    const MatrixXcd f_hat = lift_or_zero(sys.f, sys.n_y, sys.n_w);
    const MatrixXcd t_hat = lift_or_zero(fb.t, sys.n_u, sys.n_y);

    MatrixXcd omega = MatrixXcd::Zero(nx, nx);
    for (int hh = -h.h_max; hh <= h.h_max; ++hh)
        omega.block(h.index(hh) * sys.n_x, h.index(hh) * sys.n_x, sys.n_x, sys.n_x) =
            Complex(0.0, h.omega(hh)) * MatrixXcd::Identity(sys.n_x, sys.n_x);

    MatrixXcd m(nx + ny, nx + ny);
    m.topLeftCorner(nx, nx) = omega - a_hat;
    m.topRightCorner(nx, ny) = -b_hat * t_hat;
    m.bottomLeftCorner(ny, nx) = -c_hat;
    m.bottomRightCorner(ny, ny) = MatrixXcd::Identity(ny, ny) - d_hat * t_hat;

    MatrixXcd rhs(nx + ny, nw);
    rhs.topRows(nx) = e_hat;
    rhs.bottomRows(ny) = f_hat;

    Eigen::PartialPivLU<MatrixXcd> lu(m);
    const MatrixXcd sol = lu.solve(rhs);
    const double defect = inf_norm(MatrixXcd(m * sol - rhs));
    if (!std::isfinite(defect) || defect > 1e-6 * std::max(1.0, inf_norm(rhs)))
        throw ResonanceError(
            "close_loop: singular harmonic-domain loop; no periodic steady state");

    const MatrixXcd g = sol.bottomRows(ny);
    GBlocks out;
    out.harmonics = h;
    out.n_y_pi = sys.n_y_pi;
    out.n_y_k = sys.n_y - sys.n_y_pi;
    out.n_w_pi = sys.n_w_pi;
    out.n_w_k = sys.n_w - sys.n_w_pi;
    const MatrixXcd rows_pi = detail::channel_rows(g, h, sys.n_y, 0, sys.n_y_pi);
    const MatrixXcd rows_k = detail::channel_rows(g, h, sys.n_y, sys.n_y_pi, out.n_y_k);
    out.pp = detail::channel_cols(rows_pi, h, sys.n_w, 0, sys.n_w_pi);
    out.pk = detail::channel_cols(rows_pi, h, sys.n_w, sys.n_w_pi, out.n_w_k);
    out.kp = detail::channel_cols(rows_k, h, sys.n_w, 0, sys.n_w_pi);
    out.kk = detail::channel_cols(rows_k, h, sys.n_w, sys.n_w_pi, out.n_w_k);
    return out;
}

}  // namespace hpfx

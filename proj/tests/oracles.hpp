#pragma once

// Test-only oracles, independent of the implementation paths they check:
// sampled time-domain LTP products analysed by synchronous DFT, brute-force
// matrix assembly by element stamping, central finite differences, and a
// dense Newton solve of the un-reduced mismatch equations.

#include <functional>
#include <random>
#include <vector>

#include "hpfx/network.hpp"
#include "hpfx/solver.hpp"
#include "hpfx/spectral.hpp"

namespace oracles {

using namespace hpfx;

// Fourier coefficients of A(t) x(t) by sampling one period and projecting on
// the harmonic set; the reference for Toeplitz apply.
inline SpectralVector time_domain_product(const FourierBlocks& blocks, const SpectralVector& x,
                                          int nsamples = 4096) {
    const HarmonicSet& h = x.harmonics();
    const auto& first = blocks.begin()->second;
    const int rows = static_cast<int>(first.rows());
    const double T = h.period();
    std::vector<VectorXcd> samples(nsamples);
    for (int s = 0; s < nsamples; ++s) {
        const double t = T * s / nsamples;
        samples[s] = fourier_time_value(blocks, t, h.f1) * x.time_value(t);
    }
    SpectralVector out(h, rows);
    for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
        for (int c = 0; c < rows; ++c) {
            Complex acc(0.0, 0.0);
            for (int s = 0; s < nsamples; ++s)
                acc += samples[s](c) *
                       std::exp(Complex(0.0, -2.0 * kPi * hh * static_cast<double>(s) / nsamples));
            out(hh, c) = acc / static_cast<double>(nsamples);
        }
    }
    return out;
}

inline std::mt19937& rng() {
    static std::mt19937 gen(20240817u);
    return gen;
}

inline Complex random_complex(double scale = 1.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return scale * Complex(u(rng()), u(rng()));
}

inline MatrixXcd random_matrix(int rows, int cols, double scale = 1.0) {
    MatrixXcd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = random_complex(scale);
    return m;
}

inline VectorXcd random_vector(Eigen::Index n, double scale = 1.0) {
    VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = random_complex(scale);
    return v;
}

// Real-valued LTP matrix with the given harmonic support (conjugate
// symmetric blocks).
inline FourierBlocks random_real_ltp(int rows, int cols, const std::vector<int>& support,
                                     double scale = 1.0) {
    FourierBlocks blocks;
    for (int k : support) {
        if (k == 0) {
            MatrixXcd m = random_matrix(rows, cols, scale);
            blocks[0] = (m + m.conjugate()) / 2.0;  // real block
        } else {
            blocks[k] = random_matrix(rows, cols, scale);
            blocks[-k] = blocks[k].conjugate();
        }
    }
    return blocks;
}

inline SpectralVector random_conjugate_symmetric(const HarmonicSet& h, int channels,
                                                 int content_hmax, double scale = 1.0) {
    SpectralVector v(h, channels);
    for (int hh = 0; hh <= std::min(content_hmax, h.h_max); ++hh)
        for (int c = 0; c < channels; ++c) {
            if (hh == 0)
                v(0, c) = Complex(random_complex(scale).real(), 0.0);
            else {
                const Complex z = random_complex(scale);
                v(hh, c) = z;
                v(-hh, c) = std::conj(z);
            }
        }
    return v;
}

// Brute-force nodal admittance by stamping each element into a zero matrix.
inline MatrixXcd stamped_admittance(const GridTopology& topo, double f) {
    const int n = static_cast<int>(topo.nodes.size());
    MatrixXcd y = MatrixXcd::Zero(3 * n, 3 * n);
    for (const auto& b : topo.branches) {
        const MatrixXcd yb = b.series_impedance(f).inverse();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                y(3 * b.from + i, 3 * b.from + j) += yb(i, j);
                y(3 * b.to + i, 3 * b.to + j) += yb(i, j);
                y(3 * b.from + i, 3 * b.to + j) -= yb(i, j);
                y(3 * b.to + i, 3 * b.from + j) -= yb(i, j);
            }
        if (topo.include_line_shunts) {
            const MatrixXcd ysh = b.shunt_end_admittance(f);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    y(3 * b.from + i, 3 * b.from + j) += ysh(i, j);
                    y(3 * b.to + i, 3 * b.to + j) += ysh(i, j);
                }
        }
    }
    for (const auto& ld : topo.loads) {
        const MatrixXcd yl = ld.admittance(f);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) y(3 * ld.node + i, 3 * ld.node + j) += yl(i, j);
    }
    return y;
}

// Central-difference complex Jacobian of a holomorphic map.
inline MatrixXcd finite_difference_jacobian(const std::function<VectorXcd(const VectorXcd&)>& f,
                                            const VectorXcd& x, double step = 1e-6) {
    const VectorXcd f0 = f(x);
    MatrixXcd jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        VectorXcd xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        jac.col(j) = (f(xp) - f(xm)) / (2.0 * step);
    }
    return jac;
}

// Dense Newton solve of the un-reduced mismatch equations in (I_S, V_R);
// test-only reference for the reduction soundness criterion.
inline bool newton_mismatch_solve(const ReducedSystem& sys, VectorXcd& i_s, VectorXcd& v_r,
                                  int max_iter = 60, double tol = 1e-11) {
    const Eigen::Index ns = sys.dim_s();
    const Eigen::Index nr = sys.dim_r();
    for (int it = 0; it < max_iter; ++it) {
        const Mismatch m = residual_mismatch(sys, i_s, v_r);
        if (m.inf() < tol) return true;
        MatrixXcd jac(ns + nr, ns + nr);
        jac.topLeftCorner(ns, ns) = sys.h_ss - sys.g_pp_s;
        jac.topRightCorner(ns, nr) = sys.h_sr;
        jac.bottomLeftCorner(nr, ns) = sys.h_rs;
        const VectorXcd w_rho = sys.t_kg * v_r;
        jac.bottomRightCorner(nr, nr) =
            sys.h_rr - sys.g_pp_r - sys.g_pk_r * sys.w_kappa_r_jacobian(w_rho) * sys.t_kg;
        VectorXcd rhs(ns + nr);
        rhs.head(ns) = m.dv_s;
        rhs.tail(nr) = m.di_r;
        const VectorXcd dx = jac.partialPivLu().solve(rhs);
        i_s -= dx.head(ns);
        v_r -= dx.tail(nr);
        if (!i_s.allFinite() || !v_r.allFinite()) return false;
    }
    return residual_mismatch(sys, i_s, v_r).inf() < tol;
}

}  // namespace oracles

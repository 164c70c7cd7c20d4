#pragma once

// Reference-frame machinery: power-invariant Park transform between the phase
// (ABC) and synchronous DQ frames, zero-sequence handling for three-leg
// converters, and the Fortescue sequence <-> phase similarity transform.

#include <Eigen/Dense>

#include "hpfx/spectral.hpp"

namespace hpfx {

// Power-invariant Park scaling: a balanced positive-sequence set with
// phase-RMS magnitude V maps to v_D = sqrt(3)*V, and p = v_D i_D + v_Q i_Q
// is the exact three-phase instantaneous power.
inline constexpr double kDqOfPhaseRms = 1.7320508075688772;  // sqrt(3)

// T_{kappa|pi}(t): ABC -> DQ, rotating at the fundamental, theta = 2*pi*f1*t.
inline Eigen::MatrixXd park_abc_to_dq(double theta) {
    Eigen::MatrixXd t(2, 3);
    const double s = std::sqrt(2.0 / 3.0);
    for (int p = 0; p < 3; ++p) {
        const double a = theta - 2.0 * kPi * p / 3.0;
        t(0, p) = s * std::cos(a);
        t(1, p) = -s * std::sin(a);
    }
    return t;
}

// T_{pi|kappa}(t): DQ -> ABC; transpose of the power-invariant Park, so the
// round trip ABC->DQ->ABC is the projection onto the zero-sequence-free
// subspace and DQ->ABC->DQ is the exact identity.
inline Eigen::MatrixXd park_dq_to_abc(double theta) {
    return park_abc_to_dq(theta).transpose();
}

// Fourier blocks of the Park transforms; support is exactly {-1, +1}.
inline FourierBlocks park_abc_to_dq_blocks() {
    const double s = std::sqrt(2.0 / 3.0);
    MatrixXcd plus(2, 3);
    for (int p = 0; p < 3; ++p) {
        const Complex e = std::exp(Complex(0.0, -2.0 * kPi * p / 3.0));
        plus(0, p) = 0.5 * s * e;
        plus(1, p) = Complex(0.0, 0.5) * s * e;
    }
    return {{1, plus}, {-1, plus.conjugate()}};
}

inline FourierBlocks park_dq_to_abc_blocks() {
    FourierBlocks fwd = park_abc_to_dq_blocks();
    FourierBlocks out;
    for (auto& [k, blk] : fwd) out[k] = blk.transpose();
    return out;
}

inline ToeplitzOperator park_abc_to_dq_lift(const HarmonicSet& h) {
    return lift_ltp_matrix(park_abc_to_dq_blocks(), h);
}

inline ToeplitzOperator park_dq_to_abc_lift(const HarmonicSet& h) {
    return lift_ltp_matrix(park_dq_to_abc_blocks(), h);
}

// Projection removing the zero-sequence component; models the grid interface
// of a three-leg converter. A four-leg interface uses the identity instead.
inline Eigen::MatrixXd zero_sequence_projection() {
    return Eigen::MatrixXd::Identity(3, 3) - Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
}

// Fortescue matrix: phase = A * [zero; positive; negative].
inline MatrixXcd fortescue() {
    const Complex a = std::exp(Complex(0.0, 2.0 * kPi / 3.0));
    MatrixXcd m(3, 3);
    m << 1.0, 1.0, 1.0,
         1.0, a * a, a,
         1.0, a, a * a;
    return m;
}

inline MatrixXcd fortescue_inverse() {
    const Complex a = std::exp(Complex(0.0, 2.0 * kPi / 3.0));
    MatrixXcd m(3, 3);
    m << 1.0, 1.0, 1.0,
         1.0, a, a * a,
         1.0, a * a, a;
    return m / 3.0;
}

// Phase-domain matrix of a component given its zero/positive/negative
// sequence scalars: A * diag(z0, z1, z2) * A^{-1}. Symmetric whenever the
// positive and negative sequence values coincide.
inline MatrixXcd sequence_to_phase_matrix(Complex z0, Complex z1, Complex z2) {
    return fortescue() * Eigen::Vector3cd(z0, z1, z2).asDiagonal() * fortescue_inverse();
}

}  // namespace hpfx

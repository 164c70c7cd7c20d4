#include <catch2/catch_amalgamated.hpp>

#include "hpfx/frames.hpp"
#include "oracles.hpp"

using namespace hpfx;
using Catch::Approx;

TEST_CASE("park transform support is exactly the first harmonic pair") {
    const FourierBlocks blocks = park_abc_to_dq_blocks();
    REQUIRE(blocks.size() == 2);
    REQUIRE(blocks.count(1) == 1);
    REQUIRE(blocks.count(-1) == 1);
    // blocks reproduce the sampled transform
    for (double t : {0.0, 0.0123, 0.017}) {
        const MatrixXcd m = fourier_time_value(blocks, t, 50.0);
        const Eigen::MatrixXd want = park_abc_to_dq(2.0 * kPi * 50.0 * t);
        REQUIRE((m - want.cast<Complex>()).cwiseAbs().maxCoeff() < 1e-14);
        REQUIRE(m.imag().cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("park round trip is the identity on the DQ side") {
    for (double theta : {0.0, 0.7, 2.1, 4.9}) {
        const Eigen::MatrixXd round =
            park_abc_to_dq(theta) * park_dq_to_abc(theta);
        REQUIRE((round - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
        // abc side: projection onto the zero-sequence-free subspace
        const Eigen::MatrixXd proj = park_dq_to_abc(theta) * park_abc_to_dq(theta);
        REQUIRE((proj - zero_sequence_projection()).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("lifted park round trip is identity away from the spectrum edge") {
    HarmonicSet h(6, 50.0);
    const MatrixXcd round =
        (park_abc_to_dq_lift(h) * park_dq_to_abc_lift(h)).realized();
    // interior harmonic blocks are exact; the edge loses the out-of-window term
    for (int hh = -5; hh <= 5; ++hh) {
        const MatrixXcd blk = round.block(h.index(hh) * 2, h.index(hh) * 2, 2, 2);
        REQUIRE((blk - MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("balanced fundamental maps to a DC direct component") {
    HarmonicSet h(4, 50.0);
    const double vrms = 230.0;
    const double amp = std::sqrt(2.0) * vrms;
    SpectralVector v(h, 3);
    for (int p = 0; p < 3; ++p) {
        const Complex c = 0.5 * amp * std::exp(Complex(0.0, -2.0 * kPi * p / 3.0));
        v(1, p) = c;
        v(-1, p) = std::conj(c);
    }
    const SpectralVector dq = park_abc_to_dq_lift(h).apply(v);
    REQUIRE(std::abs(dq(0, 0) - Complex(kDqOfPhaseRms * vrms, 0.0)) < 1e-9);
    REQUIRE(std::abs(dq(0, 1)) < 1e-9);
    for (int hh = -4; hh <= 4; ++hh) {
        if (hh == 0) continue;
        REQUIRE(std::abs(dq(hh, 0)) < 1e-9);
        REQUIRE(std::abs(dq(hh, 1)) < 1e-9);
    }
}

TEST_CASE("positive sequence harmonic h maps to DQ frequency h-1") {
    HarmonicSet h(6, 50.0);
    SpectralVector v(h, 3);
    for (int p = 0; p < 3; ++p) {
        const Complex c = 0.5 * std::exp(Complex(0.0, -5.0 * 2.0 * kPi * p / 3.0));
        v(5, p) = c;  // harmonic 5 with phase rotation of a time-shifted waveform
        v(-5, p) = std::conj(c);
    }
    const SpectralVector dq = park_abc_to_dq_lift(h).apply(v);
    // h=5 with -h*2pi p/3 shifts is a negative-sequence set; lands at 5+1 = 6
    double total = 0.0;
    for (int hh = -6; hh <= 6; ++hh) total += std::abs(dq(hh, 0)) + std::abs(dq(hh, 1));
    const double at6 = std::abs(dq(6, 0)) + std::abs(dq(6, 1)) + std::abs(dq(-6, 0)) +
                       std::abs(dq(-6, 1));
    REQUIRE(at6 == Approx(total).epsilon(1e-9));
}

TEST_CASE("fortescue sequence to phase") {
    // equal sequences diagonalise to z1 * I
    const Complex z(0.162, 0.0823);
    const MatrixXcd eq = sequence_to_phase_matrix(z, z, z);
    REQUIRE((eq - z * MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
    // distinct zero sequence: symmetric with (z0+2z1)/3 diagonal
    const Complex z0(0.529, 0.3723);
    const MatrixXcd m = sequence_to_phase_matrix(z0, z, z);
    REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(std::abs(m(0, 0) - (z0 + 2.0 * z) / 3.0) < 1e-14);
    REQUIRE(std::abs(m(0, 1) - (z0 - z) / 3.0) < 1e-14);
}

#include <catch2/catch_amalgamated.hpp>

#include "hpfx/spectral.hpp"
#include "oracles.hpp"

using namespace hpfx;
using Catch::Approx;

TEST_CASE("harmonic set basics") {
    HarmonicSet h(3, 50.0);
    REQUIRE(h.size() == 7);
    REQUIRE(h.index(-3) == 0);
    REQUIRE(h.index(3) == 6);
    REQUIRE(h.freq(2) == Approx(100.0));
    REQUIRE_THROWS_AS(HarmonicSet(-1, 50.0), ValidationError);
}

TEST_CASE("spectral vector ordering round trip") {
    HarmonicSet h(2, 50.0);
    SpectralVector v(h, 3);
    for (int hh = -2; hh <= 2; ++hh)
        for (int c = 0; c < 3; ++c) v(hh, c) = Complex(hh, c);
    const SpectralVector w = v.with_ordering(Ordering::ChannelMajor);
    REQUIRE(w(1, 2) == v(1, 2));
    const SpectralVector back = w.with_ordering(Ordering::HarmonicMajor);
    REQUIRE((back.coeffs() - v.coeffs()).norm() == 0.0);
    REQUIRE_THROWS_AS(v + w, IncompatibilityError);
}

TEST_CASE("constant matrix lifts to block diagonal") {
    HarmonicSet h(1, 50.0);
    FourierBlocks blocks{{0, MatrixXcd::Identity(2, 2)}};
    const auto op = lift_ltp_matrix(blocks, h);
    REQUIRE(op.realized().rows() == 6);
    REQUIRE((op.realized() - MatrixXcd::Identity(6, 6)).norm() == 0.0);
}

TEST_CASE("pure cosine modulation lifts to first off-diagonals") {
    HarmonicSet h(1, 50.0);
    MatrixXcd m = oracles::random_matrix(2, 2);
    FourierBlocks blocks{{1, m}, {-1, m.conjugate()}};
    const auto op = lift_ltp_matrix(blocks, h);
    // block (i,j) holds coefficient h_i - h_j
    for (int hi = -1; hi <= 1; ++hi)
        for (int hj = -1; hj <= 1; ++hj) {
            const MatrixXcd blk = op.block(hi, hj);
            if (hi - hj == 1)
                REQUIRE((blk - m).norm() == 0.0);
            else if (hi - hj == -1)
                REQUIRE((blk - m.conjugate()).norm() == 0.0);
            else
                REQUIRE(blk.norm() == 0.0);
        }
}

TEST_CASE("lift rejects mismatched block shapes") {
    HarmonicSet h(1, 50.0);
    FourierBlocks blocks{{0, MatrixXcd::Identity(2, 2)}, {1, MatrixXcd::Identity(3, 3)}};
    REQUIRE_THROWS_AS(lift_ltp_matrix(blocks, h), ShapeError);
}

TEST_CASE("lifted apply matches the sampled time-domain product") {
    // random LTP matrix with 3 harmonics, signal within |h| <= h_max/2
    HarmonicSet h(8, 50.0);
    for (int trial = 0; trial < 5; ++trial) {
        const FourierBlocks blocks = oracles::random_real_ltp(3, 3, {0, 1, 3});
        const SpectralVector x = oracles::random_conjugate_symmetric(h, 3, 4);
        const SpectralVector got = lift_ltp_matrix(blocks, h).apply(x);
        const SpectralVector want = oracles::time_domain_product(blocks, x);
        const double scale = std::max(1e-12, inf_norm(want));
        REQUIRE(inf_norm(got - want) / scale < 1e-10);
    }
}

TEST_CASE("identity and zero operators") {
    HarmonicSet h(2, 50.0);
    const SpectralVector x = oracles::random_conjugate_symmetric(h, 2, 2);
    REQUIRE(inf_norm(ToeplitzOperator::identity(h, 2).apply(x) - x) == 0.0);
    REQUIRE(inf_norm(ToeplitzOperator::zero(h, 2, 2).apply(x)) == 0.0);
}

TEST_CASE("cosine modulation splits a fundamental tone") {
    // cos(2 pi f1 t) * cos(2 pi f1 t) = 1/2 + 1/2 cos(2 w t)
    HarmonicSet h(2, 50.0);
    FourierBlocks cosblk{{1, MatrixXcd::Constant(1, 1, 0.5)},
                         {-1, MatrixXcd::Constant(1, 1, 0.5)}};
    SpectralVector tone(h, 1);
    tone(1, 0) = 0.5;
    tone(-1, 0) = 0.5;
    const SpectralVector y = lift_ltp_matrix(cosblk, h).apply(tone);
    REQUIRE(std::abs(y(0, 0) - Complex(0.5, 0.0)) < 1e-15);
    REQUIRE(std::abs(y(2, 0) - Complex(0.25, 0.0)) < 1e-15);
    REQUIRE(std::abs(y(-2, 0) - Complex(0.25, 0.0)) < 1e-15);
    REQUIRE(std::abs(y(1, 0)) < 1e-15);
}

TEST_CASE("apply rejects incompatible vectors") {
    HarmonicSet h(2, 50.0), h2(3, 50.0);
    const auto op = ToeplitzOperator::identity(h, 2);
    REQUIRE_THROWS_AS(op.apply(SpectralVector(h2, 2)), IncompatibilityError);
    REQUIRE_THROWS_AS(op.apply(SpectralVector(h, 3)), IncompatibilityError);
    REQUIRE_THROWS_AS(op.apply(SpectralVector(h, 2, Ordering::ChannelMajor)),
                      IncompatibilityError);
}

TEST_CASE("infinity norm") {
    MatrixXcd m(2, 2);
    m << Complex(1, 0), Complex(-2, 0), Complex(0.5, 0), Complex(0, 0);
    REQUIRE(inf_norm(m) == Approx(3.0));
    REQUIRE(inf_norm(MatrixXcd(MatrixXcd::Identity(7, 7))) == Approx(1.0));
    const MatrixXcd r = oracles::random_matrix(20, 20);
    double brute = 0.0;
    for (int i = 0; i < 20; ++i) {
        double row = 0.0;
        for (int j = 0; j < 20; ++j) row += std::abs(r(i, j));
        brute = std::max(brute, row);
    }
    REQUIRE(inf_norm(r) == Approx(brute));
}

TEST_CASE("inf norm is submultiplicative on realized operators") {
    HarmonicSet h(2, 50.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = lift_ltp_matrix(oracles::random_real_ltp(2, 2, {0, 1}), h);
        const auto b = lift_ltp_matrix(oracles::random_real_ltp(2, 2, {0, 2}), h);
        REQUIRE(inf_norm((a * b).realized()) <=
                inf_norm(a.realized()) * inf_norm(b.realized()) + 1e-12);
    }
}

TEST_CASE("lift is additive and multiplicative within truncation-safe support") {
    HarmonicSet h(6, 50.0);
    const FourierBlocks a = oracles::random_real_ltp(2, 2, {0, 1});
    const FourierBlocks b = oracles::random_real_ltp(2, 2, {0, 2});
    FourierBlocks sum = a;
    for (const auto& [k, blk] : b) {
        if (sum.count(k))
            sum[k] += blk;
        else
            sum[k] = blk;
    }
    REQUIRE((lift_ltp_matrix(sum, h).realized() -
             (lift_ltp_matrix(a, h) + lift_ltp_matrix(b, h)).realized())
                .norm() < 1e-12);

    // product: support of a*b is {-3..3}; exact on signals within |h| <= 3
    const SpectralVector x = oracles::random_conjugate_symmetric(h, 2, 3);
    FourierBlocks prod;  // convolution of block maps
    for (const auto& [ka, ba] : a)
        for (const auto& [kb, bb] : b) {
            const int k = ka + kb;
            if (prod.count(k))
                prod[k] += ba * bb;
            else
                prod[k] = ba * bb;
        }
    const SpectralVector lhs = lift_ltp_matrix(prod, h).apply(x);
    const SpectralVector rhs = (lift_ltp_matrix(a, h) * lift_ltp_matrix(b, h)).apply(x);
    REQUIRE(inf_norm(lhs - rhs) / std::max(1.0, inf_norm(lhs)) < 1e-12);
}

TEST_CASE("real LTP operators preserve conjugate symmetry") {
    HarmonicSet h(5, 50.0);
    for (int trial = 0; trial < 5; ++trial) {
        const auto op = lift_ltp_matrix(oracles::random_real_ltp(3, 3, {0, 1, 2}), h);
        const SpectralVector x = oracles::random_conjugate_symmetric(h, 3, 5);
        REQUIRE(op.apply(x).conjugate_symmetry_defect() < 1e-12);
    }
}

TEST_CASE("conjugate symmetrize") {
    HarmonicSet h(2, 50.0);
    SpectralVector x(h, 1);
    x(1, 0) = Complex(1.0, 1.0);
    x(-1, 0) = Complex(0.0, 0.0);
    const SpectralVector y = conjugate_symmetrize(x);
    REQUIRE(y(1, 0) == Complex(0.5, 0.5));
    REQUIRE(y(-1, 0) == Complex(0.5, -0.5));
    // idempotent, keeps symmetric inputs, zero maps to zero
    REQUIRE(inf_norm(conjugate_symmetrize(y) - y) == 0.0);
    const SpectralVector sym = oracles::random_conjugate_symmetric(h, 2, 2);
    REQUIRE(inf_norm(conjugate_symmetrize(sym) - sym) < 1e-15);
    REQUIRE(inf_norm(conjugate_symmetrize(SpectralVector(h, 2))) == 0.0);
}

TEST_CASE("dft bin recovers constructed coefficients") {
    const int n = 1024;
    std::vector<double> s(n);
    for (int k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / n;
        s[k] = 0.3 + std::cos(2.0 * kPi * t) + 0.25 * std::sin(2.0 * kPi * 5 * t);
    }
    REQUIRE(std::abs(dft_bin(s, 0) - Complex(0.3, 0.0)) < 1e-12);
    REQUIRE(std::abs(dft_bin(s, 1) - Complex(0.5, 0.0)) < 1e-12);
    REQUIRE(std::abs(dft_bin(s, 5) - Complex(0.0, -0.125)) < 1e-12);
}

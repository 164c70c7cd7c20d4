#pragma once

// Harmonic-domain algebra: Fourier-coefficient vectors of periodic polyphase
// signals, block-Toeplitz lifts of linear time-periodic matrices, and the
// norms / symmetry projections used by the fixed-point solver.

#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "hpfx/errors.hpp"

namespace hpfx {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

// Harmonic index set H = {-h_max, ..., +h_max} against fundamental f1.
struct HarmonicSet {
    int h_max = 0;
    double f1 = 50.0;

    HarmonicSet() = default;
    HarmonicSet(int h_max_, double f1_) : h_max(h_max_), f1(f1_) {
        if (h_max < 0) throw ValidationError("HarmonicSet: h_max must be nonnegative");
        if (f1 <= 0.0) throw ValidationError("HarmonicSet: f1 must be positive");
    }

    int size() const { return 2 * h_max + 1; }
    int index(int h) const { return h + h_max; }
    int harmonic(int idx) const { return idx - h_max; }
    bool contains(int h) const { return h >= -h_max && h <= h_max; }
    double freq(int h) const { return h * f1; }
    double omega(int h) const { return 2.0 * kPi * h * f1; }
    double period() const { return 1.0 / f1; }

    bool operator==(const HarmonicSet& o) const { return h_max == o.h_max && f1 == o.f1; }
    bool operator!=(const HarmonicSet& o) const { return !(*this == o); }
};

// Memory layout of a spectral vector with C channels over H.
//   HarmonicMajor: channels contiguous within each harmonic block,
//                  idx = (h + h_max)*C + c   (the paper's "grid" sorting)
//   ChannelMajor:  harmonics contiguous within each channel block,
//                  idx = c*|H| + (h + h_max)
enum class Ordering { HarmonicMajor, ChannelMajor };

inline const char* to_string(Ordering o) {
    return o == Ordering::HarmonicMajor ? "harmonic-major" : "channel-major";
}

// Column of Fourier coefficients of a periodic signal with `channels` scalar
// components. A real-valued time signal has coeff(-h) = conj(coeff(h)).
class SpectralVector {
  public:
    SpectralVector() = default;
    SpectralVector(HarmonicSet h, int channels, Ordering ord = Ordering::HarmonicMajor)
        : harmonics_(h), channels_(channels), ordering_(ord),
          coeffs_(VectorXcd::Zero(static_cast<Eigen::Index>(channels) * h.size())) {
        if (channels <= 0) throw ValidationError("SpectralVector: channels must be positive");
    }
    SpectralVector(HarmonicSet h, int channels, VectorXcd coeffs,
                   Ordering ord = Ordering::HarmonicMajor)
        : harmonics_(h), channels_(channels), ordering_(ord), coeffs_(std::move(coeffs)) {
        if (channels <= 0) throw ValidationError("SpectralVector: channels must be positive");
        if (coeffs_.size() != static_cast<Eigen::Index>(channels) * h.size())
            throw ShapeError("SpectralVector: coefficient length does not match channels*|H|");
    }

    const HarmonicSet& harmonics() const { return harmonics_; }
    int channels() const { return channels_; }
    Ordering ordering() const { return ordering_; }
    Eigen::Index size() const { return coeffs_.size(); }
    const VectorXcd& coeffs() const { return coeffs_; }
    VectorXcd& coeffs() { return coeffs_; }

    Eigen::Index flat_index(int h, int ch) const {
        if (!harmonics_.contains(h)) throw IncompatibilityError("SpectralVector: harmonic out of range");
        if (ch < 0 || ch >= channels_) throw IncompatibilityError("SpectralVector: channel out of range");
        if (ordering_ == Ordering::HarmonicMajor)
            return static_cast<Eigen::Index>(harmonics_.index(h)) * channels_ + ch;
        return static_cast<Eigen::Index>(ch) * harmonics_.size() + harmonics_.index(h);
    }

    Complex operator()(int h, int ch) const { return coeffs_(flat_index(h, ch)); }
    Complex& operator()(int h, int ch) { return coeffs_(flat_index(h, ch)); }

    SpectralVector with_ordering(Ordering target) const {
        if (target == ordering_) return *this;
        SpectralVector out(harmonics_, channels_, target);
        for (int h = -harmonics_.h_max; h <= harmonics_.h_max; ++h)
            for (int c = 0; c < channels_; ++c) out(h, c) = (*this)(h, c);
        return out;
    }

    // Time-domain value x(t) = sum_h X_h exp(j h w1 t).
    VectorXcd time_value(double t) const {
        VectorXcd v = VectorXcd::Zero(channels_);
        for (int h = -harmonics_.h_max; h <= harmonics_.h_max; ++h) {
            const Complex rot = std::exp(Complex(0.0, harmonics_.omega(h) * t));
            for (int c = 0; c < channels_; ++c) v(c) += (*this)(h, c) * rot;
        }
        return v;
    }

    double conjugate_symmetry_defect() const {
        double worst = 0.0;
        for (int h = 0; h <= harmonics_.h_max; ++h)
            for (int c = 0; c < channels_; ++c)
                worst = std::max(worst, std::abs((*this)(h, c) - std::conj((*this)(-h, c))));
        return worst;
    }

    friend SpectralVector operator+(const SpectralVector& a, const SpectralVector& b) {
        a.require_compatible(b);
        return SpectralVector(a.harmonics_, a.channels_, a.coeffs_ + b.coeffs_, a.ordering_);
    }
    friend SpectralVector operator-(const SpectralVector& a, const SpectralVector& b) {
        a.require_compatible(b);
        return SpectralVector(a.harmonics_, a.channels_, a.coeffs_ - b.coeffs_, a.ordering_);
    }
    friend SpectralVector operator*(Complex s, const SpectralVector& a) {
        return SpectralVector(a.harmonics_, a.channels_, s * a.coeffs_, a.ordering_);
    }

    void require_compatible(const SpectralVector& o) const {
        if (harmonics_ != o.harmonics_)
            throw IncompatibilityError("SpectralVector: harmonic sets differ");
        if (channels_ != o.channels_)
            throw IncompatibilityError("SpectralVector: channel counts differ");
        if (ordering_ != o.ordering_)
            throw IncompatibilityError("SpectralVector: orderings differ");
    }

  private:
    HarmonicSet harmonics_;
    int channels_ = 1;
    Ordering ordering_ = Ordering::HarmonicMajor;
    VectorXcd coeffs_;
};

// Induced infinity norm: max over rows of the sum of entry magnitudes.
inline double inf_norm(const MatrixXcd& m) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) row += std::abs(m(i, j));
        worst = std::max(worst, row);
    }
    return worst;
}

inline double inf_norm(const VectorXcd& v) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(v(i)));
    return worst;
}

inline double inf_norm(const SpectralVector& v) { return inf_norm(v.coeffs()); }

// Infinity norm of the real representation [[Re,-Im],[Im,Re]]; used to report
// the stacked-real variant of the contraction certificate alongside the
// complex induced norm.
inline double inf_norm_real_stacked(const MatrixXcd& m) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row += std::abs(m(i, j).real()) + std::abs(m(i, j).imag());
        worst = std::max(worst, row);
    }
    return worst;
}

// Projection onto the conjugate-symmetric subspace (real time signals):
// coeff(h) and coeff(-h) are replaced by their average under conjugation.
inline SpectralVector conjugate_symmetrize(const SpectralVector& x) {
    SpectralVector out = x;
    const int hmax = x.harmonics().h_max;
    for (int h = 1; h <= hmax; ++h) {
        for (int c = 0; c < x.channels(); ++c) {
            const Complex avg = 0.5 * (x(h, c) + std::conj(x(-h, c)));
            out(h, c) = avg;
            out(-h, c) = std::conj(avg);
        }
    }
    for (int c = 0; c < x.channels(); ++c) out(0, c) = Complex(x(0, c).real(), 0.0);
    return out;
}

// Fourier-coefficient blocks of a periodic matrix: k -> M_k, with
// M(t) = sum_k M_k exp(j k w1 t). Real M(t) implies M_{-k} = conj(M_k).
using FourierBlocks = std::map<int, MatrixXcd>;

inline MatrixXcd fourier_time_value(const FourierBlocks& blocks, double t, double f1) {
    if (blocks.empty()) throw ShapeError("fourier_time_value: no blocks");
    const auto& first = blocks.begin()->second;
    MatrixXcd m = MatrixXcd::Zero(first.rows(), first.cols());
    for (const auto& [k, blk] : blocks)
        m += blk * std::exp(Complex(0.0, 2.0 * kPi * k * f1 * t));
    return m;
}

// Block-Toeplitz realization of an LTP matrix over H: entry block (i,j) holds
// the Fourier coefficient of order h_i - h_j, truncated to the lifted window.
// Frequency-diagonal operators (grid matrices evaluated per f_h) share the
// same realized-dense representation.
class ToeplitzOperator {
  public:
    ToeplitzOperator() = default;

    static ToeplitzOperator from_fourier_blocks(const FourierBlocks& blocks,
                                                const HarmonicSet& h) {
        if (blocks.empty()) throw ShapeError("lift: empty block map");
        const Eigen::Index r = blocks.begin()->second.rows();
        const Eigen::Index c = blocks.begin()->second.cols();
        bool truncated = false;
        for (const auto& [k, blk] : blocks) {
            if (blk.rows() != r || blk.cols() != c)
                throw ShapeError("lift: Fourier blocks have mismatched dimensions");
            if (std::abs(k) > 2 * h.h_max) truncated = true;
        }
        ToeplitzOperator op;
        op.harmonics_ = h;
        op.rows_ = static_cast<int>(r);
        op.cols_ = static_cast<int>(c);
        op.truncated_ = truncated;
        op.m_ = MatrixXcd::Zero(r * h.size(), c * h.size());
        for (int hi = -h.h_max; hi <= h.h_max; ++hi) {
            for (int hj = -h.h_max; hj <= h.h_max; ++hj) {
                auto it = blocks.find(hi - hj);
                if (it == blocks.end()) continue;
                op.m_.block(h.index(hi) * r, h.index(hj) * c, r, c) = it->second;
            }
        }
        return op;
    }

    // Frequency-wise block diagonal: block at harmonic h is eval(f_h).
    static ToeplitzOperator from_frequency_response(
        const std::function<MatrixXcd(double)>& eval, const HarmonicSet& h) {
        MatrixXcd first = eval(h.freq(-h.h_max));
        ToeplitzOperator op;
        op.harmonics_ = h;
        op.rows_ = static_cast<int>(first.rows());
        op.cols_ = static_cast<int>(first.cols());
        op.m_ = MatrixXcd::Zero(op.rows_ * h.size(), op.cols_ * h.size());
        for (int hh = -h.h_max; hh <= h.h_max; ++hh) {
            MatrixXcd blk = (hh == -h.h_max) ? first : eval(h.freq(hh));
            if (blk.rows() != op.rows_ || blk.cols() != op.cols_)
                throw ShapeError("frequency response blocks have mismatched dimensions");
            op.m_.block(h.index(hh) * op.rows_, h.index(hh) * op.cols_, op.rows_, op.cols_) = blk;
        }
        return op;
    }

    static ToeplitzOperator from_realized(MatrixXcd m, const HarmonicSet& h, int rows, int cols,
                                          bool truncated = true) {
        if (m.rows() != static_cast<Eigen::Index>(rows) * h.size() ||
            m.cols() != static_cast<Eigen::Index>(cols) * h.size())
            throw ShapeError("from_realized: matrix does not match rows/cols*|H|");
        ToeplitzOperator op;
        op.harmonics_ = h;
        op.rows_ = rows;
        op.cols_ = cols;
        op.truncated_ = truncated;
        op.m_ = std::move(m);
        return op;
    }

    static ToeplitzOperator identity(const HarmonicSet& h, int n) {
        return from_realized(MatrixXcd::Identity(n * h.size(), n * h.size()), h, n, n, false);
    }
    static ToeplitzOperator zero(const HarmonicSet& h, int rows, int cols) {
        return from_realized(MatrixXcd::Zero(rows * h.size(), cols * h.size()), h, rows, cols,
                             false);
    }

    const HarmonicSet& harmonics() const { return harmonics_; }
    int rows_per_harmonic() const { return rows_; }
    int cols_per_harmonic() const { return cols_; }
    bool truncated() const { return truncated_; }
    const MatrixXcd& realized() const { return m_; }

    Eigen::Block<const MatrixXcd> block(int hi, int hj) const {
        return m_.block(harmonics_.index(hi) * rows_, harmonics_.index(hj) * cols_, rows_, cols_);
    }

    // Truncated convolution with a spectral vector; equals the dense
    // matrix-vector product of the realization.
    SpectralVector apply(const SpectralVector& x) const {
        if (x.harmonics() != harmonics_)
            throw IncompatibilityError("apply: harmonic sets differ");
        if (x.channels() != cols_)
            throw IncompatibilityError("apply: operator columns do not match vector channels");
        if (x.ordering() != Ordering::HarmonicMajor)
            throw IncompatibilityError("apply: operator expects harmonic-major ordering");
        return SpectralVector(harmonics_, rows_, m_ * x.coeffs(), Ordering::HarmonicMajor);
    }

    friend ToeplitzOperator operator*(const ToeplitzOperator& a, const ToeplitzOperator& b) {
        if (a.harmonics_ != b.harmonics_)
            throw IncompatibilityError("compose: harmonic sets differ");
        if (a.cols_ != b.rows_) throw ShapeError("compose: inner dimensions differ");
        return from_realized(a.m_ * b.m_, a.harmonics_, a.rows_, b.cols_, true);
    }
    friend ToeplitzOperator operator+(const ToeplitzOperator& a, const ToeplitzOperator& b) {
        if (a.harmonics_ != b.harmonics_ || a.rows_ != b.rows_ || a.cols_ != b.cols_)
            throw IncompatibilityError("add: operator shapes differ");
        return from_realized(a.m_ + b.m_, a.harmonics_, a.rows_, a.cols_,
                             a.truncated_ || b.truncated_);
    }
    friend ToeplitzOperator operator-(const ToeplitzOperator& a, const ToeplitzOperator& b) {
        if (a.harmonics_ != b.harmonics_ || a.rows_ != b.rows_ || a.cols_ != b.cols_)
            throw IncompatibilityError("sub: operator shapes differ");
        return from_realized(a.m_ - b.m_, a.harmonics_, a.rows_, a.cols_,
                             a.truncated_ || b.truncated_);
    }

  private:
    HarmonicSet harmonics_;
    int rows_ = 0, cols_ = 0;
    bool truncated_ = false;
    MatrixXcd m_;
};

inline ToeplitzOperator lift_ltp_matrix(const FourierBlocks& blocks, const HarmonicSet& h) {
    return ToeplitzOperator::from_fourier_blocks(blocks, h);
}

inline SpectralVector apply(const ToeplitzOperator& op, const SpectralVector& x) {
    return op.apply(x);
}

// Synchronous DFT of N uniform samples over one period: coefficient of order h.
inline Complex dft_bin(const std::vector<double>& samples, int h) {
    const auto n = static_cast<double>(samples.size());
    Complex acc(0.0, 0.0);
    for (std::size_t k = 0; k < samples.size(); ++k)
        acc += samples[k] * std::exp(Complex(0.0, -2.0 * kPi * h * static_cast<double>(k) / n));
    return acc / n;
}

inline Complex dft_bin(const VectorXd& samples, int h) {
    const auto n = static_cast<double>(samples.size());
    Complex acc(0.0, 0.0);
    for (Eigen::Index k = 0; k < samples.size(); ++k)
        acc += samples(k) * std::exp(Complex(0.0, -2.0 * kPi * h * static_cast<double>(k) / n));
    return acc / n;
}

// Fourier blocks of a time-periodic matrix function, sampled over one period.
inline FourierBlocks fourier_blocks_of(const std::function<Eigen::MatrixXd(double)>& fn, int kmax,
                                       double f1, int nsamples = 4096) {
    const Eigen::MatrixXd first = fn(0.0);
    const auto r = first.rows();
    const auto c = first.cols();
    std::vector<Eigen::MatrixXd> samples(nsamples);
    const double T = 1.0 / f1;
    for (int s = 0; s < nsamples; ++s) samples[s] = fn(T * s / nsamples);
    FourierBlocks out;
    for (int k = -kmax; k <= kmax; ++k) {
        MatrixXcd blk = MatrixXcd::Zero(r, c);
        for (int s = 0; s < nsamples; ++s)
            blk += samples[s] *
                   std::exp(Complex(0.0, -2.0 * kPi * k * static_cast<double>(s) / nsamples));
        blk /= static_cast<double>(nsamples);
        if (blk.norm() > 1e-14 * std::max(1.0, first.norm())) out[k] = blk;
    }
    return out;
}

}  // namespace hpfx

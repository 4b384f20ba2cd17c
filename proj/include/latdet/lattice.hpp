#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latdet/constellation.hpp"

namespace latdet {

/// Thrown when a channel fails the full-rank check; simulation callers
/// redraw the channel.
struct SingularChannelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Complex MIMO channel, n_rx x n_tx, full column rank assumed.
struct ComplexChannel {
    Eigen::MatrixXcd entries;

    explicit ComplexChannel(Eigen::MatrixXcd m) : entries(std::move(m)) {
        if (entries.cols() < 1 || entries.rows() < entries.cols()) {
            throw std::invalid_argument("ComplexChannel: need n_rx >= n_tx >= 1, got " +
                                        std::to_string(entries.rows()) + "x" +
                                        std::to_string(entries.cols()));
        }
        if (!entries.allFinite()) {
            throw std::invalid_argument("ComplexChannel: entries must be finite");
        }
    }

    Eigen::Index n_rx() const { return entries.rows(); }
    Eigen::Index n_tx() const { return entries.cols(); }
};

/// Real-valued lattice model obtained by stacking real and imaginary parts.
struct RealSystem {
    Eigen::MatrixXd h_real;  // 2*n_rx x n_s, blocks [[Re(H), -Im(H)], [Im(H), Re(H)]]
    Eigen::VectorXd r_real;  // 2*n_rx, [Re(r); Im(r)]
    int n_s = 0;             // real search dimension, 2*n_tx
};

inline RealSystem complex_to_real_system(const ComplexChannel& channel,
                                         const Eigen::VectorXcd& received) {
    const Eigen::Index m = channel.n_rx();
    const Eigen::Index n = channel.n_tx();
    if (received.size() != m) {
        throw std::invalid_argument("complex_to_real_system: received length " +
                                    std::to_string(received.size()) + " does not match n_rx " +
                                    std::to_string(m));
    }
    if (!received.allFinite()) {
        throw std::invalid_argument("complex_to_real_system: received vector must be finite");
    }
    RealSystem sys;
    sys.n_s = static_cast<int>(2 * n);
    sys.h_real.resize(2 * m, 2 * n);
    sys.h_real.topLeftCorner(m, n) = channel.entries.real();
    sys.h_real.topRightCorner(m, n) = -channel.entries.imag();
    sys.h_real.bottomLeftCorner(m, n) = channel.entries.imag();
    sys.h_real.bottomRightCorner(m, n) = channel.entries.real();
    sys.r_real.resize(2 * m);
    sys.r_real.head(m) = received.real();
    sys.r_real.tail(m) = received.imag();
    return sys;
}

/// QR factors of the real channel matrix. r_upper has a strictly positive
/// diagonal and exact zeros below it; perm[i] is the original column placed
/// at position i (identity for the unsorted decomposition).
struct QRFactorization {
    Eigen::MatrixXd q;        // 2*n_rx x n_s, orthonormal columns
    Eigen::MatrixXd r_upper;  // n_s x n_s
    std::vector<int> perm;
};

namespace detail {

inline void require_full_rank(const Eigen::MatrixXd& h) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || !(s(s.size() - 1) > 1e-12 * s(0))) {
        throw SingularChannelError("singular channel: smallest singular value below rank tolerance");
    }
}

}  // namespace detail

/// Householder QR with the diagonal of R sign-normalized to be strictly
/// positive (rows of R and columns of Q flip together).
inline QRFactorization qr_decompose(const RealSystem& system) {
    detail::require_full_rank(system.h_real);
    const int n = system.n_s;
    const Eigen::Index m = system.h_real.rows();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(system.h_real);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    r.triangularView<Eigen::Upper>() = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i) {
        if (r(i, i) == 0.0) {
            throw SingularChannelError("singular channel: zero pivot in QR");
        }
        if (r(i, i) < 0.0) {
            r.row(i).tail(n - i) *= -1.0;
            q.col(i) *= -1.0;
        }
    }
    QRFactorization f;
    f.q = std::move(q);
    f.r_upper = std::move(r);
    f.perm.resize(static_cast<std::size_t>(n));
    std::iota(f.perm.begin(), f.perm.end(), 0);
    return f;
}

/// Sorted QR: modified Gram-Schmidt where each step picks the not-yet-processed
/// column with minimum residual norm, so the weakest dimensions are detected
/// last. One reorthogonalization sweep keeps Q orthonormal on ill-conditioned
/// inputs.
inline QRFactorization sorted_qr_decompose(const RealSystem& system) {
    detail::require_full_rank(system.h_real);
    const int n = system.n_s;
    QRFactorization f;
    f.q = system.h_real;
    f.r_upper = Eigen::MatrixXd::Zero(n, n);
    f.perm.resize(static_cast<std::size_t>(n));
    std::iota(f.perm.begin(), f.perm.end(), 0);
    for (int i = 0; i < n; ++i) {
        int k = i;
        double best = f.q.col(i).squaredNorm();
        for (int j = i + 1; j < n; ++j) {
            const double nj = f.q.col(j).squaredNorm();
            if (nj < best) {
                best = nj;
                k = j;
            }
        }
        if (k != i) {
            f.q.col(i).swap(f.q.col(k));
            std::swap(f.perm[static_cast<std::size_t>(i)], f.perm[static_cast<std::size_t>(k)]);
            if (i > 0) f.r_upper.col(i).head(i).swap(f.r_upper.col(k).head(i));
        }
        const double norm = f.q.col(i).norm();
        if (!(norm > 0.0)) {
            throw SingularChannelError("singular channel: zero pivot in sorted QR");
        }
        f.r_upper(i, i) = norm;
        f.q.col(i) /= norm;
        for (int j = i + 1; j < n; ++j) {
            const double s1 = f.q.col(i).dot(f.q.col(j));
            f.q.col(j) -= s1 * f.q.col(i);
            const double s2 = f.q.col(i).dot(f.q.col(j));
            f.q.col(j) -= s2 * f.q.col(i);
            f.r_upper(i, j) = s1 + s2;
        }
    }
    return f;
}

/// y = Q^T r, the reduced received vector of the upper-triangular model.
inline Eigen::VectorXd apply_qt(const QRFactorization& factors, const Eigen::VectorXd& received) {
    if (received.size() != factors.q.rows()) {
        throw std::invalid_argument("apply_qt: vector length " + std::to_string(received.size()) +
                                    " does not match Q rows " + std::to_string(factors.q.rows()));
    }
    return factors.q.transpose() * received;
}

/// Ratio of extreme singular values of the real channel matrix; +inf for a
/// numerically singular matrix.
inline double condition_number(const RealSystem& system) {
    if (!system.h_real.allFinite()) {
        throw std::invalid_argument("condition_number: matrix must be finite");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(system.h_real);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    if (smin == 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

/// Maps a vector detected on the column-permuted system back to the original
/// dimension order: entry i of the detected vector belongs to dimension perm[i].
inline std::vector<int> unpermute(const std::vector<int>& perm, const std::vector<int>& indices) {
    if (perm.size() != indices.size()) {
        throw std::invalid_argument("unpermute: permutation length mismatch");
    }
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out[static_cast<std::size_t>(perm[i])] = indices[i];
    }
    return out;
}

inline SymbolVector unpermute(const std::vector<int>& perm, const SymbolVector& s,
                              const PamAlphabet& alphabet) {
    return make_symbol_vector(unpermute(perm, s.indices), alphabet);
}

}  // namespace latdet

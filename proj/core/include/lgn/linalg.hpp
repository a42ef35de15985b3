#pragma once

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lgn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Eigenvalues of a real matrix. Non-real values come in adjacent conjugate
/// pairs (positive imaginary part first), ordered by real part then |imag|.
struct ComplexSpectrum {
    std::vector<Complex> values;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] double max_real() const;
};

/// Matrix exponential by scaling and squaring with a degree-13 Pade
/// approximant (lower degrees are used when the 1-norm allows it).
[[nodiscard]] Mat expm(const Mat& m);

/// Returns (exp(M), L(M, E)) where L is the Frechet derivative of expm at M in
/// direction E, read off the upper-right block of exp([[M, E], [0, M]]).
[[nodiscard]] std::pair<Mat, Mat> expm_frechet(const Mat& m, const Mat& e);

/// Adjoint of the Frechet derivative: the matrix B with <B, E> = <G, L(M, E)>
/// for every E. Equal to L(M^T, G).
[[nodiscard]] Mat expm_vjp(const Mat& m, const Mat& g);

/// All eigenvalues of a square real matrix via Hessenberg reduction and
/// shifted QR iteration to real Schur form.
[[nodiscard]] ComplexSpectrum eig(const Mat& m);

/// XY - YX.
[[nodiscard]] Mat commutator(const Mat& x, const Mat& y);

/// Frobenius inner product sum_ij A_ij B_ij.
[[nodiscard]] double frobenius_inner(const Mat& a, const Mat& b);

/// Throws DimensionError unless m is square; NumericError on non-finite entries.
void require_square_finite(const Mat& m, const char* what);

}  // namespace lgn

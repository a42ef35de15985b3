#include "lgn/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lgn/error.hpp"

namespace lgn {

namespace {

// Pade numerator coefficients b_k for degrees 3, 5, 7, 9, 13; the denominator
// uses the same coefficients with alternating sign on odd powers.
constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

// Largest 1-norm for which each degree meets double-precision backward error.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

double norm1(const Mat& m) {
    return m.cwiseAbs().colwise().sum().maxCoeff();
}

// U holds the odd part, V the even part: r(M) = (V - U)^{-1} (V + U).
template <std::size_t N>
void pade_low(const Mat& m, Mat& u, Mat& v, const std::array<double, N>& b) {
    const auto n = m.rows();
    const Mat id = Mat::Identity(n, n);
    const Mat m2 = m * m;
    Mat odd = b[1] * id;
    Mat even = b[0] * id;
    Mat power = id;
    for (std::size_t k = 2; k + 1 < N + 1; k += 2) {
        power = power * m2;
        even += b[k] * power;
        if (k + 1 < N) odd += b[k + 1] * power;
    }
    u = m * odd;
    v = even;
}

void pade13(const Mat& m, Mat& u, Mat& v) {
    const auto& b = kPade13;
    const auto n = m.rows();
    const Mat id = Mat::Identity(n, n);
    const Mat m2 = m * m;
    const Mat m4 = m2 * m2;
    const Mat m6 = m4 * m2;
    const Mat inner_u = b[13] * m6 + b[11] * m4 + b[9] * m2;
    u = m * (m6 * inner_u + b[7] * m6 + b[5] * m4 + b[3] * m2 + b[1] * id);
    const Mat inner_v = b[12] * m6 + b[10] * m4 + b[8] * m2;
    v = m6 * inner_v + b[6] * m6 + b[4] * m4 + b[2] * m2 + b[0] * id;
}

Mat expm_unchecked(const Mat& m) {
    const auto n = m.rows();
    if (n == 0) return Mat(0, 0);
    const double nrm = norm1(m);
    Mat u;
    Mat v;
    int squarings = 0;
    if (nrm <= kTheta3) {
        pade_low(m, u, v, kPade3);
    } else if (nrm <= kTheta5) {
        pade_low(m, u, v, kPade5);
    } else if (nrm <= kTheta7) {
        pade_low(m, u, v, kPade7);
    } else if (nrm <= kTheta9) {
        pade_low(m, u, v, kPade9);
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / kTheta13))));
        pade13(std::ldexp(1.0, -squarings) * m, u, v);
    }
    Mat result = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < squarings; ++k) result = result * result;
    if (!result.allFinite()) throw NumericError("expm: result is not finite (overflow)");
    return result;
}

std::string shape_of(const Mat& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

}  // namespace

double ComplexSpectrum::max_real() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& z : values) best = std::max(best, z.real());
    return best;
}

void require_square_finite(const Mat& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape_of(m));
    }
    if (!m.allFinite()) throw NumericError(std::string(what) + ": matrix has non-finite entries");
}

Mat expm(const Mat& m) {
    require_square_finite(m, "expm");
    return expm_unchecked(m);
}

std::pair<Mat, Mat> expm_frechet(const Mat& m, const Mat& e) {
    require_square_finite(m, "expm_frechet");
    require_square_finite(e, "expm_frechet");
    if (m.rows() != e.rows()) {
        throw DimensionError("expm_frechet: shape mismatch " + shape_of(m) + " vs " + shape_of(e));
    }
    const auto n = m.rows();
    const double e_norm = norm1(e);
    if (e_norm == 0.0) return {expm_unchecked(m), Mat::Zero(n, n)};

    // Balance the direction against M with a power-of-two factor so the block
    // norm (and hence the squaring count) is driven by M, and the scaling
    // itself is exact: L(M, cE) == c L(M, E) bitwise for c = 2^k.
    const double m_norm = std::max(norm1(m), 1.0);
    const int shift = static_cast<int>(std::lround(std::log2(m_norm / e_norm)));

    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = m;
    block.bottomRightCorner(n, n) = m;
    block.topRightCorner(n, n) = std::ldexp(1.0, shift) * e;
    const Mat big = expm_unchecked(block);
    return {big.topLeftCorner(n, n), std::ldexp(1.0, -shift) * big.topRightCorner(n, n)};
}

Mat expm_vjp(const Mat& m, const Mat& g) {
    if (m.rows() != g.rows() || m.cols() != g.cols()) {
        throw DimensionError("expm_vjp: shape mismatch " + shape_of(m) + " vs " + shape_of(g));
    }
    return expm_frechet(m.transpose(), g).second;
}

ComplexSpectrum eig(const Mat& m) {
    require_square_finite(m, "eig");
    const auto n = m.rows();
    ComplexSpectrum spec;
    if (n == 0) return spec;

    Eigen::RealSchur<Mat> schur(n);
    schur.setMaxIterations(100 * n);
    schur.compute(m, /*computeU=*/false);
    if (schur.info() != Eigen::Success) {
        std::ostringstream os;
        os << "eig: QR iteration did not converge within " << 100 * n << " sweeps for a "
           << shape_of(m) << " matrix (1-norm " << norm1(m) << ")";
        throw NumericError(os.str());
    }
    const Mat& t = schur.matrixT();

    constexpr double kPairTol = 1e-9;
    spec.values.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n;) {
        if (i + 1 < n && t(i + 1, i) != 0.0) {
            const double a = t(i, i);
            const double b = t(i, i + 1);
            const double c = t(i + 1, i);
            const double d = t(i + 1, i + 1);
            const double mid = 0.5 * (a + d);
            const double disc = 0.25 * (a - d) * (a - d) + b * c;
            if (disc < 0.0) {
                double im = std::sqrt(-disc);
                if (im <= kPairTol) im = 0.0;
                spec.values.emplace_back(mid, im);
                spec.values.emplace_back(mid, -im);
            } else {
                const double r = std::sqrt(disc);
                spec.values.emplace_back(mid + r, 0.0);
                spec.values.emplace_back(mid - r, 0.0);
            }
            i += 2;
        } else {
            spec.values.emplace_back(t(i, i), 0.0);
            i += 1;
        }
    }

    // Sort by real part, keeping each conjugate pair adjacent with the
    // positive imaginary part first.
    std::sort(spec.values.begin(), spec.values.end(), [](const Complex& x, const Complex& y) {
        if (x.real() != y.real()) return x.real() < y.real();
        if (std::abs(x.imag()) != std::abs(y.imag())) return std::abs(x.imag()) < std::abs(y.imag());
        return x.imag() > y.imag();
    });
    return spec;
}

Mat commutator(const Mat& x, const Mat& y) {
    if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
        throw DimensionError("commutator: shape mismatch " + shape_of(x) + " vs " + shape_of(y));
    }
    return x * y - y * x;
}

double frobenius_inner(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("frobenius_inner: shape mismatch " + shape_of(a) + " vs " +
                             shape_of(b));
    }
    return a.cwiseProduct(b).sum();
}

}  // namespace lgn

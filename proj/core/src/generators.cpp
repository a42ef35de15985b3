#include "lgn/generators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "lgn/error.hpp"

namespace lgn {

namespace {

Eigen::Index tri(int n) { return static_cast<Eigen::Index>(n) * (n - 1) / 2; }
Eigen::Index lower(int n) { return static_cast<Eigen::Index>(n) * (n + 1) / 2; }

// Offset of entry (i, j), i < j, in the row-major strict upper triangle.
Eigen::Index upper_index(int n, int i, int j) {
    return static_cast<Eigen::Index>(i) * n - static_cast<Eigen::Index>(i) * (i + 1) / 2 +
           (j - i - 1);
}

// Offset of entry (i, j), j <= i, in the row-major lower triangle.
Eigen::Index lower_index(int i, int j) { return static_cast<Eigen::Index>(i) * (i + 1) / 2 + j; }

Mat skew_from(const double* s, int n) {
    Mat out = Mat::Zero(n, n);
    Eigen::Index k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j, ++k) {
            out(i, j) = s[k];
            out(j, i) = -s[k];
        }
    }
    return out;
}

Mat lower_from(const double* l, int n, bool softplus_diag) {
    Mat out = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double raw = l[lower_index(i, j)];
            out(i, j) = (softplus_diag && i == j) ? softplus(raw) : raw;
        }
    }
    return out;
}

void require_variant(const GeneratorParams& p, Variant v, const char* what) {
    if (p.variant != v) {
        throw ConfigError(std::string(what) + ": expected variant " + std::string(to_string(v)) +
                          ", got " + std::string(to_string(p.variant)));
    }
}

void check_layout(const GeneratorParams& p) {
    if (p.n < 1) throw ConfigError("generator dimension must be >= 1");
    const int k = static_cast<int>(p.freqs.size());
    if (p.values.size() != raw_size(p.variant, p.n, k)) {
        throw ConfigError("generator " + std::string(to_string(p.variant)) + " with n=" +
                          std::to_string(p.n) + " expects " +
                          std::to_string(raw_size(p.variant, p.n, k)) + " raw values, got " +
                          std::to_string(p.values.size()));
    }
    if (!p.active.empty() && static_cast<Eigen::Index>(p.active.size()) != p.values.size()) {
        throw ConfigError("generator mask length does not match parameter count");
    }
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::FullA: return "FullA";
        case Variant::SkewDiag: return "SkewDiag";
        case Variant::TimeVaryingSD: return "TimeVaryingSD";
        case Variant::TimeVaryingFull: return "TimeVaryingFull";
        case Variant::ParametricLTV: return "ParametricLTV";
        case Variant::PortHamiltonian: return "PortHamiltonian";
    }
    return "unknown";
}

Variant variant_from_string(std::string_view name) {
    for (Variant v : {Variant::FullA, Variant::SkewDiag, Variant::TimeVaryingSD,
                      Variant::TimeVaryingFull, Variant::ParametricLTV, Variant::PortHamiltonian}) {
        if (to_string(v) == name) return v;
    }
    throw ConfigError("unknown generator variant '" + std::string(name) + "'");
}

bool is_time_invariant(Variant v) {
    return v == Variant::FullA || v == Variant::SkewDiag || v == Variant::PortHamiltonian;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inverse(double y) {
    if (!(y > 0.0)) throw ConfigError("softplus_inverse: argument must be positive");
    return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec fourier_features(double t, const std::vector<double>& freqs_hz) {
    if (freqs_hz.empty()) throw ConfigError("fourier_features: need at least one frequency");
    Vec out(2 * static_cast<Eigen::Index>(freqs_hz.size()));
    for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
        const double f = freqs_hz[k];
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw ConfigError("fourier_features: frequencies must be positive and finite");
        }
        const double angle = 2.0 * std::numbers::pi * f * t;
        out(2 * static_cast<Eigen::Index>(k)) = std::cos(angle);
        out(2 * static_cast<Eigen::Index>(k) + 1) = std::sin(angle);
    }
    return out;
}

std::vector<double> log_uniform_freqs(int k, double lo, double hi, std::uint64_t seed) {
    if (k < 1) throw ConfigError("log_uniform_freqs: count must be >= 1");
    if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) {
        throw ConfigError("log_uniform_freqs: need 0 < lo < hi");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(std::log10(lo), std::log10(hi));
    std::vector<double> out(static_cast<std::size_t>(k));
    for (auto& f : out) f = std::clamp(std::pow(10.0, u(rng)), lo, hi);
    std::sort(out.begin(), out.end());
    return out;
}

Eigen::Index raw_size(Variant v, int n, int k) {
    const Eigen::Index f = 2 * static_cast<Eigen::Index>(k) + 1;
    switch (v) {
        case Variant::FullA: return static_cast<Eigen::Index>(n) * n;
        case Variant::SkewDiag: return tri(n) + n;
        case Variant::TimeVaryingSD: return (tri(n) + n) * f;
        case Variant::TimeVaryingFull: return static_cast<Eigen::Index>(n) * n * f;
        case Variant::ParametricLTV: return 4;
        case Variant::PortHamiltonian: return tri(n) + 2 * lower(n);
    }
    return 0;
}

Eigen::Index param_count(const GeneratorParams& p) {
    if (p.active.empty()) return p.values.size();
    return static_cast<Eigen::Index>(std::count_if(p.active.begin(), p.active.end(),
                                                   [](std::uint8_t a) { return a != 0; }));
}

Mat assemble_from_features(const GeneratorParams& p, const Vec& features) {
    check_layout(p);
    const int n = p.n;
    const Eigen::Index f = p.feature_dim();
    if (features.size() != f) throw DimensionError("assemble_from_features: feature length mismatch");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
        p.values.data(), p.values.size() / f, f);
    const Vec z = w * features;
    switch (p.variant) {
        case Variant::TimeVaryingSD: {
            Mat a = skew_from(z.data(), n);
            for (int i = 0; i < n; ++i) a(i, i) = -softplus(z(tri(n) + i));
            return a;
        }
        case Variant::TimeVaryingFull: {
            Mat a(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) a(i, j) = z(static_cast<Eigen::Index>(i) * n + j);
            return a;
        }
        default:
            throw ConfigError("assemble_from_features: variant is not feature-based");
    }
}

namespace {

Vec features_with_bias(const GeneratorParams& p, double t) {
    const Vec phi = fourier_features(t, p.freqs);
    Vec out(phi.size() + 1);
    out << phi, 1.0;
    return out;
}

}  // namespace

Mat assemble(const GeneratorParams& p, double t) {
    check_layout(p);
    const int n = p.n;
    const double* v = p.values.data();
    switch (p.variant) {
        case Variant::FullA: {
            Mat a(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) a(i, j) = v[static_cast<Eigen::Index>(i) * n + j];
            return a;
        }
        case Variant::SkewDiag: {
            Mat a = skew_from(v, n);
            for (int i = 0; i < n; ++i) {
                const Eigen::Index idx = tri(n) + i;
                a(i, i) = p.is_active(idx) ? -softplus(v[idx]) : 0.0;
            }
            return a;
        }
        case Variant::TimeVaryingSD:
        case Variant::TimeVaryingFull:
            return assemble_from_features(p, features_with_bias(p, t));
        case Variant::ParametricLTV: {
            Mat a(2, 2);
            const double gamma = v[1] * (1.0 + v[2] * std::sin(v[3] * t));
            a << 0.0, 1.0, -v[0], -gamma;
            return a;
        }
        case Variant::PortHamiltonian: {
            const auto parts = port_hamiltonian_parts(p);
            return (parts.j - parts.d) * parts.p;
        }
    }
    throw ConfigError("assemble: unknown variant");
}

Vec assemble_vjp(const GeneratorParams& p, double t, const Mat& g) {
    check_layout(p);
    const int n = p.n;
    if (g.rows() != n || g.cols() != n) throw DimensionError("assemble_vjp: cotangent shape mismatch");
    Vec out = Vec::Zero(p.values.size());
    const double* v = p.values.data();
    switch (p.variant) {
        case Variant::FullA:
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out(static_cast<Eigen::Index>(i) * n + j) = g(i, j);
            break;
        case Variant::SkewDiag: {
            Eigen::Index k = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j, ++k) out(k) = g(i, j) - g(j, i);
            for (int i = 0; i < n; ++i) {
                const Eigen::Index idx = tri(n) + i;
                out(idx) = -g(i, i) * sigmoid(v[idx]);
            }
            break;
        }
        case Variant::TimeVaryingSD:
        case Variant::TimeVaryingFull: {
            const Vec feat = features_with_bias(p, t);
            const Eigen::Index f = feat.size();
            const Eigen::Index rows = p.values.size() / f;
            Vec gz(rows);
            if (p.variant == Variant::TimeVaryingSD) {
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                    w(v, rows, f);
                Eigen::Index k = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = i + 1; j < n; ++j, ++k) gz(k) = g(i, j) - g(j, i);
                for (int i = 0; i < n; ++i) {
                    const double zi = w.row(tri(n) + i).dot(feat);
                    gz(tri(n) + i) = -g(i, i) * sigmoid(zi);
                }
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) gz(static_cast<Eigen::Index>(i) * n + j) = g(i, j);
            }
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
                out.data(), rows, f);
            gw.noalias() = gz * feat.transpose();
            break;
        }
        case Variant::ParametricLTV: {
            const double s = std::sin(v[3] * t);
            const double c = std::cos(v[3] * t);
            out(0) = -g(1, 0);
            out(1) = -g(1, 1) * (1.0 + v[2] * s);
            out(2) = -g(1, 1) * v[1] * s;
            out(3) = -g(1, 1) * v[1] * v[2] * t * c;
            break;
        }
        case Variant::PortHamiltonian: {
            const auto parts = port_hamiltonian_parts(p);
            const Mat lower_d = lower_from(v + tri(n), n, false);
            const Mat lower_p = lower_from(v + tri(n) + lower(n), n, true);
            // A = (J - D) P.
            const Mat g_jd = g * parts.p.transpose();
            const Mat g_p = (parts.j - parts.d).transpose() * g;
            Eigen::Index k = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j, ++k) out(k) = g_jd(i, j) - g_jd(j, i);
            // D = L L^T, dL = (G_D + G_D^T) L with G_D = -g_jd.
            const Mat g_ld = -(g_jd + g_jd.transpose()) * lower_d;
            const Mat g_lp = (g_p + g_p.transpose()) * lower_p;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j <= i; ++j) {
                    out(tri(n) + lower_index(i, j)) = g_ld(i, j);
                    const Eigen::Index idx = tri(n) + lower(n) + lower_index(i, j);
                    out(idx) = (i == j) ? g_lp(i, j) * sigmoid(v[idx]) : g_lp(i, j);
                }
            }
            break;
        }
    }
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (!p.is_active(i)) out(i) = 0.0;
    return out;
}

Vec dissipation(const GeneratorParams& p, double t) {
    const Mat a = assemble(p, t);
    return -0.5 * (a + a.transpose()).diagonal();
}

PortHamiltonianParts port_hamiltonian_parts(const GeneratorParams& p) {
    require_variant(p, Variant::PortHamiltonian, "port_hamiltonian_parts");
    check_layout(p);
    const int n = p.n;
    const double* v = p.values.data();
    const Mat ld = lower_from(v + tri(n), n, false);
    const Mat lp = lower_from(v + tri(n) + lower(n), n, true);
    return {skew_from(v, n), ld * ld.transpose(), lp * lp.transpose()};
}

GeneratorParams init_params(Variant v, int n, std::uint64_t seed, const InitOptions& opt) {
    if (n < 1) throw ConfigError("init_params: dimension must be >= 1");
    if (opt.scale < 0.0) throw ConfigError("init_params: scale must be >= 0");
    GeneratorParams p;
    p.variant = v;
    p.n = n;
    p.seed = seed;
    if (v == Variant::TimeVaryingSD || v == Variant::TimeVaryingFull) {
        p.freqs = log_uniform_freqs(opt.fourier_k, opt.freq_lo, opt.freq_hi, seed);
    }
    if (v == Variant::ParametricLTV && n != 2) throw ConfigError("ParametricLTV is two-dimensional");
    const int k = static_cast<int>(p.freqs.size());
    p.values = Vec::Zero(raw_size(v, n, k));

    // Feature-model RNG stream is offset so the frequencies and weights are
    // not drawn from the same sequence.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](double mean) { return mean + opt.scale * normal(rng); };

    const double d_raw = softplus_inverse(opt.dissipation);
    switch (v) {
        case Variant::FullA:
            for (auto& x : p.values) x = draw(0.0);
            break;
        case Variant::SkewDiag:
            for (Eigen::Index i = 0; i < tri(n); ++i) p.values(i) = draw(opt.skew_offset);
            for (int i = 0; i < n; ++i) p.values(tri(n) + i) = draw(d_raw);
            break;
        case Variant::TimeVaryingSD:
        case Variant::TimeVaryingFull: {
            const Eigen::Index f = p.feature_dim();
            const Eigen::Index rows = p.values.size() / f;
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < f; ++c) {
                    double mean = 0.0;
                    if (c == f - 1 && v == Variant::TimeVaryingSD) {
                        mean = r < tri(n) ? opt.skew_offset : d_raw;
                    }
                    p.values(r * f + c) = draw(mean);
                }
            }
            break;
        }
        case Variant::ParametricLTV:
            // Unit-scale defaults perturbed by `scale`: w0^2, gamma0, gamma_amp, omega_d.
            p.values << draw(1.0), draw(opt.dissipation), draw(0.0), draw(1.0);
            break;
        case Variant::PortHamiltonian: {
            for (Eigen::Index i = 0; i < tri(n); ++i) p.values(i) = draw(opt.skew_offset);
            const double d_diag = std::sqrt(opt.dissipation);
            const double p_diag = softplus_inverse(1.0);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j <= i; ++j) {
                    p.values(tri(n) + lower_index(i, j)) = draw(i == j ? d_diag : 0.0);
                    p.values(tri(n) + lower(n) + lower_index(i, j)) = draw(i == j ? p_diag : 0.0);
                }
            }
            break;
        }
    }
    return p;
}

GeneratorParams masked_skew_diag(int n, const std::vector<int>& active_skew,
                                 const std::vector<int>& active_diag, const Vec& initial_values) {
    GeneratorParams p;
    p.variant = Variant::SkewDiag;
    p.n = n;
    p.values = Vec::Zero(raw_size(Variant::SkewDiag, n));
    if (initial_values.size() != p.values.size()) {
        throw ConfigError("masked_skew_diag: initial values have the wrong length");
    }
    p.active.assign(static_cast<std::size_t>(p.values.size()), 0);
    for (int s : active_skew) {
        if (s < 0 || s >= tri(n)) throw ConfigError("masked_skew_diag: skew index out of range");
        p.active[static_cast<std::size_t>(s)] = 1;
    }
    for (int d : active_diag) {
        if (d < 0 || d >= n) throw ConfigError("masked_skew_diag: diagonal index out of range");
        p.active[static_cast<std::size_t>(tri(n) + d)] = 1;
    }
    for (Eigen::Index i = 0; i < p.values.size(); ++i)
        p.values(i) = p.is_active(i) ? initial_values(i) : 0.0;
    return p;
}

GeneratorParams skew_diag_from_matrix(const Mat& a) {
    require_square_finite(a, "skew_diag_from_matrix");
    const int n = static_cast<int>(a.rows());
    GeneratorParams p;
    p.variant = Variant::SkewDiag;
    p.n = n;
    p.values = Vec::Zero(raw_size(Variant::SkewDiag, n));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) p.values(upper_index(n, i, j)) = 0.5 * (a(i, j) - a(j, i));
    for (int i = 0; i < n; ++i) p.values(tri(n) + i) = softplus_inverse(std::max(-a(i, i), 1e-12));
    return p;
}

GeneratorParams parametric_ltv(double w0_sq, double gamma0, double gamma_amp, double omega_d) {
    GeneratorParams p;
    p.variant = Variant::ParametricLTV;
    p.n = 2;
    p.values.resize(4);
    p.values << w0_sq, gamma0, gamma_amp, omega_d;
    return p;
}

GeneratorParams port_hamiltonian_from(const Mat& j, const Mat& d_factor, const Mat& p_factor) {
    const int n = static_cast<int>(j.rows());
    if (j.cols() != n || d_factor.rows() != n || d_factor.cols() != n || p_factor.rows() != n ||
        p_factor.cols() != n) {
        throw DimensionError("port_hamiltonian_from: all factors must be n x n");
    }
    GeneratorParams p;
    p.variant = Variant::PortHamiltonian;
    p.n = n;
    p.values = Vec::Zero(raw_size(Variant::PortHamiltonian, n));
    for (int i = 0; i < n; ++i)
        for (int c = i + 1; c < n; ++c) p.values(upper_index(n, i, c)) = j(i, c);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c <= i; ++c) {
            p.values(tri(n) + lower_index(i, c)) = d_factor(i, c);
            p.values(tri(n) + lower(n) + lower_index(i, c)) =
                i == c ? softplus_inverse(p_factor(i, c)) : p_factor(i, c);
        }
    }
    return p;
}

void to_json(nlohmann::json& j, const GeneratorParams& p) {
    j = nlohmann::json{{"variant", std::string(to_string(p.variant))},
                       {"n", p.n},
                       {"values", std::vector<double>(p.values.begin(), p.values.end())},
                       {"freqs", p.freqs},
                       {"seed", p.seed},
                       {"param_count", param_count(p)}};
    if (!p.active.empty()) {
        std::vector<int> mask(p.active.begin(), p.active.end());
        j["active"] = mask;
    }
}

void from_json(const nlohmann::json& j, GeneratorParams& p) {
    try {
        p.variant = variant_from_string(j.at("variant").get<std::string>());
        p.n = j.at("n").get<int>();
        const auto values = j.at("values").get<std::vector<double>>();
        p.values = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
        p.freqs = j.value("freqs", std::vector<double>{});
        p.seed = j.value("seed", std::uint64_t{0});
        p.active.clear();
        if (j.contains("active")) {
            for (int a : j.at("active").get<std::vector<int>>())
                p.active.push_back(static_cast<std::uint8_t>(a != 0));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("generator params: ") + e.what());
    }
    check_layout(p);
    if (!std::is_sorted(p.freqs.begin(), p.freqs.end()) ||
        std::any_of(p.freqs.begin(), p.freqs.end(), [](double f) { return !(f > 0.0); })) {
        throw ConfigError("generator params: freqs must be positive and ascending");
    }
}

GeneratorParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint '" + path + "': " + e.what());
    }
    return j.get<GeneratorParams>();
}

void save_params(const GeneratorParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out << nlohmann::json(p).dump(2) << '\n';
}

}  // namespace lgn

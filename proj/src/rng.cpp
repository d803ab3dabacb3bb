#include "polargrad/rng.hpp"

#include "polargrad/linalg.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace polargrad {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

std::uint64_t Rng::mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
    ++counter_;
    return mix(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    const auto index = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return index < n ? index : n - 1;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix out(rows, cols);
    for (double& v : out.data()) {
        v = rng.normal();
    }
    return out;
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    Matrix out(rows, cols);
    for (double& v : out.data()) {
        v = rng.uniform(lo, hi);
    }
    return out;
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < cols) {
        throw std::invalid_argument("random_orthonormal needs rows >= cols");
    }
    return qr_householder(gaussian_matrix(rows, cols, rng)).q;
}

Matrix matrix_with_spectrum(std::size_t rows, std::size_t cols, const std::vector<double>& sigma,
                            Rng& rng) {
    const std::size_t k = std::min(rows, cols);
    if (sigma.size() != k) {
        throw std::invalid_argument("matrix_with_spectrum: need min(rows, cols) singular values");
    }
    Matrix u = random_orthonormal(rows, k, rng);
    const Matrix v = random_orthonormal(cols, k, rng);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            u(i, j) *= sigma[j];
        }
    }
    return matmul_nt(u, v);
}

std::vector<double> geometric_spectrum(std::size_t k, double kappa) {
    std::vector<double> sigma(k, 1.0);
    if (k == 1) {
        return sigma;
    }
    const double log_kappa = std::log(kappa);
    for (std::size_t i = 0; i < k; ++i) {
        sigma[i] = std::exp(-log_kappa * static_cast<double>(i) / static_cast<double>(k - 1));
    }
    sigma.back() = 1.0 / kappa;
    return sigma;
}

}  // namespace polargrad

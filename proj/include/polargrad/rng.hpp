#pragma once

// Counter-based SplitMix64 streams. Draw i of a stream is mix(key + (i + 1) * golden),
// so a stream can be replayed or split without sharing state.

#include "polargrad/matrix.hpp"

#include <cstdint>

namespace polargrad {

class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal by the Box–Muller transform.
    double normal() noexcept;
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    static std::uint64_t mix(std::uint64_t z) noexcept;

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng);
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

/// Q with orthonormal columns (rows >= cols) from the QR of a Gaussian matrix.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng);

/// U diag(sigma) Vᵀ with Haar-like random U (rows x k) and V (cols x k), k = sigma.size() = min(rows, cols).
Matrix matrix_with_spectrum(std::size_t rows, std::size_t cols, const std::vector<double>& sigma,
                            Rng& rng);

/// Singular values spaced geometrically from 1 down to 1/kappa.
std::vector<double> geometric_spectrum(std::size_t k, double kappa);

}  // namespace polargrad

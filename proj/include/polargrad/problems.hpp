#pragma once

// Benchmark objectives: matrix quadratic regression, matrix logistic regression and
// masked low-rank matrix completion, with data generation and closed-form oracles.

#include "polargrad/matrix.hpp"
#include "polargrad/rng.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace polargrad {

inline constexpr const char* kGeneratorName = "splitmix64-boxmuller";

/// RNG stream ids, one per random object so that changing one draw never shifts another.
enum class Stream : std::uint64_t { A = 1, B = 2, C = 3, Init = 4, Batch = 5, Mask = 6, Factors = 7 };

struct QuadKappas {
    double kappa_h = 0.0;
    double kappa_grad = 0.0;
    std::optional<double> kappa_residual;  // empty when the residual vanishes
};

/// f(X) = ½‖AXB − C‖_F² with A (p×m), X (m×n), B (n×q), C (p×q).
class QuadRegProblem {
public:
    /// Standard Gaussian A, B, C. Regenerates with seed+1, seed+2, ... if a Gram matrix is singular.
    static QuadRegProblem make(std::size_t m, std::size_t n, std::size_t p, std::size_t q,
                               std::uint64_t seed);
    /// Throws std::invalid_argument if shapes disagree or AᵀA / BBᵀ is singular.
    QuadRegProblem(Matrix a, Matrix b, Matrix c, std::uint64_t seed = 0);

    std::size_t m() const { return a_.cols(); }
    std::size_t n() const { return b_.rows(); }
    std::size_t p() const { return a_.rows(); }
    std::size_t q() const { return b_.cols(); }
    std::uint64_t seed() const { return seed_; }
    int regenerations() const { return regenerations_; }

    const Matrix& a() const { return a_; }
    const Matrix& b() const { return b_; }
    const Matrix& c() const { return c_; }
    const Matrix& gram_a_inverse() const { return gram_a_inv_; }
    const Matrix& gram_b_inverse() const { return gram_b_inv_; }
    const Matrix& x_star() const { return x_star_; }
    double f_star() const { return f_star_; }

    /// E = AXB − C.
    Matrix residual(const Matrix& x) const;
    double loss(const Matrix& x) const;
    /// ∇f(X) = Aᵀ(AXB − C)Bᵀ.
    Matrix grad(const Matrix& x) const;
    /// f(X) − f★ evaluated as ½‖A(X − X★)B‖_F², free of cancellation.
    double gap(const Matrix& x) const;

    double lipschitz() const { return lipschitz_; }
    double strong_convexity() const { return mu_; }
    double kappa_hessian() const { return kappa_a_ * kappa_a_ * kappa_b_ * kappa_b_; }
    double kappa_a() const { return kappa_a_; }
    double kappa_b() const { return kappa_b_; }
    QuadKappas kappas(const Matrix& x) const;

    /// Entries iid Unif(−1, 1).
    Matrix initial_point(std::uint64_t seed) const;

private:
    Matrix a_, b_, c_;
    Matrix gram_a_inv_, gram_b_inv_;
    Matrix x_star_;
    double f_star_ = 0.0;
    double lipschitz_ = 0.0;
    double mu_ = 0.0;
    double kappa_a_ = 1.0;
    double kappa_b_ = 1.0;
    std::uint64_t seed_ = 0;
    int regenerations_ = 0;
};

/// f(X) = Σ_{i,j} log(1 + exp(−C_ij (AXB)_ij)) over the rows i of a batch.
class LogisticProblem {
public:
    /// A (N×m) and B (n×q) standard Gaussian; C_ij = 1 if a Gaussian draw exceeds 0.5, else 0.
    /// With `plus_minus_labels` the 0 labels become −1.
    static LogisticProblem make(std::size_t m, std::size_t n, std::size_t samples, std::size_t q,
                                std::size_t batch_size, std::uint64_t seed,
                                bool plus_minus_labels = false);
    LogisticProblem(Matrix a, Matrix b, Matrix c, std::size_t batch_size, std::uint64_t seed = 0);

    std::size_t m() const { return a_.cols(); }
    std::size_t n() const { return b_.rows(); }
    std::size_t samples() const { return a_.rows(); }
    std::size_t q() const { return b_.cols(); }
    std::size_t batch_size() const { return batch_size_; }
    std::uint64_t seed() const { return seed_; }
    bool plus_minus_labels() const { return plus_minus_; }

    const Matrix& a() const { return a_; }
    const Matrix& b() const { return b_; }
    const Matrix& c() const { return c_; }

    /// batch_size row indices drawn uniformly with replacement.
    std::vector<std::size_t> sample_batch(Rng& rng) const;

    double loss(const Matrix& x) const;
    double loss(const Matrix& x, const std::vector<std::size_t>& rows) const;
    /// −A_Bᵀ (C_B ⊙ σ(−C_B ⊙ A_B X B)) Bᵀ.
    Matrix grad(const Matrix& x) const;
    Matrix grad(const Matrix& x, const std::vector<std::size_t>& rows) const;

    Matrix initial_point(std::uint64_t seed) const;

private:
    Matrix a_, b_, c_;
    std::size_t batch_size_ = 1;
    std::uint64_t seed_ = 0;
    bool plus_minus_ = false;
};

struct CompletionGrads {
    Matrix gx;
    Matrix gy;
};

/// f(X, Y) = ‖𝒜 ⊙ (XYᵀ − M★)‖_F² / ‖𝒜‖_F² with X (m×r), Y (n×r).
class CompletionProblem {
public:
    /// Mask entries 1 where Unif(0,1) < 0.3; M★ = U★V★ᵀ with Gaussian factors.
    static CompletionProblem make(std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed,
                                  double observed_fraction = 0.3);
    CompletionProblem(Matrix mask, Matrix u_star, Matrix v_star, std::uint64_t seed = 0);

    std::size_t m() const { return mask_.rows(); }
    std::size_t n() const { return mask_.cols(); }
    std::size_t rank() const { return u_star_.cols(); }
    std::uint64_t seed() const { return seed_; }

    const Matrix& mask() const { return mask_; }
    const Matrix& u_star() const { return u_star_; }
    const Matrix& v_star() const { return v_star_; }
    const Matrix& target() const { return target_; }
    double observed() const { return observed_; }

    double loss(const Matrix& x, const Matrix& y) const;
    CompletionGrads grads(const Matrix& x, const Matrix& y) const;
    /// ∇_X only: 2(𝒜 ⊙ (XYᵀ − M★)) Y / ‖𝒜‖_F².
    Matrix grad_x(const Matrix& x, const Matrix& y) const;
    /// ∇_Y only: 2(𝒜 ⊙ (XYᵀ − M★))ᵀ X / ‖𝒜‖_F².
    Matrix grad_y(const Matrix& x, const Matrix& y) const;

    std::pair<Matrix, Matrix> initial_point(std::uint64_t seed) const;

private:
    Matrix masked_residual(const Matrix& x, const Matrix& y) const;

    Matrix mask_, u_star_, v_star_, target_;
    double observed_ = 0.0;
    std::uint64_t seed_ = 0;
};

/// Central-difference gradient of f at x, one coordinate at a time with step h.
Matrix central_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                   double h = 1e-5);

/// ‖G_fd − G‖_F / ‖G‖_F (or the absolute error when G = 0).
double gradient_check_error(const std::function<double(const Matrix&)>& f, const Matrix& x,
                            const Matrix& grad, double h = 1e-5);

/// Text container: a header naming the problem, generator and seed, then every data
/// matrix with its shape and entries as hexadecimal floats (exact round trip).
void write_instance(std::ostream& out, const QuadRegProblem& problem);
void write_instance(std::ostream& out, const LogisticProblem& problem);
void write_instance(std::ostream& out, const CompletionProblem& problem);

using ProblemInstance = std::variant<QuadRegProblem, LogisticProblem, CompletionProblem>;

/// Throws std::runtime_error on a malformed or unknown container.
ProblemInstance read_instance(std::istream& in);

}  // namespace polargrad

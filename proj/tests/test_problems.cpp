#include "polargrad/linalg.hpp"
#include "polargrad/problems.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace polargrad;

TEST_CASE("scalar quadratic with zero target has the origin as minimizer") {
    QuadRegProblem p(Matrix::from_rows({{1.0}}), Matrix::from_rows({{1.0}}), Matrix(1, 1));
    CHECK(p.x_star()(0, 0) == 0.0);
    CHECK(p.f_star() == 0.0);
}

TEST_CASE("identity design interpolates the target") {
    Rng rng(3);
    const Matrix c = gaussian_matrix(4, 3, rng);
    QuadRegProblem p(Matrix::identity(4), Matrix::identity(3), c);
    CHECK(frobenius_norm(p.x_star() - c) <= 1e-14);
    CHECK(p.f_star() <= 1e-28);
    const Matrix x = gaussian_matrix(4, 3, rng);
    CHECK(p.grad(x) == x - c);
    CHECK(p.kappa_hessian() == doctest::Approx(1.0));
}

TEST_CASE("quadratic closed-form minimizer is optimal") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 0);
    const double scale = frobenius_norm(matmul(matmul_tn(p.a(), p.c()), p.b().transpose()));
    CHECK(frobenius_norm(p.grad(p.x_star())) <= 1e-10 * scale);
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const Matrix r = gaussian_matrix(20, 10, rng);
        CHECK(p.f_star() <= p.loss(p.x_star() + 1e-3 * r));
    }
    for (int i = 0; i < 100; ++i) {
        CHECK(p.f_star() <= p.loss(uniform_matrix(20, 10, -1.0, 1.0, rng)));
    }
}

TEST_CASE("quadratic gap matches loss difference and vanishes at the minimizer") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 1);
    const Matrix x0 = p.initial_point(1);
    CHECK(p.gap(x0) == doctest::Approx(p.loss(x0) - p.f_star()).epsilon(1e-10));
    CHECK(p.gap(p.x_star()) == 0.0);
}

TEST_CASE("quadratic gradient passes central finite differences") {
    for (std::uint64_t seed : {0, 1, 2}) {
        const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, seed);
        Rng rng(seed, 99);
        for (int point = 0; point < 3; ++point) {
            const Matrix x = uniform_matrix(20, 10, -1.0, 1.0, rng);
            const Matrix g = p.grad(x);
            CHECK(gradient_check_error([&](const Matrix& z) { return p.loss(z); }, x, g) <= 1e-6);
        }
    }
}

TEST_CASE("quadratic Lipschitz and strong convexity constants bound gradient differences") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 4);
    const double sa = spectral_norm(p.a());
    const double sb = spectral_norm(p.b());
    CHECK(p.lipschitz() == doctest::Approx(sa * sa * sb * sb).epsilon(1e-10));
    CHECK(p.lipschitz() / p.strong_convexity() == doctest::Approx(p.kappa_hessian()).epsilon(1e-8));
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Matrix x = gaussian_matrix(20, 10, rng);
        const Matrix y = gaussian_matrix(20, 10, rng);
        const double dist = frobenius_norm(x - y);
        const double dg = frobenius_norm(p.grad(x) - p.grad(y));
        CHECK(dg <= p.lipschitz() * dist * (1.0 + 1e-12));
        CHECK(dg >= p.strong_convexity() * dist * (1.0 - 1e-12));
    }
}

TEST_CASE("quadratic condition numbers") {
    Rng rng(8);
    SUBCASE("orthogonal designs give a unit Hessian condition number") {
        QuadRegProblem p(random_orthonormal(6, 4, rng), random_orthonormal(5, 3, rng).transpose(),
                         gaussian_matrix(6, 5, rng));
        CHECK(p.kappa_hessian() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("a diagonal design of condition two squares into the Hessian") {
        Matrix a(3, 2);
        a(0, 0) = 2.0;
        a(1, 1) = 1.0;
        QuadRegProblem p(a, Matrix::identity(2), gaussian_matrix(3, 2, rng));
        CHECK(p.kappa_hessian() == doctest::Approx(4.0).epsilon(1e-12));
    }
    SUBCASE("gradient condition number obeys the product bound") {
        for (std::uint64_t seed : {0, 1, 2}) {
            const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, seed);
            const Matrix x = p.initial_point(seed);
            const QuadKappas k = p.kappas(x);
            REQUIRE(k.kappa_residual.has_value());
            CHECK(k.kappa_grad <= p.kappa_a() * p.kappa_b() * *k.kappa_residual * (1.0 + 1e-8));
            CHECK(k.kappa_h == p.kappa_hessian());
        }
    }
    SUBCASE("a vanishing residual leaves the residual condition number undefined") {
        const Matrix c = gaussian_matrix(4, 3, rng);
        QuadRegProblem p(Matrix::identity(4), Matrix::identity(3), c);
        CHECK_FALSE(p.kappas(c).kappa_residual.has_value());
    }
}

TEST_CASE("quadratic construction rejects bad shapes and singular Gram matrices") {
    CHECK_THROWS_AS(QuadRegProblem(Matrix(3, 2), Matrix::identity(2), Matrix(3, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(QuadRegProblem(Matrix::identity(3), Matrix::identity(2), Matrix(3, 3)),
                    std::invalid_argument);
    CHECK_THROWS_AS(QuadRegProblem::make(10, 2, 5, 4, 0), std::invalid_argument);
}

TEST_CASE("logistic loss at the origin counts log 2 per entry") {
    const LogisticProblem p = LogisticProblem::make(30, 8, 200, 12, 20, 0);
    const Matrix x(30, 8);
    CHECK(p.loss(x) == doctest::Approx(200.0 * 12.0 * std::log(2.0)).epsilon(1e-13));
    Rng rng(1);
    const auto rows = p.sample_batch(rng);
    CHECK(rows.size() == 20);
    CHECK(p.loss(x, rows) == doctest::Approx(20.0 * 12.0 * std::log(2.0)).epsilon(1e-13));
}

TEST_CASE("logistic labels are binary and zero labels give a zero gradient") {
    const LogisticProblem p = LogisticProblem::make(30, 8, 200, 12, 20, 1);
    for (double v : p.c().data()) {
        CHECK((v == 0.0 || v == 1.0));
    }
    LogisticProblem zero(p.a(), p.b(), Matrix(200, 12), 20);
    Rng rng(2);
    const Matrix x = gaussian_matrix(30, 8, rng);
    CHECK(frobenius_norm(zero.grad(x)) == 0.0);
    CHECK(zero.loss(x) == doctest::Approx(200.0 * 12.0 * std::log(2.0)));
}

TEST_CASE("logistic gradient passes central finite differences") {
    for (bool pm : {false, true}) {
        for (std::uint64_t seed : {0, 1, 2}) {
            const LogisticProblem p = LogisticProblem::make(30, 8, 200, 12, 200, seed, pm);
            Rng rng(seed, 77);
            for (int point = 0; point < 3; ++point) {
                const Matrix x = uniform_matrix(30, 8, -0.3, 0.3, rng);
                const Matrix g = p.grad(x);
                CHECK(gradient_check_error([&](const Matrix& z) { return p.loss(z); }, x, g) <= 1e-6);
            }
        }
    }
}

TEST_CASE("finite-difference helper is exact on a quadratic form") {
    const Matrix s = Matrix::from_rows({{2.0, 1.0}, {1.0, 3.0}});
    const auto f = [&](const Matrix& z) { return 0.5 * frobenius_dot(z, matmul(s, z)); };
    const Matrix x = Matrix::from_rows({{1.0}, {-2.0}});
    CHECK(frobenius_norm(central_difference_gradient(f, x) - matmul(s, x)) <= 1e-9);
    CHECK(gradient_check_error(f, x, matmul(s, x)) <= 1e-9);
    CHECK(gradient_check_error(f, x, 2.0 * matmul(s, x)) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("logistic batch gradient restricted to all rows equals the full gradient") {
    const LogisticProblem p = LogisticProblem::make(10, 4, 50, 6, 10, 3);
    std::vector<std::size_t> all(50);
    for (std::size_t i = 0; i < 50; ++i) {
        all[i] = i;
    }
    Rng rng(4);
    const Matrix x = gaussian_matrix(10, 4, rng);
    CHECK(frobenius_norm(p.grad(x, all) - p.grad(x)) <= 1e-12 * frobenius_norm(p.grad(x)));
    CHECK(p.loss(x, all) == doctest::Approx(p.loss(x)).epsilon(1e-14));
}

TEST_CASE("rescaled minibatch gradient is an unbiased estimate of the full gradient") {
    const LogisticProblem p = LogisticProblem::make(30, 8, 200, 12, 20, 0);
    Rng init(0, 1);
    const Matrix x = uniform_matrix(30, 8, -0.3, 0.3, init);
    const Matrix full = p.grad(x);
    const double scale = static_cast<double>(p.samples()) / static_cast<double>(p.batch_size());

    const int draws = 2000;
    Matrix sum(30, 8);
    Matrix sum_sq(30, 8);
    const double full_norm = frobenius_norm(full);
    double proj_sum = 0.0;
    double proj_sq = 0.0;
    Rng batch_rng(0, static_cast<std::uint64_t>(Stream::Batch));
    for (int t = 0; t < draws; ++t) {
        const Matrix g = scale * p.grad(x, p.sample_batch(batch_rng));
        sum += g;
        sum_sq += hadamard(g, g);
        const double proj = frobenius_dot(g, full) / full_norm;
        proj_sum += proj;
        proj_sq += proj * proj;
    }
    auto z_score = [&](double s, double sq, double target) {
        const double mean = s / draws;
        const double var = (sq / draws - mean * mean) * draws / (draws - 1.0);
        return (mean - target) / std::sqrt(var / draws);
    };
    int within = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        within += std::abs(z_score(sum.data()[i], sum_sq.data()[i], full.data()[i])) <= 3.0 ? 1 : 0;
    }
    CHECK(within >= 0.99 * static_cast<double>(full.size()));
    // Entries are correlated, so the joint check uses the scalar projection on the full gradient.
    CHECK(std::abs(z_score(proj_sum, proj_sq, full_norm)) <= 3.0);
}

TEST_CASE("completion ground truth has zero loss and zero gradients") {
    const CompletionProblem p = CompletionProblem::make(24, 16, 3, 0);
    CHECK(p.loss(p.u_star(), p.v_star()) <= 1e-28);
    const CompletionGrads g = p.grads(p.u_star(), p.v_star());
    CHECK(frobenius_norm(g.gx) <= 1e-14);
    CHECK(frobenius_norm(g.gy) <= 1e-14);
    CHECK(p.observed() > 0.0);
    double count = 0.0;
    for (double v : p.mask().data()) {
        CHECK((v == 0.0 || v == 1.0));
        count += v;
    }
    CHECK(count == p.observed());
}

TEST_CASE("completion with a full mask is a normalized Frobenius loss") {
    Rng rng(6);
    const Matrix u = gaussian_matrix(5, 2, rng);
    const Matrix v = gaussian_matrix(4, 2, rng);
    CompletionProblem p(Matrix::constant(5, 4, 1.0), u, v);
    const Matrix x = gaussian_matrix(5, 2, rng);
    const Matrix y = gaussian_matrix(4, 2, rng);
    const double e = frobenius_norm(matmul_nt(x, y) - matmul_nt(u, v));
    CHECK(p.loss(x, y) == doctest::Approx(e * e / 20.0).epsilon(1e-13));
}

TEST_CASE("completion gradients pass central finite differences") {
    for (std::uint64_t seed : {0, 1, 2}) {
        const CompletionProblem p = CompletionProblem::make(24, 16, 3, seed);
        Rng rng(seed, 55);
        for (int point = 0; point < 3; ++point) {
            const Matrix x = gaussian_matrix(24, 3, rng);
            const Matrix y = gaussian_matrix(16, 3, rng);
            const CompletionGrads g = p.grads(x, y);
            CHECK(g.gx == p.grad_x(x, y));
            CHECK(g.gy == p.grad_y(x, y));
            CHECK(gradient_check_error([&](const Matrix& z) { return p.loss(z, y); }, x, g.gx) <= 1e-6);
            CHECK(gradient_check_error([&](const Matrix& z) { return p.loss(x, z); }, y, g.gy) <= 1e-6);
        }
    }
}

TEST_CASE("generation is deterministic in the seed") {
    const QuadRegProblem a = QuadRegProblem::make(6, 3, 9, 4, 7);
    const QuadRegProblem b = QuadRegProblem::make(6, 3, 9, 4, 7);
    const QuadRegProblem c = QuadRegProblem::make(6, 3, 9, 4, 8);
    CHECK(a.a() == b.a());
    CHECK(a.c() == b.c());
    CHECK_FALSE(a.a() == c.a());
    CHECK(a.initial_point(1) == b.initial_point(1));
    const Matrix x0 = a.initial_point(1);
    for (double v : x0.data()) {
        CHECK(std::abs(v) <= 1.0);
    }
}

TEST_CASE("instance containers round trip exactly") {
    SUBCASE("quadratic") {
        const QuadRegProblem p = QuadRegProblem::make(6, 3, 9, 4, 2);
        std::stringstream ss;
        write_instance(ss, p);
        const auto q = std::get<QuadRegProblem>(read_instance(ss));
        CHECK(q.a() == p.a());
        CHECK(q.b() == p.b());
        CHECK(q.c() == p.c());
        CHECK(q.seed() == p.seed());
        CHECK(q.f_star() == p.f_star());
    }
    SUBCASE("logistic") {
        const LogisticProblem p = LogisticProblem::make(5, 3, 20, 4, 7, 3, true);
        std::stringstream ss;
        write_instance(ss, p);
        const auto q = std::get<LogisticProblem>(read_instance(ss));
        CHECK(q.a() == p.a());
        CHECK(q.c() == p.c());
        CHECK(q.batch_size() == 7);
        CHECK(q.plus_minus_labels());
    }
    SUBCASE("completion") {
        const CompletionProblem p = CompletionProblem::make(8, 6, 2, 4);
        std::stringstream ss;
        write_instance(ss, p);
        const auto q = std::get<CompletionProblem>(read_instance(ss));
        CHECK(q.mask() == p.mask());
        CHECK(q.u_star() == p.u_star());
        CHECK(q.v_star() == p.v_star());
    }
    SUBCASE("malformed input") {
        std::stringstream bad("polargrad-instance v9\n");
        CHECK_THROWS_AS(read_instance(bad), std::runtime_error);
        std::stringstream truncated("polargrad-instance v1\nproblem quad\n");
        CHECK_THROWS_AS(read_instance(truncated), std::runtime_error);
    }
}

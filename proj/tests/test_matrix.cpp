#include <doctest.h>

#include "polargrad/matrix.hpp"
#include "polargrad/rng.hpp"

#include <cmath>
#include <limits>

using namespace polargrad;

TEST_CASE("construction rejects bad shapes and non-finite data") {
    CHECK_THROWS_AS(Matrix(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), std::invalid_argument);
    const Matrix z(2, 3);
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 3);
    CHECK(z.size() == 6);
    for (double v : z.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("row-major layout and from_rows") {
    const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(a(0, 2) == 3.0);
    CHECK(a(1, 0) == 4.0);
    CHECK(a.data()[4] == 5.0);
    CHECK(a.row(1)[2] == 6.0);
    CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), std::invalid_argument);
}

TEST_CASE("products agree with explicit triple loops") {
    Rng rng(7);
    const Matrix a = gaussian_matrix(5, 4, rng);
    const Matrix b = gaussian_matrix(4, 3, rng);
    const Matrix c = gaussian_matrix(5, 3, rng);
    const Matrix ab = matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                s += a(i, k) * b(k, j);
            }
            CHECK(ab(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
    const Matrix atc = matmul_tn(a, c);
    const Matrix atc_ref = matmul(a.transpose(), c);
    const Matrix bct = matmul_nt(c, b);
    const Matrix bct_ref = matmul(c, b.transpose());
    for (std::size_t i = 0; i < atc.size(); ++i) {
        CHECK(atc.data()[i] == doctest::Approx(atc_ref.data()[i]).epsilon(1e-14));
    }
    for (std::size_t i = 0; i < bct.size(); ++i) {
        CHECK(bct.data()[i] == doctest::Approx(bct_ref.data()[i]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(matmul(a, c), std::invalid_argument);
}

TEST_CASE("elementwise helpers") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    CHECK(frobenius_dot(a, b) == 70.0);
    CHECK(trace(a) == 5.0);
    CHECK(hadamard(a, b) == Matrix::from_rows({{5, 12}, {21, 32}}));
    CHECK(symmetrize(a) == Matrix::from_rows({{1, 2.5}, {2.5, 4}}));
    CHECK(a + b == Matrix::from_rows({{6, 8}, {10, 12}}));
    CHECK(b - a == Matrix::constant(2, 2, 4.0));
    CHECK(2.0 * a == a * 2.0);
    Matrix c = a;
    c.add_scaled(b, -1.0);
    CHECK(c == Matrix::constant(2, 2, -4.0));
    CHECK(a.transpose() == Matrix::from_rows({{1, 3}, {2, 4}}));
}

TEST_CASE("stacking and row blocks round-trip") {
    const Matrix top = Matrix::from_rows({{1, 2}});
    const Matrix bottom = Matrix::identity(2);
    const Matrix s = vstack(top, bottom);
    CHECK(s.rows() == 3);
    CHECK(row_block(s, 0, 1) == top);
    CHECK(row_block(s, 1, 3) == bottom);
    CHECK_THROWS(vstack(top, Matrix(1, 3)));
}

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(42, 1);
    Rng b(42, 1);
    Rng c(42, 2);
    bool differs = false;
    for (int i = 0; i < 10; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs = differs || x != c.next_u64();
    }
    CHECK(differs);

    Rng g(3);
    double mean = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = g.normal();
        mean += x;
        sq += x * x;
    }
    mean /= n;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
}

#include "polargrad/problems.hpp"

#include "polargrad/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace polargrad {

namespace {

Rng stream(std::uint64_t seed, Stream s) { return Rng(seed, static_cast<std::uint64_t>(s)); }

// argmin_Y ‖A Y − C‖_F for tall full-column-rank A, via Householder QR.
Matrix least_squares(const Matrix& a, const Matrix& c) {
    const QrResult qr = qr_householder(a);
    return matmul(upper_triangular_inverse(qr.r), matmul_tn(qr.q, c));
}

double softplus(double t) {
    // log(1 + e^t) without overflow.
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

Matrix gather_rows(const Matrix& a, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw std::out_of_range("batch row index out of range");
        }
        const auto src = a.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = i;
    }
    return rows;
}

void write_matrix(std::ostream& out, const char* name, const Matrix& a) {
    out << "matrix " << name << ' ' << a.rows() << ' ' << a.cols() << '\n';
    char buf[40];
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%a", a(i, j));
            out << (j == 0 ? "" : " ") << buf;
        }
        out << '\n';
    }
}

Matrix read_matrix(std::istream& in, const std::string& name) {
    std::string tag;
    std::string got;
    std::size_t rows = 0;
    std::size_t cols = 0;
    if (!(in >> tag >> got >> rows >> cols) || tag != "matrix" || got != name) {
        throw std::runtime_error("instance container: expected matrix '" + name + "'");
    }
    std::vector<double> data(rows * cols);
    std::string token;
    for (double& v : data) {
        if (!(in >> token)) {
            throw std::runtime_error("instance container: truncated matrix '" + name + "'");
        }
        char* end = nullptr;
        v = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') {
            throw std::runtime_error("instance container: bad number '" + token + "'");
        }
    }
    return Matrix(rows, cols, std::move(data));
}

void write_header(std::ostream& out, const char* kind, std::uint64_t seed) {
    out << "polargrad-instance v1\n"
        << "problem " << kind << '\n'
        << "generator " << kGeneratorName << '\n'
        << "seed " << seed << '\n';
}

std::string expect_field(std::istream& in, const std::string& key) {
    std::string k;
    std::string v;
    if (!(in >> k >> v) || k != key) {
        throw std::runtime_error("instance container: expected field '" + key + "'");
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------- quadratic

QuadRegProblem QuadRegProblem::make(std::size_t m, std::size_t n, std::size_t p, std::size_t q,
                                    std::uint64_t seed) {
    if (m == 0 || n == 0 || p == 0 || q == 0) {
        throw std::invalid_argument("quad_make: dimensions must be positive");
    }
    if (p < m || q < n) {
        throw std::invalid_argument("quad_make: need p >= m and q >= n for a strongly convex objective");
    }
    for (int attempt = 0; attempt < 16; ++attempt) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
        Rng ra = stream(s, Stream::A);
        Rng rb = stream(s, Stream::B);
        Rng rc = stream(s, Stream::C);
        Matrix a = gaussian_matrix(p, m, ra);
        Matrix b = gaussian_matrix(n, q, rb);
        Matrix c = gaussian_matrix(p, q, rc);
        try {
            QuadRegProblem problem(std::move(a), std::move(b), std::move(c), seed);
            problem.regenerations_ = attempt;
            return problem;
        } catch (const std::invalid_argument&) {
            continue;
        }
    }
    throw NumericalError("quad_make: could not draw nonsingular Gram matrices");
}

QuadRegProblem::QuadRegProblem(Matrix a, Matrix b, Matrix c, std::uint64_t seed)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), seed_(seed) {
    if (c_.rows() != a_.rows() || c_.cols() != b_.cols()) {
        throw std::invalid_argument("quad problem: C must be " + std::to_string(a_.rows()) + "x" +
                                    std::to_string(b_.cols()) + ", got " + shape_string(c_));
    }
    const std::vector<double> sa = singular_values(a_);
    const std::vector<double> sb = singular_values(b_);
    if (a_.rows() < a_.cols() || b_.cols() < b_.rows() || numerical_rank(sa) < sa.size() ||
        numerical_rank(sb) < sb.size()) {
        throw std::invalid_argument("quad problem: AᵀA and BBᵀ must be nonsingular");
    }
    kappa_a_ = sa.front() / sa.back();
    kappa_b_ = sb.front() / sb.back();
    lipschitz_ = sa.front() * sa.front() * sb.front() * sb.front();
    mu_ = sa.back() * sa.back() * sb.back() * sb.back();

    gram_a_inv_ = spd_inverse(symmetrize(matmul_tn(a_, a_)));
    gram_b_inv_ = spd_inverse(symmetrize(matmul_nt(b_, b_)));

    // X★ = A⁺ C (Bᵀ)⁺ᵀ by two least-squares solves.
    const Matrix left = least_squares(a_, c_);                        // m x q
    x_star_ = least_squares(b_.transpose(), left.transpose()).transpose();  // m x n
    f_star_ = loss(x_star_);
}

Matrix QuadRegProblem::residual(const Matrix& x) const {
    return matmul(matmul(a_, x), b_) - c_;
}

double QuadRegProblem::loss(const Matrix& x) const {
    const double r = frobenius_norm(residual(x));
    return 0.5 * r * r;
}

Matrix QuadRegProblem::grad(const Matrix& x) const {
    return matmul_nt(matmul_tn(a_, residual(x)), b_);
}

double QuadRegProblem::gap(const Matrix& x) const {
    const double r = frobenius_norm(matmul(matmul(a_, x - x_star_), b_));
    return 0.5 * r * r;
}

QuadKappas QuadRegProblem::kappas(const Matrix& x) const {
    QuadKappas k;
    k.kappa_h = kappa_hessian();
    const Matrix e = residual(x);
    const Matrix g = matmul_nt(matmul_tn(a_, e), b_);
    k.kappa_grad = frobenius_norm(g) > 0.0 ? cond2(g) : 0.0;
    if (frobenius_norm(e) > 0.0) {
        k.kappa_residual = cond2(e);
    }
    return k;
}

Matrix QuadRegProblem::initial_point(std::uint64_t seed) const {
    Rng rng = stream(seed, Stream::Init);
    return uniform_matrix(m(), n(), -1.0, 1.0, rng);
}

// ---------------------------------------------------------------- logistic

LogisticProblem LogisticProblem::make(std::size_t m, std::size_t n, std::size_t samples,
                                      std::size_t q, std::size_t batch_size, std::uint64_t seed,
                                      bool plus_minus_labels) {
    Rng ra = stream(seed, Stream::A);
    Rng rb = stream(seed, Stream::B);
    Rng rc = stream(seed, Stream::C);
    Matrix a = gaussian_matrix(samples, m, ra);
    Matrix b = gaussian_matrix(n, q, rb);
    Matrix c(samples, q);
    for (double& v : c.data()) {
        v = rc.normal() > 0.5 ? 1.0 : (plus_minus_labels ? -1.0 : 0.0);
    }
    LogisticProblem problem(std::move(a), std::move(b), std::move(c), batch_size, seed);
    problem.plus_minus_ = plus_minus_labels;
    return problem;
}

LogisticProblem::LogisticProblem(Matrix a, Matrix b, Matrix c, std::size_t batch_size,
                                 std::uint64_t seed)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), batch_size_(batch_size), seed_(seed) {
    if (c_.rows() != a_.rows() || c_.cols() != b_.cols()) {
        throw std::invalid_argument("logistic problem: C must be N x q, got " + shape_string(c_));
    }
    if (batch_size_ == 0 || batch_size_ > a_.rows()) {
        throw std::invalid_argument("logistic problem: batch size must lie in [1, N]");
    }
    bool has_negative = false;
    for (double v : c_.data()) {
        if (v != 0.0 && v != 1.0 && v != -1.0) {
            throw std::invalid_argument("logistic problem: labels must be 0, 1 or -1");
        }
        has_negative = has_negative || v == -1.0;
    }
    plus_minus_ = has_negative;
}

std::vector<std::size_t> LogisticProblem::sample_batch(Rng& rng) const {
    std::vector<std::size_t> rows(batch_size_);
    for (auto& r : rows) {
        r = static_cast<std::size_t>(rng.below(a_.rows()));
    }
    return rows;
}

double LogisticProblem::loss(const Matrix& x) const { return loss(x, all_rows(a_.rows())); }

double LogisticProblem::loss(const Matrix& x, const std::vector<std::size_t>& rows) const {
    const Matrix z = matmul(matmul(gather_rows(a_, rows), x), b_);
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            total += softplus(-c_(rows[i], j) * z(i, j));
        }
    }
    return total;
}

Matrix LogisticProblem::grad(const Matrix& x) const { return grad(x, all_rows(a_.rows())); }

Matrix LogisticProblem::grad(const Matrix& x, const std::vector<std::size_t>& rows) const {
    const Matrix ab = gather_rows(a_, rows);
    Matrix w = matmul(matmul(ab, x), b_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double label = c_(rows[i], j);
            w(i, j) = -label * sigmoid(-label * w(i, j));
        }
    }
    return matmul_nt(matmul_tn(ab, w), b_);
}

Matrix LogisticProblem::initial_point(std::uint64_t seed) const {
    Rng rng = stream(seed, Stream::Init);
    return uniform_matrix(m(), n(), -1.0, 1.0, rng);
}

// ---------------------------------------------------------------- completion

CompletionProblem CompletionProblem::make(std::size_t m, std::size_t n, std::size_t r,
                                          std::uint64_t seed, double observed_fraction) {
    Rng rm = stream(seed, Stream::Mask);
    Rng rf = stream(seed, Stream::Factors);
    Matrix mask(m, n);
    for (double& v : mask.data()) {
        v = rm.uniform() < observed_fraction ? 1.0 : 0.0;
    }
    Matrix u = gaussian_matrix(m, r, rf);
    Matrix v = gaussian_matrix(n, r, rf);
    return CompletionProblem(std::move(mask), std::move(u), std::move(v), seed);
}

CompletionProblem::CompletionProblem(Matrix mask, Matrix u_star, Matrix v_star, std::uint64_t seed)
    : mask_(std::move(mask)), u_star_(std::move(u_star)), v_star_(std::move(v_star)), seed_(seed) {
    if (u_star_.rows() != mask_.rows() || v_star_.rows() != mask_.cols() ||
        u_star_.cols() != v_star_.cols()) {
        throw std::invalid_argument("completion problem: factor shapes do not match the mask");
    }
    for (double v : mask_.data()) {
        if (v != 0.0 && v != 1.0) {
            throw std::invalid_argument("completion problem: mask must be binary");
        }
        observed_ += v;
    }
    if (observed_ == 0.0) {
        throw std::invalid_argument("completion problem: mask observes no entries");
    }
    target_ = matmul_nt(u_star_, v_star_);
}

Matrix CompletionProblem::masked_residual(const Matrix& x, const Matrix& y) const {
    if (x.rows() != m() || y.rows() != n() || x.cols() != y.cols()) {
        throw std::invalid_argument("completion: X must be m x r and Y n x r");
    }
    return hadamard(mask_, matmul_nt(x, y) - target_);
}

double CompletionProblem::loss(const Matrix& x, const Matrix& y) const {
    const double r = frobenius_norm(masked_residual(x, y));
    return r * r / observed_;
}

CompletionGrads CompletionProblem::grads(const Matrix& x, const Matrix& y) const {
    const Matrix r = masked_residual(x, y);
    const double s = 2.0 / observed_;
    return {s * matmul(r, y), s * matmul_tn(r, x)};
}

Matrix CompletionProblem::grad_x(const Matrix& x, const Matrix& y) const {
    return (2.0 / observed_) * matmul(masked_residual(x, y), y);
}

Matrix CompletionProblem::grad_y(const Matrix& x, const Matrix& y) const {
    return (2.0 / observed_) * matmul_tn(masked_residual(x, y), x);
}

std::pair<Matrix, Matrix> CompletionProblem::initial_point(std::uint64_t seed) const {
    Rng rng = stream(seed, Stream::Init);
    Matrix x = uniform_matrix(m(), rank(), -1.0, 1.0, rng);
    Matrix y = uniform_matrix(n(), rank(), -1.0, 1.0, rng);
    return {std::move(x), std::move(y)};
}

// ---------------------------------------------------------------- containers

Matrix central_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                   double h) {
    Matrix g(x.rows(), x.cols());
    Matrix probe = x;
    auto pd = probe.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double saved = pd[i];
        pd[i] = saved + h;
        const double up = f(probe);
        pd[i] = saved - h;
        const double down = f(probe);
        pd[i] = saved;
        gd[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double gradient_check_error(const std::function<double(const Matrix&)>& f, const Matrix& x,
                            const Matrix& grad, double h) {
    require_same_shape(x, grad, "gradient_check_error");
    const double err = frobenius_norm(central_difference_gradient(f, x, h) - grad);
    const double scale = frobenius_norm(grad);
    return scale > 0.0 ? err / scale : err;
}

void write_instance(std::ostream& out, const QuadRegProblem& problem) {
    write_header(out, "quad", problem.seed());
    write_matrix(out, "a", problem.a());
    write_matrix(out, "b", problem.b());
    write_matrix(out, "c", problem.c());
}

void write_instance(std::ostream& out, const LogisticProblem& problem) {
    write_header(out, "logistic", problem.seed());
    out << "batch_size " << problem.batch_size() << '\n';
    write_matrix(out, "a", problem.a());
    write_matrix(out, "b", problem.b());
    write_matrix(out, "c", problem.c());
}

void write_instance(std::ostream& out, const CompletionProblem& problem) {
    write_header(out, "completion", problem.seed());
    write_matrix(out, "mask", problem.mask());
    write_matrix(out, "u_star", problem.u_star());
    write_matrix(out, "v_star", problem.v_star());
}

ProblemInstance read_instance(std::istream& in) {
    std::string magic;
    std::string version;
    if (!(in >> magic >> version) || magic != "polargrad-instance" || version != "v1") {
        throw std::runtime_error("instance container: missing 'polargrad-instance v1' header");
    }
    const std::string kind = expect_field(in, "problem");
    expect_field(in, "generator");
    const std::uint64_t seed = std::stoull(expect_field(in, "seed"));
    if (kind == "quad") {
        Matrix a = read_matrix(in, "a");
        Matrix b = read_matrix(in, "b");
        Matrix c = read_matrix(in, "c");
        return QuadRegProblem(std::move(a), std::move(b), std::move(c), seed);
    }
    if (kind == "logistic") {
        const std::size_t batch = std::stoull(expect_field(in, "batch_size"));
        Matrix a = read_matrix(in, "a");
        Matrix b = read_matrix(in, "b");
        Matrix c = read_matrix(in, "c");
        return LogisticProblem(std::move(a), std::move(b), std::move(c), batch, seed);
    }
    if (kind == "completion") {
        Matrix mask = read_matrix(in, "mask");
        Matrix u = read_matrix(in, "u_star");
        Matrix v = read_matrix(in, "v_star");
        return CompletionProblem(std::move(mask), std::move(u), std::move(v), seed);
    }
    throw std::runtime_error("instance container: unknown problem '" + kind + "'");
}

}  // namespace polargrad

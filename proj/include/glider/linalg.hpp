#pragma once

#include <cstddef>
#include <vector>

#include "glider/errors.hpp"

namespace glider {

using Vec = std::vector<double>;

// Dense row-major matrix. Small sizes only (routing stacks, LoRA factors);
// everything is plain loops, no BLAS.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> d);

    static Mat identity(std::size_t n);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Mat&) const = default;
};

namespace linalg {

inline constexpr double kEps = 1e-12;

void check_finite(const Vec& x, const char* where);
void check_finite(const Mat& m, const char* where);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& x);

Vec matvec(const Mat& m, const Vec& x);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);

// (out-of-place) y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

// Zero-mean, unit population standard deviation (divisor = dim).
Vec standardize(const Vec& x);

double cosine_sim(const Vec& a, const Vec& b);

// out[i] = cosine_sim(row_i(m), x)
Vec rowwise_cosine(const Mat& m, const Vec& x);

// Numerically stable softmax (max subtraction).
Vec softmax(const Vec& s);

// Indices of the k largest entries, score-descending; ties break to the
// lowest index.
std::vector<std::size_t> top_k_indices(const Vec& s, std::size_t k);

// Smallest prefix of experts in descending-probability order whose cumulative
// mass strictly exceeds p. Never empty; mass exactly p pulls in one more.
std::vector<std::size_t> top_p_indices(const Vec& w, double p);

struct SvdResult {
    double sigma = 0.0;     // leading singular value
    Vec v;                  // leading right singular vector, unit norm, sign unspecified
    std::size_t iterations = 0;
};

// Leading right singular pair via power iteration on MᵀM with a seeded
// deterministic start. Throws Errc::no_convergence after max_iter.
SvdResult svd_top_right(const Mat& m, double tol = 1e-10, std::size_t max_iter = 10000);

} // namespace linalg
} // namespace glider

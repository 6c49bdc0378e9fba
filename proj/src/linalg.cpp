#include "glider/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "glider/rng.hpp"

namespace glider {

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) {
        raise(Errc::shape_mismatch, "Mat: data length " + std::to_string(data.size()) +
                                        " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

namespace linalg {

void check_finite(const Vec& x, const char* where) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            raise(Errc::non_finite, std::string(where) + ": non-finite entry");
        }
    }
}

void check_finite(const Mat& m, const char* where) {
    for (double v : m.data) {
        if (!std::isfinite(v)) {
            raise(Errc::non_finite, std::string(where) + ": non-finite entry");
        }
    }
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        raise(Errc::dim_mismatch, "dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& x) { return std::sqrt(dot(x, x)); }

Vec matvec(const Mat& m, const Vec& x) {
    if (m.cols != x.size()) {
        raise(Errc::dim_mismatch,
              "matvec: cols " + std::to_string(m.cols) + " vs dim " + std::to_string(x.size()));
    }
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) {
        raise(Errc::dim_mismatch,
              "matmul: " + std::to_string(a.cols) + " vs " + std::to_string(b.rows));
    }
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                c.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return c;
}

Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) {
        raise(Errc::dim_mismatch, "axpy: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec standardize(const Vec& x) {
    check_finite(x, "standardize");
    if (x.size() < 2) {
        raise(Errc::dim_too_small, "standardize: dim " + std::to_string(x.size()) + " < 2");
    }
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n; // population convention
    const double sd = std::sqrt(var);
    if (sd <= kEps) {
        raise(Errc::zero_variance, "standardize: constant vector (std <= eps)");
    }
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
    return out;
}

double cosine_sim(const Vec& a, const Vec& b) {
    check_finite(a, "cosine_sim");
    check_finite(b, "cosine_sim");
    if (a.size() != b.size()) {
        raise(Errc::dim_mismatch,
              "cosine_sim: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na <= kEps || nb <= kEps) {
        raise(Errc::zero_norm, "cosine_sim: zero-norm operand");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vec rowwise_cosine(const Mat& m, const Vec& x) {
    check_finite(m, "rowwise_cosine");
    check_finite(x, "rowwise_cosine");
    if (m.cols != x.size()) {
        raise(Errc::dim_mismatch,
              "rowwise_cosine: cols " + std::to_string(m.cols) + " vs dim " + std::to_string(x.size()));
    }
    const double nx = norm(x);
    if (nx <= kEps) {
        raise(Errc::zero_norm, "rowwise_cosine: zero-norm query");
    }
    Vec out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double d = 0.0, nr = 0.0;
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) {
            d += row[j] * x[j];
            nr += row[j] * row[j];
        }
        nr = std::sqrt(nr);
        if (nr <= kEps) {
            raise(Errc::zero_norm, "rowwise_cosine: zero-norm row " + std::to_string(i));
        }
        out[i] = std::clamp(d / (nr * nx), -1.0, 1.0);
    }
    return out;
}

Vec softmax(const Vec& s) {
    check_finite(s, "softmax");
    if (s.empty()) {
        raise(Errc::dim_too_small, "softmax: empty input");
    }
    const double mx = *std::max_element(s.begin(), s.end());
    Vec out(s.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = std::exp(s[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

namespace {

// indices ordered by score descending, ties to the lowest index
std::vector<std::size_t> descending_order(const Vec& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return idx;
}

} // namespace

std::vector<std::size_t> top_k_indices(const Vec& s, std::size_t k) {
    check_finite(s, "top_k_indices");
    if (k < 1 || k > s.size()) {
        raise(Errc::bad_k, "top_k_indices: k=" + std::to_string(k) + " out of [1," +
                               std::to_string(s.size()) + "]");
    }
    auto idx = descending_order(s);
    idx.resize(k);
    return idx;
}

std::vector<std::size_t> top_p_indices(const Vec& w, double p) {
    check_finite(w, "top_p_indices");
    if (!(p > 0.0 && p < 1.0)) {
        raise(Errc::bad_p, "top_p_indices: p=" + std::to_string(p) + " not in (0,1)");
    }
    if (w.empty()) {
        raise(Errc::dim_too_small, "top_p_indices: empty input");
    }
    auto order = descending_order(w);
    std::vector<std::size_t> picked;
    double cum = 0.0;
    for (std::size_t i : order) {
        picked.push_back(i);
        cum += w[i];
        if (cum > p) break; // strictly exceeds
    }
    return picked;
}

SvdResult svd_top_right(const Mat& m, double tol, std::size_t max_iter) {
    check_finite(m, "svd_top_right");
    if (tol <= 0.0) {
        raise(Errc::bad_argument, "svd_top_right: tol must be > 0");
    }
    double frob = 0.0;
    for (double v : m.data) frob += v * v;
    if (frob <= kEps * kEps) {
        raise(Errc::zero_norm, "svd_top_right: zero matrix");
    }

    const Mat mt = transpose(m);
    const Mat s = matmul(mt, m); // n×n, PSD
    const std::size_t n = s.rows;

    Rng rng(0x51d5eedULL);
    Vec v(n);
    for (double& x : v) x = rng.normal();
    double nv = norm(v);
    for (double& x : v) x /= nv;

    for (std::size_t it = 1; it <= max_iter; ++it) {
        Vec w = matvec(s, v);
        const double lambda = dot(v, w);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = w[i] - lambda * v[i];
            res += r * r;
        }
        res = std::sqrt(res);
        if (lambda > 0.0 && res <= tol * lambda) {
            return SvdResult{std::sqrt(lambda), v, it};
        }
        const double nw = norm(w);
        if (nw <= kEps) {
            // start vector fell in the null space; re-seed and keep iterating
            for (double& x : v) x = rng.normal();
            nv = norm(v);
            for (double& x : v) x /= nv;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    }
    raise(Errc::no_convergence,
          "svd_top_right: no convergence after " + std::to_string(max_iter) + " iterations");
}

} // namespace linalg
} // namespace glider

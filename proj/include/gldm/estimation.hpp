#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gldm/errors.hpp"
#include "gldm/format.hpp"
#include "gldm/linalg.hpp"
#include "gldm/rng.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n i.i.d. draws in R^D (rows) and the seed that produced them (0 if external).
struct SampleSet {
    RowMatrix data;
    std::uint64_t seed = 0;

    std::size_t size() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(data.cols()); }
};

namespace detail {

/// Upper bound on worker threads; 0 uses the hardware concurrency.
inline std::size_t& worker_limit()
{
    static std::size_t limit = 0;
    return limit;
}

/// Runs body(begin, end) over fixed-size chunks of [0, count). Chunk
/// boundaries do not depend on the number of workers.
template <class Body>
void parallel_chunks(std::size_t count, std::size_t chunk, Body body)
{
    std::size_t chunks = (count + chunk - 1) / chunk;
    std::size_t hw = worker_limit() != 0 ? worker_limit() : std::max(1u, std::thread::hardware_concurrency());
    std::size_t workers = std::min(hw, chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            body(c * chunk, std::min(count, (c + 1) * chunk));
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += workers) {
                body(c * chunk, std::min(count, (c + 1) * chunk));
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

}  // namespace detail

/*!
 * Draws n rows O * diag(lambda)^{1/2} * z with z ~ N(0, I). Row i consumes
 * the stream (seed, i, 0), so the result is independent of threading.
 */
inline SampleSet sample_gaussian(const GaussianModel& model, std::size_t n, std::uint64_t seed)
{
    detail::require(n >= 1, "sample_gaussian: n must be >= 1");
    const std::size_t D = model.dim();
    Matrix transform = model.eigenvectors();
    for (std::size_t j = 0; j < D; ++j) {
        transform.col(static_cast<Eigen::Index>(j)) *= model.eigenvalues().sigma(j);
    }
    SampleSet out{RowMatrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D)), seed};
    GaussianStream stream(seed);
    detail::parallel_chunks(n, 4096, [&](std::size_t begin, std::size_t end) {
        Vector z(static_cast<Eigen::Index>(D));
        for (std::size_t i = begin; i < end; ++i) {
            stream.fill(i, 0, std::span<double>(z.data(), D));
            out.data.row(static_cast<Eigen::Index>(i)) = (transform * z).transpose();
        }
    });
    return out;
}

/// Estimated variances (mean of squares per column), sorted with the
/// permutation and an "already ordered" flag.
inline SortedSpectrum empirical_variances(const SampleSet& s)
{
    detail::require(s.size() >= 1 && s.dim() >= 1, "empirical_variances: empty sample");
    std::vector<double> raw(s.dim(), 0.0);
    for (Eigen::Index i = 0; i < s.data.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.data.cols(); ++j) {
            double x = s.data(i, j);
            raw[static_cast<std::size_t>(j)] += x * x;
        }
    }
    for (double& v : raw) {
        v /= static_cast<double>(s.size());
    }
    return sort_spectrum(std::move(raw), SpectrumKind::estimated);
}

/// (1/n) X^T X accumulated entry by entry in row order, so a leading
/// column subset reproduces the corresponding block bit for bit.
inline Matrix second_moment(const SampleSet& s)
{
    detail::require(s.size() >= 1 && s.dim() >= 1, "second_moment: empty sample");
    const Eigen::Index D = s.data.cols();
    Matrix m = Matrix::Zero(D, D);
    for (Eigen::Index i = 0; i < s.data.rows(); ++i) {
        for (Eigen::Index a = 0; a < D; ++a) {
            double xa = s.data(i, a);
            for (Eigen::Index b = a; b < D; ++b) {
                m(a, b) += xa * s.data(i, b);
            }
        }
    }
    m /= static_cast<double>(s.size());
    for (Eigen::Index a = 0; a < D; ++a) {
        for (Eigen::Index b = 0; b < a; ++b) {
            m(a, b) = m(b, a);
        }
    }
    return m;
}

inline GaussianModel empirical_covariance(const SampleSet& s)
{
    return GaussianModel::from_covariance(second_moment(s), SpectrumKind::estimated);
}

/// (8 C / 3) (sqrt((D + u)/n) + (D + u)/n), the covariance concentration radius.
inline double epsilon_u(std::size_t n, std::size_t D, double u, double c_univ = 1.0)
{
    detail::require(n >= 1, "epsilon_u: n must be >= 1");
    detail::require(u >= 0.0, "epsilon_u: u must be >= 0");
    detail::require(c_univ > 0.0, "epsilon_u: universal constant must be positive");
    double ratio = (static_cast<double>(D) + u) / static_cast<double>(n);
    return 8.0 * c_univ / 3.0 * (std::sqrt(ratio) + ratio);
}

/// sum_d max(sigma_d, sigma_d^2) of whichever spectrum is passed.
inline double s_of_sigma(const Spectrum& spec)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        double sigma = spec.sigma(i);
        sum += std::max(sigma, spec[i]);
    }
    return sum;
}

/// Failure-probability bound 2 exp(-eps^2 n / (4 (eps + 1))) for the
/// relative deviation of a chi-square variance estimate.
inline double chi2_deviation_bound(std::size_t n, double eps)
{
    detail::require(eps > 0.0, "chi2_deviation_bound: eps must be positive");
    double nn = static_cast<double>(n);
    return 2.0 * std::exp(-eps * eps * nn / (4.0 * (eps + 1.0)));
}

// ---------------------------------------------------------------------------
// CSV exchange: header x1,...,xD then one row per draw.

inline void write_samples_csv(std::ostream& os, const SampleSet& s)
{
    for (std::size_t j = 0; j < s.dim(); ++j) {
        os << (j ? "," : "") << 'x' << (j + 1);
    }
    os << '\n';
    for (Eigen::Index i = 0; i < s.data.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.data.cols(); ++j) {
            os << (j ? "," : "") << format_double(s.data(i, j));
        }
        os << '\n';
    }
}

inline SampleSet read_samples_csv(std::istream& is)
{
    std::string line;
    std::size_t D = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        D = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
        std::stringstream header(line);
        std::string cell;
        std::size_t j = 0;
        while (std::getline(header, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
                cell.pop_back();
            }
            detail::require(cell == "x" + std::to_string(++j), "read_samples_csv: bad header '" + line + "'");
        }
        break;
    }
    detail::require(D >= 1, "read_samples_csv: missing header");
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r" || line[0] == '#') {
            continue;
        }
        std::stringstream row(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(parse_double(cell));
            ++cols;
        }
        detail::require(cols == D, "read_samples_csv: row " + std::to_string(rows + 1) + " has " +
                                       std::to_string(cols) + " fields, expected " + std::to_string(D));
        ++rows;
    }
    detail::require(rows >= 1, "read_samples_csv: no data rows");
    SampleSet out{RowMatrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(D)), 0};
    std::copy(values.begin(), values.end(), out.data.data());
    return out;
}

}  // namespace gldm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gldm/errors.hpp"

namespace gldm {

enum class SpectrumKind { true_variances, estimated };

/*!
 * Per-component variances of a centered Gaussian with independent
 * components, sorted non-increasing.
 *
 * Dimension arguments throughout the library are counts d in 1..D
 * ("keep the first d components"); component access uses 0-based indices.
 */
class Spectrum {
  public:
    explicit Spectrum(std::vector<double> variances, SpectrumKind kind = SpectrumKind::true_variances)
        : variances_(std::move(variances)), kind_(kind)
    {
        detail::require(!variances_.empty(), "spectrum: at least one component required");
        for (double v : variances_) {
            detail::require(std::isfinite(v) && v >= 0.0,
                            "spectrum: variances must be finite and non-negative");
        }
        detail::require(std::is_sorted(variances_.begin(), variances_.end(), std::greater<>{}),
                        "spectrum: variances must be sorted non-increasing");
    }

    std::size_t size() const { return variances_.size(); }
    SpectrumKind kind() const { return kind_; }
    double operator[](std::size_t i) const { return variances_[i]; }
    double sigma(std::size_t i) const { return std::sqrt(variances_[i]); }
    std::span<const double> variances() const { return variances_; }

    /// True when two adjacent components share a variance.
    bool has_ties() const
    {
        return std::adjacent_find(variances_.begin(), variances_.end()) != variances_.end();
    }

    /// Isotropic on the first d0 components and zero afterwards.
    bool is_isotropic_subspace(std::size_t d0) const
    {
        if (d0 == 0 || d0 > size()) {
            return false;
        }
        for (std::size_t i = 1; i < d0; ++i) {
            if (variances_[i] != variances_[0]) {
                return false;
            }
        }
        for (std::size_t i = d0; i < size(); ++i) {
            if (variances_[i] != 0.0) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const Spectrum&, const Spectrum&) = default;

  private:
    std::vector<double> variances_;
    SpectrumKind kind_;
};

/// Result of sorting raw variances: permutation[k] is the original index of
/// sorted component k.
struct SortedSpectrum {
    Spectrum spectrum;
    std::vector<std::size_t> permutation;
    bool was_sorted;
};

inline SortedSpectrum sort_spectrum(std::vector<double> raw, SpectrumKind kind)
{
    detail::require(!raw.empty(), "spectrum: at least one component required");
    std::vector<std::size_t> perm(raw.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t i, std::size_t j) { return raw[i] > raw[j]; });
    bool identity = std::is_sorted(perm.begin(), perm.end());
    std::vector<double> sorted(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        sorted[k] = raw[perm[k]];
    }
    return SortedSpectrum{Spectrum(std::move(sorted), kind), std::move(perm), identity};
}

inline void require_same_size(const Spectrum& a, const Spectrum& b, const char* what)
{
    detail::require(a.size() == b.size(), std::string(what) + ": spectra differ in length");
}

inline void require_dim(std::size_t d, std::size_t D, const char* what)
{
    detail::require(d >= 1 && d <= D,
                    std::string(what) + ": latent dimension must lie in 1.." + std::to_string(D));
}

}  // namespace gldm

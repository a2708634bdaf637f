#pragma once

#include <cstdint>
#include <vector>

#include "attrition/matrix.hpp"

namespace attrition {

// Quantile bin edges for one feature. `boundaries` is strictly increasing;
// a value lands in the first bin whose boundary is >= it, values above all
// boundaries in the last regular bin, and missing values in a dedicated
// bin after the regular ones.
struct FeatureBins {
    std::vector<double> boundaries;

    int n_regular_bins() const { return static_cast<int>(boundaries.size()) + 1; }
    int missing_bin() const { return n_regular_bins(); }
    int total_bins() const { return n_regular_bins() + 1; }
    int bin_of(double value) const;
};

struct BinningMap {
    std::vector<FeatureBins> features;

    int max_total_bins() const;
};

// Boundaries at empirical quantiles of a seeded sample of at most
// bin_sample_size non-missing values per feature; duplicate cut points are
// collapsed. When a feature has no more distinct values than max_bins,
// every distinct value gets its own bin. Errors on a feature with zero
// non-missing training values.
BinningMap bin_features(const Matrix& train, int max_bins, size_t bin_sample_size, uint64_t seed);

// Pre-binned column-major view of a matrix, used by training.
struct BinnedMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<uint16_t> bins; // [feature * rows + row]

    uint16_t bin(size_t row, size_t feature) const { return bins[feature * rows + row]; }
};

BinnedMatrix bin_matrix(const Matrix& raw, const BinningMap& map);

} // namespace attrition

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attrition/binning.hpp"

namespace attrition {

// Per-bin first/second order sums used by split search.
struct BinStats {
    double grad = 0.0;
    double hess = 0.0;
    double weight = 0.0;
    uint32_t count = 0;

    void add(double g, double h, double w) {
        grad += g;
        hess += h;
        weight += w;
        ++count;
    }
    BinStats& operator+=(const BinStats& o) {
        grad += o.grad;
        hess += o.hess;
        weight += o.weight;
        count += o.count;
        return *this;
    }
    BinStats& operator-=(const BinStats& o) {
        grad -= o.grad;
        hess -= o.hess;
        weight -= o.weight;
        count -= o.count;
        return *this;
    }
};

// Flat [feature][bin] histogram; every feature gets `bins_per_feature`
// slots so subtraction and lookup are simple strides.
struct LeafHistogram {
    size_t n_features = 0;
    int bins_per_feature = 0;
    std::vector<BinStats> stats;

    void reset(size_t features, int bins) {
        n_features = features;
        bins_per_feature = bins;
        stats.assign(features * static_cast<size_t>(bins), BinStats{});
    }
    BinStats* feature(size_t f) { return stats.data() + f * static_cast<size_t>(bins_per_feature); }
    const BinStats* feature(size_t f) const {
        return stats.data() + f * static_cast<size_t>(bins_per_feature);
    }
    // parent - sibling, in place.
    void subtract_from(const LeafHistogram& parent);
};

// Accumulates gradients of `rows` into per-feature histograms. Each
// feature is summed independently in row order, so the parallel variant
// (one feature per task) is bit-identical to the serial one.
void build_histograms_serial(const BinnedMatrix& data, std::span<const uint32_t> rows,
                             const std::vector<double>& grad, const std::vector<double>& hess,
                             const std::vector<double>& weight, LeafHistogram& out);
void build_histograms_parallel(const BinnedMatrix& data, std::span<const uint32_t> rows,
                               const std::vector<double>& grad, const std::vector<double>& hess,
                               const std::vector<double>& weight, LeafHistogram& out);

} // namespace attrition

#include "attrition/histogram.hpp"

#include "attrition/parallel.hpp"

namespace attrition {

void LeafHistogram::subtract_from(const LeafHistogram& parent) {
    for (size_t i = 0; i < stats.size(); ++i) {
        BinStats s = parent.stats[i];
        s -= stats[i];
        stats[i] = s;
    }
}

namespace {

void accumulate_feature(const BinnedMatrix& data, std::span<const uint32_t> rows,
                        const std::vector<double>& grad, const std::vector<double>& hess,
                        const std::vector<double>& weight, size_t f, BinStats* out) {
    const uint16_t* col = data.bins.data() + f * data.rows;
    for (uint32_t r : rows) {
        out[col[r]].add(grad[r], hess[r], weight[r]);
    }
}

} // namespace

void build_histograms_serial(const BinnedMatrix& data, std::span<const uint32_t> rows,
                             const std::vector<double>& grad, const std::vector<double>& hess,
                             const std::vector<double>& weight, LeafHistogram& out) {
    serial_for(data.cols, [&](size_t f) {
        accumulate_feature(data, rows, grad, hess, weight, f, out.feature(f));
    });
}

void build_histograms_parallel(const BinnedMatrix& data, std::span<const uint32_t> rows,
                               const std::vector<double>& grad, const std::vector<double>& hess,
                               const std::vector<double>& weight, LeafHistogram& out) {
    parallel_for(data.cols, [&](size_t f) {
        accumulate_feature(data, rows, grad, hess, weight, f, out.feature(f));
    });
}

} // namespace attrition

#include "attrition/binning.hpp"

#include <algorithm>

#include "attrition/errors.hpp"
#include "attrition/rng.hpp"

namespace attrition {

int FeatureBins::bin_of(double value) const {
    if (Matrix::is_missing(value)) return missing_bin();
    auto it = std::lower_bound(boundaries.begin(), boundaries.end(), value);
    return static_cast<int>(it - boundaries.begin());
}

int BinningMap::max_total_bins() const {
    int m = 0;
    for (const auto& f : features) m = std::max(m, f.total_bins());
    return m;
}

BinningMap bin_features(const Matrix& train, int max_bins, size_t bin_sample_size,
                        uint64_t seed) {
    if (max_bins < 2 || max_bins > 65535) throw ConfigError("max_bins must be in [2, 65535]");
    if (bin_sample_size < 2) throw ConfigError("bin_sample_size must be >= 2");

    BinningMap map;
    map.features.resize(train.cols);
    for (size_t f = 0; f < train.cols; ++f) {
        std::vector<double> sample;
        sample.reserve(train.rows);
        for (size_t r = 0; r < train.rows; ++r) {
            double v = train.at(r, f);
            if (!Matrix::is_missing(v)) sample.push_back(v);
        }
        if (sample.empty()) {
            throw DataError("feature " + std::to_string(f) +
                            " has no non-missing training values");
        }
        if (sample.size() > bin_sample_size) {
            // Partial Fisher-Yates: the first bin_sample_size slots become a
            // uniform sample without replacement.
            Rng rng(mix_seed(seed, f));
            for (size_t i = 0; i < bin_sample_size; ++i) {
                size_t j = i + static_cast<size_t>(rng.below(sample.size() - i));
                std::swap(sample[i], sample[j]);
            }
            sample.resize(bin_sample_size);
        }
        std::sort(sample.begin(), sample.end());

        FeatureBins bins;
        size_t n_distinct = 0;
        for (size_t i = 0; i < sample.size(); ++i) {
            if (i == 0 || sample[i] != sample[i - 1]) ++n_distinct;
        }
        if (n_distinct <= static_cast<size_t>(max_bins)) {
            // One bin per distinct value, cut at midpoints.
            for (size_t i = 1; i < sample.size(); ++i) {
                if (sample[i] != sample[i - 1]) {
                    bins.boundaries.push_back(0.5 * (sample[i - 1] + sample[i]));
                }
            }
        } else {
            size_t m = sample.size();
            for (int j = 1; j < max_bins; ++j) {
                size_t r = static_cast<size_t>(j) * m / static_cast<size_t>(max_bins);
                if (r < 1 || r >= m) continue;
                if (sample[r - 1] < sample[r]) {
                    double cut = 0.5 * (sample[r - 1] + sample[r]);
                    if (bins.boundaries.empty() || cut > bins.boundaries.back()) {
                        bins.boundaries.push_back(cut);
                    }
                }
            }
        }
        map.features[f] = std::move(bins);
    }
    return map;
}

BinnedMatrix bin_matrix(const Matrix& raw, const BinningMap& map) {
    if (raw.cols != map.features.size()) {
        throw DataError("matrix width does not match the binning map");
    }
    BinnedMatrix out;
    out.rows = raw.rows;
    out.cols = raw.cols;
    out.bins.resize(raw.rows * raw.cols);
    for (size_t f = 0; f < raw.cols; ++f) {
        const FeatureBins& bins = map.features[f];
        for (size_t r = 0; r < raw.rows; ++r) {
            out.bins[f * raw.rows + r] = static_cast<uint16_t>(bins.bin_of(raw.at(r, f)));
        }
    }
    return out;
}

} // namespace attrition

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "attrition/errors.hpp"
#include "attrition/evaluate.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/histogram.hpp"
#include "attrition/parallel.hpp"

namespace attrition {

namespace {

struct SplitInfo {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    int threshold_bin = -1;
    bool default_left = true;
    BinStats left;
    BinStats right;

    bool valid() const { return feature >= 0; }
};

struct LeafRec {
    uint32_t begin = 0;
    uint32_t end = 0;
    int node = -1;
    int depth = 0;
    BinStats total;
    LeafHistogram hist;
    SplitInfo best;
};

double leaf_value_of(const BinStats& s, double lambda) {
    const double denom = s.hess + lambda;
    return denom > 0.0 ? -s.grad / denom : 0.0;
}

// Scans every feature, threshold bin and missing direction for the split
// with the highest second order gain. Enumeration order is pinned
// (feature ascending, missing-left before missing-right, bin ascending)
// and only strictly better candidates replace the incumbent, so ties
// resolve the same way on every run.
SplitInfo best_split(const LeafRec& leaf, const BinningMap& binning, const GBDTParams& p) {
    SplitInfo best;
    const BinStats& total = leaf.total;
    const double lam = p.lambda_l2;
    const uint32_t min_data = static_cast<uint32_t>(p.min_data_in_leaf);
    if (total.count < 2 * min_data) return best;
    const double parent_term = total.grad * total.grad / (total.hess + lam);
    for (size_t f = 0; f < binning.features.size(); ++f) {
        const FeatureBins& fb = binning.features[f];
        const BinStats* hist = leaf.hist.feature(f);
        const int n_regular = fb.n_regular_bins();
        const BinStats& missing = hist[fb.missing_bin()];
        for (int dir = 0; dir < 2; ++dir) {
            const bool missing_left = dir == 0;
            BinStats acc;
            if (missing_left) acc = missing;
            for (int t = 0; t < n_regular; ++t) {
                acc += hist[t];
                const BinStats& left = acc;
                if (left.count < min_data || total.count - left.count < min_data) continue;
                BinStats right = total;
                right -= left;
                const double dl = left.hess + lam;
                const double dr = right.hess + lam;
                if (!(dl > 0.0) || !(dr > 0.0)) continue;
                const double gain =
                    left.grad * left.grad / dl + right.grad * right.grad / dr - parent_term;
                if (gain > p.min_gain && gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<int>(f);
                    best.threshold_bin = t;
                    best.default_left = missing_left;
                    best.left = left;
                    best.right = right;
                }
            }
        }
    }
    return best;
}

double tree_value_binned(const Tree& tree, const BinningMap& binning, const BinnedMatrix& data,
                         size_t row) {
    int idx = 0;
    while (!tree.nodes[idx].is_leaf()) {
        const TreeNode& n = tree.nodes[idx];
        const int b = data.bin(row, n.feature);
        if (b == binning.features[n.feature].missing_bin())
            idx = n.default_left ? n.left : n.right;
        else
            idx = b <= n.threshold_bin ? n.left : n.right;
    }
    return tree.nodes[idx].leaf_value;
}

struct TreeBuilder {
    const BinnedMatrix& binned;
    const BinningMap& binning;
    const GBDTParams& params;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const std::vector<double>& weight;
    std::vector<uint32_t>& row_order;

    Tree tree;
    std::vector<LeafRec> leaves;
    double gain_sum = 0.0;

    bool splittable_depth(int depth) const {
        return params.max_depth == 0 || depth < params.max_depth;
    }

    int add_node(const BinStats& total, double lambda) {
        TreeNode node;
        node.leaf_value = leaf_value_of(total, lambda);
        node.cover = total.weight;
        node.count = total.count;
        tree.nodes.push_back(node);
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    void compute_best(LeafRec& rec) {
        rec.best = splittable_depth(rec.depth) ? best_split(rec, binning, params) : SplitInfo{};
    }

    void build_root() {
        BinStats total;
        for (uint32_t r : row_order) total.add(grad[r], hess[r], weight[r]);
        LeafRec root;
        root.begin = 0;
        root.end = static_cast<uint32_t>(row_order.size());
        root.depth = 0;
        root.total = total;
        root.node = add_node(total, params.lambda_l2);
        root.hist.reset(binned.cols, binning.max_total_bins());
        build_histograms_parallel(binned, std::span<const uint32_t>(row_order), grad, hess, weight,
                                  root.hist);
        compute_best(root);
        leaves.push_back(std::move(root));
    }

    // Picks the leaf with the strictly highest gain (earliest wins ties),
    // or -1 when nothing is splittable.
    int pick_leaf() const {
        int pick = -1;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < leaves.size(); ++i) {
            if (!leaves[i].best.valid()) continue;
            if (leaves[i].best.gain > best_gain) {
                best_gain = leaves[i].best.gain;
                pick = static_cast<int>(i);
            }
        }
        return pick;
    }

    void split_leaf(int k) {
        LeafRec parent = std::move(leaves[k]);
        const SplitInfo& s = parent.best;
        const int f = s.feature;
        const FeatureBins& fb = binning.features[f];

        auto goes_left = [&](uint32_t r) {
            const int b = binned.bin(r, f);
            if (b == fb.missing_bin()) return s.default_left;
            return b <= s.threshold_bin;
        };
        auto first = row_order.begin() + parent.begin;
        auto last = row_order.begin() + parent.end;
        auto mid = std::stable_partition(first, last, goes_left);
        const uint32_t split_at = parent.begin + static_cast<uint32_t>(mid - first);
        if (split_at - parent.begin != s.left.count)
            throw std::logic_error("split partition does not match histogram counts");

        LeafRec left;
        left.begin = parent.begin;
        left.end = split_at;
        left.depth = parent.depth + 1;
        left.total = s.left;
        LeafRec right;
        right.begin = split_at;
        right.end = parent.end;
        right.depth = parent.depth + 1;
        right.total = s.right;

        left.node = add_node(left.total, params.lambda_l2);
        right.node = add_node(right.total, params.lambda_l2);
        TreeNode& pnode = tree.nodes[parent.node];
        pnode.feature = f;
        pnode.threshold_bin = s.threshold_bin;
        pnode.default_left = s.default_left;
        pnode.left = left.node;
        pnode.right = right.node;
        pnode.gain = s.gain;
        pnode.leaf_value = 0.0;
        gain_sum += s.gain;

        // Accumulate the smaller child directly, derive the larger one by
        // subtracting it from the parent histogram.
        LeafRec* small = left.total.count <= right.total.count ? &left : &right;
        LeafRec* large = small == &left ? &right : &left;
        small->hist.reset(binned.cols, binning.max_total_bins());
        build_histograms_parallel(
            binned, std::span<const uint32_t>(row_order.data() + small->begin,
                                              small->end - small->begin),
            grad, hess, weight, small->hist);
        large->hist = small->hist;
        large->hist.subtract_from(parent.hist);
        parent.hist = LeafHistogram{};

        compute_best(left);
        compute_best(right);
        leaves[k] = std::move(left);
        leaves.push_back(std::move(right));
    }

    bool run() {
        build_root();
        if (!leaves[0].best.valid()) return false;
        int n_leaves = 1;
        while (n_leaves < params.num_leaves) {
            const int k = pick_leaf();
            if (k < 0) break;
            split_leaf(k);
            ++n_leaves;
        }
        return true;
    }
};

double weighted_logloss(const std::vector<int>& labels, const std::vector<double>& margins,
                        const std::vector<double>& weights) {
    double loss = 0.0;
    double wsum = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(sigmoid(margins[i]), 1e-15, 1.0 - 1e-15);
        loss -= weights[i] * (labels[i] == 1 ? std::log(p) : std::log(1.0 - p));
        wsum += weights[i];
    }
    return loss / wsum;
}

} // namespace

TrainResult train_gbdt(const Matrix& train, const std::vector<int>& train_labels,
                       const std::vector<double>& sample_weights, const Matrix& valid,
                       const std::vector<int>& valid_labels, const GBDTParams& params,
                       const std::vector<std::string>& feature_names) {
    params.validate();
    if (train.rows == 0) throw DataError("training matrix is empty");
    if (train.cols == 0) throw DataError("training matrix has no features");
    if (train.rows > std::numeric_limits<uint32_t>::max())
        throw DataError("training matrix exceeds the supported row count");
    if (train_labels.size() != train.rows)
        throw DataError("training label count does not match row count");
    if (sample_weights.size() != train.rows)
        throw DataError("sample weight count does not match row count");
    if (feature_names.size() != train.cols)
        throw DataError("feature name count does not match matrix width");
    if (valid_labels.size() != valid.rows)
        throw DataError("validation label count does not match row count");
    if (valid.rows > 0 && valid.cols != train.cols)
        throw DataError("validation matrix width does not match training matrix");
    for (int y : train_labels)
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    for (int y : valid_labels)
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    for (double w : sample_weights)
        if (!(w > 0.0)) throw DataError("sample weights must be positive");

    TrainResult result;
    GBDTModel& model = result.model;
    model.params = params;
    model.learning_rate = params.learning_rate;
    model.feature_names = feature_names;
    model.binning = bin_features(train, params.max_bins, params.bin_sample_size, params.seed);
    const BinnedMatrix binned = bin_matrix(train, model.binning);
    const BinnedMatrix valid_binned =
        valid.rows > 0 ? bin_matrix(valid, model.binning) : BinnedMatrix{};

    double wsum = 0.0;
    double wpos = 0.0;
    for (size_t i = 0; i < train.rows; ++i) {
        wsum += sample_weights[i];
        if (train_labels[i] == 1) wpos += sample_weights[i];
    }
    model.base_score = std::clamp(logit(wpos / wsum), -10.0, 10.0);

    bool has_valid = false;
    if (valid.rows > 0) {
        bool any_pos = false;
        bool any_neg = false;
        for (int y : valid_labels) (y == 1 ? any_pos : any_neg) = true;
        has_valid = any_pos && any_neg;
    }

    const size_t n = train.rows;
    std::vector<double> margins(n, model.base_score);
    std::vector<double> valid_margins(valid.rows, model.base_score);
    std::vector<double> grad(n), hess(n);
    std::vector<uint32_t> row_order(n);

    TrainingLog& log = result.log;
    double best_metric = -std::numeric_limits<double>::infinity();
    int rounds_since_best = 0;

    for (int round = 0; round < params.n_estimators; ++round) {
        parallel_for(n, [&](size_t i) {
            const double p = sigmoid(margins[i]);
            grad[i] = sample_weights[i] * (p - train_labels[i]);
            hess[i] = sample_weights[i] * p * (1.0 - p);
        });
        std::iota(row_order.begin(), row_order.end(), 0u);

        TreeBuilder builder{binned, model.binning, params, grad, hess, sample_weights, row_order};
        if (!builder.run()) break; // no split satisfies the constraints any more

        for (const LeafRec& rec : builder.leaves) {
            const double delta = params.learning_rate * builder.tree.nodes[rec.node].leaf_value;
            for (uint32_t i = rec.begin; i < rec.end; ++i) margins[row_order[i]] += delta;
        }
        model.trees.push_back(std::move(builder.tree));
        const Tree& tree = model.trees.back();

        TrainRound entry;
        entry.split_gain_sum = builder.gain_sum;
        entry.train_logloss = weighted_logloss(train_labels, margins, sample_weights);
        entry.valid_auc_pr = std::numeric_limits<double>::quiet_NaN();
        if (valid.rows > 0) {
            parallel_for(valid.rows, [&](size_t i) {
                valid_margins[i] +=
                    params.learning_rate * tree_value_binned(tree, model.binning, valid_binned, i);
            });
        }
        if (has_valid) {
            entry.valid_auc_pr = auc_pr(valid_margins, valid_labels);
            if (entry.valid_auc_pr > best_metric) {
                best_metric = entry.valid_auc_pr;
                log.best_round = round;
                rounds_since_best = 0;
            } else {
                ++rounds_since_best;
            }
        }
        log.rounds.push_back(entry);
        if (has_valid && params.early_stopping_rounds > 0 &&
            rounds_since_best >= params.early_stopping_rounds) {
            log.early_stopped = true;
            break;
        }
    }

    if (has_valid && params.early_stopping_rounds > 0 && log.best_round >= 0) {
        model.trees.resize(static_cast<size_t>(log.best_round) + 1);
        log.rounds.resize(static_cast<size_t>(log.best_round) + 1);
    }
    return result;
}

} // namespace attrition

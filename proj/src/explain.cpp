#include "attrition/explain.hpp"

#include <bit>
#include <cmath>
#include <set>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"
#include "attrition/parallel.hpp"

namespace attrition {

ImportanceKind parse_importance_kind(const std::string& text) {
    if (text == "gain") return ImportanceKind::gain;
    if (text == "split_count") return ImportanceKind::split_count;
    throw ConfigError("unknown importance kind: " + text);
}

namespace {

// Shapley coalition weights w(k, t) = k!(t-1-k)!/t! for k in [0, t).
std::vector<double> shap_weights(int t) {
    std::vector<double> w(static_cast<size_t>(t));
    w[0] = 1.0 / t;
    for (int k = 1; k < t; ++k) w[k] = w[k - 1] * k / (t - k);
    return w;
}

void require_cover(const TreeNode& n) {
    if (!(n.cover > 0.0))
        throw DataError("model lacks positive per-node cover counts, cannot attribute");
}

struct PathEdge {
    int feature;
    double fraction; // cover(child) / cover(node)
    bool follows;    // whether the explained row routes to this child
};

// One root-to-leaf path contributes a product game over the distinct
// features on the path: the factor of feature f is 1 if f is known and the
// row follows every f edge, 0 if known and it deviates, and the product of
// cover fractions when unknown. Shapley values of a product of per-feature
// factors reduce to coefficient sums of the polynomial over "followed"
// features, which keeps this exact and cheap.
void leaf_contribution(const std::vector<PathEdge>& path, double leaf_value,
                       std::vector<double>& phi) {
    std::vector<int> feats;
    std::vector<char> hot;
    std::vector<double> frac;
    for (const PathEdge& e : path) {
        size_t k = 0;
        while (k < feats.size() && feats[k] != e.feature) ++k;
        if (k == feats.size()) {
            feats.push_back(e.feature);
            hot.push_back(e.follows ? 1 : 0);
            frac.push_back(e.fraction);
        } else {
            hot[k] = hot[k] && e.follows ? 1 : 0;
            frac[k] *= e.fraction;
        }
    }
    const int t = static_cast<int>(feats.size());
    if (t == 0) return;
    const std::vector<double> w = shap_weights(t);

    // Polynomial over followed features, product over (z + b_f); features
    // the row deviates from contribute constant factors b_f.
    std::vector<double> poly{1.0};
    int zero_cold = 0;
    double cold_prod = 1.0;
    for (size_t i = 0; i < feats.size(); ++i) {
        if (hot[i]) {
            const double b = frac[i];
            poly.push_back(0.0);
            for (size_t k = poly.size() - 1; k >= 1; --k) poly[k] = poly[k - 1] + b * poly[k];
            poly[0] = b * poly[0];
        } else if (frac[i] == 0.0) {
            ++zero_cold;
        } else {
            cold_prod *= frac[i];
        }
    }
    const double cold_all = zero_cold > 0 ? 0.0 : cold_prod;

    for (size_t j = 0; j < feats.size(); ++j) {
        if (hot[j]) {
            if (cold_all == 0.0) continue;
            // Remove (z + b_j) from the polynomial by synthetic division.
            const double b = frac[j];
            const size_t deg = poly.size() - 1;
            std::vector<double> q(deg);
            q[deg - 1] = poly[deg];
            for (size_t i = deg - 1; i >= 1; --i) q[i - 1] = poly[i] - b * q[i];
            double sum = 0.0;
            for (size_t k = 0; k < q.size(); ++k) sum += w[k] * q[k];
            phi[feats[j]] += leaf_value * (1.0 - b) * sum * cold_all;
        } else {
            double cold_excl;
            if (frac[j] == 0.0)
                cold_excl = zero_cold > 1 ? 0.0 : cold_prod;
            else
                cold_excl = zero_cold > 0 ? 0.0 : cold_prod / frac[j];
            if (cold_excl == 0.0) continue;
            double sum = 0.0;
            for (size_t k = 0; k < poly.size(); ++k) sum += w[k] * poly[k];
            phi[feats[j]] += leaf_value * (0.0 - frac[j]) * sum * cold_excl;
        }
    }
}

void shap_tree(const Tree& tree, const BinningMap& binning, const double* row,
               std::vector<double>& phi) {
    std::vector<PathEdge> path;
    auto rec = [&](auto&& self, int idx) -> void {
        const TreeNode& n = tree.nodes[idx];
        if (n.is_leaf()) {
            leaf_contribution(path, n.leaf_value, phi);
            return;
        }
        require_cover(n);
        const int followed = route_child(n, row, binning);
        path.push_back({n.feature, tree.nodes[n.left].cover / n.cover, followed == n.left});
        self(self, n.left);
        path.back() = {n.feature, tree.nodes[n.right].cover / n.cover, followed == n.right};
        self(self, n.right);
        path.pop_back();
    };
    rec(rec, 0);
}

double tree_mean(const Tree& tree, int idx) {
    const TreeNode& n = tree.nodes[idx];
    if (n.is_leaf()) return n.leaf_value;
    require_cover(n);
    return (tree.nodes[n.left].cover / n.cover) * tree_mean(tree, n.left) +
           (tree.nodes[n.right].cover / n.cover) * tree_mean(tree, n.right);
}

} // namespace

ShapExplanation tree_shap(const GBDTModel& model, const double* row) {
    ShapExplanation ex;
    ex.phi.assign(model.feature_names.size(), 0.0);
    double base = model.base_score;
    for (const Tree& t : model.trees) {
        shap_tree(t, model.binning, row, ex.phi);
        base += model.learning_rate * tree_mean(t, 0);
    }
    for (double& p : ex.phi) p *= model.learning_rate;
    ex.base_value = base;
    double total = 0.0;
    for (double p : ex.phi) total += p;
    ex.reconstructed_margin = ex.base_value + total;
    return ex;
}

namespace {

double expvalue(const Tree& tree, const BinningMap& binning, const double* row, uint32_t mask,
                const std::vector<int>& bit_of, int idx) {
    const TreeNode& n = tree.nodes[idx];
    if (n.is_leaf()) return n.leaf_value;
    require_cover(n);
    const int bit = bit_of[n.feature];
    if (bit >= 0 && ((mask >> bit) & 1u))
        return expvalue(tree, binning, row, mask, bit_of, route_child(n, row, binning));
    return (tree.nodes[n.left].cover / n.cover) *
               expvalue(tree, binning, row, mask, bit_of, n.left) +
           (tree.nodes[n.right].cover / n.cover) *
               expvalue(tree, binning, row, mask, bit_of, n.right);
}

} // namespace

ShapExplanation shapley_oracle(const GBDTModel& model, const double* row) {
    const size_t n_features = model.feature_names.size();
    std::set<int> used_set;
    for (const Tree& t : model.trees)
        for (const TreeNode& n : t.nodes)
            if (!n.is_leaf()) used_set.insert(n.feature);
    if (used_set.size() > 12)
        throw DataError("subset enumeration limited to models using at most 12 features");
    const std::vector<int> used(used_set.begin(), used_set.end());
    const int m = static_cast<int>(used.size());
    std::vector<int> bit_of(n_features, -1);
    for (int j = 0; j < m; ++j) bit_of[used[j]] = j;

    const uint32_t n_masks = 1u << m;
    std::vector<double> value(n_masks);
    for (uint32_t mask = 0; mask < n_masks; ++mask) {
        double v = model.base_score;
        for (const Tree& t : model.trees)
            v += model.learning_rate * expvalue(t, model.binning, row, mask, bit_of, 0);
        value[mask] = v;
    }

    ShapExplanation ex;
    ex.phi.assign(n_features, 0.0);
    ex.base_value = value[0];
    if (m > 0) {
        const std::vector<double> w = shap_weights(m);
        for (int j = 0; j < m; ++j) {
            const uint32_t bit = 1u << j;
            double pj = 0.0;
            for (uint32_t mask = 0; mask < n_masks; ++mask) {
                if (mask & bit) continue;
                pj += w[std::popcount(mask)] * (value[mask | bit] - value[mask]);
            }
            ex.phi[used[j]] = pj;
        }
    }
    double total = 0.0;
    for (double p : ex.phi) total += p;
    ex.reconstructed_margin = ex.base_value + total;
    return ex;
}

namespace {

std::vector<ShapExplanation> batch_impl(const GBDTModel& model, const Matrix& rows,
                                        bool parallel) {
    if (rows.cols != model.feature_names.size())
        throw DataError("explanation matrix width does not match the model");
    std::vector<ShapExplanation> out(rows.rows);
    auto body = [&](size_t r) { out[r] = tree_shap(model, rows.row(r)); };
    if (parallel)
        parallel_for(rows.rows, body);
    else
        serial_for(rows.rows, body);
    return out;
}

} // namespace

std::vector<ShapExplanation> tree_shap_batch_serial(const GBDTModel& model, const Matrix& rows) {
    return batch_impl(model, rows, false);
}

std::vector<ShapExplanation> tree_shap_batch_parallel(const GBDTModel& model, const Matrix& rows) {
    return batch_impl(model, rows, true);
}

ImportanceTable feature_importance(const GBDTModel& model, ImportanceKind kind) {
    const size_t n_features = model.feature_names.size();
    ImportanceTable table;
    table.features = model.feature_names;
    table.gain_sum.assign(n_features, 0.0);
    table.split_count.assign(n_features, 0);
    for (const Tree& t : model.trees) {
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) continue;
            table.gain_sum[n.feature] += n.gain;
            table.split_count[n.feature] += 1;
        }
    }
    double total = 0.0;
    for (size_t f = 0; f < n_features; ++f)
        total += kind == ImportanceKind::gain ? table.gain_sum[f]
                                              : static_cast<double>(table.split_count[f]);
    table.shares_defined = total > 0.0;
    table.share.assign(n_features, 0.0);
    if (table.shares_defined) {
        for (size_t f = 0; f < n_features; ++f) {
            const double v = kind == ImportanceKind::gain
                                 ? table.gain_sum[f]
                                 : static_cast<double>(table.split_count[f]);
            table.share[f] = v / total;
        }
    }
    return table;
}

PartialDependence partial_dependence(const GBDTModel& model, int feature,
                                     const std::vector<double>& grid, const Matrix& reference) {
    if (grid.empty()) throw DataError("partial dependence needs a non-empty grid");
    if (reference.rows == 0) throw DataError("partial dependence needs reference rows");
    if (feature < 0 || feature >= static_cast<int>(model.feature_names.size()))
        throw DataError("partial dependence feature index out of range");
    if (reference.cols != model.feature_names.size())
        throw DataError("reference matrix width does not match the model");
    PartialDependence pd;
    pd.feature = feature;
    pd.grid = grid;
    pd.mean_margin.resize(grid.size());
    std::vector<double> buf(reference.cols);
    for (size_t g = 0; g < grid.size(); ++g) {
        double sum = 0.0;
        for (size_t r = 0; r < reference.rows; ++r) {
            const double* src = reference.row(r);
            for (size_t c = 0; c < reference.cols; ++c) buf[c] = src[c];
            buf[static_cast<size_t>(feature)] = grid[g];
            sum += model.margin_for(buf.data());
        }
        pd.mean_margin[g] = sum / static_cast<double>(reference.rows);
    }
    return pd;
}

void write_shap_csv(const std::string& path, const std::vector<std::string>& employee_ids,
                    const std::vector<std::string>& snapshot_dates,
                    const std::vector<std::string>& feature_names, const Matrix& rows,
                    const std::vector<ShapExplanation>& explanations) {
    if (employee_ids.size() != explanations.size() || snapshot_dates.size() != explanations.size() ||
        rows.rows != explanations.size() || rows.cols != feature_names.size())
        throw DataError("explanation export inputs are inconsistent");
    CsvTable table;
    table.header = {"employee_id", "snapshot_date", "feature", "value", "phi"};
    for (size_t r = 0; r < explanations.size(); ++r) {
        const ShapExplanation& ex = explanations[r];
        table.rows.push_back({employee_ids[r], snapshot_dates[r], "__base__", "",
                              format_double(ex.base_value)});
        for (size_t f = 0; f < feature_names.size(); ++f) {
            const double v = rows.at(r, f);
            table.rows.push_back({employee_ids[r], snapshot_dates[r], feature_names[f],
                                  Matrix::is_missing(v) ? "" : format_double(v),
                                  format_double(ex.phi[f])});
        }
    }
    write_csv(path, table);
}

void write_importance_csv(const std::string& path, const ImportanceTable& table) {
    CsvTable out;
    out.header = {"feature", "gain", "split_count", "share"};
    for (size_t f = 0; f < table.features.size(); ++f) {
        out.rows.push_back({table.features[f], format_double(table.gain_sum[f]),
                            std::to_string(table.split_count[f]),
                            table.shares_defined ? format_double(table.share[f]) : ""});
    }
    write_csv(path, out);
}

void write_pdp_csv(const std::string& path, const std::vector<std::string>& feature_names,
                   const std::vector<PartialDependence>& curves) {
    CsvTable out;
    out.header = {"feature", "grid_value", "mean_margin"};
    for (const PartialDependence& pd : curves) {
        const std::string& name = feature_names[static_cast<size_t>(pd.feature)];
        for (size_t g = 0; g < pd.grid.size(); ++g)
            out.rows.push_back(
                {name, format_double(pd.grid[g]), format_double(pd.mean_margin[g])});
    }
    write_csv(path, out);
}

} // namespace attrition

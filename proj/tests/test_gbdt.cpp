#include <cmath>
#include <string>
#include <vector>

#include "attrition/errors.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/histogram.hpp"
#include "attrition/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrition;

namespace {

Matrix column_matrix(const std::vector<double>& values) {
    Matrix m(values.size(), 1);
    for (size_t i = 0; i < values.size(); ++i) m.at(i, 0) = values[i];
    return m;
}

std::vector<double> unit_weights(size_t n) { return std::vector<double>(n, 1.0); }

GBDTParams stump_params() {
    GBDTParams p;
    p.num_leaves = 2;
    p.n_estimators = 1;
    p.learning_rate = 0.1;
    p.lambda_l2 = 1.0;
    p.min_data_in_leaf = 1;
    return p;
}

} // namespace

TEST_CASE("quantile binning") {
    const Matrix m = column_matrix({1, 2, 3, 4});
    const BinningMap map = bin_features(m, 2, 200000, 0);
    REQUIRE(map.features.size() == 1);
    const FeatureBins& b = map.features[0];
    CHECK(b.boundaries == std::vector<double>{2.5});
    CHECK(b.bin_of(1) == 0);
    CHECK(b.bin_of(2) == 0);
    CHECK(b.bin_of(3) == 1);
    CHECK(b.bin_of(4) == 1);
    CHECK(b.bin_of(2.5) == 0); // boundary belongs to the lower bin
    CHECK(b.bin_of(std::nan("")) == b.missing_bin());
    CHECK(b.missing_bin() == 2);
    CHECK(b.total_bins() == 3);
}

TEST_CASE("few distinct values get one bin each") {
    const Matrix m = column_matrix({5, 5, 7, 7, 7});
    const BinningMap map = bin_features(m, 255, 200000, 0);
    const FeatureBins& b = map.features[0];
    CHECK(b.boundaries == std::vector<double>{6.0});
    CHECK(b.n_regular_bins() == 2);
    CHECK(b.bin_of(5) == 0);
    CHECK(b.bin_of(7) == 1);
    CHECK(b.bin_of(100) == 1); // above all cuts -> last regular bin
}

TEST_CASE("binning input validation") {
    const Matrix m = column_matrix({1, 2});
    CHECK_THROWS_AS(bin_features(m, 1, 200000, 0), ConfigError);
    Matrix all_missing = column_matrix({std::nan(""), std::nan("")});
    CHECK_THROWS_AS(bin_features(all_missing, 2, 200000, 0), DataError);
}

TEST_CASE("binning is stable under large-sample subsampling") {
    Rng rng(3);
    Matrix m(5000, 1);
    for (double& v : m.data) v = rng.normal();
    const BinningMap a = bin_features(m, 16, 1000, 42);
    const BinningMap b = bin_features(m, 16, 1000, 42);
    CHECK(a.features[0].boundaries == b.features[0].boundaries);
    CHECK(a.features[0].boundaries.size() <= 15);
}

TEST_CASE("sigmoid and logit invert each other") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(logit(0.5) == 0.0);
    for (double p : {0.01, 0.2, 0.5, 0.9, 0.999}) {
        CHECK(sigmoid(logit(p)) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(sigmoid(40.0) == doctest::Approx(1.0));
    CHECK(sigmoid(-40.0) == doctest::Approx(0.0));
}

TEST_CASE("base score is the clamped log-odds of the weighted positive rate") {
    const Matrix train = column_matrix({0, 1});
    SUBCASE("weighted") {
        const auto res = train_gbdt(train, {1, 0}, {3.0, 1.0}, Matrix(0, 1), {},
                                    stump_params(), {"x"});
        CHECK(res.model.base_score == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }
    SUBCASE("single class clamps") {
        const auto res = train_gbdt(train, {1, 1}, unit_weights(2), Matrix(0, 1), {},
                                    stump_params(), {"x"});
        CHECK(res.model.base_score == 10.0);
    }
}

TEST_CASE("one stump learns the analytic split") {
    const Matrix train = column_matrix({0, 0, 1, 1});
    const std::vector<int> labels{0, 0, 1, 1};
    const auto res =
        train_gbdt(train, labels, unit_weights(4), Matrix(0, 1), {}, stump_params(), {"x"});
    const GBDTModel& model = res.model;
    CHECK(model.base_score == 0.0);
    REQUIRE(model.trees.size() == 1);
    const Tree& tree = model.trees[0];
    REQUIRE(tree.nodes.size() == 3);
    const TreeNode& root = tree.nodes[0];
    CHECK_FALSE(root.is_leaf());
    CHECK(root.feature == 0);
    CHECK(root.threshold_bin == 0);

    // grad/hess at p=0.5: G_L=1, H_L=0.5, G_R=-1, H_R=0.5, lambda=1.
    CHECK(root.gain == doctest::Approx(2.0 / 1.5).epsilon(1e-12));
    CHECK(root.cover == 4.0);
    CHECK(root.count == 4);
    CHECK(tree.nodes[root.left].leaf_value == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(tree.nodes[root.right].leaf_value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(tree.nodes[root.left].cover == 2.0);
    CHECK(tree.nodes[root.left].count == 2);

    // Empty missing bin: the tie between directions keeps missing-left.
    CHECK(root.default_left);

    const double lo = 0.0, hi = 1.0;
    CHECK(model.margin_for(&lo) == doctest::Approx(-0.1 * 2.0 / 3.0).epsilon(1e-12));
    CHECK(model.margin_for(&hi) == doctest::Approx(0.1 * 2.0 / 3.0).epsilon(1e-12));

    REQUIRE(res.log.rounds.size() == 1);
    CHECK(res.log.rounds[0].split_gain_sum == doctest::Approx(root.gain).epsilon(1e-12));
    CHECK(res.log.best_round == -1); // no validation fold
    CHECK_FALSE(res.log.early_stopped);
}

TEST_CASE("missing values learn their default direction") {
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) { x.push_back(0.0); y.push_back(0); }
    for (int i = 0; i < 20; ++i) { x.push_back(1.0); y.push_back(1); }
    for (int i = 0; i < 10; ++i) { x.push_back(std::nan("")); y.push_back(1); }
    const Matrix train = column_matrix(x);
    const auto res =
        train_gbdt(train, y, unit_weights(50), Matrix(0, 1), {}, stump_params(), {"x"});
    const Tree& tree = res.model.trees[0];
    const TreeNode& root = tree.nodes[0];
    REQUIRE_FALSE(root.is_leaf());
    // Missing rows are positives, so they belong with the x=1 side.
    CHECK_FALSE(root.default_left);

    const double miss = std::nan(""), one = 1.0, zero = 0.0;
    CHECK(res.model.margin_for(&miss) == res.model.margin_for(&one));
    CHECK(res.model.margin_for(&miss) != res.model.margin_for(&zero));

    // Leaf values carry the -G/(H+lambda) signs.
    CHECK(tree.nodes[root.left].leaf_value < 0.0);
    CHECK(tree.nodes[root.right].leaf_value > 0.0);
}

TEST_CASE("early stopping truncates to the best round") {
    std::vector<double> x;
    std::vector<int> y;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const int label = i % 2;
        x.push_back(label + 0.2 * rng.normal());
        y.push_back(label);
    }
    const Matrix train = column_matrix(std::vector<double>(x.begin(), x.begin() + 150));
    const Matrix valid = column_matrix(std::vector<double>(x.begin() + 150, x.end()));
    const std::vector<int> ty(y.begin(), y.begin() + 150);
    const std::vector<int> vy(y.begin() + 150, y.end());

    GBDTParams p = stump_params();
    p.n_estimators = 80;
    p.early_stopping_rounds = 5;
    p.num_leaves = 4;
    const auto res = train_gbdt(train, ty, unit_weights(150), valid, vy, p, {"x"});
    REQUIRE(res.log.best_round >= 0);
    CHECK(res.log.rounds.size() == res.model.trees.size());
    if (res.log.early_stopped) {
        CHECK(res.model.trees.size() == size_t(res.log.best_round) + 1);
        CHECK(res.model.trees.size() < 80);
    }
    // The retained best round dominates every retained round.
    for (const TrainRound& r : res.log.rounds) {
        CHECK(r.valid_auc_pr <= res.log.rounds[res.log.best_round].valid_auc_pr);
    }
}

TEST_CASE("perfect validation from round one stops immediately") {
    const Matrix train = column_matrix({0, 0, 1, 1});
    const Matrix valid = column_matrix({0, 1});
    GBDTParams p = stump_params();
    p.n_estimators = 50;
    p.early_stopping_rounds = 3;
    const auto res =
        train_gbdt(train, {0, 0, 1, 1}, unit_weights(4), valid, {0, 1}, p, {"x"});
    CHECK(res.log.early_stopped);
    CHECK(res.log.best_round == 0);
    CHECK(res.model.trees.size() == 1);
    CHECK(res.log.rounds.size() == 1);
    CHECK(res.log.rounds[0].valid_auc_pr == 1.0);
}

TEST_CASE("training logloss decreases on separable data") {
    Rng rng(4);
    Matrix train(300, 2);
    std::vector<int> labels(300);
    for (size_t i = 0; i < 300; ++i) {
        labels[i] = i % 2;
        train.at(i, 0) = labels[i] * 2.0 + rng.normal();
        train.at(i, 1) = rng.normal();
    }
    GBDTParams p;
    p.n_estimators = 20;
    p.min_data_in_leaf = 5;
    const auto res =
        train_gbdt(train, labels, unit_weights(300), Matrix(0, 2), {}, p, {"a", "b"});
    REQUIRE(res.log.rounds.size() == 20);
    CHECK(res.log.rounds.back().train_logloss < res.log.rounds.front().train_logloss);
}

TEST_CASE("histogram subtraction equals a direct build") {
    // Dyadic gradients keep the float arithmetic exact, so parent - left
    // must reproduce the right child bit for bit.
    Rng rng(17);
    Matrix raw(128, 3);
    for (double& v : raw.data) v = std::floor(rng.uniform01() * 8.0);
    const BinningMap map = bin_features(raw, 8, 200000, 0);
    const BinnedMatrix binned = bin_matrix(raw, map);

    std::vector<double> grad(128), hess(128), weight(128, 1.0);
    for (size_t i = 0; i < 128; ++i) {
        grad[i] = std::floor(rng.uniform01() * 16.0) - 8.0;
        hess[i] = 0.25 * std::floor(rng.uniform01() * 4.0 + 1.0);
    }
    std::vector<uint32_t> parent(128), left, right;
    for (uint32_t i = 0; i < 128; ++i) {
        parent[i] = i;
        (i % 3 == 0 ? left : right).push_back(i);
    }

    const int bins = map.max_total_bins();
    LeafHistogram hp, hl, hr, hsub;
    hp.reset(3, bins);
    hl.reset(3, bins);
    hr.reset(3, bins);
    build_histograms_serial(binned, parent, grad, hess, weight, hp);
    build_histograms_serial(binned, left, grad, hess, weight, hl);
    build_histograms_serial(binned, right, grad, hess, weight, hr);

    hsub = hl;
    hsub.subtract_from(hp);
    REQUIRE(hsub.stats.size() == hr.stats.size());
    for (size_t i = 0; i < hr.stats.size(); ++i) {
        CHECK(hsub.stats[i].grad == hr.stats[i].grad);
        CHECK(hsub.stats[i].hess == hr.stats[i].hess);
        CHECK(hsub.stats[i].weight == hr.stats[i].weight);
        CHECK(hsub.stats[i].count == hr.stats[i].count);
    }
}

TEST_CASE("model json round-trips and predicts identically") {
    std::vector<double> x;
    std::vector<int> y;
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        const int label = i % 2;
        x.push_back(rng.uniform01() < 0.1 ? std::nan("") : label + 0.5 * rng.normal());
        y.push_back(label);
    }
    GBDTParams p;
    p.n_estimators = 10;
    p.min_data_in_leaf = 2;
    p.num_leaves = 4;
    const auto res =
        train_gbdt(column_matrix(x), y, unit_weights(100), Matrix(0, 1), {}, p, {"x"});

    const std::string json = res.model.to_json();
    const GBDTModel back = GBDTModel::from_json(json);
    CHECK(back.to_json() == json);
    CHECK(back.feature_names == res.model.feature_names);

    const Matrix probe = column_matrix({-1.0, 0.0, 0.3, 1.0, std::nan("")});
    const Predictions a = predict(res.model, probe);
    const Predictions b = predict(back, probe);
    CHECK(a.margins == b.margins);
    CHECK(a.probabilities == b.probabilities);
    for (size_t i = 0; i < a.margins.size(); ++i) {
        CHECK(a.probabilities[i] == sigmoid(a.margins[i]));
    }

    TempDir dir("gbdt");
    const std::string path = dir.file("model.json");
    res.model.save(path);
    CHECK(GBDTModel::load(path).to_json() == json);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Rng rng(12);
    Matrix train(200, 4);
    std::vector<int> labels(200);
    for (size_t i = 0; i < 200; ++i) {
        labels[i] = i % 2;
        for (size_t c = 0; c < 4; ++c) train.at(i, c) = rng.normal() + labels[i] * (c == 1);
    }
    GBDTParams p;
    p.n_estimators = 8;
    p.seed = 77;
    const std::vector<std::string> names{"a", "b", "c", "d"};
    const auto r1 = train_gbdt(train, labels, unit_weights(200), Matrix(0, 4), {}, p, names);
    const auto r2 = train_gbdt(train, labels, unit_weights(200), Matrix(0, 4), {}, p, names);
    CHECK(r1.model.to_json() == r2.model.to_json());
}

TEST_CASE("parameter and input validation") {
    GBDTParams p;
    p.num_leaves = 1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.learning_rate = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.lambda_l2 = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    CHECK_NOTHROW(p.validate());

    const Matrix train = column_matrix({0, 1});
    CHECK_THROWS_AS(
        train_gbdt(train, {0, 2}, unit_weights(2), Matrix(0, 1), {}, stump_params(), {"x"}),
        DataError);
    CHECK_THROWS_AS(
        train_gbdt(train, {0}, unit_weights(2), Matrix(0, 1), {}, stump_params(), {"x"}),
        DataError);
    CHECK_THROWS_AS(
        train_gbdt(train, {0, 1}, {1.0, 0.0}, Matrix(0, 1), {}, stump_params(), {"x"}),
        DataError);
    CHECK_THROWS_AS(
        train_gbdt(Matrix(0, 1), {}, {}, Matrix(0, 1), {}, stump_params(), {"x"}),
        DataError);
}

TEST_CASE("min_data_in_leaf and min_gain block weak splits") {
    const Matrix train = column_matrix({0, 0, 0, 1});
    const std::vector<int> labels{0, 0, 0, 1};
    GBDTParams p = stump_params();
    p.min_data_in_leaf = 2; // the x=1 side would hold a single row
    const auto res = train_gbdt(train, labels, unit_weights(4), Matrix(0, 1), {}, p, {"x"});
    for (const Tree& t : res.model.trees) {
        for (const TreeNode& n : t.nodes) {
            if (!n.is_leaf()) {
                CHECK(t.nodes[n.left].count >= 2);
                CHECK(t.nodes[n.right].count >= 2);
            }
        }
    }

    GBDTParams q = stump_params();
    q.min_gain = 1e9;
    const auto blocked =
        train_gbdt(train, labels, unit_weights(4), Matrix(0, 1), {}, q, {"x"});
    CHECK(blocked.model.trees.empty()); // no admissible split, boosting stops
    const double zero = 0.0;
    CHECK(blocked.model.margin_for(&zero) == blocked.model.base_score);
}

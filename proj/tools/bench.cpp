#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attrition/explain.hpp"
#include "attrition/features.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/histogram.hpp"
#include "attrition/parallel.hpp"
#include "attrition/rng.hpp"

using namespace attrition;

namespace {

double time_ms(int repeat, const std::function<void()>& fn) {
    fn(); // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeat; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeat;
}

void print_row(const std::string& kernel, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-18s %10.2f ms %10.2f ms %8.2fx   %s\n", kernel.c_str(), serial_ms,
                parallel_ms, serial_ms / parallel_ms, identical ? "identical" : "DIFFERS");
}

Matrix random_matrix(size_t rows, size_t cols, uint64_t seed) {
    Matrix m(rows, cols);
    Rng rng(seed);
    for (double& v : m.data) v = rng.uniform01();
    return m;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs parallel kernel comparison"};
    size_t rows = 200000;
    size_t features = 20;
    int repeat = 5;
    app.add_option("--rows", rows, "rows in the benchmark matrix");
    app.add_option("--features", features, "feature count");
    app.add_option("--repeat", repeat, "timed repetitions per kernel");
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d, rows: %zu, features: %zu\n", hardware_threads(), rows, features);
    std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    const Matrix x = random_matrix(rows, features, 7);
    std::vector<int> labels(rows);
    std::vector<double> grad(rows), hess(rows), weight(rows, 1.0);
    Rng rng(11);
    for (size_t i = 0; i < rows; ++i) {
        labels[i] = x.at(i, 0) + 0.3 * x.at(i, 1) + 0.2 * rng.normal() > 0.7 ? 1 : 0;
        grad[i] = rng.normal();
        hess[i] = rng.uniform01() + 0.1;
    }

    // histogram accumulation
    const BinningMap binning = bin_features(x, 255, 200000, 3);
    const BinnedMatrix binned = bin_matrix(x, binning);
    std::vector<uint32_t> row_ids(rows);
    for (size_t i = 0; i < rows; ++i) row_ids[i] = static_cast<uint32_t>(i);
    LeafHistogram hist_serial, hist_parallel;
    const double hist_s = time_ms(repeat, [&] {
        hist_serial.reset(features, binning.max_total_bins());
        build_histograms_serial(binned, row_ids, grad, hess, weight, hist_serial);
    });
    const double hist_p = time_ms(repeat, [&] {
        hist_parallel.reset(features, binning.max_total_bins());
        build_histograms_parallel(binned, row_ids, grad, hess, weight, hist_parallel);
    });
    bool hist_same = true;
    for (size_t i = 0; i < hist_serial.stats.size(); ++i) {
        const BinStats& a = hist_serial.stats[i];
        const BinStats& b = hist_parallel.stats[i];
        hist_same &= a.grad == b.grad && a.hess == b.hess && a.weight == b.weight &&
                     a.count == b.count;
    }
    print_row("histograms", hist_s, hist_p, hist_same);

    // prediction over a trained model
    GBDTParams params;
    params.n_estimators = 60;
    params.early_stopping_rounds = 0;
    std::vector<std::string> names;
    for (size_t f = 0; f < features; ++f) names.push_back("f" + std::to_string(f));
    const Matrix train_x = random_matrix(4096, features, 17);
    std::vector<int> train_y(train_x.rows);
    Rng lrng(19);
    for (size_t i = 0; i < train_x.rows; ++i)
        train_y[i] = train_x.at(i, 0) + 0.5 * train_x.at(i, 1) + 0.3 * lrng.normal() > 0.75;
    const std::vector<double> w(train_x.rows, 1.0);
    const GBDTModel model =
        train_gbdt(train_x, train_y, w, Matrix(0, features), {}, params, names).model;
    Predictions pred_serial, pred_parallel;
    const double pred_s = time_ms(repeat, [&] { pred_serial = predict_serial(model, x); });
    const double pred_p = time_ms(repeat, [&] { pred_parallel = predict_parallel(model, x); });
    print_row("predict", pred_s, pred_p, pred_serial.margins == pred_parallel.margins);

    // k nearest neighbours (quadratic, so a smaller slice)
    const size_t knn_rows = std::min<size_t>(rows, 3000);
    const Matrix knn_x = random_matrix(knn_rows, features, 23);
    std::vector<std::vector<size_t>> knn_serial, knn_parallel;
    const double knn_s = time_ms(repeat, [&] { knn_serial = knn_neighbors_serial(knn_x, 5); });
    const double knn_p = time_ms(repeat, [&] { knn_parallel = knn_neighbors_parallel(knn_x, 5); });
    print_row("knn", knn_s, knn_p, knn_serial == knn_parallel);

    // per-row attribution
    const size_t shap_rows = std::min<size_t>(rows, 2000);
    const Matrix shap_x = random_matrix(shap_rows, features, 29);
    std::vector<ShapExplanation> shap_serial, shap_parallel;
    const double shap_s =
        time_ms(repeat, [&] { shap_serial = tree_shap_batch_serial(model, shap_x); });
    const double shap_p =
        time_ms(repeat, [&] { shap_parallel = tree_shap_batch_parallel(model, shap_x); });
    bool shap_same = shap_serial.size() == shap_parallel.size();
    for (size_t i = 0; shap_same && i < shap_serial.size(); ++i)
        shap_same &= shap_serial[i].phi == shap_parallel[i].phi;
    print_row("tree_shap", shap_s, shap_p, shap_same);
    return 0;
}

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyforge/baselines.hpp"
#include "glyforge/segments.hpp"

namespace glyforge::evaluation {

/// segment_id -> 48 actual future CGM values (mg/dL).
using ActualMap = std::map<std::int64_t, Eigen::VectorXd>;

ActualMap actuals_from_segments(const std::vector<segments::Segment>& segs);

/// Error convention throughout: prediction - actual (positive = overshoot).
struct HorizonMetrics {
    int step = 0; // 0-based horizon index; lead time is (step+1)*5 min
    std::int64_t n = 0;
    double rmse = 0.0;
    double mae = 0.0;
    double me = 0.0;  // mean signed error
    double iqr = 0.0; // interquartile range of the signed errors
    double min_err = 0.0;
    double max_err = 0.0;
};

struct ModelMetrics {
    std::string model;
    std::vector<HorizonMetrics> per_horizon; // 48 entries
};

/// Linear-interpolation quantile (the "type 7" convention); q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Segments for which every model produced a forecast. Sorted by id.
std::vector<std::int64_t> shared_test_intersection(
    const std::map<std::string, baselines::PredictionMap>& preds);

/// Errors pooled across the given segments, summarized per horizon step.
ModelMetrics compute_metrics(const std::string& model,
                             const baselines::PredictionMap& preds,
                             const ActualMap& actuals,
                             const std::vector<std::int64_t>& ids);

/// RMSE of one forecast across its whole horizon.
double segment_rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual);

/// The k segments this model forecasts worst (by whole-horizon RMSE),
/// ties broken toward the lower segment id.
std::vector<std::int64_t> worst_k_independent(const baselines::PredictionMap& preds,
                                              const ActualMap& actuals,
                                              const std::vector<std::int64_t>& ids,
                                              int k);

/// The k segments with the highest RMSE averaged across all models: one
/// common hard subset every model is scored on.
std::vector<std::int64_t> worst_k_shared(
    const std::map<std::string, baselines::PredictionMap>& preds,
    const ActualMap& actuals, const std::vector<std::int64_t>& ids, int k);

struct Report {
    std::vector<ModelMetrics> full;          // on the shared test intersection
    std::vector<ModelMetrics> worst_independent;
    std::vector<ModelMetrics> worst_shared;
    std::vector<std::int64_t> shared_ids;
    int worst_k = 100;
};

Report build_report(const std::map<std::string, baselines::PredictionMap>& preds,
                    const ActualMap& actuals, int worst_k = 100);

/// Writes metrics.tsv, worst_case.tsv, summary.txt and the two SVG charts
/// (MAE and mean signed error against lead time) into dir.
void emit_report(const Report& report, const std::string& dir);

} // namespace glyforge::evaluation

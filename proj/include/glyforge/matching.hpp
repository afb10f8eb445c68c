#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "glyforge/population.hpp"
#include "glyforge/segments.hpp"

namespace glyforge::matching {

struct MatchingConfig {
    // Active insulin time: carried as metadata for provenance, it has no
    // dynamical effect on the twin.
    double tau_act_min = 0.0;
    double slope_window_head_min = 60.0;
    double slope_window_tail_min = 60.0;
};

struct MatchResult {
    std::int64_t segment_id = 0;
    int twin_id = 0; // 0 means matching failure (all twins blew up)
    double rmse = std::numeric_limits<double>::infinity(); // mg/dL
    double u_basal_mean = 0.0; // mU/kg/min, mean basal over the history
    Eigen::MatrixXd x_hist;    // 37 x 10, zero-padded head
    Eigen::MatrixXd x_fut;     // 48 x 10

    bool failed() const { return twin_id == 0; }
};

/// Ordinary least-squares slope over (time, value) pairs; 0 with the flag
/// set when fewer than two points are available.
double ols_slope(const std::vector<std::pair<double, double>>& points,
                 bool* degenerate = nullptr);

/// Pass 1: per-twin history simulation RMSE, argmin with ties broken toward
/// the lower twin_id. Returns (twin_id, rmse); twin_id 0 when every twin
/// blows up. The twin search is data-parallel; `parallel` selects the OpenMP
/// kernel, the serial path is the reference implementation.
std::pair<int, double> match_twin(const segments::Segment& seg,
                                  const std::vector<iob::InsulinEvent>& events,
                                  const population::TwinPopulation& pop,
                                  const MatchingConfig& cfg, bool parallel = true);

/// Pass 2: re-simulate the selected twin with per-step state capture.
Eigen::MatrixXd extract_history_states(const segments::Segment& seg,
                                       const std::vector<iob::InsulinEvent>& events,
                                       const hovorka::TwinParameters& twin,
                                       const MatchingConfig& cfg);

/// Pass 3: re-anchor at the decision time, restore the subcutaneous chain
/// from the pass-2 terminal state, and roll 48 steps of basal-only future.
Eigen::MatrixXd extract_future_states(const segments::Segment& seg,
                                      const std::vector<iob::InsulinEvent>& events,
                                      const hovorka::TwinParameters& twin,
                                      const hovorka::TwinState& pass2_final,
                                      const MatchingConfig& cfg,
                                      double* u_basal_mean_out = nullptr);

/// All three passes.
MatchResult match_and_extract(const segments::Segment& seg,
                              const std::vector<iob::InsulinEvent>& events,
                              const population::TwinPopulation& pop,
                              const MatchingConfig& cfg, bool parallel = true);

/// Batch over a segment set (parallel across segments).
std::vector<MatchResult> match_all(const segments::SegmentSet& set,
                                   const population::TwinPopulation& pop,
                                   const MatchingConfig& cfg, bool parallel = true);

/// Per-segment history simulation used by pass 1/2: simulated CGM on the
/// history grid (rows hist_first..36) plus logged states. Exposed for tests.
struct HistorySim {
    std::vector<double> cgm;              // one value per history slot from hist_first
    std::vector<hovorka::TwinState> states;
    bool blown_up = false;
};
HistorySim simulate_history(const segments::Segment& seg,
                            const std::vector<iob::InsulinEvent>& events,
                            const hovorka::TwinParameters& twin,
                            const MatchingConfig& cfg);

void save_match_results(const std::vector<MatchResult>& results, const std::string& dir);
std::map<std::int64_t, MatchResult> load_match_results(const std::string& dir);

} // namespace glyforge::matching

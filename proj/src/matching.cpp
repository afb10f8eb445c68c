#include "glyforge/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyforge/common.hpp"

namespace glyforge::matching {

namespace {

constexpr double kBlowUpMgdl = 1000.0;

// U/hr pump rate -> mU/kg/min twin input, using the twin's body weight.
double pump_rate_to_twin(double rate_u_hr, double bw_kg) {
    return rate_u_hr * 1000.0 / 60.0 / bw_kg;
}

// micro-dose (U over a 5-min slot) -> mU/kg/min
double dose_to_twin_rate(double dose_u, double bw_kg) {
    return dose_u * 1000.0 / (segments::kGridMin * bw_kg);
}

// Insulin delivery per history step: all micro-doses (basal + bolus) land
// as u_I in their 5-minute slot; carbohydrates are zero throughout the
// history (meal effects are absorbed by twin selection error).
std::vector<hovorka::ControlInput> history_inputs(const segments::Segment& seg,
                                                  const std::vector<iob::InsulinEvent>& events,
                                                  const hovorka::TwinParameters& twin) {
    const double t0 = seg.history_time(seg.hist_first);
    const double t_end = seg.decision_time;
    const auto doses = iob::decompose_events(events, t0, t_end + 1e-9);

    const int n_steps = segments::kHistoryLen - 1 - seg.hist_first;
    std::vector<hovorka::ControlInput> inputs(n_steps);
    for (const iob::MicroDose& d : doses) {
        const int k = static_cast<int>(std::floor((d.t - t0) / segments::kGridMin + 1e-9));
        if (k >= 0 && k < n_steps) inputs[k].u_I += dose_to_twin_rate(d.amount, twin.BW);
    }
    return inputs;
}

double head_slope(const segments::Segment& seg, const MatchingConfig& cfg) {
    const double t0 = seg.history_time(seg.hist_first);
    std::vector<std::pair<double, double>> pts;
    for (int k = seg.hist_first; k < segments::kHistoryLen; ++k) {
        const double tk = seg.history_time(k);
        if (seg.history_observed[k] && tk <= t0 + cfg.slope_window_head_min + 1e-9) {
            pts.emplace_back(tk, seg.history_cgm[k]);
        }
    }
    return ols_slope(pts);
}

double tail_slope(const segments::Segment& seg, const MatchingConfig& cfg) {
    const double t = seg.decision_time;
    std::vector<std::pair<double, double>> pts;
    for (int k = seg.hist_first; k < segments::kHistoryLen; ++k) {
        const double tk = seg.history_time(k);
        if (seg.history_observed[k] && tk >= t - cfg.slope_window_tail_min - 1e-9) {
            pts.emplace_back(tk, seg.history_cgm[k]);
        }
    }
    return ols_slope(pts);
}

} // namespace

double ols_slope(const std::vector<std::pair<double, double>>& points, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (points.size() < 2) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double mt = 0, mv = 0;
    for (const auto& [t, v] : points) {
        mt += t;
        mv += v;
    }
    mt /= points.size();
    mv /= points.size();
    double num = 0, den = 0;
    for (const auto& [t, v] : points) {
        num += (t - mt) * (v - mv);
        den += (t - mt) * (t - mt);
    }
    if (den == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return num / den;
}

HistorySim simulate_history(const segments::Segment& seg,
                            const std::vector<iob::InsulinEvent>& events,
                            const hovorka::TwinParameters& twin,
                            const MatchingConfig& cfg) {
    HistorySim sim;
    const double t0 = seg.history_time(seg.hist_first);
    const double g0 = seg.history_cgm[seg.hist_first];
    const double slope0 = head_slope(seg, cfg);
    const double u_basal0 = pump_rate_to_twin(iob::basal_rate_at(events, t0), twin.BW);

    hovorka::TwinState x = hovorka::steady_state_init(g0, slope0, u_basal0, twin);
    sim.states.push_back(x);
    sim.cgm.push_back(hovorka::cgm_output(x, twin));

    for (const hovorka::ControlInput& u : history_inputs(seg, events, twin)) {
        x = hovorka::step(x, twin, u);
        const double g = hovorka::cgm_output(x, twin);
        if (!x.finite() || !std::isfinite(g) || g > kBlowUpMgdl) {
            sim.blown_up = true;
            return sim;
        }
        sim.states.push_back(x);
        sim.cgm.push_back(g);
    }
    return sim;
}

std::pair<int, double> match_twin(const segments::Segment& seg,
                                  const std::vector<iob::InsulinEvent>& events,
                                  const population::TwinPopulation& pop,
                                  const MatchingConfig& cfg, bool parallel) {
    const int n = static_cast<int>(pop.twins.size());
    std::vector<double> eps(n, std::numeric_limits<double>::infinity());

    auto eval_twin = [&](int j) {
        const HistorySim sim = simulate_history(seg, events, pop.twins[j].params, cfg);
        if (sim.blown_up) return;
        double sq = 0.0;
        int m = 0;
        for (int k = seg.hist_first; k < segments::kHistoryLen; ++k) {
            if (!seg.history_observed[k]) continue; // padded and interpolated slots excluded
            const double e = sim.cgm[k - seg.hist_first] - seg.history_cgm[k];
            sq += e * e;
            ++m;
        }
        if (m > 0) eps[j] = std::sqrt(sq / m);
    };

    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int j = 0; j < n; ++j) eval_twin(j);
    } else {
        for (int j = 0; j < n; ++j) eval_twin(j);
    }

    // serial argmin keeps the tie-break (lowest twin_id) deterministic
    int best = -1;
    double best_eps = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        if (eps[j] < best_eps) {
            best_eps = eps[j];
            best = j;
        }
    }
    if (best < 0) return {0, std::numeric_limits<double>::infinity()};
    return {pop.twins[best].twin_id, best_eps};
}

Eigen::MatrixXd extract_history_states(const segments::Segment& seg,
                                       const std::vector<iob::InsulinEvent>& events,
                                       const hovorka::TwinParameters& twin,
                                       const MatchingConfig& cfg) {
    const HistorySim sim = simulate_history(seg, events, twin, cfg);
    if (sim.blown_up) throw NumericError("extract_history_states: twin simulation blew up");
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(segments::kHistoryLen, hovorka::kStateDim);
    for (std::size_t i = 0; i < sim.states.size(); ++i) {
        x.row(seg.hist_first + static_cast<int>(i)) = sim.states[i].to_vector().transpose();
    }
    return x;
}

Eigen::MatrixXd extract_future_states(const segments::Segment& seg,
                                      const std::vector<iob::InsulinEvent>& events,
                                      const hovorka::TwinParameters& twin,
                                      const hovorka::TwinState& pass2_final,
                                      const MatchingConfig& cfg,
                                      double* u_basal_mean_out) {
    // mean basal rate over the history window
    double mean_rate = 0.0;
    int m = 0;
    for (int k = seg.hist_first; k < segments::kHistoryLen; ++k) {
        mean_rate += iob::basal_rate_at(events, seg.history_time(k));
        ++m;
    }
    mean_rate = m > 0 ? mean_rate / m : 0.0;
    const double u_mean = pump_rate_to_twin(mean_rate, twin.BW);
    if (u_basal_mean_out) *u_basal_mean_out = u_mean;

    const double u_now =
        pump_rate_to_twin(iob::basal_rate_at(events, seg.decision_time), twin.BW);

    hovorka::TwinState x =
        hovorka::steady_state_init(seg.g_t(), tail_slope(seg, cfg), u_now, twin);
    x.S1 = pass2_final.S1;
    x.S2 = pass2_final.S2;
    x.M1 = 0.0;
    x.M2 = 0.0;

    Eigen::MatrixXd out(segments::kHorizon, hovorka::kStateDim);
    const hovorka::ControlInput u{u_mean, 0.0};
    for (int i = 0; i < segments::kHorizon; ++i) {
        x = hovorka::step(x, twin, u);
        out.row(i) = x.to_vector().transpose();
    }
    return out;
}

MatchResult match_and_extract(const segments::Segment& seg,
                              const std::vector<iob::InsulinEvent>& events,
                              const population::TwinPopulation& pop,
                              const MatchingConfig& cfg, bool parallel) {
    MatchResult r;
    r.segment_id = seg.id;
    auto [twin_id, rmse] = match_twin(seg, events, pop, cfg, parallel);
    r.twin_id = twin_id;
    r.rmse = rmse;
    if (twin_id == 0) return r; // QC criterion 6: matching failure

    const hovorka::TwinParameters& twin = pop.twins[twin_id - 1].params;
    r.x_hist = extract_history_states(seg, events, twin, cfg);
    const hovorka::TwinState final_state = hovorka::TwinState::from_vector(
        r.x_hist.row(segments::kHistoryLen - 1).transpose());
    r.x_fut = extract_future_states(seg, events, twin, final_state, cfg, &r.u_basal_mean);
    return r;
}

std::vector<MatchResult> match_all(const segments::SegmentSet& set,
                                   const population::TwinPopulation& pop,
                                   const MatchingConfig& cfg, bool parallel) {
    const int n = static_cast<int>(set.segments.size());
    std::vector<MatchResult> out(n);

    // parallel across segments; the per-segment twin loop stays serial here
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int i = 0; i < n; ++i) {
        const segments::Segment& seg = set.segments[i];
        out[i] = match_and_extract(seg, set.events_for(seg), pop, cfg, false);
    }
    return out;
}

void save_match_results(const std::vector<MatchResult>& results, const std::string& dir) {
    std::filesystem::create_directories(dir);

    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };

    std::ostringstream idx, states;
    idx << "# glyforge match v1\nsegment_id\ttwin_id\trmse\tu_basal_mean\n";
    states << "# glyforge match-states v1\nsegment_id\tx_hist\tx_fut\n";
    for (const MatchResult& r : results) {
        idx << r.segment_id << '\t' << r.twin_id << '\t'
            << (r.failed() ? "inf" : fmt(r.rmse)) << '\t' << fmt(r.u_basal_mean) << '\n';
        if (r.failed()) continue;
        states << r.segment_id << '\t';
        for (int k = 0; k < r.x_hist.rows(); ++k) {
            for (int c = 0; c < r.x_hist.cols(); ++c) {
                states << ((k || c) ? "," : "") << fmt(r.x_hist(k, c));
            }
        }
        states << '\t';
        for (int k = 0; k < r.x_fut.rows(); ++k) {
            for (int c = 0; c < r.x_fut.cols(); ++c) {
                states << ((k || c) ? "," : "") << fmt(r.x_fut(k, c));
            }
        }
        states << '\n';
    }
    write_text_file(dir + "/match.tsv", idx.str());
    write_text_file(dir + "/states.tsv", states.str());
}

std::map<std::int64_t, MatchResult> load_match_results(const std::string& dir) {
    std::map<std::int64_t, MatchResult> out;

    {
        const std::string path = dir + "/match.tsv";
        std::istringstream in(read_text_file(path));
        std::string line;
        std::getline(in, line);
        if (line.rfind("# glyforge match v1", 0) != 0) {
            throw DataError(path + ": unsupported match header");
        }
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split_line(line, '\t');
            if (f.size() != 4) throw DataError(path + ": bad match row");
            MatchResult r;
            r.segment_id = std::atoll(f[0].c_str());
            r.twin_id = std::atoi(f[1].c_str());
            r.rmse = f[2] == "inf" ? std::numeric_limits<double>::infinity()
                                   : std::atof(f[2].c_str());
            r.u_basal_mean = std::atof(f[3].c_str());
            out[r.segment_id] = std::move(r);
        }
    }
    {
        const std::string path = dir + "/states.tsv";
        std::istringstream in(read_text_file(path));
        std::string line;
        std::getline(in, line);
        if (line.rfind("# glyforge match-states v1", 0) != 0) {
            throw DataError(path + ": unsupported states header");
        }
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split_line(line, '\t');
            if (f.size() != 3) throw DataError(path + ": bad states row");
            const std::int64_t id = std::atoll(f[0].c_str());
            auto it = out.find(id);
            if (it == out.end()) throw DataError(path + ": states for unknown segment");
            const auto hv = split_line(f[1], ',');
            const auto fv = split_line(f[2], ',');
            if (static_cast<int>(hv.size()) != segments::kHistoryLen * hovorka::kStateDim ||
                static_cast<int>(fv.size()) != segments::kHorizon * hovorka::kStateDim) {
                throw DataError(path + ": bad state matrix shape");
            }
            it->second.x_hist =
                Eigen::MatrixXd(segments::kHistoryLen, hovorka::kStateDim);
            it->second.x_fut = Eigen::MatrixXd(segments::kHorizon, hovorka::kStateDim);
            int i = 0;
            for (int k = 0; k < segments::kHistoryLen; ++k) {
                for (int c = 0; c < hovorka::kStateDim; ++c) {
                    it->second.x_hist(k, c) = std::atof(hv[i++].c_str());
                }
            }
            i = 0;
            for (int k = 0; k < segments::kHorizon; ++k) {
                for (int c = 0; c < hovorka::kStateDim; ++c) {
                    it->second.x_fut(k, c) = std::atof(fv[i++].c_str());
                }
            }
        }
    }
    return out;
}

} // namespace glyforge::matching

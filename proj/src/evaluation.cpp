#include "glyforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace glyforge::evaluation {

ActualMap actuals_from_segments(const std::vector<segments::Segment>& segs) {
    ActualMap m;
    for (const auto& s : segs) {
        Eigen::VectorXd y(segments::kHorizon);
        for (int i = 0; i < segments::kHorizon; ++i) {
            y(i) = s.future_cgm[static_cast<std::size_t>(i)];
        }
        m[s.id] = y;
    }
    return m;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw NumericError("quantile: empty sample");
    if (q < 0.0 || q > 1.0) throw NumericError("quantile: q outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<std::int64_t> shared_test_intersection(
    const std::map<std::string, baselines::PredictionMap>& preds) {
    if (preds.empty()) throw DataError("evaluation: no prediction sets given");
    std::vector<std::int64_t> ids;
    for (const auto& [id, y] : preds.begin()->second) {
        (void)y;
        bool in_all = true;
        for (const auto& [model, pm] : preds) {
            (void)model;
            if (pm.find(id) == pm.end()) {
                in_all = false;
                break;
            }
        }
        if (in_all) ids.push_back(id);
    }
    return ids; // map iteration order is already ascending
}

ModelMetrics compute_metrics(const std::string& model,
                             const baselines::PredictionMap& preds,
                             const ActualMap& actuals,
                             const std::vector<std::int64_t>& ids) {
    if (ids.empty()) throw DataError("evaluation: empty segment list for " + model);
    ModelMetrics out;
    out.model = model;
    out.per_horizon.resize(segments::kHorizon);

    std::vector<std::vector<double>> errors(segments::kHorizon);
    for (const auto id : ids) {
        const auto pit = preds.find(id);
        const auto ait = actuals.find(id);
        if (pit == preds.end()) {
            throw DataError("evaluation: " + model + " has no forecast for segment " +
                            std::to_string(id));
        }
        if (ait == actuals.end()) {
            throw DataError("evaluation: no actuals for segment " + std::to_string(id));
        }
        const Eigen::VectorXd& p = pit->second;
        const Eigen::VectorXd& a = ait->second;
        if (p.size() != segments::kHorizon || a.size() != segments::kHorizon) {
            throw DataError("evaluation: forecast length mismatch for segment " +
                            std::to_string(id));
        }
        for (int h = 0; h < segments::kHorizon; ++h) {
            errors[static_cast<std::size_t>(h)].push_back(p(h) - a(h));
        }
    }

    for (int h = 0; h < segments::kHorizon; ++h) {
        const auto& e = errors[static_cast<std::size_t>(h)];
        HorizonMetrics m;
        m.step = h;
        m.n = static_cast<std::int64_t>(e.size());
        double sq = 0.0, abs_sum = 0.0, sum = 0.0;
        double mn = e.front(), mx = e.front();
        for (const double v : e) {
            sq += v * v;
            abs_sum += std::abs(v);
            sum += v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        const double n = static_cast<double>(e.size());
        m.rmse = std::sqrt(sq / n);
        m.mae = abs_sum / n;
        m.me = sum / n;
        m.iqr = quantile(e, 0.75) - quantile(e, 0.25);
        m.min_err = mn;
        m.max_err = mx;
        out.per_horizon[static_cast<std::size_t>(h)] = m;
    }
    return out;
}

double segment_rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
    if (pred.size() != actual.size() || pred.size() == 0) {
        throw NumericError("segment_rmse: size mismatch");
    }
    return std::sqrt((pred - actual).squaredNorm() / static_cast<double>(pred.size()));
}

namespace {

std::vector<std::int64_t> top_k_by_score(std::vector<std::pair<double, std::int64_t>> scored,
                                         int k) {
    // descending score, ascending id on ties
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::size_t take = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k));
    std::vector<std::int64_t> ids(take);
    for (std::size_t i = 0; i < take; ++i) ids[i] = scored[i].second;
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

std::vector<std::int64_t> worst_k_independent(const baselines::PredictionMap& preds,
                                              const ActualMap& actuals,
                                              const std::vector<std::int64_t>& ids,
                                              int k) {
    if (k < 1) throw ConfigError("worst_k_independent: k must be >= 1");
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(ids.size());
    for (const auto id : ids) {
        scored.emplace_back(segment_rmse(preds.at(id), actuals.at(id)), id);
    }
    return top_k_by_score(std::move(scored), k);
}

std::vector<std::int64_t> worst_k_shared(
    const std::map<std::string, baselines::PredictionMap>& preds,
    const ActualMap& actuals, const std::vector<std::int64_t>& ids, int k) {
    if (k < 1) throw ConfigError("worst_k_shared: k must be >= 1");
    if (preds.empty()) throw DataError("worst_k_shared: no prediction sets");
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(ids.size());
    for (const auto id : ids) {
        double total = 0.0;
        for (const auto& [model, pm] : preds) {
            (void)model;
            total += segment_rmse(pm.at(id), actuals.at(id));
        }
        scored.emplace_back(total / static_cast<double>(preds.size()), id);
    }
    return top_k_by_score(std::move(scored), k);
}

Report build_report(const std::map<std::string, baselines::PredictionMap>& preds,
                    const ActualMap& actuals, int worst_k) {
    Report report;
    report.worst_k = worst_k;
    report.shared_ids = shared_test_intersection(preds);
    if (report.shared_ids.empty()) {
        throw DataError("evaluation: shared test intersection is empty");
    }
    const auto shared_worst = worst_k_shared(preds, actuals, report.shared_ids, worst_k);
    for (const auto& [model, pm] : preds) {
        report.full.push_back(compute_metrics(model, pm, actuals, report.shared_ids));
        report.worst_independent.push_back(compute_metrics(
            model, pm, actuals, worst_k_independent(pm, actuals, report.shared_ids, worst_k)));
        report.worst_shared.push_back(compute_metrics(model, pm, actuals, shared_worst));
    }
    return report;
}

namespace {

void append_metrics_rows(std::ostringstream& out, const std::string& subset,
                         const std::vector<ModelMetrics>& models) {
    for (const auto& mm : models) {
        for (const auto& m : mm.per_horizon) {
            out << subset << '\t' << mm.model << '\t' << (m.step + 1) * 5 << '\t' << m.n
                << '\t' << format_g17(m.rmse) << '\t' << format_g17(m.mae) << '\t'
                << format_g17(m.me) << '\t' << format_g17(m.iqr) << '\t'
                << format_g17(m.min_err) << '\t' << format_g17(m.max_err) << '\n';
        }
    }
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Minimal line chart: one polyline per model over the 48 lead times.
std::string render_svg(const std::vector<ModelMetrics>& models, const std::string& title,
                       bool signed_axis,
                       double (*pick)(const HorizonMetrics&)) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    const double width = 760, height = 420;
    const double ml = 60, mr = 170, mt = 40, mb = 45;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double lo = signed_axis ? -1.0 : 0.0, hi = 1.0;
    for (const auto& mm : models) {
        for (const auto& m : mm.per_horizon) {
            const double v = pick(m);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto sx = [&](double minutes) { return ml + pw * (minutes - 5.0) / (240.0 - 5.0); };
    auto sy = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

    // axes and gridlines
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
    for (int minutes = 30; minutes <= 240; minutes += 30) {
        const double x = sx(minutes);
        s << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\""
          << mt + ph << "\" stroke=\"#dddddd\"/>\n";
        s << "<text x=\"" << x << "\" y=\"" << mt + ph + 18
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
          << minutes << "</text>\n";
    }
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = lo + (hi - lo) * tick / 4.0;
        const double y = sy(v);
        s << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw
          << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
        s << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
          << fmt2(v) << "</text>\n";
    }
    if (signed_axis && lo < 0.0 && hi > 0.0) {
        s << "<line x1=\"" << ml << "\" y1=\"" << sy(0.0) << "\" x2=\"" << ml + pw
          << "\" y2=\"" << sy(0.0) << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
    }
    s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << "lead time (min)</text>\n";

    int ci = 0;
    for (const auto& mm : models) {
        const char* color = kColors[ci % 8];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& m : mm.per_horizon) {
            s << sx((m.step + 1) * 5.0) << ',' << sy(pick(m)) << ' ';
        }
        s << "\"/>\n";
        const double ly = mt + 16 + 18 * ci;
        s << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
          << ml + pw + 34 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << mm.model << "</text>\n";
        ++ci;
    }
    s << "</svg>\n";
    return s.str();
}

double pick_mae(const HorizonMetrics& m) { return m.mae; }
double pick_me(const HorizonMetrics& m) { return m.me; }

} // namespace

void emit_report(const Report& report, const std::string& dir) {
    std::filesystem::create_directories(dir);

    std::ostringstream tsv;
    tsv << "subset\tmodel\tlead_min\tn\trmse\tmae\tme\tiqr\tmin_err\tmax_err\n";
    append_metrics_rows(tsv, "full", report.full);
    write_text_file(dir + "/metrics.tsv", tsv.str());

    std::ostringstream wc;
    wc << "subset\tmodel\tlead_min\tn\trmse\tmae\tme\tiqr\tmin_err\tmax_err\n";
    append_metrics_rows(wc, "worst_independent", report.worst_independent);
    append_metrics_rows(wc, "worst_shared", report.worst_shared);
    write_text_file(dir + "/worst_case.tsv", wc.str());

    static const int kSummaryLead[] = {30, 60, 120, 240};
    std::ostringstream sum;
    sum << "Evaluated on " << report.shared_ids.size()
        << " segments forecast by every model; worst-case subsets use k=" << report.worst_k
        << ".\n\n";
    sum << "model                         lead    RMSE     MAE      ME\n";
    for (const auto& mm : report.full) {
        for (const int lead : kSummaryLead) {
            const auto& m = mm.per_horizon[static_cast<std::size_t>(lead / 5 - 1)];
            char line[160];
            std::snprintf(line, sizeof(line), "%-28s %4d %8.2f %8.2f %8.2f\n",
                          mm.model.c_str(), lead, m.rmse, m.mae, m.me);
            sum << line;
        }
    }
    write_text_file(dir + "/summary.txt", sum.str());

    write_text_file(dir + "/mae_vs_lead.svg",
                    render_svg(report.full, "Mean absolute error (mg/dL) by lead time",
                               false, &pick_mae));
    write_text_file(dir + "/me_vs_lead.svg",
                    render_svg(report.full, "Mean signed error (mg/dL) by lead time",
                               true, &pick_me));
}

} // namespace glyforge::evaluation

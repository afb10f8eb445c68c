#include "glyforge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace glyforge::baselines {

Eigen::VectorXd naive_forecast(const segments::Segment& seg) {
    return Eigen::VectorXd::Constant(segments::kHorizon, seg.g_t());
}

Eigen::VectorXd twin_forecast(const Eigen::MatrixXd& x_fut,
                              const hovorka::TwinParameters& twin) {
    if (x_fut.rows() != segments::kHorizon || x_fut.cols() != hovorka::kStateDim) {
        throw NumericError("twin_forecast: state matrix must be 48 x 10");
    }
    Eigen::VectorXd y(segments::kHorizon);
    for (int i = 0; i < segments::kHorizon; ++i) {
        y(i) = hovorka::kMgdlPerMmol * x_fut(i, 0) / twin.V_G;
    }
    return y;
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "seq2seq_full";
        case Variant::MinusOde: return "seq2seq_minus_ode";
        case Variant::MinusIob: return "seq2seq_minus_iob";
    }
    throw ConfigError("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "seq2seq_full") return Variant::Full;
    if (name == "seq2seq_minus_ode") return Variant::MinusOde;
    if (name == "seq2seq_minus_iob") return Variant::MinusIob;
    throw ConfigError("unknown model variant: " + name);
}

int encoder_width(Variant v) {
    switch (v) {
        case Variant::Full: return 12;
        case Variant::MinusOde: return 2;
        case Variant::MinusIob: return 11;
    }
    throw ConfigError("encoder_width: unknown variant");
}

int decoder_width(Variant v) {
    switch (v) {
        case Variant::Full: return 11;
        case Variant::MinusOde: return 1;
        case Variant::MinusIob: return 10;
    }
    throw ConfigError("decoder_width: unknown variant");
}

neural::Sample make_sample(const segments::TensorTriple& t, Variant v) {
    neural::Sample s;
    s.target = t.target;
    switch (v) {
        case Variant::Full:
            s.enc = t.encoder;
            s.dec = t.decoder;
            break;
        case Variant::MinusOde:
            s.enc = t.encoder.leftCols(2);
            s.dec = t.decoder.leftCols(1);
            break;
        case Variant::MinusIob: {
            s.enc.resize(t.encoder.rows(), 11);
            s.enc.col(0) = t.encoder.col(0);
            s.enc.rightCols(10) = t.encoder.rightCols(10);
            s.dec = t.decoder.rightCols(10);
            break;
        }
    }
    return s;
}

// --- recursive one-step LSTM --------------------------------------------------

Eigen::VectorXd RecursiveParams::to_flat() const {
    Eigen::VectorXd v(cell.W.size() + cell.b.size() + W_out.size() + 1);
    Eigen::Index pos = 0;
    v.segment(pos, cell.W.size()) =
        Eigen::Map<const Eigen::VectorXd>(cell.W.data(), cell.W.size());
    pos += cell.W.size();
    v.segment(pos, cell.b.size()) = cell.b;
    pos += cell.b.size();
    v.segment(pos, W_out.size()) =
        Eigen::Map<const Eigen::VectorXd>(W_out.data(), W_out.size());
    pos += W_out.size();
    v(pos) = b_out;
    return v;
}

void RecursiveParams::from_flat(const Eigen::VectorXd& v) {
    Eigen::Index pos = 0;
    Eigen::Map<Eigen::VectorXd>(cell.W.data(), cell.W.size()) =
        v.segment(pos, cell.W.size());
    pos += cell.W.size();
    cell.b = v.segment(pos, cell.b.size());
    pos += cell.b.size();
    Eigen::Map<Eigen::VectorXd>(W_out.data(), W_out.size()) =
        v.segment(pos, W_out.size());
    pos += W_out.size();
    b_out = v(pos);
}

RecursiveParams init_recursive(int d, Rng& rng) {
    RecursiveParams p;
    p.cell = neural::init_lstm(2, d, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    p.W_out = Eigen::RowVectorXd(d);
    for (int k = 0; k < d; ++k) p.W_out(k) = rng.uniform(-bound, bound);
    p.b_out = 0.0;
    return p;
}

RecursiveSample make_recursive_sample(const segments::Segment& seg,
                                      const std::vector<double>& iob_hist,
                                      const std::vector<double>& iob_fut) {
    if (iob_hist.size() != segments::kHistoryLen ||
        iob_fut.size() != segments::kHorizon) {
        throw NumericError("make_recursive_sample: IOB series lengths must be 37/48");
    }
    const int total = segments::kHistoryLen + segments::kHorizon;
    RecursiveSample s;
    s.cgm_scaled = Eigen::VectorXd::Zero(total);
    s.iob = Eigen::VectorXd::Zero(total);
    s.hist_first = seg.hist_first;
    for (int k = seg.hist_first; k < segments::kHistoryLen; ++k) {
        s.cgm_scaled(k) = segments::scale_cgm(seg.history_cgm[static_cast<std::size_t>(k)]);
        s.iob(k) = iob_hist[static_cast<std::size_t>(k)];
    }
    for (int i = 0; i < segments::kHorizon; ++i) {
        s.cgm_scaled(segments::kHistoryLen + i) =
            segments::scale_cgm(seg.future_cgm[static_cast<std::size_t>(i)]);
        s.iob(segments::kHistoryLen + i) = iob_fut[static_cast<std::size_t>(i)];
    }
    return s;
}

double recursive_loss(const RecursiveParams& p, const RecursiveSample& s,
                      double delta, Eigen::VectorXd* grad_flat,
                      const Eigen::VectorXd* input_jitter, bool rollout) {
    const int d = p.cell.d;
    const int total = static_cast<int>(s.cgm_scaled.size());
    const int first = s.hist_first;
    const int n_pred = total - 1 - first;
    if (n_pred < 1) throw NumericError("recursive_loss: no prediction positions");

    // Expanding-window rollout, exactly as at inference: observed inputs
    // through the history, then the model's own clamped prediction is fed
    // back across the horizon. Every position is scored, and the backward
    // pass runs through the feedback path, so the optimizer sees the same
    // closed loop the forecast uses.
    std::vector<neural::LstmStepCache> caches(
        grad_flat != nullptr ? static_cast<std::size_t>(n_pred) : 0);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd h_next(d), c_next(d);
    Eigen::VectorXd pred(n_pred), target(n_pred);
    std::vector<Eigen::VectorXd> h_log(static_cast<std::size_t>(n_pred));
    std::vector<bool> saturated(static_cast<std::size_t>(n_pred), false);
    for (int j = 0; j < n_pred; ++j) {
        const int t = first + j;
        double x0;
        if (!rollout || t < segments::kHistoryLen) {
            x0 = s.cgm_scaled(t) + (input_jitter != nullptr ? (*input_jitter)(t) : 0.0);
        } else {
            const double prev = pred(j - 1);
            x0 = std::clamp(prev, -1.0, 1.0);
            saturated[static_cast<std::size_t>(j - 1)] = prev <= -1.0 || prev >= 1.0;
        }
        Eigen::Vector2d x(x0, s.iob(t));
        neural::lstm_cell(p.cell, x, h, c, h_next, c_next,
                          grad_flat != nullptr ? &caches[static_cast<std::size_t>(j)]
                                               : nullptr);
        h.swap(h_next);
        c.swap(c_next);
        h_log[static_cast<std::size_t>(j)] = h;
        pred(j) = p.W_out.dot(h) + p.b_out;
        target(j) = s.cgm_scaled(t + 1);
    }

    Eigen::VectorXd dpred;
    const double loss =
        neural::huber_loss(pred, target, delta, grad_flat != nullptr ? &dpred : nullptr);
    if (grad_flat == nullptr) return loss;

    Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(p.cell.W.rows(), p.cell.W.cols());
    Eigen::VectorXd db = Eigen::VectorXd::Zero(p.cell.b.size());
    Eigen::RowVectorXd dW_out = Eigen::RowVectorXd::Zero(d);
    double db_out = 0.0;
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd dx(2);
    double feedback_dpred = 0.0; // gradient reaching pred(j) via step j+1's input
    for (int j = n_pred - 1; j >= 0; --j) {
        const double dp = dpred(j) + feedback_dpred;
        dW_out += dp * h_log[static_cast<std::size_t>(j)].transpose();
        db_out += dp;
        dh += dp * p.W_out.transpose();
        const bool fed_back = rollout && first + j >= segments::kHistoryLen;
        neural::lstm_cell_backward(p.cell, caches[static_cast<std::size_t>(j)], dh, dc,
                                   dW, db, fed_back ? &dx : nullptr);
        // the clamp blocks the gradient where the fed-back value saturated
        feedback_dpred =
            fed_back && !saturated[static_cast<std::size_t>(j - 1)] ? dx(0) : 0.0;
    }

    RecursiveParams g;
    g.cell.W = dW;
    g.cell.b = db;
    g.cell.input_dim = p.cell.input_dim;
    g.cell.d = d;
    g.W_out = dW_out;
    g.b_out = db_out;
    *grad_flat = g.to_flat();
    return loss;
}

namespace {

double recursive_set_loss(const RecursiveParams& p,
                          const std::vector<RecursiveSample>& set, double delta,
                          bool parallel, bool rollout) {
    if (set.empty()) throw DataError("recursive training: empty evaluation set");
    std::vector<double> losses(set.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(set.size()); ++i) {
        losses[static_cast<std::size_t>(i)] =
            recursive_loss(p, set[static_cast<std::size_t>(i)], delta, nullptr, nullptr,
                           rollout);
    }
    return std::accumulate(losses.begin(), losses.end(), 0.0) /
           static_cast<double>(losses.size());
}

} // namespace

RecursiveTrainingResult train_recursive(const RecursiveParams& initial,
                                        const std::vector<RecursiveSample>& train_set,
                                        const std::vector<RecursiveSample>& val_set,
                                        const neural::TrainingConfig& cfg) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) {
        throw DataError("recursive training: train and validation sets must be non-empty");
    }

    RecursiveParams params = initial;
    Eigen::VectorXd flat = params.to_flat();
    neural::AdamState adam;
    adam.init(static_cast<std::size_t>(flat.size()));

    RecursiveTrainingResult result;
    result.params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    int epochs_since_lr_drop = 0;
    double lr = cfg.lr0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng epoch_rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double train_loss_sum = 0.0;
        std::int64_t train_count = 0;
        bool blew_up = false;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const std::size_t n = end - start;

            // Jitter drawn serially so results are independent of the
            // parallel schedule.
            std::vector<Eigen::VectorXd> jitters;
            if (cfg.input_noise_sd > 0.0) {
                jitters.resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const auto& s = train_set[order[start + j]];
                    Eigen::VectorXd jit(s.cgm_scaled.size());
                    for (int k = 0; k < jit.size(); ++k) {
                        jit(k) = epoch_rng.gaussian(0.0, cfg.input_noise_sd);
                    }
                    jitters[j] = std::move(jit);
                }
            }

            std::vector<Eigen::VectorXd> grads(n);
            std::vector<double> losses(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (cfg.parallel)
#endif
            for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
                const RecursiveSample& s = train_set[order[start + static_cast<std::size_t>(j)]];
                losses[static_cast<std::size_t>(j)] = recursive_loss(
                    params, s, cfg.huber_delta, &grads[static_cast<std::size_t>(j)],
                    jitters.empty() ? nullptr : &jitters[static_cast<std::size_t>(j)],
                    cfg.recursive_rollout);
            }

            Eigen::VectorXd batch_grad = Eigen::VectorXd::Zero(flat.size());
            for (std::size_t j = 0; j < n; ++j) {
                batch_grad += grads[j];
                train_loss_sum += losses[j];
            }
            train_count += static_cast<std::int64_t>(n);
            batch_grad /= static_cast<double>(n);

            if (!batch_grad.allFinite()) {
                blew_up = true;
                break;
            }
            neural::adam_step(flat, batch_grad, adam, lr, cfg.beta1, cfg.beta2);
            params.from_flat(flat);
        }

        const double train_loss =
            train_loss_sum / static_cast<double>(std::max<std::int64_t>(train_count, 1));
        if (blew_up || !std::isfinite(train_loss)) {
            result.aborted_non_finite = true;
            break;
        }

        const double val_loss =
            recursive_set_loss(params, val_set, cfg.huber_delta, cfg.parallel,
                               cfg.recursive_rollout);
        result.log.push_back({epoch, train_loss, val_loss, lr});
        if (!std::isfinite(val_loss)) {
            result.aborted_non_finite = true;
            break;
        }

        if (val_loss < best_val) {
            best_val = val_loss;
            result.params = params;
            result.best_epoch = epoch;
            epochs_since_best = 0;
            epochs_since_lr_drop = 0;
        } else {
            ++epochs_since_best;
            ++epochs_since_lr_drop;
            if (epochs_since_best >= cfg.patience) break;
            if (epochs_since_lr_drop >= cfg.lr_patience && lr > cfg.lr_min) {
                lr = std::max(cfg.lr_min, lr * cfg.lr_factor);
                epochs_since_lr_drop = 0;
            }
        }
    }
    return result;
}

Eigen::VectorXd recursive_forecast(const RecursiveParams& p, const RecursiveSample& s) {
    const int d = p.cell.d;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd h_next(d), c_next(d);

    // Warm up on the observed history (the decision-time value is the last
    // teacher-forced input), then run free over the horizon. Fed-back
    // predictions are clamped to the scaled sensor range: the cell never saw
    // inputs outside [-1, 1], and an unconstrained rollout can diverge
    // through the exponential unscaling.
    double next_input = 0.0;
    for (int t = s.hist_first; t < segments::kHistoryLen; ++t) {
        Eigen::Vector2d x(s.cgm_scaled(t), s.iob(t));
        neural::lstm_cell(p.cell, x, h, c, h_next, c_next);
        h.swap(h_next);
        c.swap(c_next);
        next_input = std::clamp(p.W_out.dot(h) + p.b_out, -1.0, 1.0);
    }

    Eigen::VectorXd y(segments::kHorizon);
    y(0) = segments::unscale_cgm(next_input);
    for (int i = 1; i < segments::kHorizon; ++i) {
        Eigen::Vector2d x(next_input, s.iob(segments::kHistoryLen + i - 1));
        neural::lstm_cell(p.cell, x, h, c, h_next, c_next);
        h.swap(h_next);
        c.swap(c_next);
        next_input = std::clamp(p.W_out.dot(h) + p.b_out, -1.0, 1.0);
        y(i) = segments::unscale_cgm(next_input);
    }
    return y;
}

void save_recursive(const RecursiveParams& p, const std::string& path) {
    neural::Seq2SeqParams wrap;
    wrap.enc = p.cell;
    // The file format is shared with the encoder-decoder models; the decoder
    // slot holds a 1x1 placeholder for this single-cell architecture.
    wrap.dec.input_dim = 1;
    wrap.dec.d = 1;
    wrap.dec.W = Eigen::MatrixXd::Zero(4, 2);
    wrap.dec.b = Eigen::VectorXd::Zero(4);
    wrap.W_out = p.W_out;
    wrap.b_out = p.b_out;
    neural::save_seq2seq(wrap, "recursive", path);
}

RecursiveParams load_recursive(const std::string& path) {
    std::string kind;
    const neural::Seq2SeqParams wrap = neural::load_seq2seq(path, &kind);
    if (kind != "recursive") {
        throw DataError("model file: expected kind=recursive, got " + kind);
    }
    RecursiveParams p;
    p.cell = wrap.enc;
    p.W_out = wrap.W_out;
    p.b_out = wrap.b_out;
    return p;
}

void save_predictions(const PredictionMap& preds, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge predictions v1\n";
    out << "segment_id\tforecast_mgdl\n";
    for (const auto& [id, y] : preds) {
        out << id << '\t';
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            if (k > 0) out << ',';
            out << format_g17(y(k));
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

PredictionMap load_predictions(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "# glyforge predictions v1") {
        throw DataError("predictions file: unrecognized header in " + path);
    }
    std::getline(in, line); // column header
    PredictionMap preds;
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split_line(line, '\t');
        if (cols.size() != 2) {
            throw DataError("predictions file: bad row at line " + std::to_string(lineno));
        }
        const auto vals = split_line(cols[1], ',');
        Eigen::VectorXd y(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t k = 0; k < vals.size(); ++k) {
            y(static_cast<Eigen::Index>(k)) = std::stod(vals[k]);
        }
        preds[std::stoll(cols[0])] = y;
    }
    return preds;
}

} // namespace glyforge::baselines

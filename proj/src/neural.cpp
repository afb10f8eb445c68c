#include "glyforge/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyforge/segments.hpp"

namespace glyforge::neural {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd uniform_matrix(int rows, int cols, double bound, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = rng.uniform(-bound, bound);
        }
    }
    return m;
}

} // namespace

LstmCellParams init_lstm(int input_dim, int d, Rng& rng) {
    if (input_dim < 1 || d < 1) throw ConfigError("init_lstm: dimensions must be positive");
    LstmCellParams p;
    p.input_dim = input_dim;
    p.d = d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim + d));
    p.W = uniform_matrix(4 * d, input_dim + d, bound, rng);
    p.b = Eigen::VectorXd::Zero(4 * d);
    p.b.segment(d, d).setOnes(); // forget-gate bias
    return p;
}

void lstm_cell(const LstmCellParams& p, const Eigen::VectorXd& x,
               const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
               Eigen::VectorXd& h_out, Eigen::VectorXd& c_out,
               LstmStepCache* cache) {
    const int d = p.d;
    if (x.size() != p.input_dim) throw NumericError("lstm_cell: input size mismatch");
    Eigen::VectorXd xh(p.input_dim + d);
    xh << x, h_prev;
    const Eigen::VectorXd z = p.W * xh + p.b;
    Eigen::VectorXd i(d), f(d), g(d), o(d);
    for (int k = 0; k < d; ++k) {
        i(k) = sigmoid(z(k));
        f(k) = sigmoid(z(d + k));
        g(k) = std::tanh(z(2 * d + k));
        o(k) = sigmoid(z(3 * d + k));
    }
    c_out = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    const Eigen::VectorXd tc = c_out.array().tanh();
    h_out = o.cwiseProduct(tc);
    if (cache != nullptr) {
        cache->xh = std::move(xh);
        cache->c_prev = c_prev;
        cache->i = std::move(i);
        cache->f = std::move(f);
        cache->g = std::move(g);
        cache->o = std::move(o);
        cache->c = c_out;
        cache->tanh_c = tc;
    }
}

void lstm_cell_backward(const LstmCellParams& p, const LstmStepCache& cache,
                        Eigen::VectorXd& dh, Eigen::VectorXd& dc,
                        Eigen::MatrixXd& dW, Eigen::VectorXd& db,
                        Eigen::VectorXd* dx) {
    const int d = p.d;
    const Eigen::VectorXd do_gate = dh.cwiseProduct(cache.tanh_c);
    dc += dh.cwiseProduct(cache.o)
              .cwiseProduct(Eigen::VectorXd::Ones(d) - cache.tanh_c.cwiseProduct(cache.tanh_c));
    const Eigen::VectorXd di = dc.cwiseProduct(cache.g);
    const Eigen::VectorXd df = dc.cwiseProduct(cache.c_prev);
    const Eigen::VectorXd dg = dc.cwiseProduct(cache.i);
    const Eigen::VectorXd dc_prev = dc.cwiseProduct(cache.f);

    Eigen::VectorXd dz(4 * d);
    for (int k = 0; k < d; ++k) {
        dz(k) = di(k) * cache.i(k) * (1.0 - cache.i(k));
        dz(d + k) = df(k) * cache.f(k) * (1.0 - cache.f(k));
        dz(2 * d + k) = dg(k) * (1.0 - cache.g(k) * cache.g(k));
        dz(3 * d + k) = do_gate(k) * cache.o(k) * (1.0 - cache.o(k));
    }
    dW.noalias() += dz * cache.xh.transpose();
    db += dz;
    const Eigen::VectorXd dxh = p.W.transpose() * dz;
    if (dx != nullptr) *dx = dxh.head(p.input_dim);
    dh = dxh.tail(d); // gradient w.r.t. h_prev
    dc = dc_prev;
}

std::size_t Seq2SeqParams::flat_size() const {
    return static_cast<std::size_t>(enc.W.size() + enc.b.size() + dec.W.size() +
                                    dec.b.size() + W_out.size() + 1);
}

Eigen::VectorXd Seq2SeqParams::to_flat() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(flat_size()));
    Eigen::Index pos = 0;
    auto put = [&](const double* data, Eigen::Index n) {
        v.segment(pos, n) = Eigen::Map<const Eigen::VectorXd>(data, n);
        pos += n;
    };
    put(enc.W.data(), enc.W.size());
    put(enc.b.data(), enc.b.size());
    put(dec.W.data(), dec.W.size());
    put(dec.b.data(), dec.b.size());
    put(W_out.data(), W_out.size());
    v(pos++) = b_out;
    return v;
}

void Seq2SeqParams::from_flat(const Eigen::VectorXd& v) {
    if (v.size() != static_cast<Eigen::Index>(flat_size())) {
        throw NumericError("Seq2SeqParams::from_flat: size mismatch");
    }
    Eigen::Index pos = 0;
    auto take = [&](double* data, Eigen::Index n) {
        Eigen::Map<Eigen::VectorXd>(data, n) = v.segment(pos, n);
        pos += n;
    };
    take(enc.W.data(), enc.W.size());
    take(enc.b.data(), enc.b.size());
    take(dec.W.data(), dec.W.size());
    take(dec.b.data(), dec.b.size());
    take(W_out.data(), W_out.size());
    b_out = v(pos++);
}

Seq2SeqParams init_seq2seq(int enc_in, int dec_in, int d, Rng& rng) {
    Seq2SeqParams p;
    p.enc = init_lstm(enc_in, d, rng);
    p.dec = init_lstm(dec_in, d, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    p.W_out = uniform_matrix(1, d, bound, rng);
    p.b_out = 0.0;
    return p;
}

void Seq2SeqGrads::set_zero(const Seq2SeqParams& shape) {
    dW_enc = Eigen::MatrixXd::Zero(shape.enc.W.rows(), shape.enc.W.cols());
    db_enc = Eigen::VectorXd::Zero(shape.enc.b.size());
    dW_dec = Eigen::MatrixXd::Zero(shape.dec.W.rows(), shape.dec.W.cols());
    db_dec = Eigen::VectorXd::Zero(shape.dec.b.size());
    dW_out = Eigen::RowVectorXd::Zero(shape.W_out.size());
    db_out = 0.0;
}

Eigen::VectorXd Seq2SeqGrads::to_flat() const {
    Eigen::VectorXd v(dW_enc.size() + db_enc.size() + dW_dec.size() + db_dec.size() +
                      dW_out.size() + 1);
    Eigen::Index pos = 0;
    auto put = [&](const double* data, Eigen::Index n) {
        v.segment(pos, n) = Eigen::Map<const Eigen::VectorXd>(data, n);
        pos += n;
    };
    put(dW_enc.data(), dW_enc.size());
    put(db_enc.data(), db_enc.size());
    put(dW_dec.data(), dW_dec.size());
    put(db_dec.data(), db_dec.size());
    put(dW_out.data(), dW_out.size());
    v(pos++) = db_out;
    return v;
}

void Seq2SeqGrads::add(const Seq2SeqGrads& other) {
    dW_enc += other.dW_enc;
    db_enc += other.db_enc;
    dW_dec += other.dW_dec;
    db_dec += other.db_dec;
    dW_out += other.dW_out;
    db_out += other.db_out;
}

void Seq2SeqGrads::scale(double s) {
    dW_enc *= s;
    db_enc *= s;
    dW_dec *= s;
    db_dec *= s;
    dW_out *= s;
    db_out *= s;
}

Eigen::VectorXd forward(const Seq2SeqParams& p, const Eigen::MatrixXd& enc_in,
                        const Eigen::MatrixXd& dec_in, Rng* dropout_rng,
                        double dropout_p, ForwardCache* cache) {
    if (enc_in.cols() != p.enc.input_dim) {
        throw NumericError("forward: encoder input width mismatch");
    }
    if (dec_in.cols() != p.dec.input_dim) {
        throw NumericError("forward: decoder input width mismatch");
    }
    const int d = p.enc.d;
    const int L = static_cast<int>(enc_in.rows());
    const int H = static_cast<int>(dec_in.rows());

    if (cache != nullptr) {
        cache->enc_steps.resize(L);
        cache->dec_steps.resize(H);
        cache->dec_h.resize(H, d);
        cache->dropout_used = dropout_rng != nullptr && dropout_p > 0.0;
        if (cache->dropout_used) cache->dropout_scale.resize(H, d);
    }

    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd h_next(d), c_next(d);
    for (int t = 0; t < L; ++t) {
        lstm_cell(p.enc, enc_in.row(t).transpose(), h, c, h_next, c_next,
                  cache != nullptr ? &cache->enc_steps[t] : nullptr);
        h.swap(h_next);
        c.swap(c_next);
    }

    Eigen::VectorXd y(H);
    const double keep = 1.0 - dropout_p;
    for (int t = 0; t < H; ++t) {
        lstm_cell(p.dec, dec_in.row(t).transpose(), h, c, h_next, c_next,
                  cache != nullptr ? &cache->dec_steps[t] : nullptr);
        h.swap(h_next);
        c.swap(c_next);
        Eigen::VectorXd out = h;
        if (dropout_rng != nullptr && dropout_p > 0.0) {
            for (int k = 0; k < d; ++k) {
                const double scale = dropout_rng->uniform() < dropout_p ? 0.0 : 1.0 / keep;
                out(k) *= scale;
                if (cache != nullptr) cache->dropout_scale(t, k) = scale;
            }
        }
        if (cache != nullptr) cache->dec_h.row(t) = h.transpose();
        y(t) = p.W_out.dot(out) + p.b_out;
    }
    return y;
}

Seq2SeqGrads backward(const Seq2SeqParams& p, const ForwardCache& cache,
                      const Eigen::VectorXd& dloss_dy) {
    const int d = p.enc.d;
    const int L = static_cast<int>(cache.enc_steps.size());
    const int H = static_cast<int>(cache.dec_steps.size());
    if (dloss_dy.size() != H) throw NumericError("backward: gradient length mismatch");

    Seq2SeqGrads g;
    g.set_zero(p);

    Eigen::VectorXd dh = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(d);
    for (int t = H - 1; t >= 0; --t) {
        Eigen::VectorXd out = cache.dec_h.row(t).transpose();
        if (cache.dropout_used) {
            out = out.cwiseProduct(cache.dropout_scale.row(t).transpose());
        }
        g.dW_out += dloss_dy(t) * out.transpose();
        g.db_out += dloss_dy(t);
        Eigen::VectorXd dout = dloss_dy(t) * p.W_out.transpose();
        if (cache.dropout_used) {
            dout = dout.cwiseProduct(cache.dropout_scale.row(t).transpose());
        }
        dh += dout;
        lstm_cell_backward(p.dec, cache.dec_steps[t], dh, dc, g.dW_dec, g.db_dec);
    }
    // dh/dc now carry gradients for the decoder initial state, i.e. the
    // encoder terminal state.
    for (int t = L - 1; t >= 0; --t) {
        lstm_cell_backward(p.enc, cache.enc_steps[t], dh, dc, g.dW_enc, g.db_enc);
    }
    return g;
}

double huber_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                  double delta, Eigen::VectorXd* grad) {
    if (pred.size() != target.size()) throw NumericError("huber_loss: size mismatch");
    const Eigen::Index n = pred.size();
    if (n == 0) throw NumericError("huber_loss: empty input");
    if (grad != nullptr) grad->resize(n);
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double r = pred(k) - target(k);
        const double a = std::abs(r);
        double dk;
        if (a <= delta) {
            total += 0.5 * r * r;
            dk = r;
        } else {
            total += delta * (a - 0.5 * delta);
            dk = r > 0.0 ? delta : -delta;
        }
        if (grad != nullptr) (*grad)(k) = dk / static_cast<double>(n);
    }
    return total / static_cast<double>(n);
}

void AdamState::init(std::size_t n) {
    m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    t = 0;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw NumericError("adam_step: size mismatch");
    }
    state.t += 1;
    state.m = beta1 * state.m + (1.0 - beta1) * grads;
    state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        const double mhat = state.m(k) / bc1;
        const double vhat = state.v(k) / bc2;
        params(k) -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void TrainingConfig::validate() const {
    if (lr0 <= 0.0 || lr_min <= 0.0 || lr_min > lr0) {
        throw ConfigError("training: learning rates must satisfy 0 < lr_min <= lr0");
    }
    if (batch < 1) throw ConfigError("training: batch must be >= 1");
    if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
    if (patience < 1 || lr_patience < 1) throw ConfigError("training: patience must be >= 1");
    if (lr_factor <= 0.0 || lr_factor >= 1.0) {
        throw ConfigError("training: lr_factor must be in (0, 1)");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw ConfigError("training: dropout_p must be in [0, 1)");
    }
    if (huber_delta <= 0.0) throw ConfigError("training: huber_delta must be positive");
    if (input_noise_sd < 0.0) {
        throw ConfigError("training: input_noise_sd must be >= 0");
    }
}

namespace {

double dataset_loss(const Seq2SeqParams& p, const std::vector<Sample>& set,
                    double delta, bool parallel) {
    if (set.empty()) throw DataError("training: empty evaluation set");
    std::vector<double> losses(set.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(set.size()); ++i) {
        const Sample& s = set[static_cast<std::size_t>(i)];
        const Eigen::VectorXd y = forward(p, s.enc, s.dec, nullptr, 0.0);
        losses[static_cast<std::size_t>(i)] = huber_loss(y, s.target, delta);
    }
    // serial sum keeps the result independent of the thread count
    return std::accumulate(losses.begin(), losses.end(), 0.0) /
           static_cast<double>(losses.size());
}

} // namespace

TrainingResult train(const Seq2SeqParams& initial, const std::vector<Sample>& train_set,
                     const std::vector<Sample>& val_set, const TrainingConfig& cfg) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) {
        throw DataError("training: train and validation sets must be non-empty");
    }

    Seq2SeqParams params = initial;
    Eigen::VectorXd flat = params.to_flat();
    AdamState adam;
    adam.init(static_cast<std::size_t>(flat.size()));

    TrainingResult result;
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

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const std::size_t n = end - start;

            // Per-sample dropout streams are indexed by (epoch, position) so
            // the result is identical for any thread count.
            std::vector<Seq2SeqGrads> grads(n);
            std::vector<double> losses(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (cfg.parallel)
#endif
            for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
                const std::size_t pos = start + static_cast<std::size_t>(j);
                const Sample& s = train_set[order[pos]];
                Rng drop_rng(cfg.seed * 2000003ULL +
                             static_cast<std::uint64_t>(epoch) * 1000003ULL +
                             static_cast<std::uint64_t>(pos));
                ForwardCache cache;
                const Eigen::VectorXd y =
                    forward(params, s.enc, s.dec, &drop_rng, cfg.dropout_p, &cache);
                Eigen::VectorXd dy;
                losses[static_cast<std::size_t>(j)] =
                    huber_loss(y, s.target, cfg.huber_delta, &dy);
                grads[static_cast<std::size_t>(j)] = backward(params, cache, dy);
            }

            Seq2SeqGrads batch_grads;
            batch_grads.set_zero(params);
            for (std::size_t j = 0; j < n; ++j) {
                batch_grads.add(grads[j]);
                train_loss_sum += losses[j];
            }
            train_count += static_cast<std::int64_t>(n);
            batch_grads.scale(1.0 / static_cast<double>(n));

            const Eigen::VectorXd gflat = batch_grads.to_flat();
            if (!gflat.allFinite()) {
                blew_up = true;
                break;
            }
            adam_step(flat, gflat, adam, lr, cfg.beta1, cfg.beta2);
            params.from_flat(flat);
        }

        const double train_loss = train_loss_sum / static_cast<double>(std::max<std::int64_t>(train_count, 1));
        if (blew_up || !std::isfinite(train_loss)) {
            result.aborted_non_finite = true;
            break;
        }

        const double val_loss = dataset_loss(params, val_set, cfg.huber_delta, cfg.parallel);
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

Eigen::VectorXd predict_mgdl(const Seq2SeqParams& p, const Eigen::MatrixXd& enc_in,
                             const Eigen::MatrixXd& dec_in) {
    Eigen::VectorXd y = forward(p, enc_in, dec_in, nullptr, 0.0);
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        y(k) = segments::unscale_cgm(y(k));
    }
    return y;
}

namespace {

void append_matrix(std::ostringstream& out, const std::string& name,
                   const Eigen::MatrixXd& m) {
    out << "section " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) out << ' ';
            out << format_g17(m(r, c));
        }
        out << '\n';
    }
}

Eigen::MatrixXd parse_matrix(const std::vector<std::string>& lines, std::size_t& idx,
                             const std::string& name) {
    if (idx >= lines.size()) throw DataError("model file: missing section " + name);
    const auto header = split_line(lines[idx], ' ');
    if (header.size() != 4 || header[0] != "section" || header[1] != name) {
        throw DataError("model file: expected section " + name + " at line " +
                        std::to_string(idx + 1));
    }
    const int rows = std::stoi(header[2]);
    const int cols = std::stoi(header[3]);
    ++idx;
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r, ++idx) {
        if (idx >= lines.size()) throw DataError("model file: truncated section " + name);
        const auto parts = split_line(lines[idx], ' ');
        if (static_cast<int>(parts.size()) != cols) {
            throw DataError("model file: bad row width in section " + name);
        }
        for (int c = 0; c < cols; ++c) m(r, c) = std::stod(parts[static_cast<std::size_t>(c)]);
    }
    return m;
}

} // namespace

void save_seq2seq(const Seq2SeqParams& p, const std::string& kind, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge model v1\n";
    out << "kind=" << kind << '\n';
    out << "enc_in=" << p.enc.input_dim << " dec_in=" << p.dec.input_dim
        << " d=" << p.enc.d << '\n';
    append_matrix(out, "W_enc", p.enc.W);
    append_matrix(out, "b_enc", p.enc.b);
    append_matrix(out, "W_dec", p.dec.W);
    append_matrix(out, "b_dec", p.dec.b);
    append_matrix(out, "W_out", p.W_out);
    append_matrix(out, "b_out", Eigen::MatrixXd::Constant(1, 1, p.b_out));
    write_text_file(path, out.str());
}

Seq2SeqParams load_seq2seq(const std::string& path, std::string* kind_out) {
    const std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (lines.size() < 3 || lines[0] != "# glyforge model v1") {
        throw DataError("model file: unrecognized header in " + path);
    }
    if (lines[1].rfind("kind=", 0) != 0) throw DataError("model file: missing kind line");
    if (kind_out != nullptr) *kind_out = lines[1].substr(5);

    int enc_in = 0, dec_in = 0, d = 0;
    if (std::sscanf(lines[2].c_str(), "enc_in=%d dec_in=%d d=%d", &enc_in, &dec_in, &d) != 3) {
        throw DataError("model file: malformed dimension line");
    }
    Seq2SeqParams p;
    p.enc.input_dim = enc_in;
    p.enc.d = d;
    p.dec.input_dim = dec_in;

    std::size_t idx = 3;
    p.enc.W = parse_matrix(lines, idx, "W_enc");
    p.enc.b = parse_matrix(lines, idx, "b_enc");
    p.dec.W = parse_matrix(lines, idx, "W_dec");
    p.dec.b = parse_matrix(lines, idx, "b_dec");
    p.W_out = parse_matrix(lines, idx, "W_out");
    p.b_out = parse_matrix(lines, idx, "b_out")(0, 0);

    // The decoder hidden size is read from its own section so that
    // single-cell checkpoints (kind=recursive) with a placeholder decoder
    // block stay loadable; the header d describes the encoder.
    if (p.dec.W.rows() % 4 != 0) throw DataError("model file: malformed W_dec shape");
    p.dec.d = static_cast<int>(p.dec.W.rows()) / 4;
    if (p.enc.W.rows() != 4 * d || p.enc.W.cols() != enc_in + d ||
        p.dec.W.cols() != dec_in + p.dec.d || p.dec.b.size() != p.dec.W.rows() ||
        p.W_out.cols() != d) {
        throw DataError("model file: section shapes disagree with the dimension line");
    }
    return p;
}

void save_training_log(const std::vector<EpochRecord>& log, const std::string& path) {
    std::ostringstream out;
    out << "epoch\ttrain_loss\tval_loss\tlr\n";
    for (const auto& rec : log) {
        out << rec.epoch << '\t' << format_g17(rec.train_loss) << '\t'
            << format_g17(rec.val_loss) << '\t' << format_g17(rec.lr) << '\n';
    }
    write_text_file(path, out.str());
}

} // namespace glyforge::neural

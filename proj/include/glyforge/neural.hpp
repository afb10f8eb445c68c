#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "glyforge/common.hpp"

namespace glyforge::neural {

/// Single-layer LSTM cell parameters. Gate ordering within the stacked
/// weight matrix and bias is fixed as [input, forget, cell, output];
/// the forget-gate bias block is initialized to 1.
struct LstmCellParams {
    Eigen::MatrixXd W; // 4d x (input_dim + d)
    Eigen::VectorXd b; // 4d
    int input_dim = 0;
    int d = 0;
};

LstmCellParams init_lstm(int input_dim, int d, Rng& rng);

struct LstmStepCache {
    Eigen::VectorXd xh;     // stacked [x; h_prev]
    Eigen::VectorXd c_prev;
    Eigen::VectorXd i, f, g, o;
    Eigen::VectorXd c, tanh_c;
};

/// One cell step; h/c are written in place, the cache (when given) retains
/// what backward needs.
void lstm_cell(const LstmCellParams& p, const Eigen::VectorXd& x,
               const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
               Eigen::VectorXd& h_out, Eigen::VectorXd& c_out,
               LstmStepCache* cache = nullptr);

/// Exact reverse-mode step. dh/dc are the gradients flowing into (h_out,
/// c_out); on return dh/dc hold the gradients for (h_prev, c_prev) and
/// dW/db have been accumulated. When dx is non-null it receives the
/// gradient w.r.t. the input, which callers need when the input was itself
/// produced by the network (fed-back predictions).
void lstm_cell_backward(const LstmCellParams& p, const LstmStepCache& cache,
                        Eigen::VectorXd& dh, Eigen::VectorXd& dc,
                        Eigen::MatrixXd& dW, Eigen::VectorXd& db,
                        Eigen::VectorXd* dx = nullptr);

/// Encoder-decoder with a shared per-step linear projection. The decoder is
/// initialized with the encoder terminal states; no model output ever feeds
/// back into any input.
struct Seq2SeqParams {
    LstmCellParams enc;
    LstmCellParams dec;
    Eigen::RowVectorXd W_out; // 1 x d
    double b_out = 0.0;

    std::size_t flat_size() const;
    Eigen::VectorXd to_flat() const;
    void from_flat(const Eigen::VectorXd& v);
};

Seq2SeqParams init_seq2seq(int enc_in, int dec_in, int d, Rng& rng);

struct Seq2SeqGrads {
    Eigen::MatrixXd dW_enc;
    Eigen::VectorXd db_enc;
    Eigen::MatrixXd dW_dec;
    Eigen::VectorXd db_dec;
    Eigen::RowVectorXd dW_out;
    double db_out = 0.0;

    void set_zero(const Seq2SeqParams& shape);
    Eigen::VectorXd to_flat() const;
    void add(const Seq2SeqGrads& other);
    void scale(double s);
};

struct ForwardCache {
    std::vector<LstmStepCache> enc_steps;
    std::vector<LstmStepCache> dec_steps;
    Eigen::MatrixXd dec_h;          // H x d, pre-dropout hidden sequence
    Eigen::MatrixXd dropout_scale;  // H x d, multiplicative mask (1/(1-p) or 0)
    bool dropout_used = false;
};

/// Full forward pass. Rows of enc_in / dec_in are timesteps. When
/// dropout_rng is non-null, inverted dropout with probability dropout_p is
/// applied to the decoder hidden sequence (training mode); inference calls
/// pass nullptr and are bit-deterministic.
Eigen::VectorXd forward(const Seq2SeqParams& p, const Eigen::MatrixXd& enc_in,
                        const Eigen::MatrixXd& dec_in, Rng* dropout_rng,
                        double dropout_p, ForwardCache* cache = nullptr);

/// Exact BPTT through projection, dropout, decoder, context hand-off and
/// encoder, given d(loss)/d(scaled outputs).
Seq2SeqGrads backward(const Seq2SeqParams& p, const ForwardCache& cache,
                      const Eigen::VectorXd& dloss_dy);

/// Mean Huber loss over the horizon, with its gradient.
double huber_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                  double delta, Eigen::VectorXd* grad = nullptr);

struct AdamState {
    Eigen::VectorXd m, v;
    long t = 0;

    void init(std::size_t n);
};

/// Bias-corrected Adam update on the flat parameter vector.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct TrainingConfig {
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch = 64;
    int max_epochs = 100;
    int patience = 15;
    double lr_factor = 0.5;
    int lr_patience = 5;
    double lr_min = 1e-5;
    double dropout_p = 0.2;
    double huber_delta = 1.0;
    // Recursive trainer only: sd of Gaussian noise added to CGM inputs
    // (never targets) during training, in scaled units. Stabilizes the
    // closed-loop rollout; ignored by the encoder-decoder trainer, whose
    // inputs are never revisited at inference.
    double input_noise_sd = 0.0;
    // Recursive trainer only: when true, training rolls the model out over
    // the horizon feeding back its own predictions (matches inference);
    // when false, every input is teacher-forced and the closed loop is
    // first exercised at inference time.
    bool recursive_rollout = false;
    std::uint64_t seed = 1;
    bool parallel = true;

    void validate() const;
};

struct Sample {
    Eigen::MatrixXd enc;    // L x enc_in
    Eigen::MatrixXd dec;    // H x dec_in
    Eigen::VectorXd target; // H, scaled
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainingResult {
    Seq2SeqParams params; // from the best validation epoch
    std::vector<EpochRecord> log;
    int best_epoch = 0;
    bool aborted_non_finite = false;
};

/// Mini-batch Adam with per-epoch seeded shuffling, plateau LR scheduling
/// and early stopping on validation Huber loss (dropout disabled for
/// validation). A non-finite loss aborts with the last finite checkpoint.
TrainingResult train(const Seq2SeqParams& initial,
                     const std::vector<Sample>& train_set,
                     const std::vector<Sample>& val_set,
                     const TrainingConfig& cfg);

/// Forward without dropout, then invert the log scaling. Outputs are
/// reported as-is; values outside [40, 400] are possible by design.
Eigen::VectorXd predict_mgdl(const Seq2SeqParams& p, const Eigen::MatrixXd& enc_in,
                             const Eigen::MatrixXd& dec_in);

void save_seq2seq(const Seq2SeqParams& p, const std::string& kind,
                  const std::string& path);
Seq2SeqParams load_seq2seq(const std::string& path, std::string* kind_out = nullptr);

void save_training_log(const std::vector<EpochRecord>& log, const std::string& path);

} // namespace glyforge::neural

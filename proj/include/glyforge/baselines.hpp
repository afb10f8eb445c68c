#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "glyforge/hovorka.hpp"
#include "glyforge/neural.hpp"
#include "glyforge/segments.hpp"

namespace glyforge::baselines {

/// Carry-forward: the decision-time glucose repeated over the horizon.
Eigen::VectorXd naive_forecast(const segments::Segment& seg);

/// The matched twin's own basal-only rollout read out as CGM.
Eigen::VectorXd twin_forecast(const Eigen::MatrixXd& x_fut,
                              const hovorka::TwinParameters& twin);

// --- sequence-to-sequence variants -------------------------------------------

/// Input ablations of the encoder-decoder model. Column layout of the full
/// tensors: encoder [scaled CGM, scaled IOB, 10 twin states], decoder
/// [scaled future IOB, 10 twin states].
enum class Variant {
    Full,     // 12 / 11 inputs
    MinusOde, // drop the 10 twin-state columns: 2 / 1 inputs
    MinusIob, // drop the IOB columns: 11 / 10 inputs
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
int encoder_width(Variant v);
int decoder_width(Variant v);

/// Slice the full tensors down to the variant's input columns.
neural::Sample make_sample(const segments::TensorTriple& t, Variant v);

// --- recursive one-step LSTM --------------------------------------------------

/// Single LSTM that is trained teacher-forced to predict the next scaled CGM
/// value from [scaled CGM, normalized IOB] and is rolled out at inference by
/// feeding its own predictions back in.
struct RecursiveParams {
    neural::LstmCellParams cell; // input_dim 2
    Eigen::RowVectorXd W_out;    // 1 x d
    double b_out = 0.0;

    Eigen::VectorXd to_flat() const;
    void from_flat(const Eigen::VectorXd& v);
};

RecursiveParams init_recursive(int d, Rng& rng);

/// One 85-slot window: scaled CGM and normalized IOB over history + future,
/// with rows before hist_first zero-padded and skipped during training.
struct RecursiveSample {
    Eigen::VectorXd cgm_scaled; // 85
    Eigen::VectorXd iob;        // 85, normalized
    int hist_first = 0;
};

RecursiveSample make_recursive_sample(const segments::Segment& seg,
                                      const std::vector<double>& iob_hist,
                                      const std::vector<double>& iob_fut);

/// Mean Huber loss at positions hist_first .. 83. With rollout false (the
/// default) every CGM input is the observed value: pure teacher forcing, the
/// closed loop is first exercised at inference. With rollout true the
/// horizon positions feed back the model's own clamped predictions, with
/// exact BPTT through the feedback path when grad_flat is non-null, so
/// training optimizes the same closed-loop rollout the forecast runs. When
/// input_jitter is given (one value per position) it is added to observed
/// CGM *inputs* only, never to targets or fed-back predictions.
double recursive_loss(const RecursiveParams& p, const RecursiveSample& s,
                      double delta, Eigen::VectorXd* grad_flat = nullptr,
                      const Eigen::VectorXd* input_jitter = nullptr,
                      bool rollout = false);

struct RecursiveTrainingResult {
    RecursiveParams params;
    std::vector<neural::EpochRecord> log;
    int best_epoch = 0;
    bool aborted_non_finite = false;
};

/// Same optimization protocol as the encoder-decoder trainer (Adam, plateau
/// LR, early stopping on validation loss).
RecursiveTrainingResult train_recursive(const RecursiveParams& initial,
                                        const std::vector<RecursiveSample>& train_set,
                                        const std::vector<RecursiveSample>& val_set,
                                        const neural::TrainingConfig& cfg);

/// Roll the trained model forward: history positions are teacher-forced with
/// the (padded) observed CGM, then 48 steps feed back the model's own output.
/// Returns mg/dL.
Eigen::VectorXd recursive_forecast(const RecursiveParams& p, const RecursiveSample& s);

void save_recursive(const RecursiveParams& p, const std::string& path);
RecursiveParams load_recursive(const std::string& path);

// --- prediction files ---------------------------------------------------------

/// segment_id -> 48 forecast values in mg/dL.
using PredictionMap = std::map<std::int64_t, Eigen::VectorXd>;

void save_predictions(const PredictionMap& preds, const std::string& path);
PredictionMap load_predictions(const std::string& path);

} // namespace glyforge::baselines

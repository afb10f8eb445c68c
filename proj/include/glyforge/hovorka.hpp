#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace glyforge::hovorka {

inline constexpr double kSampleMinutes = 5.0;
inline constexpr double kMgdlPerMmol = 18.0; // mg/dL per mmol/L, exact
inline constexpr int kStateDim = 10;

/// The 16 physiological constants defining one virtual patient.
struct TwinParameters {
    double f_c01;   // non-insulin-dependent glucose clearance, mmol/kg/min
    double V_G;     // glucose distribution volume, L/kg
    double k_12;    // Q2 -> Q1 transfer rate, 1/min
    double a_G;     // carb absorption rate constant, dimensionless
    double t_maxG;  // time of max gut absorption, min
    double EGP_0;   // basal endogenous glucose production, mmol/kg/min
    double t_maxI;  // time of max insulin absorption, min
    double k_e;     // insulin elimination rate, 1/min
    double V_I;     // insulin distribution volume, L/kg
    double k_a1;    // activation rate for X1, 1/min
    double k_a2;    // activation rate for X2, 1/min
    double k_a3;    // activation rate for X3, 1/min
    double S_F1;    // insulin sensitivity on disposal, (mU/L)^-1 min^-1
    double S_F2;    // insulin sensitivity on distribution, (mU/L)^-1 min^-1
    double S_F3;    // insulin sensitivity on EGP, (mU/L)^-1 min^-1
    double BW;      // body weight, kg

    // Optional override for the linearized non-insulin clearance rate k_01;
    // <= 0 means "derive from f_c01 at the euglycemic reference" (see k01()).
    double k_01_override = 0.0;

    void validate() const; // throws NumericError on violated invariants
};

/// Hovorka 2004 population means; the center of the generated population.
TwinParameters nominal_parameters();

/// State vector, ordered [Q1, Q2, S1, S2, I, X1, X2, X3, M1, M2].
struct TwinState {
    double Q1 = 0, Q2 = 0;        // glucose masses, mmol/kg
    double S1 = 0, S2 = 0;        // subcutaneous insulin, mU/kg
    double I = 0;                 // plasma insulin, mU/L
    double X1 = 0, X2 = 0, X3 = 0; // remote insulin action, 1/min
    double M1 = 0, M2 = 0;        // gut absorption chain, g

    // Set when the steady-state initializer had to clamp Q2 at zero.
    bool q2_clamped = false;

    Eigen::Matrix<double, kStateDim, 1> to_vector() const;
    static TwinState from_vector(const Eigen::Matrix<double, kStateDim, 1>& v,
                                 bool q2_clamped = false);
    bool finite() const;
};

struct ControlInput {
    double u_I = 0.0; // insulin delivery rate, mU/kg/min
    double u_G = 0.0; // carbohydrate ingestion rate, g/min
};

struct ContinuousSystem {
    Eigen::Matrix<double, kStateDim, kStateDim> A;
    Eigen::Matrix<double, kStateDim, 1> B; // insulin input column
    Eigen::Matrix<double, kStateDim, 1> D; // nonlinear constant terms
    Eigen::Matrix<double, kStateDim, 1> G; // carbohydrate input column
};

struct DiscretizedSystem {
    Eigen::Matrix<double, kStateDim, kStateDim> A_d;
    Eigen::Matrix<double, kStateDim, 1> B_d;
    Eigen::Matrix<double, kStateDim, 1> D_d;
    Eigen::Matrix<double, kStateDim, 1> G_d;
    double T_s = kSampleMinutes;
};

/// Non-insulin clearance rate: f_c01 linearized around euglycemia
/// (97.2 mg/dL = 5.4 mmol/L), unless overridden on the parameter set.
double k01(const TwinParameters& p);

/// Renal clearance rate, zero at plasma glucose <= 9 mmol/L and
/// 0.003*(G-9)*V_G/Q1 above it.
double renal_rate(const TwinParameters& p, double Q1);

/// Gut absorption gain: the Q1-row coupling to M2, a_G/(0.18*t_maxG*BW).
/// Converts grams in the gut chain to mmol/kg/min of glucose appearance.
double gut_gain(const TwinParameters& p);

/// Continuous-time matrices frozen at the given state. A*x + B*u_I + D + G*u_G
/// reproduces the nonlinear right-hand side exactly at that state.
ContinuousSystem continuous_matrices(const TwinParameters& p, const TwinState& x);

/// Full nonlinear RHS, used by tests and the steady-state initializer.
Eigen::Matrix<double, kStateDim, 1> continuous_rhs(const TwinParameters& p,
                                                   const TwinState& x,
                                                   const ControlInput& u);

/// Zero-order-hold discretization over T_s minutes via the 13x13 augmented
/// matrix exponential [[A,B,D,G],[0]].
DiscretizedSystem discretize(const ContinuousSystem& sys, double T_s);

/// One 5-minute step: matrices frozen at x, exact ZOH transition, then
/// Q1/M1/M2 clamped at zero.
TwinState step(const TwinState& x, const TwinParameters& p, const ControlInput& u);

double cgm_output(const TwinState& x, const TwinParameters& p); // mg/dL

struct Trajectory {
    std::vector<TwinState> states; // inputs.size() + 1 entries, [0] = initial
    std::vector<double> cgm;       // same length, mg/dL
};

Trajectory simulate(const TwinState& initial, const TwinParameters& p,
                    const std::vector<ControlInput>& inputs);

/// Closed-form steady-state initializer. Anchors Q1 to the CGM value g,
/// puts the insulin chain at equilibrium under u_basal, zeroes the gut
/// chain, and picks Q2 so Q1's derivative equals the observed slope.
/// A negative Q2 requirement is clamped to zero and flagged on the result.
TwinState steady_state_init(double g_mgdl, double g_slope_mgdl_per_min,
                            double u_basal, const TwinParameters& p);

/// Glucose (mg/dL) at which the twin is in full equilibrium under constant
/// basal u (all ten derivatives zero, Q2 solved from its own equation).
/// Throws NumericError when no equilibrium exists for that rate.
double equilibrium_glucose(double u_basal, const TwinParameters& p);

/// The corresponding full-equilibrium state (every derivative zero).
TwinState equilibrium_state(double u_basal, const TwinParameters& p);

} // namespace glyforge::hovorka

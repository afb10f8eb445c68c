#include "glyforge/hovorka.hpp"

#include <cmath>

#include "glyforge/common.hpp"
#include "glyforge/expm.hpp"

namespace glyforge::hovorka {

void TwinParameters::validate() const {
    const double fields[] = {f_c01, V_G,  k_12, a_G,  t_maxG, EGP_0, t_maxI, k_e,
                             V_I,   k_a1, k_a2, k_a3, S_F1,   S_F2,  S_F3,   BW};
    for (double f : fields) {
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw NumericError("TwinParameters: all fields must be strictly positive and finite");
        }
    }
    if (t_maxG < 1.0 || t_maxI < 1.0) {
        throw NumericError("TwinParameters: t_maxG and t_maxI must be >= 1 min");
    }
    if (BW < 20.0 || BW > 200.0) {
        throw NumericError("TwinParameters: BW outside [20, 200] kg");
    }
}

TwinParameters nominal_parameters() {
    TwinParameters p{};
    p.f_c01 = 0.0097;   // mmol/kg/min
    p.V_G = 0.16;       // L/kg
    p.k_12 = 0.066;     // 1/min
    p.a_G = 0.8;
    p.t_maxG = 40.0;    // min
    p.EGP_0 = 0.0161;   // mmol/kg/min
    p.t_maxI = 55.0;    // min
    p.k_e = 0.138;      // 1/min
    p.V_I = 0.12;       // L/kg
    p.k_a1 = 0.006;     // 1/min
    p.k_a2 = 0.06;      // 1/min
    p.k_a3 = 0.03;      // 1/min
    p.S_F1 = 51.2e-4;   // (mU/L)^-1 min^-1
    p.S_F2 = 8.2e-4;
    p.S_F3 = 520e-4;
    p.BW = 70.0;        // kg
    return p;
}

Eigen::Matrix<double, kStateDim, 1> TwinState::to_vector() const {
    Eigen::Matrix<double, kStateDim, 1> v;
    v << Q1, Q2, S1, S2, I, X1, X2, X3, M1, M2;
    return v;
}

TwinState TwinState::from_vector(const Eigen::Matrix<double, kStateDim, 1>& v,
                                 bool q2_clamped) {
    TwinState x;
    x.Q1 = v[0];
    x.Q2 = v[1];
    x.S1 = v[2];
    x.S2 = v[3];
    x.I = v[4];
    x.X1 = v[5];
    x.X2 = v[6];
    x.X3 = v[7];
    x.M1 = v[8];
    x.M2 = v[9];
    x.q2_clamped = q2_clamped;
    return x;
}

bool TwinState::finite() const { return to_vector().allFinite(); }

double k01(const TwinParameters& p) {
    if (p.k_01_override > 0.0) return p.k_01_override;
    // f_c01 linearized at the euglycemic glucose mass (97.2 mg/dL).
    const double q1_ref = 97.2 * p.V_G / kMgdlPerMmol;
    return p.f_c01 / q1_ref;
}

double renal_rate(const TwinParameters& p, double Q1) {
    if (Q1 <= 0.0) return 0.0;
    const double g_mmol = Q1 / p.V_G; // plasma glucose, mmol/L
    if (g_mmol <= 9.0) return 0.0;
    return 0.003 * (g_mmol - 9.0) * p.V_G / Q1;
}

double gut_gain(const TwinParameters& p) {
    return p.a_G / (0.18 * p.t_maxG * p.BW);
}

ContinuousSystem continuous_matrices(const TwinParameters& p, const TwinState& x) {
    p.validate();
    if (!x.finite()) throw NumericError("continuous_matrices: non-finite state");

    const double k_r = renal_rate(p, x.Q1);
    const double k_01v = k01(p);

    ContinuousSystem sys;
    auto& A = sys.A;
    A.setZero();

    A(0, 0) = -(x.X1 + k_01v + k_r);
    A(0, 1) = p.k_12;
    A(0, 5) = -x.Q1;
    A(0, 7) = -p.EGP_0;
    A(0, 9) = gut_gain(p);

    A(1, 0) = x.X1;
    A(1, 1) = -(p.k_12 + x.X2);
    A(1, 5) = x.Q1;
    A(1, 6) = -x.Q2;

    A(2, 2) = -1.0 / p.t_maxI;
    A(3, 2) = 1.0 / p.t_maxI;
    A(3, 3) = -1.0 / p.t_maxI;
    A(4, 3) = 1.0 / (p.t_maxI * p.V_I);
    A(4, 4) = -p.k_e;

    A(5, 4) = p.S_F1 * p.k_a1;
    A(5, 5) = -p.k_a1;
    A(6, 4) = p.S_F2 * p.k_a2;
    A(6, 6) = -p.k_a2;
    A(7, 4) = p.S_F3 * p.k_a3;
    A(7, 7) = -p.k_a3;

    A(8, 8) = -1.0 / p.t_maxG;
    A(9, 8) = 1.0 / p.t_maxG;
    A(9, 9) = -1.0 / p.t_maxG;

    sys.B.setZero();
    sys.B[2] = 1.0; // insulin enters S1
    sys.G.setZero();
    sys.G[8] = 1.0; // carbohydrate enters M1

    // Constant terms: the X1*Q1 entries cancel the bilinear double count in
    // A, so A*x + D reproduces the nonlinear RHS exactly at x.
    sys.D.setZero();
    sys.D[0] = x.X1 * x.Q1 - p.f_c01 + p.EGP_0;
    sys.D[1] = -x.X1 * x.Q1 + x.X2 * x.Q2;
    return sys;
}

Eigen::Matrix<double, kStateDim, 1> continuous_rhs(const TwinParameters& p,
                                                   const TwinState& x,
                                                   const ControlInput& u) {
    const double k_r = renal_rate(p, x.Q1);
    Eigen::Matrix<double, kStateDim, 1> d;
    d[0] = -(x.X1 + k01(p) + k_r) * x.Q1 + p.k_12 * x.Q2 + gut_gain(p) * x.M2 -
           p.f_c01 + p.EGP_0 * (1.0 - x.X3);
    d[1] = x.X1 * x.Q1 - (p.k_12 + x.X2) * x.Q2;
    d[2] = u.u_I - x.S1 / p.t_maxI;
    d[3] = (x.S1 - x.S2) / p.t_maxI;
    d[4] = x.S2 / (p.t_maxI * p.V_I) - p.k_e * x.I;
    d[5] = p.k_a1 * (p.S_F1 * x.I - x.X1);
    d[6] = p.k_a2 * (p.S_F2 * x.I - x.X2);
    d[7] = p.k_a3 * (p.S_F3 * x.I - x.X3);
    d[8] = u.u_G - x.M1 / p.t_maxG;
    d[9] = (x.M1 - x.M2) / p.t_maxG;
    return d;
}

DiscretizedSystem discretize(const ContinuousSystem& sys, double T_s) {
    if (!(T_s > 0.0)) throw NumericError("discretize: T_s must be positive");

    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(kStateDim + 3, kStateDim + 3);
    aug.topLeftCorner(kStateDim, kStateDim) = sys.A;
    aug.col(kStateDim).head(kStateDim) = sys.B;
    aug.col(kStateDim + 1).head(kStateDim) = sys.D;
    aug.col(kStateDim + 2).head(kStateDim) = sys.G;

    const Eigen::MatrixXd e = matrix_exp(aug * T_s);

    DiscretizedSystem d;
    d.A_d = e.topLeftCorner(kStateDim, kStateDim);
    d.B_d = e.col(kStateDim).head(kStateDim);
    d.D_d = e.col(kStateDim + 1).head(kStateDim);
    d.G_d = e.col(kStateDim + 2).head(kStateDim);
    d.T_s = T_s;
    return d;
}

TwinState step(const TwinState& x, const TwinParameters& p, const ControlInput& u) {
    const ContinuousSystem sys = continuous_matrices(p, x);
    const DiscretizedSystem d = discretize(sys, kSampleMinutes);
    Eigen::Matrix<double, kStateDim, 1> next =
        d.A_d * x.to_vector() + d.B_d * u.u_I + d.D_d + d.G_d * u.u_G;
    // the frozen-system transition can slightly undershoot the masses
    next[0] = std::max(next[0], 0.0);
    next[8] = std::max(next[8], 0.0);
    next[9] = std::max(next[9], 0.0);
    return TwinState::from_vector(next);
}

double cgm_output(const TwinState& x, const TwinParameters& p) {
    if (!(p.V_G > 0.0)) throw NumericError("cgm_output: V_G must be positive");
    return kMgdlPerMmol * x.Q1 / p.V_G;
}

Trajectory simulate(const TwinState& initial, const TwinParameters& p,
                    const std::vector<ControlInput>& inputs) {
    if (inputs.empty()) throw DataError("simulate: inputs must be non-empty");
    Trajectory traj;
    traj.states.reserve(inputs.size() + 1);
    traj.cgm.reserve(inputs.size() + 1);
    traj.states.push_back(initial);
    traj.cgm.push_back(cgm_output(initial, p));
    TwinState x = initial;
    for (const ControlInput& u : inputs) {
        x = step(x, p, u);
        traj.states.push_back(x);
        traj.cgm.push_back(cgm_output(x, p));
    }
    return traj;
}

TwinState steady_state_init(double g_mgdl, double g_slope_mgdl_per_min,
                            double u_basal, const TwinParameters& p) {
    p.validate();
    if (u_basal < 0.0) throw NumericError("steady_state_init: negative basal rate");

    TwinState x;
    x.Q1 = g_mgdl * p.V_G / kMgdlPerMmol;
    x.S1 = u_basal * p.t_maxI;
    x.S2 = x.S1;
    x.I = x.S2 / (p.t_maxI * p.V_I * p.k_e);
    x.X1 = p.S_F1 * x.I;
    x.X2 = p.S_F2 * x.I;
    x.X3 = p.S_F3 * x.I;
    x.M1 = 0.0;
    x.M2 = 0.0;

    // Q2 from the Q1 equation so that Q1's derivative equals the observed
    // slope; Q2's own derivative is left unconstrained.
    const double slope_mmolkg = g_slope_mgdl_per_min * p.V_G / kMgdlPerMmol;
    const double k_r = renal_rate(p, x.Q1);
    const double q2 = (slope_mmolkg + (x.X1 + k01(p) + k_r) * x.Q1 + p.f_c01 -
                       p.EGP_0 * (1.0 - x.X3)) /
                      p.k_12;
    if (q2 < 0.0) {
        x.Q2 = 0.0;
        x.q2_clamped = true;
    } else {
        x.Q2 = q2;
    }
    return x;
}

TwinState equilibrium_state(double u_basal, const TwinParameters& p) {
    p.validate();
    TwinState x;
    x.S1 = u_basal * p.t_maxI;
    x.S2 = x.S1;
    x.I = x.S2 / (p.t_maxI * p.V_I * p.k_e);
    x.X1 = p.S_F1 * x.I;
    x.X2 = p.S_F2 * x.I;
    x.X3 = p.S_F3 * x.I;

    // Q1 from dQ1/dt = 0 with Q2 eliminated via dQ2/dt = 0. Renal clearance
    // is neglected here; equilibria live well below its 9 mmol/L threshold.
    const double numer = p.EGP_0 * (1.0 - x.X3) - p.f_c01;
    const double denom =
        (x.X1 + k01(p)) - p.k_12 * x.X1 / (p.k_12 + x.X2);
    if (!(numer > 0.0) || !(denom > 0.0)) {
        throw NumericError("equilibrium_state: no equilibrium at this basal rate");
    }
    x.Q1 = numer / denom;
    x.Q2 = x.X1 * x.Q1 / (p.k_12 + x.X2);
    return x;
}

double equilibrium_glucose(double u_basal, const TwinParameters& p) {
    return cgm_output(equilibrium_state(u_basal, p), p);
}

} // namespace glyforge::hovorka

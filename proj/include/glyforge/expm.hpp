#pragma once

#include <Eigen/Dense>

namespace glyforge {

/// Dense matrix exponential via scaling-and-squaring with a degree-12
/// truncated Taylor kernel (Paterson-Stockmeyer evaluation). The matrix is
/// scaled until its 1-norm is below 0.5, which keeps the truncation error
/// of the kernel under 1e-12 relative.
///
/// Intended for the small (<= 16x16) matrices of the twin discretization;
/// throws NumericError on non-finite input or oversized matrices.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& m);

} // namespace glyforge

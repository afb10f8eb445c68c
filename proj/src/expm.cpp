#include "glyforge/expm.hpp"

#include <cmath>

#include "glyforge/common.hpp"

namespace glyforge {

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    if (n != m.cols()) throw NumericError("matrix_exp: matrix must be square");
    if (n > 16) throw NumericError("matrix_exp: dimension exceeds 16");
    if (!m.allFinite()) throw NumericError("matrix_exp: non-finite entries");

    // Scale so the 1-norm of the working matrix is <= 0.5; degree-12 Taylor
    // truncation error is then below 0.5^13/13! ~ 2e-13.
    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
    }
    const Eigen::MatrixXd a = m / std::ldexp(1.0, squarings);

    // Paterson-Stockmeyer with chunk size 3: exp(a) ~ sum_{k=0}^{12} a^k/k!
    static const double c[13] = {
        1.0,
        1.0,
        1.0 / 2,
        1.0 / 6,
        1.0 / 24,
        1.0 / 120,
        1.0 / 720,
        1.0 / 5040,
        1.0 / 40320,
        1.0 / 362880,
        1.0 / 3628800,
        1.0 / 39916800,
        1.0 / 479001600,
    };
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a3 = a2 * a;

    auto chunk = [&](int k0) -> Eigen::MatrixXd {
        return c[k0] * id + c[k0 + 1] * a + c[k0 + 2] * a2 + c[k0 + 3] * a3;
    };

    // Horner in powers of a^4 over degree-3 chunks.
    const Eigen::MatrixXd a4 = a3 * a;
    Eigen::MatrixXd result =
        chunk(0) + a4 * (chunk(4) + a4 * (chunk(8) + a4 * (c[12] * id)));

    for (int i = 0; i < squarings; ++i) result = result * result;

    if (!result.allFinite()) {
        throw NumericError("matrix_exp: overflow during squaring, input 1-norm " +
                           std::to_string(norm1));
    }
    return result;
}

} // namespace glyforge

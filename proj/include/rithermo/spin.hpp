#pragma once

#include <vector>

#include "rithermo/opalg.hpp"

namespace rithermo::spin {

inline Matrix sx() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = m(1, 0) = 1.0;
    return m;
}

inline Matrix sy() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = cplx(0, -1);
    m(1, 0) = cplx(0, 1);
    return m;
}

inline Matrix sz() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return m;
}

/// sigma^+ = |0><1| (raises the sz = +1 state index 0).
inline Matrix sp() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1.0;
    return m;
}

inline Matrix sm() { return sp().adjoint(); }

/// op on site j of an m-site chain of qubits.
inline Matrix site(const Matrix &op, std::size_t j, std::size_t m) {
    Matrix out = Matrix::Identity(1, 1);
    for (std::size_t i = 0; i < m; ++i)
        out = kron(out, i == j ? op : identity(2));
    return out;
}

inline Matrix ket_projector(std::size_t d, std::size_t i) {
    Matrix m = zeros(d);
    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    return m;
}

/// SWAP on two d-dimensional factors.
inline Matrix swap(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    Matrix m = Matrix::Zero(n * n, n * n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            m(a * n + b, b * n + a) = 1.0;
    return m;
}

/// Kick generator with exp(-i v) = SWAP exactly: v = (pi/2)(1 - SWAP).
inline Matrix swap_generator(std::size_t d) {
    return (std::acos(-1.0) / 2.0) * (identity(d * d) - swap(d));
}

} // namespace rithermo::spin

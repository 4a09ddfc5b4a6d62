#pragma once

#include <functional>

#include "rithermo/opalg.hpp"

namespace rithermo {

// Linear maps on d x d matrices are held either as a superoperator L acting
// on column-stacked vectors, vec(X)[a + d*b] = X(a, b), or as the Choi matrix
// J = sum_ij |i><j| (x) M(|i><j|) with the input factor first. Then
// tr_out J = 1 exactly when M is trace preserving, and the identity map has
// J = d |Omega><Omega|.

inline Eigen::VectorXcd vec(const Matrix &x) { return Eigen::Map<const Eigen::VectorXcd>(x.data(), x.size()); }

inline Matrix unvec(const Eigen::VectorXcd &v, Eigen::Index d) { return Eigen::Map<const Matrix>(v.data(), d, d); }

inline Eigen::Index map_dim(const Matrix &super_or_choi) {
    auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(super_or_choi.rows()))));
    if (d * d != super_or_choi.rows())
        throw LayoutError("map matrix size is not a perfect square");
    return d;
}

inline Matrix choi_from_superop(const Matrix &l) {
    const auto d = map_dim(l);
    Matrix j(d * d, d * d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index e = 0; e < d; ++e)
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b)
                    j(c * d + a, e * d + b) = l(a + d * b, c + d * e);
    return j;
}

inline Matrix superop_from_choi(const Matrix &j) {
    const auto d = map_dim(j);
    Matrix l(d * d, d * d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index e = 0; e < d; ++e)
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b)
                    l(a + d * b, c + d * e) = j(c * d + a, e * d + b);
    return l;
}

/// Superoperator of an arbitrary linear map given as a callable on d x d matrices.
inline Matrix superop_of(const std::function<Matrix(const Matrix &)> &map, Eigen::Index d) {
    Matrix l(d * d, d * d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index e = 0; e < d; ++e) {
            Matrix unit = Matrix::Zero(d, d);
            unit(c, e) = 1.0;
            l.col(c + d * e) = vec(map(unit));
        }
    return l;
}

inline Matrix apply_superop(const Matrix &l, const Matrix &x) { return unvec(l * vec(x), x.rows()); }

inline Matrix apply_choi(const Matrix &j, const Matrix &x) { return apply_superop(superop_from_choi(j), x); }

/// max |tr_out J - 1|.
inline double trace_preservation_defect(const Matrix &j) {
    const auto d = map_dim(j);
    Matrix reduced = Matrix::Zero(d, d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index e = 0; e < d; ++e)
            for (Eigen::Index a = 0; a < d; ++a)
                reduced(c, e) += j(c * d + a, e * d + a);
    return max_abs(reduced - Matrix::Identity(d, d));
}

inline Matrix identity_choi(Eigen::Index d) {
    return choi_from_superop(Matrix::Identity(d * d, d * d));
}

} // namespace rithermo

#pragma once

#include <catch_amalgamated.hpp>

#include "rithermo/channel.hpp"
#include "rithermo/random.hpp"

namespace test {

using namespace rithermo;
using random::Rng;

inline Matrix diag(std::initializer_list<double> values) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) {
        m(i, i) = v;
        ++i;
    }
    return m;
}

/// Reference partial trace by explicit multi-index loops, independent of IndexSplit.
inline Matrix naive_partial_trace(const std::vector<std::size_t> &dims, const Matrix &rho, const std::vector<bool> &keep) {
    const std::size_t n = dims.size();
    std::size_t total = 1, kept = 1;
    for (std::size_t i = 0; i < n; ++i) {
        total *= dims[i];
        if (keep[i])
            kept *= dims[i];
    }
    auto digits = [&](std::size_t idx) {
        std::vector<std::size_t> d(n);
        for (std::size_t i = n; i-- > 0;) {
            d[i] = idx % dims[i];
            idx /= dims[i];
        }
        return d;
    };
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(kept));
    for (std::size_t a = 0; a < total; ++a)
        for (std::size_t b = 0; b < total; ++b) {
            auto da = digits(a), db = digits(b);
            bool traced_equal = true;
            std::size_t ka = 0, kb = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (keep[i]) {
                    ka = ka * dims[i] + da[i];
                    kb = kb * dims[i] + db[i];
                } else if (da[i] != db[i]) {
                    traced_equal = false;
                }
            }
            if (traced_equal)
                out(static_cast<Eigen::Index>(ka), static_cast<Eigen::Index>(kb)) +=
                    rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    return out;
}

} // namespace test

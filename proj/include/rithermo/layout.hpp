#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rithermo/error.hpp"

namespace rithermo {

enum class Role { system, bath, bath2, unit };

struct Factor {
    std::string id;
    std::size_t dim = 1;
    Role role = Role::system;
    std::size_t unit_index = 0; // only meaningful for Role::unit
};

/// Sorted positions of factors within a CompositeLayout.
using FactorSet = std::vector<std::size_t>;

/// Tensor-factor structure S (x) B (x) B2 (x) U(0) (x) ... (x) U(n).
///
/// Factors are always held in canonical order (system, bath, bath2, units by
/// index); the linear index of a product basis state is row-major with the
/// first factor most significant, i.e. the Kronecker-product convention.
class CompositeLayout {
public:
    CompositeLayout() = default;

    explicit CompositeLayout(std::vector<Factor> factors) : factors_(std::move(factors)) {
        auto rank = [](const Factor &f) {
            switch (f.role) {
            case Role::system: return std::pair<int, std::size_t>{0, 0};
            case Role::bath: return std::pair<int, std::size_t>{1, 0};
            case Role::bath2: return std::pair<int, std::size_t>{2, 0};
            case Role::unit: return std::pair<int, std::size_t>{3, f.unit_index};
            }
            return std::pair<int, std::size_t>{4, 0};
        };
        std::stable_sort(factors_.begin(), factors_.end(),
                         [&](const Factor &a, const Factor &b) { return rank(a) < rank(b); });
        validate();
    }

    /// Convenience constructor; a bath dimension of 0 means the factor is absent.
    static CompositeLayout make(std::size_t system_dim, std::size_t bath_dim, std::size_t bath2_dim,
                                const std::vector<std::size_t> &unit_dims) {
        std::vector<Factor> f;
        f.push_back({"S", system_dim, Role::system, 0});
        if (bath_dim > 0)
            f.push_back({"B", bath_dim, Role::bath, 0});
        if (bath2_dim > 0)
            f.push_back({"B2", bath2_dim, Role::bath2, 0});
        for (std::size_t k = 0; k < unit_dims.size(); ++k)
            f.push_back({"U" + std::to_string(k), unit_dims[k], Role::unit, k});
        return CompositeLayout(std::move(f));
    }

    std::size_t size() const { return factors_.size(); }
    const Factor &factor(std::size_t i) const { return factors_.at(i); }
    const std::vector<Factor> &factors() const { return factors_; }

    std::size_t total_dim() const { return dim_of(all()); }

    std::size_t dim_of(const FactorSet &set) const {
        std::size_t d = 1;
        for (auto i : set)
            d *= factors_.at(i).dim;
        return d;
    }

    FactorSet all() const {
        FactorSet s(factors_.size());
        std::iota(s.begin(), s.end(), std::size_t{0});
        return s;
    }

    std::size_t index_of(std::string_view id) const {
        for (std::size_t i = 0; i < factors_.size(); ++i)
            if (factors_[i].id == id)
                return i;
        throw LayoutError("unknown factor id '" + std::string(id) + "'");
    }

    std::size_t system() const { return 0; }

    std::optional<std::size_t> bath() const { return find_role(Role::bath); }
    std::optional<std::size_t> bath2() const { return find_role(Role::bath2); }

    std::size_t num_units() const {
        return static_cast<std::size_t>(std::count_if(
            factors_.begin(), factors_.end(), [](const Factor &f) { return f.role == Role::unit; }));
    }

    std::size_t unit(std::size_t k) const {
        for (std::size_t i = 0; i < factors_.size(); ++i)
            if (factors_[i].role == Role::unit && factors_[i].unit_index == k)
                return i;
        throw LayoutError("no unit with index " + std::to_string(k));
    }

    FactorSet units() const {
        FactorSet s;
        for (std::size_t i = 0; i < factors_.size(); ++i)
            if (factors_[i].role == Role::unit)
                s.push_back(i);
        return s;
    }

    /// System together with all units: the S U(n-bar) sector.
    FactorSet system_and_units() const {
        FactorSet s{system()};
        auto u = units();
        s.insert(s.end(), u.begin(), u.end());
        return s;
    }

    FactorSet by_ids(const std::vector<std::string> &ids) const {
        FactorSet s;
        for (const auto &id : ids)
            s.push_back(index_of(id));
        return normalize(std::move(s));
    }

    /// Sorts and checks a factor set against this layout.
    FactorSet normalize(FactorSet s) const {
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) != s.end())
            throw LayoutError("factor set contains a duplicate factor");
        for (auto i : s)
            if (i >= factors_.size())
                throw LayoutError("factor position " + std::to_string(i) + " out of range");
        return s;
    }

    bool operator==(const CompositeLayout &other) const {
        if (factors_.size() != other.factors_.size())
            return false;
        for (std::size_t i = 0; i < factors_.size(); ++i) {
            const auto &a = factors_[i];
            const auto &b = other.factors_[i];
            if (a.id != b.id || a.dim != b.dim || a.role != b.role || a.unit_index != b.unit_index)
                return false;
        }
        return true;
    }

private:
    std::optional<std::size_t> find_role(Role r) const {
        for (std::size_t i = 0; i < factors_.size(); ++i)
            if (factors_[i].role == r)
                return i;
        return std::nullopt;
    }

    void validate() const {
        std::size_t systems = 0, baths = 0, baths2 = 0;
        std::vector<std::size_t> unit_ids;
        for (std::size_t i = 0; i < factors_.size(); ++i) {
            const auto &f = factors_[i];
            if (f.dim < 1)
                throw LayoutError("factor '" + f.id + "' has dimension 0");
            for (std::size_t j = 0; j < i; ++j)
                if (factors_[j].id == f.id)
                    throw LayoutError("duplicate factor id '" + f.id + "'");
            switch (f.role) {
            case Role::system: ++systems; break;
            case Role::bath: ++baths; break;
            case Role::bath2: ++baths2; break;
            case Role::unit: unit_ids.push_back(f.unit_index); break;
            }
        }
        if (systems != 1)
            throw LayoutError("layout needs exactly one system factor, found " + std::to_string(systems));
        if (baths > 1 || baths2 > 1)
            throw LayoutError("at most one bath and one second bath are supported");
        if (baths2 == 1 && baths == 0)
            throw LayoutError("a second bath requires a first bath");
        for (std::size_t k = 0; k < unit_ids.size(); ++k)
            if (unit_ids[k] != k)
                throw LayoutError("unit indices must run 0..n without gaps");
    }

    std::vector<Factor> factors_;
};

/// Offsets that split the linear index of a space G into a sub-space F and
/// its complement G \ F: index(f, c) = inner[f] + outer[c].
struct IndexSplit {
    std::vector<std::size_t> inner;
    std::vector<std::size_t> outer;
};

inline IndexSplit split_index(const CompositeLayout &layout, const FactorSet &space, const FactorSet &sub) {
    for (auto i : sub)
        if (!std::binary_search(space.begin(), space.end(), i))
            throw LayoutError("factor '" + layout.factor(i).id + "' is not part of the operand's factors");

    // strides of each factor of `space`
    std::vector<std::size_t> stride(space.size());
    std::size_t s = 1;
    for (std::size_t p = space.size(); p-- > 0;) {
        stride[p] = s;
        s *= layout.factor(space[p]).dim;
    }

    auto offsets = [&](bool want_sub) {
        std::vector<std::size_t> off{0};
        for (std::size_t p = 0; p < space.size(); ++p) {
            bool in_sub = std::binary_search(sub.begin(), sub.end(), space[p]);
            if (in_sub != want_sub)
                continue;
            std::size_t d = layout.factor(space[p]).dim;
            std::vector<std::size_t> next;
            next.reserve(off.size() * d);
            for (auto o : off)
                for (std::size_t i = 0; i < d; ++i)
                    next.push_back(o + i * stride[p]);
            off = std::move(next);
        }
        return off;
    };
    return {offsets(true), offsets(false)};
}

inline FactorSet set_union(const FactorSet &a, const FactorSet &b) {
    FactorSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline FactorSet set_difference(const FactorSet &a, const FactorSet &b) {
    FactorSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

} // namespace rithermo

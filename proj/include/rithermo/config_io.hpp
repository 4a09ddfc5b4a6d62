#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rithermo/model.hpp"
#include "rithermo/presets.hpp"

namespace rithermo::config {

using Json = nlohmann::ordered_json;

/// Line and column (1-based) of a byte offset.
inline std::pair<std::size_t, std::size_t> line_column(const std::string &text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline Json parse_text(const std::string &text, const std::string &source) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        // byte is one past the offending character
        auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string msg = e.what();
        if (auto p = msg.find("syntax error"); p != std::string::npos)
            msg = msg.substr(p);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }
}

namespace detail {

[[noreturn]] inline void fail(const std::string &path, const std::string &what) {
    throw ConfigError("field '" + path + "': " + what);
}

inline const Json &member(const Json &j, const std::string &path, const char *key) {
    if (!j.is_object())
        fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end())
        fail(path.empty() ? key : path + "." + key, "missing");
    return *it;
}

inline std::string join(const std::string &path, const std::string &key) { return path.empty() ? key : path + "." + key; }
inline std::string index(const std::string &path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline double number(const Json &j, const std::string &path) {
    if (!j.is_number())
        fail(path, "expected a number, got " + std::string(j.type_name()));
    return j.get<double>();
}

inline std::size_t count(const Json &j, const std::string &path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
        fail(path, "expected a non-negative integer");
    return j.get<std::size_t>();
}

inline const Json &array(const Json &j, const std::string &path) {
    if (!j.is_array())
        fail(path, "expected an array, got " + std::string(j.type_name()));
    return j;
}

/// Rows of [re, im] pairs (a bare number is read as a real entry).
inline Matrix matrix(const Json &j, const std::string &path) {
    array(j, path);
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0)
        fail(path, "empty matrix");
    Matrix m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto rp = index(path, static_cast<std::size_t>(r));
        const auto &row = array(j[static_cast<std::size_t>(r)], rp);
        if (r == 0)
            m = Matrix::Zero(rows, static_cast<Eigen::Index>(row.size()));
        if (static_cast<Eigen::Index>(row.size()) != m.cols())
            fail(rp, "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const auto &e = row[static_cast<std::size_t>(c)];
            const auto ep = index(rp, static_cast<std::size_t>(c));
            if (e.is_number()) {
                m(r, c) = e.get<double>();
            } else if (e.is_array() && e.size() == 2) {
                m(r, c) = cplx(number(e[0], ep + "[0]"), number(e[1], ep + "[1]"));
            } else {
                fail(ep, "expected an [re, im] pair");
            }
        }
    }
    return m;
}

inline Json matrix_json(const Matrix &m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline const std::pair<const char *, Mode> mode_names[] = {
    {"degenerate-units", mode_degenerate_units},
    {"energetic-units", mode_energetic_units},
    {"two-bath", mode_two_bath},
    {"driven-coupling", mode_driven_coupling},
};

template <class F>
void optional_member(const Json &j, const char *key, F &&f) {
    if (auto it = j.find(key); it != j.end() && !it->is_null())
        f(*it);
}

} // namespace detail

/// Scenario from a parsed config. A config either spells out every field or
/// names a preset, optionally overriding "name", "beta" and "beta2".
inline Scenario from_json(const Json &j) {
    using namespace detail;
    if (!j.is_object())
        fail("", "top level must be an object");
    Scenario sc;
    if (auto it = j.find("preset"); it != j.end()) {
        if (!it->is_string())
            fail("preset", "expected a preset name");
        sc = presets::make(it->get<std::string>());
        optional_member(j, "name", [&](const Json &v) { sc.name = v.get<std::string>(); });
        optional_member(j, "beta", [&](const Json &v) { sc.beta = number(v, "beta"); });
        optional_member(j, "beta2", [&](const Json &v) { sc.beta2 = number(v, "beta2"); });
        return sc;
    }

    sc.name = "custom";
    optional_member(j, "name", [&](const Json &v) {
        if (!v.is_string())
            fail("name", "expected a string");
        sc.name = v.get<std::string>();
    });
    sc.beta = number(member(j, "", "beta"), "beta");
    optional_member(j, "beta2", [&](const Json &v) { sc.beta2 = number(v, "beta2"); });
    optional_member(j, "modes", [&](const Json &v) {
        array(v, "modes");
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto name = v[i].is_string() ? v[i].get<std::string>() : std::string();
            bool known = false;
            for (const auto &[n, m] : mode_names)
                if (name == n) {
                    sc.modes |= m;
                    known = true;
                }
            if (!known)
                fail(index("modes", i), "unknown mode '" + name +
                                            "' (known: degenerate-units, energetic-units, two-bath, driven-coupling)");
        }
    });

    const auto &lj = member(j, "", "layout");
    const std::size_t ds = count(member(lj, "layout", "system"), "layout.system");
    std::size_t db = 0, db2 = 0;
    optional_member(lj, "bath", [&](const Json &v) { db = count(v, "layout.bath"); });
    optional_member(lj, "bath2", [&](const Json &v) { db2 = count(v, "layout.bath2"); });
    std::vector<std::size_t> du;
    const auto &uj = array(member(lj, "layout", "units"), "layout.units");
    for (std::size_t i = 0; i < uj.size(); ++i)
        du.push_back(count(uj[i], index("layout.units", i)));
    try {
        sc.layout = CompositeLayout::make(ds, db, db2, du);
    } catch (const LayoutError &e) {
        fail("layout", e.what());
    }

    auto &s = sc.schedule;
    const auto &hj = member(j, "", "hamiltonian");
    s.system_initial = matrix(member(hj, "hamiltonian", "system0"), "hamiltonian.system0");
    optional_member(hj, "bath", [&](const Json &v) { s.bath = matrix(v, "hamiltonian.bath"); });
    optional_member(hj, "bath2", [&](const Json &v) { s.bath2 = matrix(v, "hamiltonian.bath2"); });
    optional_member(hj, "system_bath0",
                    [&](const Json &v) { s.system_bath_initial = matrix(v, "hamiltonian.system_bath0"); });
    optional_member(hj, "system_bath2_0",
                    [&](const Json &v) { s.system_bath2_initial = matrix(v, "hamiltonian.system_bath2_0"); });
    const auto &hu = array(member(hj, "hamiltonian", "units"), "hamiltonian.units");
    for (std::size_t i = 0; i < hu.size(); ++i)
        s.units.push_back(matrix(hu[i], index("hamiltonian.units", i)));

    const auto &ij = array(member(j, "", "intervals"), "intervals");
    for (std::size_t k = 0; k < ij.size(); ++k) {
        const auto ip = index("intervals", k);
        Interval iv;
        iv.start = number(member(ij[k], ip, "start"), join(ip, "start"));
        iv.end = number(member(ij[k], ip, "end"), join(ip, "end"));
        optional_member(ij[k], "kick", [&](const Json &v) { iv.kick = matrix(v, join(ip, "kick")); });
        const auto sp = join(ip, "steps");
        const auto &stj = array(member(ij[k], ip, "steps"), sp);
        for (std::size_t i = 0; i < stj.size(); ++i) {
            const auto p = index(sp, i);
            DriveStep st;
            st.start = number(member(stj[i], p, "start"), join(p, "start"));
            st.end = number(member(stj[i], p, "end"), join(p, "end"));
            st.system = matrix(member(stj[i], p, "system"), join(p, "system"));
            st.coupling = matrix(member(stj[i], p, "coupling"), join(p, "coupling"));
            // V_SB defaults to its initial value when omitted
            st.system_bath = s.system_bath_initial;
            st.system_bath2 = s.system_bath2_initial;
            optional_member(stj[i], "system_bath", [&](const Json &v) { st.system_bath = matrix(v, join(p, "system_bath")); });
            optional_member(stj[i], "system_bath2",
                            [&](const Json &v) { st.system_bath2 = matrix(v, join(p, "system_bath2")); });
            iv.steps.push_back(std::move(st));
        }
        s.intervals.push_back(std::move(iv));
    }

    const auto &unj = member(j, "", "units");
    if (auto it = unj.find("joint_state"); it != unj.end()) {
        sc.joint_unit_state = matrix(*it, "units.joint_state");
    } else {
        const auto &stj = array(member(unj, "units", "states"), "units.states");
        for (std::size_t i = 0; i < stj.size(); ++i)
            sc.unit_states.push_back(matrix(stj[i], index("units.states", i)));
    }

    optional_member(j, "measurements", [&](const Json &v) {
        array(v, "measurements");
        for (std::size_t k = 0; k < v.size(); ++k) {
            const auto p = index("measurements", k);
            std::vector<Matrix> ops;
            for (std::size_t r = 0; r < array(v[k], p).size(); ++r)
                ops.push_back(matrix(v[k][r], index(p, r)));
            sc.measurements.push_back(std::move(ops));
        }
    });
    return sc;
}

inline Json to_json(const Scenario &sc) {
    using detail::matrix_json;
    const auto &l = sc.layout;
    Json j;
    j["name"] = sc.name;
    j["beta"] = sc.beta;
    if (sc.two_bath())
        j["beta2"] = sc.beta2;
    Json modes = Json::array();
    for (const auto &[n, m] : detail::mode_names)
        if (sc.has(m))
            modes.push_back(n);
    j["modes"] = modes;

    Json lj;
    lj["system"] = l.factor(l.system()).dim;
    lj["bath"] = l.bath() ? l.factor(*l.bath()).dim : 0;
    lj["bath2"] = l.bath2() ? l.factor(*l.bath2()).dim : 0;
    Json du = Json::array();
    for (std::size_t k = 0; k < l.num_units(); ++k)
        du.push_back(l.factor(l.unit(k)).dim);
    lj["units"] = du;
    j["layout"] = lj;

    const auto &s = sc.schedule;
    Json hj;
    hj["system0"] = matrix_json(s.system_initial);
    if (l.bath()) {
        hj["bath"] = matrix_json(s.bath);
        hj["system_bath0"] = matrix_json(s.system_bath_initial);
    }
    if (l.bath2()) {
        hj["bath2"] = matrix_json(s.bath2);
        hj["system_bath2_0"] = matrix_json(s.system_bath2_initial);
    }
    Json hu = Json::array();
    for (const auto &h : s.units)
        hu.push_back(matrix_json(h));
    hj["units"] = hu;
    j["hamiltonian"] = hj;

    Json ij = Json::array();
    for (const auto &iv : s.intervals) {
        Json o;
        o["start"] = iv.start;
        o["end"] = iv.end;
        if (iv.kick)
            o["kick"] = matrix_json(*iv.kick);
        Json steps = Json::array();
        for (const auto &st : iv.steps) {
            Json sj;
            sj["start"] = st.start;
            sj["end"] = st.end;
            sj["system"] = matrix_json(st.system);
            if (l.bath())
                sj["system_bath"] = matrix_json(st.system_bath);
            if (l.bath2())
                sj["system_bath2"] = matrix_json(st.system_bath2);
            sj["coupling"] = matrix_json(st.coupling);
            steps.push_back(std::move(sj));
        }
        o["steps"] = steps;
        ij.push_back(std::move(o));
    }
    j["intervals"] = ij;

    Json uj;
    if (sc.joint_unit_state) {
        uj["joint_state"] = matrix_json(*sc.joint_unit_state);
    } else {
        Json st = Json::array();
        for (const auto &m : sc.unit_states)
            st.push_back(matrix_json(m));
        uj["states"] = st;
    }
    j["units"] = uj;

    if (!sc.measurements.empty()) {
        Json mj = Json::array();
        for (const auto &ops : sc.measurements) {
            Json set = Json::array();
            for (const auto &p : ops)
                set.push_back(matrix_json(p));
            mj.push_back(std::move(set));
        }
        j["measurements"] = mj;
    }
    return j;
}

inline std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Parses without validating.
inline Scenario parse(const std::string &text, const std::string &source = "<config>") {
    auto j = parse_text(text, source);
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(source + ": " + e.what());
    } catch (const ConfigError &e) {
        throw ConfigError(source + ": " + e.what());
    }
}

inline Scenario load(const std::string &path) { return parse(read_file(path), path); }

/// Preset name or path to a config file.
inline Scenario resolve(const std::string &name_or_path) {
    for (const auto &n : presets::names())
        if (n == name_or_path)
            return presets::make(n);
    std::ifstream probe(name_or_path);
    if (!probe) {
        std::string known;
        for (const auto &n : presets::names())
            known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("'" + name_or_path + "' is neither a config file nor a known preset (unknown preset; known: " +
                          known + ")");
    }
    return load(name_or_path);
}

} // namespace rithermo::config

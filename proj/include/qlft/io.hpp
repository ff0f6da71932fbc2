#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qlft/simulation.hpp"
#include "qlft/synthesis.hpp"

namespace qlft::io {

using json = nlohmann::ordered_json;

/// Malformed or missing input; the CLI maps it to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Matrices

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

/// Array of equal-length numeric rows. `cols` is used for an empty row list.
inline Matrix matrix_from_json(const json& j, const std::string& name, Eigen::Index cols_if_empty = 0) {
    if (!j.is_array()) throw InputError(name + " must be an array of rows");
    const auto r = static_cast<Eigen::Index>(j.size());
    if (r == 0) return Matrix(0, cols_if_empty);
    if (!j[0].is_array()) throw InputError(name + " must be an array of rows");
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const json& row = j[static_cast<size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
            throw InputError(name + " has ragged rows");
        }
        for (Eigen::Index k = 0; k < c; ++k) {
            const json& v = row[static_cast<size_t>(k)];
            if (!v.is_number()) throw InputError(name + " has a non-numeric entry");
            m(i, k) = v.get<double>();
        }
    }
    return m;
}

inline Vector vector_from_json(const json& j, const std::string& name) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) throw InputError(name + " must be a number or an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError(name + " has a non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json parse_text(const std::string& text, const std::string& source) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw InputError(source + " is empty");
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(source + ": " + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

// ----------------------------------------------------------------------------
// Plant configuration

/// Plant, measurement matrix, transformation and fault description as read
/// from one JSON object.
struct PlantConfig {
    QuantumPlant plant;
    std::optional<Matrix> G;
    std::optional<Matrix> T;
    std::optional<Eigen::Index> n_o;
    std::optional<FaultBounds> bounds;
};

namespace detail {
inline const json& field(const json& j, const char* key) {
    if (!j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
    return j.at(key);
}
inline Eigen::Index int_field(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_number_integer()) throw InputError(std::string("field '") + key + "' must be an integer");
    return v.get<Eigen::Index>();
}
}  // namespace detail

inline PlantConfig plant_from_json(const json& j) {
    if (!j.is_object()) throw InputError("plant file must hold a JSON object");
    PlantConfig cfg;
    auto& p = cfg.plant;
    const auto n = detail::int_field(j, "n");
    const auto n_w = detail::int_field(j, "n_w");
    const auto n_u = detail::int_field(j, "n_u");
    const auto n_f = detail::int_field(j, "n_f");
    const auto n_y = detail::int_field(j, "n_y");
    p.A = matrix_from_json(detail::field(j, "A"), "A");
    p.B_w = matrix_from_json(detail::field(j, "B_w"), "B_w");
    p.B_u = matrix_from_json(detail::field(j, "B_u"), "B_u");
    p.B_f = matrix_from_json(detail::field(j, "B_f"), "B_f");
    p.C = matrix_from_json(detail::field(j, "C"), "C");
    p.D = matrix_from_json(detail::field(j, "D"), "D");
    auto dims = [&](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* name) {
        if (m.rows() != r || m.cols() != c) {
            throw InputError(std::string(name) + " must be " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
    };
    dims(p.A, n, n, "A");
    dims(p.B_w, n, n_w, "B_w");
    dims(p.B_u, n, n_u, "B_u");
    dims(p.B_f, n, n_f, "B_f");
    dims(p.C, n_y, n, "C");
    dims(p.D, n_y, n_w, "D");
    if (j.contains("G")) cfg.G = matrix_from_json(j.at("G"), "G");
    if (j.contains("T")) cfg.T = matrix_from_json(j.at("T"), "T");
    if (j.contains("n_o")) cfg.n_o = detail::int_field(j, "n_o");
    if (j.contains("alpha") || j.contains("beta")) {
        FaultBounds b;
        if (!j.contains("alpha") || !j.contains("beta")) throw InputError("alpha and beta must be given together");
        if (!j.at("alpha").is_number() || !j.at("beta").is_number()) throw InputError("alpha and beta must be numbers");
        b.alpha = j.at("alpha").get<double>();
        b.beta = j.at("beta").get<double>();
        cfg.bounds = b;
    }
    return cfg;
}

inline json plant_to_json(const PlantConfig& cfg) {
    const auto& p = cfg.plant;
    json j;
    j["n"] = p.n();
    j["n_w"] = p.n_w();
    j["n_u"] = p.n_u();
    j["n_f"] = p.n_f();
    j["n_y"] = p.n_y();
    j["A"] = to_json(p.A);
    j["B_w"] = to_json(p.B_w);
    j["B_u"] = to_json(p.B_u);
    j["B_f"] = to_json(p.B_f);
    j["C"] = to_json(p.C);
    j["D"] = to_json(p.D);
    if (cfg.G) j["G"] = to_json(*cfg.G);
    if (cfg.T) j["T"] = to_json(*cfg.T);
    if (cfg.n_o) j["n_o"] = *cfg.n_o;
    if (cfg.bounds) {
        j["alpha"] = cfg.bounds->alpha;
        j["beta"] = cfg.bounds->beta;
    }
    return j;
}

// ----------------------------------------------------------------------------
// Gains and faults

inline Gains gains_from_json(const json& j) {
    if (!j.is_object()) throw InputError("gains must be a JSON object");
    Gains g;
    g.L = matrix_from_json(detail::field(j, "L"), "L");
    g.K = matrix_from_json(detail::field(j, "K"), "K");
    g.n_o = detail::int_field(j, "n_o");
    return g;
}

inline json gains_to_json(const Gains& g) {
    json j;
    j["n_o"] = g.n_o;
    j["L"] = to_json(g.L);
    j["K"] = to_json(g.K);
    return j;
}

/// {"pieces": [{"t0", "t1", "kind": "const"|"sin"|"cos", "a", "b", "omega"}]}
inline FaultSignal fault_from_json(const json& j) {
    if (!j.is_object() || !j.contains("pieces") || !j.at("pieces").is_array()) {
        throw InputError("fault must be an object with a 'pieces' array");
    }
    FaultSignal f;
    for (const json& pj : j.at("pieces")) {
        FaultPiece p;
        if (!pj.contains("t0") || !pj.contains("t1")) throw InputError("fault piece needs t0 and t1");
        p.t0 = pj.at("t0").get<double>();
        p.t1 = pj.at("t1").get<double>();
        try {
            p.kind = piece_kind_from_string(pj.value("kind", std::string("const")));
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
        p.b = vector_from_json(detail::field(pj, "b"), "b");
        if (p.kind != PieceKind::Constant) {
            p.a = vector_from_json(detail::field(pj, "a"), "a");
            p.omega = pj.value("omega", 1.0);
        }
        f.pieces.push_back(std::move(p));
    }
    try {
        f.validate();
    } catch (const std::exception& e) {
        throw InputError(std::string("fault: ") + e.what());
    }
    return f;
}

inline json fault_to_json(const FaultSignal& f) {
    json pieces = json::array();
    for (const auto& p : f.pieces) {
        json pj;
        pj["t0"] = p.t0;
        pj["t1"] = p.t1;
        pj["kind"] = to_string(p.kind);
        if (p.kind != PieceKind::Constant) {
            pj["a"] = to_json(p.a);
            pj["omega"] = p.omega;
        }
        pj["b"] = to_json(p.b);
        pieces.push_back(std::move(pj));
    }
    json j;
    j["pieces"] = std::move(pieces);
    return j;
}

// ----------------------------------------------------------------------------
// Reports

inline json to_json(const ConditionCheck& c) {
    json j;
    j["name"] = c.name;
    j["passed"] = c.passed;
    j["max_abs_residual"] = c.max_abs_residual;
    j["tolerance"] = c.tolerance;
    j["residual"] = to_json(c.residual);
    return j;
}

inline json to_json(const RealizabilityReport& r, bool override_ii) {
    json j;
    j["condition_i"] = to_json(r.condition_i);
    j["condition_ii"] = to_json(r.condition_ii);
    j["condition_iii"] = to_json(r.condition_iii);
    j["condition_ii_overridden"] = override_ii;
    j["passed"] = r.passed(override_ii);
    return j;
}

inline json to_json(const MeasurementReport& m) {
    json j;
    j["passed"] = m.passed();
    j["annihilates_theta_y"] = m.annihilates;
    j["max_abs_residual"] = m.max_abs_residual;
    j["rank"] = m.rank;
    j["max_rank"] = m.max_rank;
    j["residual"] = to_json(m.residual);
    return j;
}

inline json to_json(const CertificationSummary& s) {
    json j;
    j["passed"] = s.passed;
    j["eps_strict"] = s.eps_strict;
    j["theorem2_block_lambda_max"] = s.theorem2.block_lambda_max;
    j["theorem2_schur_lambda_max"] = s.theorem2.schur_lambda_max;
    j["theorem2_margin_ok"] = s.theorem2_margin_ok;
    j["theorem2_verdicts_agree"] = s.theorem2.verdicts_agree;
    j["p_lambda_min"] = s.theorem2.p_lambda_min;
    j["corollary1_lambda_min"] = s.corollary1.lambda_min;
    j["corollary1_passed"] = s.corollary1.passed;
    j["theorem1_lambda_max"] = s.theorem1.lambda_max;
    j["theorem1_passed"] = s.theorem1.passed;
    j["trace_y2"] = s.trace_y2;
    return j;
}

inline json to_json(const Certificate& c) {
    json j;
    j["c"] = c.c;
    j["tau"] = c.tau;
    j["trace_y2"] = c.gamma;
    j["lambda_max_delta"] = c.lambda_max_delta;
    j["lambda_min_s"] = c.lambda_min_s;
    j["lambda_max_s"] = c.lambda_max_s;
    j["c_lambda_min_s"] = c.c_lambda_min_s();
    j["alpha"] = c.bounds.alpha;
    j["beta"] = c.bounds.beta;
    j["P"] = to_json(c.P);
    j["S"] = to_json(c.S);
    return j;
}

inline json to_json(const FixedGainReport& r) {
    json j;
    j["feasible"] = r.feasible;
    j["definitive"] = r.definitive;
    j["reason"] = r.reason;
    j["shifted_abscissa"] = r.shifted_abscissa;
    auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    j["min_trace_y2"] = finite_or_null(r.min_trace_y2);
    j["infimum_trace_y2"] = finite_or_null(r.infimum_trace_y2);
    j["G"] = to_json(r.G);
    if (r.P.size() != 0) {
        j["P"] = to_json(r.P);
        j["certification"] = to_json(r.certification);
    }
    j["projection_iterations"] = r.projection_iterations;
    return j;
}

inline json to_json(const SynthesisResult& r) {
    json j;
    j["feasible"] = r.feasible;
    j["case"] = to_string(r.lift_case);
    j["gamma_requested"] = r.gamma_requested;
    j["gamma_achieved"] = std::isfinite(r.gamma_achieved) ? json(r.gamma_achieved) : json(nullptr);
    if (r.feasible) {
        j["gains"] = gains_to_json(r.gains);
        j["P"] = to_json(r.P);
        j["M1"] = to_json(r.M1);
        j["certification"] = to_json(r.certification);
    }
    const auto& d = r.diagnostics;
    json dj;
    dj["message"] = d.message;
    dj["restarts_used"] = d.restarts_used;
    dj["winning_restart"] = d.winning_restart;
    dj["total_iterations"] = d.total_iterations;
    dj["winning_iterations"] = d.winning_iterations;
    dj["best_eq_residual"] = std::isfinite(d.best_eq_residual) ? json(d.best_eq_residual) : json(nullptr);
    dj["polished"] = d.polished;
    dj["descent_min_trace_y2"] = std::isfinite(d.descent_min_trace) ? json(d.descent_min_trace) : json(nullptr);
    if (r.feasible) {
        dj["lifted_equality_residual"] = d.lifted.equality_residual;
        dj["lifted_sigma_ratio"] = d.lifted.sigma_ratio;
        dj["lifted_lambda_min_ratio"] = d.lifted.lambda_min_ratio;
        dj["lifted_symmetry"] = d.lifted.symmetry;
    }
    j["diagnostics"] = std::move(dj);
    return j;
}

inline json to_json(const FaultBoundsReport& r) {
    json j;
    j["alpha"] = r.bounds.alpha;
    j["beta"] = r.bounds.beta;
    j["alpha_zero"] = r.alpha_zero;
    j["beta_zero"] = r.beta_zero;
    json jumps = json::array();
    for (const auto& jp : r.jumps) {
        json x;
        x["t"] = jp.t;
        x["before"] = to_json(jp.before);
        x["after"] = to_json(jp.after);
        x["size"] = jp.size();
        jumps.push_back(std::move(x));
    }
    j["jumps"] = std::move(jumps);
    return j;
}

inline json to_json(const EnvelopeReport& r) {
    json j;
    j["passed"] = r.passed;
    j["tolerance"] = r.tolerance;
    j["max_ratio"] = r.max_ratio;
    j["max_violation"] = r.max_violation;
    j["worst_t"] = r.worst_t;
    j["restarts"] = r.restarts;
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace qlft::io

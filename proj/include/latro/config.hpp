#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "latro/errors.hpp"
#include "latro/io.hpp"
#include "latro/lattice.hpp"
#include "latro/optimize.hpp"
#include "latro/random_field.hpp"
#include "latro/regularization.hpp"

namespace latro {

namespace detail {

using nlohmann::json;

inline void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

inline void expect_keys(const json& j, const std::string& path,
                        std::initializer_list<const char*> allowed) {
    expect_object(j, path);
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(path + ": unknown key '" + key + "'");
    }
}

inline const json& require(const json& j, const std::string& path, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + ": missing required key '" + key + "'");
    return *it;
}

inline double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<int>();
}

inline bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path + ": expected a boolean");
    return j.get<bool>();
}

inline std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a string");
    return j.get<std::string>();
}

inline int as_axis(const json& j, const std::string& path) {
    if (j.is_number_integer()) {
        int a = j.get<int>();
        if (a < 0 || a > 2) throw ConfigError(path + ": axis out of range");
        return a;
    }
    const std::string s = as_string(j, path);
    if (s == "x") return 0;
    if (s == "y") return 1;
    if (s == "z") return 2;
    throw ConfigError(path + ": axis must be x, y, z or 0..2");
}

inline Eigen::Vector3d as_vector(const json& j, const std::string& path,
                                 int max_len = 3) {
    if (!j.is_array() || j.empty() || static_cast<int>(j.size()) > max_len)
        throw ConfigError(path + ": expected an array of 1..3 numbers");
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < j.size(); ++k)
        v[k] = as_number(j.at(k), path);
    return v;
}

} // namespace detail

/// Axis-aligned coordinate predicate selecting joints: conjunction of
/// per-axis equalities and an optional containment box.
struct JointSelector {
    std::array<std::optional<double>, 3> equals;
    std::optional<std::pair<Eigen::Vector3d, Eigen::Vector3d>> box;

    bool matches(const Eigen::Vector3d& p) const {
        constexpr double tol = 1e-9;
        for (int k = 0; k < 3; ++k)
            if (equals[k] && std::abs(p[k] - *equals[k]) > tol) return false;
        if (box) {
            for (int k = 0; k < 3; ++k)
                if (p[k] < box->first[k] - tol || p[k] > box->second[k] + tol)
                    return false;
        }
        return true;
    }
};

struct FixSpec {
    JointSelector where;
    std::vector<int> dofs; // empty = all components
};

struct LoadSpec {
    JointSelector where;
    Eigen::Vector3d force = Eigen::Vector3d::Zero();
};

struct GridLatticeConfig {
    int nx = 1, ny = 1;
    double cell_w = 1.0, cell_h = 1.0;
    Diagonals diagonals = Diagonals::Double;
};

struct BccLatticeConfig {
    int nx = 1, ny = 1, nz = 1;
    double cell = 1.0;
    bool grid_edges = true;
};

struct BccBoxesConfig {
    double cell = 1.0;
    bool grid_edges = true;
    std::vector<CellBox> boxes;
};

struct FileLatticeConfig {
    std::string path;
};

using LatticeVariant =
    std::variant<GridLatticeConfig, BccLatticeConfig, BccBoxesConfig, FileLatticeConfig>;

struct FieldConfig {
    double mean = 1.0;
    bool uncorrelated = false;
    double sigma = 0.0;
    std::optional<int> beta;
    std::optional<double> nu;
    LengthScale length_scale = LengthScale::constant(1.0);
    std::optional<Anisotropy> anisotropy;
};

struct PenaltyConfig {
    enum class Kind { Off, Default, Mild, Custom };
    Kind kind = Kind::Off;
    std::vector<Eigen::Vector2d> control_points;
    double s_star = 0.5;
};

struct RegularizationConfig {
    double filter_radius = 0.0; // 0 disables the filter
    PenaltyConfig penalty;
};

struct OptimizationSection {
    double alpha = 1.0;
    double volume_max = 0.0;
    double area_max = 1.0;
    double area_min = 0.0; // 0 selects the default
    int max_iterations = 400;
    double tolerance = 1e-4;
    MmaOptions mma;
    GradientPath gradient_path = GradientPath::Adjoint;
    std::optional<double> norm_mean;
    std::optional<double> norm_std;
};

struct OutputSection {
    std::string directory = "latro_out";
    std::optional<std::uint64_t> seed;
    bool vtk = true;
};

struct RunConfig {
    std::optional<LatticeVariant> lattice;
    std::vector<FixSpec> fixed;
    std::vector<LoadSpec> loads;
    std::optional<FieldConfig> field;
    RegularizationConfig regularization;
    std::optional<OptimizationSection> optimization;
    OutputSection output;
    std::string base_dir = ".";
};

namespace detail {

inline JointSelector parse_selector(const json& j, const std::string& path) {
    expect_keys(j, path, {"x", "y", "z", "box"});
    JointSelector sel;
    const char* axes[3] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k)
        if (j.contains(axes[k]))
            sel.equals[k] = as_number(j.at(axes[k]), path + "." + axes[k]);
    if (j.contains("box")) {
        const auto& b = j.at("box");
        expect_keys(b, path + ".box", {"min", "max"});
        Eigen::Vector3d lo = as_vector(require(b, path + ".box", "min"), path + ".box.min");
        Eigen::Vector3d hi = as_vector(require(b, path + ".box", "max"), path + ".box.max");
        // unspecified trailing components must not constrain
        for (std::size_t k = b.at("min").size(); k < 3; ++k) lo[k] = -1e300;
        for (std::size_t k = b.at("max").size(); k < 3; ++k) hi[k] = 1e300;
        sel.box = std::make_pair(lo, hi);
    }
    if (!sel.box && !sel.equals[0] && !sel.equals[1] && !sel.equals[2])
        throw ConfigError(path + ": selector is empty");
    return sel;
}

inline LatticeVariant parse_lattice(const json& j) {
    const std::string path = "lattice";
    expect_object(j, path);
    if (j.contains("file")) {
        expect_keys(j, path, {"file"});
        FileLatticeConfig f;
        f.path = as_string(j.at("file"), path + ".file");
        return f;
    }
    const std::string gen = as_string(require(j, path, "generator"), path + ".generator");
    if (gen == "grid") {
        expect_keys(j, path, {"generator", "nx", "ny", "cell_width", "cell_height",
                              "diagonals"});
        GridLatticeConfig g;
        g.nx = as_int(require(j, path, "nx"), path + ".nx");
        g.ny = as_int(require(j, path, "ny"), path + ".ny");
        g.cell_w = as_number(require(j, path, "cell_width"), path + ".cell_width");
        g.cell_h = as_number(require(j, path, "cell_height"), path + ".cell_height");
        const std::string d =
            as_string(require(j, path, "diagonals"), path + ".diagonals");
        if (d == "none")
            g.diagonals = Diagonals::None;
        else if (d == "single")
            g.diagonals = Diagonals::Single;
        else if (d == "double")
            g.diagonals = Diagonals::Double;
        else
            throw ConfigError(path + ".diagonals: must be none, single or double");
        return g;
    }
    if (gen == "bcc") {
        expect_keys(j, path, {"generator", "nx", "ny", "nz", "cell", "grid_edges"});
        BccLatticeConfig b;
        b.nx = as_int(require(j, path, "nx"), path + ".nx");
        b.ny = as_int(require(j, path, "ny"), path + ".ny");
        b.nz = as_int(require(j, path, "nz"), path + ".nz");
        b.cell = as_number(require(j, path, "cell"), path + ".cell");
        if (j.contains("grid_edges"))
            b.grid_edges = as_bool(j.at("grid_edges"), path + ".grid_edges");
        return b;
    }
    if (gen == "bcc_boxes") {
        expect_keys(j, path, {"generator", "cell", "grid_edges", "boxes"});
        BccBoxesConfig b;
        b.cell = as_number(require(j, path, "cell"), path + ".cell");
        if (j.contains("grid_edges"))
            b.grid_edges = as_bool(j.at("grid_edges"), path + ".grid_edges");
        const auto& boxes = require(j, path, "boxes");
        if (!boxes.is_array() || boxes.empty())
            throw ConfigError(path + ".boxes: expected a non-empty array");
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            const std::string bpath = path + ".boxes[" + std::to_string(i) + "]";
            expect_keys(boxes.at(i), bpath, {"min", "max"});
            CellBox box;
            const auto& lo = require(boxes.at(i), bpath, "min");
            const auto& hi = require(boxes.at(i), bpath, "max");
            if (!lo.is_array() || lo.size() != 3 || !hi.is_array() || hi.size() != 3)
                throw ConfigError(bpath + ": min/max must be arrays of 3 cell indices");
            for (int k = 0; k < 3; ++k) {
                box.lo[k] = as_int(lo.at(k), bpath + ".min");
                box.hi[k] = as_int(hi.at(k), bpath + ".max");
            }
            b.boxes.push_back(box);
        }
        return b;
    }
    throw ConfigError(path + ".generator: must be grid, bcc or bcc_boxes");
}

inline LengthScale parse_length_scale(const json& j, const std::string& path) {
    if (j.is_number()) return LengthScale::constant(j.get<double>());
    expect_keys(j, path, {"offset", "slope", "axis"});
    LengthScale ell;
    ell.offset = as_number(require(j, path, "offset"), path + ".offset");
    ell.slope = as_number(require(j, path, "slope"), path + ".slope");
    ell.axis = as_axis(require(j, path, "axis"), path + ".axis");
    return ell;
}

inline FieldConfig parse_field(const json& j) {
    const std::string path = "field";
    expect_keys(j, path, {"mean", "sigma", "uncorrelated", "beta", "nu",
                          "length_scale", "anisotropy"});
    FieldConfig f;
    f.mean = as_number(require(j, path, "mean"), path + ".mean");
    if (f.mean <= 0.0) throw ConfigError(path + ".mean: must be positive");
    if (j.contains("uncorrelated")) {
        f.uncorrelated = true;
        f.sigma = as_number(j.at("uncorrelated"), path + ".uncorrelated");
        if (f.sigma < 0.0)
            throw ConfigError(path + ".uncorrelated: sigma must be non-negative");
        for (const char* k : {"sigma", "beta", "nu", "length_scale", "anisotropy"})
            if (j.contains(k))
                throw ConfigError(path + ": uncorrelated fields take no '" +
                                  std::string(k) + "'");
        return f;
    }
    f.sigma = as_number(require(j, path, "sigma"), path + ".sigma");
    if (f.sigma <= 0.0) throw ConfigError(path + ".sigma: must be positive");
    if (j.contains("beta")) {
        f.beta = as_int(j.at("beta"), path + ".beta");
        if (*f.beta < 1) throw ConfigError(path + ".beta: must be a positive integer");
    }
    if (j.contains("nu")) {
        f.nu = as_number(j.at("nu"), path + ".nu");
        if (*f.nu <= 0.0) throw ConfigError(path + ".nu: must be positive");
    }
    if (!f.beta && !f.nu)
        throw ConfigError(path + ": correlated fields need 'beta' or 'nu'");
    if (f.beta && f.nu)
        throw ConfigError(path + ": give either 'beta' or 'nu', not both");
    f.length_scale = parse_length_scale(require(j, path, "length_scale"),
                                        path + ".length_scale");
    if (j.contains("anisotropy")) {
        const auto& a = j.at("anisotropy");
        const std::string apath = path + ".anisotropy";
        expect_keys(a, apath, {"direction", "d_parallel", "d_perpendicular"});
        Anisotropy an;
        an.direction = as_vector(require(a, apath, "direction"), apath + ".direction");
        const double norm = an.direction.norm();
        if (norm <= 0.0) throw ConfigError(apath + ".direction: zero vector");
        an.direction /= norm;
        an.d_parallel =
            as_number(require(a, apath, "d_parallel"), apath + ".d_parallel");
        an.d_perpendicular = as_number(require(a, apath, "d_perpendicular"),
                                       apath + ".d_perpendicular");
        if (an.d_parallel <= 0.0 || an.d_perpendicular <= 0.0)
            throw ConfigError(apath + ": factors must be positive");
        f.anisotropy = an;
    }
    return f;
}

inline RegularizationConfig parse_regularization(const json& j) {
    const std::string path = "regularization";
    expect_keys(j, path, {"filter_radius", "penalization"});
    RegularizationConfig r;
    if (j.contains("filter_radius")) {
        r.filter_radius = as_number(j.at("filter_radius"), path + ".filter_radius");
        if (r.filter_radius < 0.0)
            throw ConfigError(path + ".filter_radius: must be non-negative");
    }
    if (j.contains("penalization")) {
        const auto& p = j.at("penalization");
        if (p.is_string()) {
            const std::string s = p.get<std::string>();
            if (s == "off")
                r.penalty.kind = PenaltyConfig::Kind::Off;
            else if (s == "default")
                r.penalty.kind = PenaltyConfig::Kind::Default;
            else if (s == "mild")
                r.penalty.kind = PenaltyConfig::Kind::Mild;
            else
                throw ConfigError(path + ".penalization: must be off, default, mild "
                                         "or a control-point object");
        } else {
            const std::string ppath = path + ".penalization";
            expect_keys(p, ppath, {"s_star", "control_points"});
            r.penalty.kind = PenaltyConfig::Kind::Custom;
            r.penalty.s_star =
                as_number(require(p, ppath, "s_star"), ppath + ".s_star");
            const auto& pts = require(p, ppath, "control_points");
            if (!pts.is_array() || pts.size() < 5)
                throw ConfigError(ppath + ".control_points: need at least 5 points");
            for (const auto& pt : pts) {
                if (!pt.is_array() || pt.size() != 2)
                    throw ConfigError(ppath + ".control_points: entries are [x, y]");
                r.penalty.control_points.emplace_back(
                    as_number(pt.at(0), ppath), as_number(pt.at(1), ppath));
            }
        }
    }
    return r;
}

inline OptimizationSection parse_optimization(const json& j) {
    const std::string path = "optimization";
    expect_keys(j, path,
                {"alpha", "volume_max", "area_max", "area_min", "max_iterations",
                 "tolerance", "mma", "gradient_path", "normalization"});
    OptimizationSection o;
    if (j.contains("alpha")) {
        o.alpha = as_number(j.at("alpha"), path + ".alpha");
        if (o.alpha < 0.0 || o.alpha > 1.0)
            throw ConfigError(path + ".alpha: must lie in [0,1]");
    }
    o.volume_max = as_number(require(j, path, "volume_max"), path + ".volume_max");
    o.area_max = as_number(require(j, path, "area_max"), path + ".area_max");
    if (o.volume_max <= 0.0 || o.area_max <= 0.0)
        throw ConfigError(path + ": volume_max and area_max must be positive");
    if (j.contains("area_min")) {
        o.area_min = as_number(j.at("area_min"), path + ".area_min");
        if (o.area_min <= 0.0) throw ConfigError(path + ".area_min: must be positive");
    }
    if (j.contains("max_iterations")) {
        o.max_iterations = as_int(j.at("max_iterations"), path + ".max_iterations");
        if (o.max_iterations < 1)
            throw ConfigError(path + ".max_iterations: must be >= 1");
    }
    if (j.contains("tolerance")) {
        o.tolerance = as_number(j.at("tolerance"), path + ".tolerance");
        if (o.tolerance <= 0.0) throw ConfigError(path + ".tolerance: must be positive");
    }
    if (j.contains("mma")) {
        const auto& m = j.at("mma");
        const std::string mpath = path + ".mma";
        expect_keys(m, mpath,
                    {"asymptote_init", "asymptote_shrink", "asymptote_grow",
                     "asymptote_gap_min", "move_limit", "bound_margin",
                     "regularization"});
        if (m.contains("asymptote_init"))
            o.mma.asymptote_init = as_number(m.at("asymptote_init"), mpath);
        if (m.contains("asymptote_shrink"))
            o.mma.asymptote_shrink = as_number(m.at("asymptote_shrink"), mpath);
        if (m.contains("asymptote_grow"))
            o.mma.asymptote_grow = as_number(m.at("asymptote_grow"), mpath);
        if (m.contains("asymptote_gap_min"))
            o.mma.asymptote_gap_min = as_number(m.at("asymptote_gap_min"), mpath);
        if (m.contains("move_limit"))
            o.mma.move_limit = as_number(m.at("move_limit"), mpath);
        if (m.contains("bound_margin"))
            o.mma.bound_margin = as_number(m.at("bound_margin"), mpath);
        if (m.contains("regularization"))
            o.mma.regularization = as_number(m.at("regularization"), mpath);
    }
    if (j.contains("gradient_path")) {
        const std::string g = as_string(j.at("gradient_path"), path + ".gradient_path");
        if (g == "adjoint")
            o.gradient_path = GradientPath::Adjoint;
        else if (g == "per-member")
            o.gradient_path = GradientPath::PerMember;
        else
            throw ConfigError(path + ".gradient_path: must be adjoint or per-member");
    }
    if (j.contains("normalization")) {
        const auto& nj = j.at("normalization");
        const std::string npath = path + ".normalization";
        expect_keys(nj, npath, {"mean", "std"});
        if (nj.contains("mean")) {
            o.norm_mean = as_number(nj.at("mean"), npath + ".mean");
            if (!(*o.norm_mean > 0.0))
                throw ConfigError(npath + ".mean: must be positive");
        }
        if (nj.contains("std")) {
            o.norm_std = as_number(nj.at("std"), npath + ".std");
            if (!(*o.norm_std > 0.0))
                throw ConfigError(npath + ".std: must be positive");
        }
    }
    return o;
}

inline OutputSection parse_output(const json& j) {
    const std::string path = "output";
    expect_keys(j, path, {"directory", "seed", "vtk"});
    OutputSection o;
    if (j.contains("directory"))
        o.directory = as_string(j.at("directory"), path + ".directory");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ConfigError(path + ".seed: expected an integer");
        const auto s = j.at("seed").get<std::int64_t>();
        if (s < 0) throw ConfigError(path + ".seed: must be non-negative");
        o.seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("vtk")) o.vtk = as_bool(j.at("vtk"), path + ".vtk");
    return o;
}

} // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j, std::string base_dir) {
    detail::expect_keys(j, "config",
                        {"lattice", "bc", "field", "regularization", "optimization",
                         "output"});
    RunConfig cfg;
    cfg.base_dir = std::move(base_dir);
    if (j.contains("lattice")) cfg.lattice = detail::parse_lattice(j.at("lattice"));
    if (j.contains("bc")) {
        const auto& bc = j.at("bc");
        detail::expect_keys(bc, "bc", {"fixed", "loads"});
        if (bc.contains("fixed")) {
            const auto& arr = bc.at("fixed");
            if (!arr.is_array()) throw ConfigError("bc.fixed: expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string path = "bc.fixed[" + std::to_string(i) + "]";
                detail::expect_keys(arr.at(i), path, {"where", "dofs"});
                FixSpec f;
                f.where = detail::parse_selector(
                    detail::require(arr.at(i), path, "where"), path + ".where");
                if (arr.at(i).contains("dofs")) {
                    for (const auto& d : arr.at(i).at("dofs"))
                        f.dofs.push_back(detail::as_int(d, path + ".dofs"));
                }
                cfg.fixed.push_back(std::move(f));
            }
        }
        if (bc.contains("loads")) {
            const auto& arr = bc.at("loads");
            if (!arr.is_array()) throw ConfigError("bc.loads: expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string path = "bc.loads[" + std::to_string(i) + "]";
                detail::expect_keys(arr.at(i), path, {"where", "force"});
                LoadSpec l;
                l.where = detail::parse_selector(
                    detail::require(arr.at(i), path, "where"), path + ".where");
                l.force = detail::as_vector(
                    detail::require(arr.at(i), path, "force"), path + ".force");
                cfg.loads.push_back(std::move(l));
            }
        }
    }
    if (j.contains("field")) cfg.field = detail::parse_field(j.at("field"));
    if (j.contains("regularization"))
        cfg.regularization = detail::parse_regularization(j.at("regularization"));
    if (j.contains("optimization"))
        cfg.optimization = detail::parse_optimization(j.at("optimization"));
    if (j.contains("output")) cfg.output = detail::parse_output(j.at("output"));
    return cfg;
}

/// Parse and schema-validate a config file. Parse errors carry the byte
/// offset reported by the JSON parser.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(j, std::filesystem::path(path).parent_path().string());
}

inline Lattice build_lattice(const RunConfig& cfg) {
    if (!cfg.lattice) throw ConfigError("config has no 'lattice' section");
    Lattice lattice = std::visit(
        [&cfg](const auto& v) -> Lattice {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, GridLatticeConfig>)
                return build_grid_lattice(v.nx, v.ny, v.cell_w, v.cell_h, v.diagonals);
            else if constexpr (std::is_same_v<T, BccLatticeConfig>)
                return build_bcc_lattice(v.nx, v.ny, v.nz, v.cell, v.grid_edges);
            else if constexpr (std::is_same_v<T, BccBoxesConfig>)
                return build_bcc_composite(v.boxes, v.cell, v.grid_edges);
            else
                return read_lattice_json(
                    (std::filesystem::path(cfg.base_dir) / v.path).string());
        },
        *cfg.lattice);

    for (std::size_t i = 0; i < cfg.fixed.size(); ++i) {
        const auto& f = cfg.fixed[i];
        int matched = 0;
        for (const auto& jt : lattice.joints())
            if (f.where.matches(jt.position)) {
                if (f.dofs.empty())
                    lattice.fix_joint(jt.id);
                else
                    lattice.fix_joint(jt.id, f.dofs);
                ++matched;
            }
        if (matched == 0)
            throw ConfigError("bc.fixed[" + std::to_string(i) +
                              "]: selector matches no joint");
    }
    for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
        const auto& l = cfg.loads[i];
        int matched = 0;
        for (const auto& jt : lattice.joints())
            if (l.where.matches(jt.position)) {
                lattice.add_load(jt.id, l.force);
                ++matched;
            }
        if (matched == 0)
            throw ConfigError("bc.loads[" + std::to_string(i) +
                              "]: selector matches no joint");
    }
    return lattice;
}

inline FieldModel build_field(const RunConfig& cfg, const Lattice& lattice) {
    if (!cfg.field) throw ConfigError("config has no 'field' section");
    const FieldConfig& f = *cfg.field;
    const Eigen::VectorXd mean =
        Eigen::VectorXd::Constant(lattice.member_count(), f.mean);
    if (f.uncorrelated) return FieldModel::uncorrelated(mean, f.sigma);

    RandomFieldSpec spec;
    spec.mean = mean;
    spec.sigma = f.sigma;
    spec.dim = lattice.dim();
    spec.length_scale = f.length_scale;
    spec.anisotropy = f.anisotropy;
    if (f.beta) {
        spec.beta = *f.beta;
    } else {
        // nu is accepted only when it implies an integer SPDE exponent
        const double beta_real = 0.5 * *f.nu + 0.25 * lattice.dim();
        const double rounded = std::round(beta_real);
        if (std::abs(beta_real - rounded) > 1e-9 || rounded < 1.0)
            throw ConfigError(
                "field.nu: nu = " + std::to_string(*f.nu) + " implies beta = " +
                std::to_string(beta_real) +
                " which is not a positive integer for this lattice dimension");
        spec.beta = static_cast<int>(rounded);
    }
    return FieldModel::spde(spec, lattice);
}

inline std::optional<FilterOperator> build_filter(const RunConfig& cfg,
                                                  const Lattice& lattice) {
    if (cfg.regularization.filter_radius <= 0.0) return std::nullopt;
    return FilterOperator::build(lattice, cfg.regularization.filter_radius);
}

inline std::optional<PenalizationCurve> build_penalty(const RunConfig& cfg) {
    switch (cfg.regularization.penalty.kind) {
    case PenaltyConfig::Kind::Off:
        return std::nullopt;
    case PenaltyConfig::Kind::Default:
        return PenalizationCurve::preset_default();
    case PenaltyConfig::Kind::Mild:
        return PenalizationCurve::preset_mild();
    case PenaltyConfig::Kind::Custom:
        return PenalizationCurve::bspline(cfg.regularization.penalty.control_points,
                                          cfg.regularization.penalty.s_star);
    }
    return std::nullopt;
}

inline OptimizationConfig build_optimization_config(const RunConfig& cfg,
                                                    int threads = 1) {
    if (!cfg.optimization) throw ConfigError("config has no 'optimization' section");
    const auto& o = *cfg.optimization;
    OptimizationConfig c;
    c.volume_max = o.volume_max;
    c.area_min = o.area_min;
    c.area_max = o.area_max;
    c.max_iterations = o.max_iterations;
    c.tolerance = o.tolerance;
    c.mma = o.mma;
    c.gradient_path = o.gradient_path;
    c.threads = threads;
    return c;
}

} // namespace latro

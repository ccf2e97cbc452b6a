#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"
#include "latro/optimize.hpp"

namespace latro {

/// Shortest text form that round-trips a double; keeps emitted files
/// byte-stable for identical inputs.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double parsed = 0.0;
    for (int prec = 1; prec <= 16; ++prec) {
        char probe[32];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        std::sscanf(probe, "%lf", &parsed);
        if (parsed == v) return probe;
    }
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open output file: " + path);
    return out;
}

/// Named per-member scalar field for export.
struct NamedField {
    std::string name;
    Eigen::VectorXd values;
};

/// Legacy ASCII VTK POLYDATA export: joints as points, members as lines,
/// scalars attached as CELL_DATA. No timestamp comment, so identical inputs
/// give identical files.
inline void write_vtk(const std::string& path, const Lattice& lattice,
                      const std::vector<NamedField>& fields) {
    auto out = open_output(path);
    out << "# vtk DataFile Version 3.0\n";
    out << "latro lattice export\n";
    out << "ASCII\n";
    out << "DATASET POLYDATA\n";
    out << "POINTS " << lattice.joint_count() << " double\n";
    for (const auto& j : lattice.joints())
        out << format_double(j.position[0]) << ' ' << format_double(j.position[1])
            << ' ' << format_double(j.position[2]) << '\n';
    out << "LINES " << lattice.member_count() << ' ' << 3 * lattice.member_count()
        << '\n';
    for (const auto& m : lattice.members())
        out << "2 " << m.joint_a << ' ' << m.joint_b << '\n';
    if (!fields.empty()) {
        out << "CELL_DATA " << lattice.member_count() << '\n';
        for (const auto& f : fields) {
            if (f.values.size() != lattice.member_count())
                throw InvalidArgument("VTK cell field size does not match member count");
            out << "SCALARS " << f.name << " double 1\n";
            out << "LOOKUP_TABLE default\n";
            for (int e = 0; e < f.values.size(); ++e)
                out << format_double(f.values[e]) << '\n';
        }
    }
}

/// Matrix Market coordinate dump of a sparse matrix (debug aid).
inline void write_matrix_market(const std::string& path,
                                const Eigen::SparseMatrix<double>& m) {
    auto out = open_output(path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            out << it.row() + 1 << ' ' << it.col() + 1 << ' '
                << format_double(it.value()) << '\n';
}

inline nlohmann::json lattice_to_json(const Lattice& lattice) {
    nlohmann::json j;
    j["dimension"] = lattice.dim();
    auto& joints = j["joints"] = nlohmann::json::array();
    for (const auto& jt : lattice.joints()) {
        nlohmann::json coords = nlohmann::json::array();
        for (int k = 0; k < lattice.dim(); ++k) coords.push_back(jt.position[k]);
        joints.push_back(coords);
    }
    auto& members = j["members"] = nlohmann::json::array();
    for (const auto& m : lattice.members())
        members.push_back({m.joint_a, m.joint_b});
    auto& fixed = j["fixed"] = nlohmann::json::array();
    for (const auto& jt : lattice.joints())
        if (!jt.fixed_dofs.empty())
            fixed.push_back({{"joint", jt.id}, {"dofs", jt.fixed_dofs}});
    auto& loads = j["loads"] = nlohmann::json::array();
    for (const auto& [dof, value] : lattice.loads())
        loads.push_back({{"dof", dof}, {"value", value}});
    return j;
}

inline Lattice lattice_from_json(const nlohmann::json& j) {
    try {
        const int dim = j.at("dimension").get<int>();
        std::vector<Joint> joints;
        for (const auto& coords : j.at("joints")) {
            Joint jt;
            if (static_cast<int>(coords.size()) != dim)
                throw ConfigError("joint coordinate count does not match dimension");
            for (int k = 0; k < dim; ++k) jt.position[k] = coords.at(k).get<double>();
            joints.push_back(jt);
        }
        std::vector<std::pair<int, int>> members;
        for (const auto& m : j.at("members"))
            members.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
        Lattice lattice(dim, std::move(joints), members);
        if (j.contains("fixed"))
            for (const auto& f : j.at("fixed")) {
                const int joint = f.at("joint").get<int>();
                if (f.contains("dofs"))
                    lattice.fix_joint(joint, f.at("dofs").get<std::vector<int>>());
                else
                    lattice.fix_joint(joint);
            }
        if (j.contains("loads"))
            for (const auto& l : j.at("loads"))
                lattice.add_load_dof(l.at("dof").get<int>(), l.at("value").get<double>());
        return lattice;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid lattice file: ") + e.what());
    }
}

inline void write_lattice_json(const std::string& path, const Lattice& lattice) {
    auto out = open_output(path);
    out << lattice_to_json(lattice).dump(2) << '\n';
}

inline Lattice read_lattice_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lattice file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("lattice file parse error: ") + e.what());
    }
    return lattice_from_json(j);
}

inline void write_history_csv(const std::string& path,
                              const std::vector<HistoryRow>& history) {
    auto out = open_output(path);
    out << "iteration,mean,std_dev,cost,volume,max_change,kkt\n";
    for (const auto& r : history)
        out << r.iteration << ',' << format_double(r.mean) << ','
            << format_double(r.std_dev) << ',' << format_double(r.cost) << ','
            << format_double(r.volume) << ',' << format_double(r.max_change) << ','
            << format_double(r.kkt) << '\n';
}

inline void write_front_csv(const std::string& path,
                            const std::vector<ParetoPoint>& front) {
    auto out = open_output(path);
    out << "alpha,mean,std_dev,volume,iterations,converged\n";
    for (const auto& p : front)
        out << format_double(p.alpha) << ',' << format_double(p.mean) << ','
            << format_double(p.std_dev) << ',' << format_double(p.volume) << ','
            << p.iterations << ',' << (p.converged ? 1 : 0) << '\n';
}

inline void write_member_field_csv(const std::string& path,
                                   const Eigen::VectorXd& values) {
    auto out = open_output(path);
    out << "member,value\n";
    for (int e = 0; e < values.size(); ++e)
        out << e << ',' << format_double(values[e]) << '\n';
}

inline void write_samples_csv(const std::string& path,
                              const std::vector<double>& values) {
    auto out = open_output(path);
    out << "sample,compliance\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        out << i << ',' << format_double(values[i]) << '\n';
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

} // namespace latro

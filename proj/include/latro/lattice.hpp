#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "latro/errors.hpp"

namespace latro {

struct Joint {
    int id = -1;
    Eigen::Vector3d position = Eigen::Vector3d::Zero(); // components >= dim are zero
    std::vector<int> fixed_dofs;                         // subset of {0..dim-1}
};

struct Member {
    int id = -1;
    int joint_a = -1;
    int joint_b = -1;
    double length = 0.0;
    Eigen::Vector3d tangent = Eigen::Vector3d::Zero(); // unit vector a -> b
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

struct MemberGeometry {
    double length;
    Eigen::Vector3d tangent;
    Eigen::Vector3d centroid;
};

/// Pin-jointed lattice: joints, members, supports and loads.
/// Immutable after construction apart from loads and supports, which only
/// affect the boundary-condition bookkeeping, not the geometry.
class Lattice {
public:
    Lattice(int dim, std::vector<Joint> joints,
            const std::vector<std::pair<int, int>>& connectivity)
        : dim_(dim), joints_(std::move(joints)) {
        if (dim_ < 1 || dim_ > 3)
            throw InvalidArgument("lattice dimension must be 1, 2 or 3");
        if (joints_.empty())
            throw InvalidArgument("lattice has no joints");
        for (std::size_t i = 0; i < joints_.size(); ++i) {
            joints_[i].id = static_cast<int>(i);
            for (int k : joints_[i].fixed_dofs)
                if (k < 0 || k >= dim_)
                    throw InvalidArgument("fixed DOF component out of range");
            for (int k = dim_; k < 3; ++k)
                if (joints_[i].position[k] != 0.0)
                    throw InvalidArgument("joint coordinate beyond lattice dimension is nonzero");
        }

        members_.reserve(connectivity.size());
        std::set<std::pair<int, int>> seen;
        const int n = static_cast<int>(joints_.size());
        for (const auto& [a, b] : connectivity) {
            if (a < 0 || a >= n || b < 0 || b >= n)
                throw InvalidArgument("member endpoint index out of range");
            if (a == b)
                throw InvalidArgument("member connects a joint to itself");
            auto key = std::minmax(a, b);
            if (!seen.insert(key).second)
                throw InvalidArgument("duplicate member between joints " +
                                      std::to_string(a) + " and " + std::to_string(b));
            Member m;
            m.id = static_cast<int>(members_.size());
            m.joint_a = a;
            m.joint_b = b;
            auto g = segment_geometry(joints_[a].position, joints_[b].position);
            m.length = g.length;
            m.tangent = g.tangent;
            m.centroid = g.centroid;
            members_.push_back(m);
        }
        if (members_.empty())
            throw InvalidArgument("lattice has no members");
        check_connected();
    }

    int dim() const { return dim_; }
    const std::vector<Joint>& joints() const { return joints_; }
    const std::vector<Member>& members() const { return members_; }
    int joint_count() const { return static_cast<int>(joints_.size()); }
    int member_count() const { return static_cast<int>(members_.size()); }
    int dof_count() const { return joint_count() * dim_; }

    /// Sparse map global DOF index -> force value. Repeated loads accumulate.
    const std::map<int, double>& loads() const { return loads_; }

    void add_load(int joint, const Eigen::Vector3d& force) {
        if (joint < 0 || joint >= joint_count())
            throw InvalidArgument("load joint index out of range");
        for (int k = 0; k < dim_; ++k)
            if (force[k] != 0.0) loads_[joint * dim_ + k] += force[k];
    }

    void add_load_dof(int dof, double value) {
        if (dof < 0 || dof >= dof_count())
            throw InvalidArgument("load DOF index out of range");
        if (value != 0.0) loads_[dof] += value;
    }

    void fix_joint(int joint, const std::vector<int>& dofs) {
        if (joint < 0 || joint >= joint_count())
            throw InvalidArgument("fixed joint index out of range");
        auto& fd = joints_[joint].fixed_dofs;
        for (int k : dofs) {
            if (k < 0 || k >= dim_)
                throw InvalidArgument("fixed DOF component out of range");
            if (std::find(fd.begin(), fd.end(), k) == fd.end()) fd.push_back(k);
        }
        std::sort(fd.begin(), fd.end());
    }

    void fix_joint(int joint) {
        std::vector<int> all(dim_);
        for (int k = 0; k < dim_; ++k) all[k] = k;
        fix_joint(joint, all);
    }

    std::vector<char> fixed_dof_mask() const {
        std::vector<char> mask(dof_count(), 0);
        for (const auto& j : joints_)
            for (int k : j.fixed_dofs) mask[j.id * dim_ + k] = 1;
        return mask;
    }

    double total_member_length() const {
        double s = 0.0;
        for (const auto& m : members_) s += m.length;
        return s;
    }

    static MemberGeometry segment_geometry(const Eigen::Vector3d& a,
                                           const Eigen::Vector3d& b) {
        MemberGeometry g;
        Eigen::Vector3d d = b - a;
        g.length = d.norm();
        if (g.length <= 0.0)
            throw DegenerateGeometry("member endpoints coincide");
        g.tangent = d / g.length;
        g.centroid = 0.5 * (a + b);
        return g;
    }

private:
    void check_connected() const {
        std::vector<std::vector<int>> adj(joints_.size());
        for (const auto& m : members_) {
            adj[m.joint_a].push_back(m.joint_b);
            adj[m.joint_b].push_back(m.joint_a);
        }
        std::vector<char> seen(joints_.size(), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            int j = stack.back();
            stack.pop_back();
            for (int k : adj[j])
                if (!seen[k]) {
                    seen[k] = 1;
                    ++count;
                    stack.push_back(k);
                }
        }
        if (count != joints_.size())
            throw InvalidArgument("lattice graph is not connected");
    }

    int dim_;
    std::vector<Joint> joints_;
    std::vector<Member> members_;
    std::map<int, double> loads_;
};

/// Recompute length, unit tangent and centroid of every member from the
/// joint positions.
inline std::vector<MemberGeometry> compute_member_geometry(const Lattice& lattice) {
    std::vector<MemberGeometry> out;
    out.reserve(lattice.members().size());
    for (const auto& m : lattice.members())
        out.push_back(Lattice::segment_geometry(lattice.joints()[m.joint_a].position,
                                                lattice.joints()[m.joint_b].position));
    return out;
}

struct AdjointEdge {
    int a = -1;
    int b = -1;
    double length = 0.0; // distance between the two member centroids
};

/// Line graph of the lattice: one vertex per member, placed at the member
/// centroid; an edge for every pair of members sharing a joint.
struct AdjointLattice {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<AdjointEdge> edges;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int edge_count() const { return static_cast<int>(edges.size()); }
};

inline AdjointLattice build_adjoint(const Lattice& lattice) {
    AdjointLattice adj;
    adj.vertices.reserve(lattice.member_count());
    for (const auto& m : lattice.members()) adj.vertices.push_back(m.centroid);

    std::vector<std::vector<int>> incident(lattice.joint_count());
    for (const auto& m : lattice.members()) {
        incident[m.joint_a].push_back(m.id);
        incident[m.joint_b].push_back(m.id);
    }
    // Members share at most one joint (duplicates are rejected at lattice
    // construction), so each pair appears exactly once.
    for (const auto& around : incident) {
        for (std::size_t i = 0; i < around.size(); ++i) {
            for (std::size_t j = i + 1; j < around.size(); ++j) {
                AdjointEdge e;
                e.a = around[i];
                e.b = around[j];
                e.length = (adj.vertices[e.a] - adj.vertices[e.b]).norm();
                if (e.length <= 0.0)
                    throw DegenerateGeometry("adjoint edge between co-located centroids");
                adj.edges.push_back(e);
            }
        }
    }
    return adj;
}

enum class Diagonals { None, Single, Double };

/// Regular 2D grid of nx-by-ny cells. Joint (i,j) sits at (i*cell_w, j*cell_h)
/// and has index j*(nx+1)+i.
inline Lattice build_grid_lattice(int nx, int ny, double cell_w, double cell_h,
                                  Diagonals diagonals) {
    if (nx < 1 || ny < 1)
        throw InvalidArgument("grid lattice needs at least one cell per direction");
    if (cell_w <= 0.0 || cell_h <= 0.0)
        throw InvalidArgument("grid cell dimensions must be positive");

    std::vector<Joint> joints;
    joints.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            Joint jt;
            jt.position = Eigen::Vector3d(i * cell_w, j * cell_h, 0.0);
            joints.push_back(jt);
        }
    auto idx = [nx](int i, int j) { return j * (nx + 1) + i; };

    std::vector<std::pair<int, int>> members;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i < nx; ++i) members.emplace_back(idx(i, j), idx(i + 1, j));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i) members.emplace_back(idx(i, j), idx(i, j + 1));
    if (diagonals != Diagonals::None) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                members.emplace_back(idx(i, j), idx(i + 1, j + 1));
                if (diagonals == Diagonals::Double)
                    members.emplace_back(idx(i + 1, j), idx(i, j + 1));
            }
    }
    return Lattice(2, std::move(joints), members);
}

/// Axis-aligned box of BCC cells, bounds in cell indices, inclusive.
struct CellBox {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};

    bool contains_cell(int i, int j, int k) const {
        return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] &&
               k >= lo[2] && k <= hi[2];
    }
};

/// Body-centred cubic lattice over a union of cell boxes. Each cell gets a
/// centre joint and eight centre-to-corner members; with grid_edges also the
/// twelve cell-edge members. Shared joints and edges are deduplicated through
/// an integer key grid scaled by 2, so centres live on odd coordinates.
inline Lattice build_bcc_composite(const std::vector<CellBox>& boxes, double cell,
                                   bool grid_edges = true) {
    if (boxes.empty())
        throw InvalidArgument("BCC composite needs at least one cell box");
    if (cell <= 0.0)
        throw InvalidArgument("BCC cell edge length must be positive");
    for (const auto& b : boxes)
        for (int k = 0; k < 3; ++k)
            if (b.hi[k] < b.lo[k])
                throw InvalidArgument("BCC cell box is empty");

    auto in_any = [&boxes](int i, int j, int k) {
        for (const auto& b : boxes)
            if (b.contains_cell(i, j, k)) return true;
        return false;
    };

    std::map<std::array<int64_t, 3>, int> key_to_joint;
    std::vector<Joint> joints;
    auto joint_at = [&](int64_t kx, int64_t ky, int64_t kz) {
        std::array<int64_t, 3> key{kx, ky, kz};
        auto it = key_to_joint.find(key);
        if (it != key_to_joint.end()) return it->second;
        Joint jt;
        jt.position = 0.5 * cell * Eigen::Vector3d(double(kx), double(ky), double(kz));
        int id = static_cast<int>(joints.size());
        joints.push_back(jt);
        key_to_joint.emplace(key, id);
        return id;
    };

    std::set<std::pair<int, int>> edges;
    auto add_edge = [&edges](int a, int b) { edges.insert(std::minmax(a, b)); };

    for (const auto& box : boxes) {
        for (int k = box.lo[2]; k <= box.hi[2]; ++k)
            for (int j = box.lo[1]; j <= box.hi[1]; ++j)
                for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
                    if (!in_any(i, j, k)) continue;
                    int centre = joint_at(2 * i + 1, 2 * j + 1, 2 * k + 1);
                    int corner[2][2][2];
                    for (int dk = 0; dk < 2; ++dk)
                        for (int dj = 0; dj < 2; ++dj)
                            for (int di = 0; di < 2; ++di) {
                                corner[di][dj][dk] = joint_at(2 * (i + di), 2 * (j + dj),
                                                              2 * (k + dk));
                                add_edge(centre, corner[di][dj][dk]);
                            }
                    if (grid_edges) {
                        for (int dk = 0; dk < 2; ++dk)
                            for (int dj = 0; dj < 2; ++dj)
                                add_edge(corner[0][dj][dk], corner[1][dj][dk]);
                        for (int dk = 0; dk < 2; ++dk)
                            for (int di = 0; di < 2; ++di)
                                add_edge(corner[di][0][dk], corner[di][1][dk]);
                        for (int dj = 0; dj < 2; ++dj)
                            for (int di = 0; di < 2; ++di)
                                add_edge(corner[di][dj][0], corner[di][dj][1]);
                    }
                }
    }

    std::vector<std::pair<int, int>> members(edges.begin(), edges.end());
    return Lattice(3, std::move(joints), members);
}

inline Lattice build_bcc_lattice(int nx, int ny, int nz, double cell,
                                 bool grid_edges = true) {
    if (nx < 1 || ny < 1 || nz < 1)
        throw InvalidArgument("BCC lattice needs at least one cell per direction");
    CellBox box;
    box.lo = {0, 0, 0};
    box.hi = {nx - 1, ny - 1, nz - 1};
    return build_bcc_composite({box}, cell, grid_edges);
}

/// Straight chain of `n` collinear unit members along the x axis; its adjoint
/// is the canonical 1D chain with unit spacing.
inline Lattice build_chain_lattice(int n, double member_length = 1.0) {
    if (n < 1) throw InvalidArgument("chain lattice needs at least one member");
    if (member_length <= 0.0) throw InvalidArgument("member length must be positive");
    std::vector<Joint> joints(n + 1);
    for (int i = 0; i <= n; ++i)
        joints[i].position = Eigen::Vector3d(i * member_length, 0.0, 0.0);
    std::vector<std::pair<int, int>> members;
    for (int i = 0; i < n; ++i) members.emplace_back(i, i + 1);
    return Lattice(1, std::move(joints), members);
}

} // namespace latro

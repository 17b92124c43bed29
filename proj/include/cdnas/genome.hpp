#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdnas/operators.hpp"
#include "cdnas/rng.hpp"
#include "cdnas/value.hpp"

namespace cdnas {

enum class LeafKind : uint8_t { HS, HE, HC };

inline constexpr std::array<LeafKind, 3> kAllLeaves = {LeafKind::HS, LeafKind::HE,
                                                       LeafKind::HC};

std::string_view leaf_name(LeafKind k);
LeafKind parse_leaf(std::string_view name);

// Trees never exceed this many computation nodes on a root-to-leaf path.
inline constexpr int kMaxDepth = 9;

struct TreeNode {
    bool is_leaf = false;
    OpKind op = OpKind::Neg;
    LeafKind leaf = LeafKind::HS;
    int child0 = -1, child1 = -1;
};

// Single-root binary expression tree over {h_S, h_E, h_C}. Nodes are stored
// in pre-order with the root at index 0; treat instances as immutable.
struct GenomeTree {
    std::vector<TreeNode> nodes;

    int root() const { return 0; }
    const TreeNode& at(int id) const { return nodes[id]; }
    int num_nodes() const { return int(nodes.size()); }

    static GenomeTree leaf(LeafKind k);
    static GenomeTree unary(OpKind op, GenomeTree child);
    static GenomeTree binary(OpKind op, GenomeTree left, GenomeTree right);
};

// Verifies structure: op-node root, pre-order child ids, arity respected.
// Throws StructuralError otherwise.
void validate_tree(const GenomeTree& tree);

// Structure helpers used by the variation operators. Results are normalized
// to pre-order.
int subtree_size(const GenomeTree& tree, int id);
GenomeTree extract_subtree(const GenomeTree& tree, int id);
GenomeTree replace_subtree(const GenomeTree& base, int at, const GenomeTree& scion);
std::vector<int> op_node_ids(const GenomeTree& tree);
int parent_of(const GenomeTree& tree, int id);  // -1 for the root

struct ShapeInfo {
    std::vector<ValShape> shape;  // per node id
    std::vector<int> infeasible;  // ascending node ids
    bool feasible() const { return infeasible.empty(); }
};

// Bottom-up shape assignment. Leaves are Vector(D). Nodes violating their
// operator's input requirement are reported infeasible and propagate as if
// repaired (unary: input shape; Concat: maximum of inputs).
ShapeInfo infer_shapes(const GenomeTree& tree);

struct TreeMetrics {
    int depth = 0;    // computation nodes on the longest root-to-leaf path
    int breadth = 0;  // leaf count
    int num_c = 0;    // computation node count
};

TreeMetrics metrics(const GenomeTree& tree);

// (1 - (depth-1)/10) + breadth/200 + (0.001 - num_c/20000).
// Throws ConstraintError when depth exceeds kMaxDepth.
double interpretability(const GenomeTree& tree);
double interpretability(const TreeMetrics& m);

// Replaces every infeasible node's operator: unary nodes get a uniform
// same-shape unary operator, Concat gets Add or Mul. Topology is unchanged
// and the result has no infeasible nodes.
GenomeTree repair(const GenomeTree& tree, Rng& rng);

// Grows a tree with a uniform computation-node count in [lo, hi], fills open
// slots with uniform leaves, then repairs. Pass repair_result=false to get
// the raw (possibly infeasible) tree.
GenomeTree random_tree(int lo, int hi, Rng& rng, bool repair_result = true);

enum class BaselineModel { IRT, MIRT, MF, NCD };

inline constexpr std::array<BaselineModel, 4> kAllBaselines = {
    BaselineModel::IRT, BaselineModel::MIRT, BaselineModel::MF, BaselineModel::NCD};

std::string_view baseline_name(BaselineModel m);

// Canonical encodings of the four reference diagnostic functions.
GenomeTree seed_tree(BaselineModel m);

// Prefix-notation serialization with the children of Add/Mul sorted
// lexicographically, so structurally identical trees (up to commutativity)
// share a key.
std::string canonical_key(const GenomeTree& tree);
GenomeTree parse_key(const std::string& key);

// Tree JSON: {"op": name, "children": [...]} with leaves {"leaf": "H_S"}.
std::string to_json(const GenomeTree& tree);
GenomeTree from_json(const std::string& text);

// Graphviz DOT: leaves as triangles, unary operators green ellipses, binary
// operators orange ellipses.
std::string to_dot(const GenomeTree& tree);

}  // namespace cdnas

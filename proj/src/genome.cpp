#include "cdnas/genome.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "cdnas/errors.hpp"

namespace cdnas {

std::string_view leaf_name(LeafKind k) {
    switch (k) {
        case LeafKind::HS: return "H_S";
        case LeafKind::HE: return "H_E";
        case LeafKind::HC: return "H_C";
    }
    return "?";
}

LeafKind parse_leaf(std::string_view name) {
    for (LeafKind k : kAllLeaves)
        if (leaf_name(k) == name) return k;
    throw StructuralError("unknown leaf: " + std::string(name));
}

std::string_view baseline_name(BaselineModel m) {
    switch (m) {
        case BaselineModel::IRT: return "IRT";
        case BaselineModel::MIRT: return "MIRT";
        case BaselineModel::MF: return "MF";
        case BaselineModel::NCD: return "NCD";
    }
    return "?";
}

namespace {

void append_shifted(std::vector<TreeNode>& dst, const std::vector<TreeNode>& src, int shift) {
    for (TreeNode n : src) {
        if (n.child0 >= 0) n.child0 += shift;
        if (n.child1 >= 0) n.child1 += shift;
        dst.push_back(n);
    }
}

}  // namespace

GenomeTree GenomeTree::leaf(LeafKind k) {
    GenomeTree t;
    TreeNode n;
    n.is_leaf = true;
    n.leaf = k;
    t.nodes.push_back(n);
    return t;
}

GenomeTree GenomeTree::unary(OpKind op, GenomeTree child) {
    GenomeTree t;
    TreeNode n;
    n.op = op;
    n.child0 = 1;
    t.nodes.push_back(n);
    append_shifted(t.nodes, child.nodes, 1);
    return t;
}

GenomeTree GenomeTree::binary(OpKind op, GenomeTree left, GenomeTree right) {
    GenomeTree t;
    TreeNode n;
    n.op = op;
    n.child0 = 1;
    n.child1 = 1 + int(left.nodes.size());
    t.nodes.push_back(n);
    append_shifted(t.nodes, left.nodes, 1);
    append_shifted(t.nodes, right.nodes, n.child1);
    return t;
}

void validate_tree(const GenomeTree& tree) {
    if (tree.nodes.empty()) throw StructuralError("empty tree");
    if (tree.nodes[0].is_leaf) throw StructuralError("root must be a computation node");

    int n = tree.num_nodes();
    int next = 0;
    std::function<void(int)> dfs = [&](int id) {
        if (id < 0 || id >= n) throw StructuralError("child id out of range");
        if (id != next) throw StructuralError("nodes not in pre-order");
        ++next;
        const TreeNode& node = tree.nodes[id];
        if (node.is_leaf) {
            if (node.child0 >= 0 || node.child1 >= 0)
                throw StructuralError("leaf with children");
            return;
        }
        int want = arity(node.op);
        if ((node.child0 < 0) || (want == 2) != (node.child1 >= 0))
            throw StructuralError("arity mismatch at node " + std::to_string(id));
        dfs(node.child0);
        if (want == 2) dfs(node.child1);
    };
    dfs(0);
    if (next != n) throw StructuralError("unreachable nodes in tree");
}

int subtree_size(const GenomeTree& tree, int id) {
    const TreeNode& n = tree.nodes[id];
    if (n.is_leaf) return 1;
    int s = 1 + subtree_size(tree, n.child0);
    if (n.child1 >= 0) s += subtree_size(tree, n.child1);
    return s;
}

GenomeTree extract_subtree(const GenomeTree& tree, int id) {
    GenomeTree out;
    std::function<int(int)> copy = [&](int src) -> int {
        int dst = int(out.nodes.size());
        out.nodes.push_back(tree.nodes[src]);
        out.nodes[dst].child0 = out.nodes[dst].child1 = -1;
        if (!tree.nodes[src].is_leaf) {
            out.nodes[dst].child0 = copy(tree.nodes[src].child0);
            if (tree.nodes[src].child1 >= 0)
                out.nodes[dst].child1 = copy(tree.nodes[src].child1);
        }
        return dst;
    };
    copy(id);
    return out;
}

GenomeTree replace_subtree(const GenomeTree& base, int at, const GenomeTree& scion) {
    GenomeTree out;
    std::function<int(int)> emit = [&](int src) -> int {
        if (src == at) {
            int dst = int(out.nodes.size());
            append_shifted(out.nodes, scion.nodes, dst);
            return dst;
        }
        int dst = int(out.nodes.size());
        out.nodes.push_back(base.nodes[src]);
        out.nodes[dst].child0 = out.nodes[dst].child1 = -1;
        if (!base.nodes[src].is_leaf) {
            out.nodes[dst].child0 = emit(base.nodes[src].child0);
            if (base.nodes[src].child1 >= 0)
                out.nodes[dst].child1 = emit(base.nodes[src].child1);
        }
        return dst;
    };
    emit(base.root());
    return out;
}

std::vector<int> op_node_ids(const GenomeTree& tree) {
    std::vector<int> ids;
    for (int i = 0; i < tree.num_nodes(); ++i)
        if (!tree.nodes[i].is_leaf) ids.push_back(i);
    return ids;
}

int parent_of(const GenomeTree& tree, int id) {
    for (int i = 0; i < tree.num_nodes(); ++i) {
        if (tree.nodes[i].child0 == id || tree.nodes[i].child1 == id) return i;
    }
    return -1;
}

ShapeInfo infer_shapes(const GenomeTree& tree) {
    validate_tree(tree);
    int n = tree.num_nodes();
    ShapeInfo info;
    info.shape.assign(n, ValShape::Scalar);

    // Pre-order layout puts children after parents, so a reverse sweep is
    // bottom-up.
    for (int i = n - 1; i >= 0; --i) {
        const TreeNode& node = tree.nodes[i];
        if (node.is_leaf) {
            info.shape[i] = ValShape::Vector;
            continue;
        }
        ValShape s0 = info.shape[node.child0];
        ValShape s1 = node.child1 >= 0 ? info.shape[node.child1] : ValShape::Scalar;
        bool feasible = true;
        if (requires_vector_input(node.op)) {
            if (node.op == OpKind::Concat)
                feasible = s0 == ValShape::Vector && s1 == ValShape::Vector;
            else
                feasible = s0 == ValShape::Vector;
        }
        if (!feasible) {
            info.infeasible.push_back(i);
            // Propagate as the repaired node would: same-shape for unary,
            // maximum for Concat.
            if (arity(node.op) == 1)
                info.shape[i] = s0;
            else
                info.shape[i] = (s0 == ValShape::Vector || s1 == ValShape::Vector)
                                    ? ValShape::Vector
                                    : ValShape::Scalar;
            continue;
        }
        switch (shape_rule(node.op)) {
            case ShapeRule::Same: info.shape[i] = s0; break;
            case ShapeRule::Single: info.shape[i] = ValShape::Scalar; break;
            case ShapeRule::Constant: info.shape[i] = ValShape::Vector; break;
            case ShapeRule::Maximum:
                info.shape[i] = (s0 == ValShape::Vector || s1 == ValShape::Vector)
                                    ? ValShape::Vector
                                    : ValShape::Scalar;
                break;
        }
    }
    std::sort(info.infeasible.begin(), info.infeasible.end());
    return info;
}

TreeMetrics metrics(const GenomeTree& tree) {
    validate_tree(tree);
    TreeMetrics m;
    std::function<int(int)> depth = [&](int id) -> int {
        const TreeNode& n = tree.nodes[id];
        if (n.is_leaf) {
            ++m.breadth;
            return 0;
        }
        ++m.num_c;
        int d = depth(n.child0);
        if (n.child1 >= 0) d = std::max(d, depth(n.child1));
        return 1 + d;
    };
    m.depth = depth(tree.root());
    return m;
}

double interpretability(const TreeMetrics& m) {
    if (m.depth > kMaxDepth)
        throw ConstraintError("tree depth " + std::to_string(m.depth) + " exceeds cap");
    return (1.0 - (m.depth - 1) / 10.0) + m.breadth / 200.0 + (0.001 - m.num_c / 20000.0);
}

double interpretability(const GenomeTree& tree) { return interpretability(metrics(tree)); }

GenomeTree repair(const GenomeTree& tree, Rng& rng) {
    validate_tree(tree);
    GenomeTree out = tree;

    std::function<ValShape(int)> fix = [&](int id) -> ValShape {
        TreeNode& node = out.nodes[id];
        if (node.is_leaf) return ValShape::Vector;
        ValShape s0 = fix(node.child0);
        ValShape s1 = node.child1 >= 0 ? fix(node.child1) : ValShape::Scalar;
        if (requires_vector_input(node.op)) {
            if (node.op == OpKind::Concat) {
                if (s0 != ValShape::Vector || s1 != ValShape::Vector)
                    node.op = kBroadcastBinaryOps[rng.index(kBroadcastBinaryOps.size())];
            } else if (s0 != ValShape::Vector) {
                node.op = kSameShapeUnaryOps[rng.index(kSameShapeUnaryOps.size())];
            }
        }
        switch (shape_rule(node.op)) {
            case ShapeRule::Same: return s0;
            case ShapeRule::Single: return ValShape::Scalar;
            case ShapeRule::Constant: return ValShape::Vector;
            case ShapeRule::Maximum:
                return (s0 == ValShape::Vector || s1 == ValShape::Vector) ? ValShape::Vector
                                                                          : ValShape::Scalar;
        }
        return s0;
    };
    fix(out.root());
    return out;
}

GenomeTree random_tree(int lo, int hi, Rng& rng, bool repair_result) {
    if (lo < 1 || hi < lo) throw ConfigError("invalid node range");

    for (int attempt = 0; attempt < 1000; ++attempt) {
        int target = lo + int(rng.index(uint64_t(hi - lo + 1)));

        // Grow: place operators into uniformly chosen open child slots until
        // the target count is reached, then close every slot with a leaf.
        std::vector<TreeNode> nodes;
        std::vector<std::pair<int, int>> slots;  // (node id, child index)
        auto push_op = [&]() {
            TreeNode n;
            n.op = kAllOps[rng.index(kNumOps)];
            nodes.push_back(n);
            int id = int(nodes.size()) - 1;
            slots.emplace_back(id, 0);
            if (arity(n.op) == 2) slots.emplace_back(id, 1);
            return id;
        };
        push_op();
        for (int count = 1; count < target; ++count) {
            size_t pick = size_t(rng.index(slots.size()));
            auto [pid, which] = slots[pick];
            slots.erase(slots.begin() + pick);
            int id = push_op();
            (which == 0 ? nodes[pid].child0 : nodes[pid].child1) = id;
        }
        for (auto [pid, which] : slots) {
            TreeNode n;
            n.is_leaf = true;
            n.leaf = kAllLeaves[rng.index(kAllLeaves.size())];
            nodes.push_back(n);
            (which == 0 ? nodes[pid].child0 : nodes[pid].child1) = int(nodes.size()) - 1;
        }

        GenomeTree grown;
        grown.nodes = std::move(nodes);
        GenomeTree t = extract_subtree(grown, 0);  // normalize to pre-order
        if (metrics(t).depth > kMaxDepth) continue;
        return repair_result ? repair(t, rng) : t;
    }
    throw ConstraintError("could not grow a tree within the depth cap");
}

GenomeTree seed_tree(BaselineModel m) {
    using T = GenomeTree;
    auto HS = [] { return T::leaf(LeafKind::HS); };
    auto HE = [] { return T::leaf(LeafKind::HE); };
    auto HC = [] { return T::leaf(LeafKind::HC); };
    switch (m) {
        case BaselineModel::MF:
            return T::unary(OpKind::Sum, T::binary(OpKind::Mul, HS(), HE()));
        case BaselineModel::MIRT:
            return T::unary(
                OpKind::Sigmoid,
                T::binary(OpKind::Add, T::unary(OpKind::FFN, HE()),
                          T::unary(OpKind::Sum, T::binary(OpKind::Mul, HC(), HS()))));
        case BaselineModel::IRT:
            return T::unary(
                OpKind::Sigmoid,
                T::binary(OpKind::Mul, T::unary(OpKind::FFN, HE()),
                          T::binary(OpKind::Add, T::unary(OpKind::FFN, HS()),
                                    T::unary(OpKind::Neg, T::unary(OpKind::FFN, HE())))));
        case BaselineModel::NCD:
            return T::binary(
                OpKind::Mul,
                T::binary(OpKind::Mul, HC(),
                          T::binary(OpKind::Add, T::unary(OpKind::Sigmoid, HS()),
                                    T::unary(OpKind::Neg, T::unary(OpKind::Sigmoid, HE())))),
                T::unary(OpKind::Sigmoid, T::unary(OpKind::FFN, HE())));
    }
    throw ConfigError("unknown baseline model");
}

std::string canonical_key(const GenomeTree& tree) {
    validate_tree(tree);
    std::function<std::string(int)> key = [&](int id) -> std::string {
        const TreeNode& n = tree.nodes[id];
        if (n.is_leaf) return std::string(leaf_name(n.leaf));
        if (arity(n.op) == 1) return std::string(op_name(n.op)) + "(" + key(n.child0) + ")";
        std::string a = key(n.child0), b = key(n.child1);
        if ((n.op == OpKind::Add || n.op == OpKind::Mul) && b < a) std::swap(a, b);
        return std::string(op_name(n.op)) + "(" + a + "," + b + ")";
    };
    return key(tree.root());
}

namespace {

struct KeyParser {
    const std::string& s;
    size_t pos = 0;

    std::string ident() {
        size_t start = pos;
        while (pos < s.size() && (std::isalnum((unsigned char)s[pos]) || s[pos] == '_')) ++pos;
        if (start == pos) throw StructuralError("bad key at position " + std::to_string(pos));
        return s.substr(start, pos - start);
    }

    void expect(char c) {
        if (pos >= s.size() || s[pos] != c)
            throw StructuralError("expected '" + std::string(1, c) + "' at position " +
                                  std::to_string(pos));
        ++pos;
    }

    GenomeTree node() {
        std::string name = ident();
        if (pos < s.size() && s[pos] == '(') {
            auto op = parse_op(name);
            if (!op) throw StructuralError("unknown operator: " + name);
            expect('(');
            GenomeTree a = node();
            if (arity(*op) == 2) {
                expect(',');
                GenomeTree b = node();
                expect(')');
                return GenomeTree::binary(*op, std::move(a), std::move(b));
            }
            expect(')');
            return GenomeTree::unary(*op, std::move(a));
        }
        return GenomeTree::leaf(parse_leaf(name));
    }
};

}  // namespace

GenomeTree parse_key(const std::string& key) {
    KeyParser p{key};
    GenomeTree t = p.node();
    if (p.pos != key.size()) throw StructuralError("trailing characters in key");
    validate_tree(t);
    return t;
}

std::string to_json(const GenomeTree& tree) {
    validate_tree(tree);
    std::function<nlohmann::json(int)> conv = [&](int id) -> nlohmann::json {
        const TreeNode& n = tree.nodes[id];
        if (n.is_leaf) return nlohmann::json{{"leaf", leaf_name(n.leaf)}};
        nlohmann::json children = nlohmann::json::array();
        children.push_back(conv(n.child0));
        if (n.child1 >= 0) children.push_back(conv(n.child1));
        return nlohmann::json{{"op", op_name(n.op)}, {"children", std::move(children)}};
    };
    return conv(tree.root()).dump(2);
}

GenomeTree from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("tree JSON parse error: ") + e.what());
    }
    std::function<GenomeTree(const nlohmann::json&)> conv =
        [&](const nlohmann::json& node) -> GenomeTree {
        if (node.contains("leaf")) return GenomeTree::leaf(parse_leaf(node["leaf"].get<std::string>()));
        if (!node.contains("op") || !node.contains("children"))
            throw StructuralError("tree JSON node needs \"op\"+\"children\" or \"leaf\"");
        auto op = parse_op(node["op"].get<std::string>());
        if (!op) throw StructuralError("unknown operator: " + node["op"].get<std::string>());
        const auto& ch = node["children"];
        if (int(ch.size()) != arity(*op))
            throw StructuralError("operator " + std::string(op_name(*op)) + " expects " +
                                  std::to_string(arity(*op)) + " children");
        if (arity(*op) == 1) return GenomeTree::unary(*op, conv(ch[0]));
        return GenomeTree::binary(*op, conv(ch[0]), conv(ch[1]));
    };
    GenomeTree t = conv(j);
    validate_tree(t);
    return t;
}

std::string to_dot(const GenomeTree& tree) {
    validate_tree(tree);
    std::ostringstream os;
    os << "digraph tree {\n";
    os << "  rankdir=BT;\n";
    for (int i = 0; i < tree.num_nodes(); ++i) {
        const TreeNode& n = tree.nodes[i];
        if (n.is_leaf) {
            os << "  n" << i << " [label=\"" << leaf_name(n.leaf) << "\", shape=triangle];\n";
        } else {
            const char* color = arity(n.op) == 1 ? "palegreen" : "orange";
            os << "  n" << i << " [label=\"" << op_name(n.op)
               << "\", shape=ellipse, style=filled, fillcolor=" << color << "];\n";
        }
    }
    for (int i = 0; i < tree.num_nodes(); ++i) {
        const TreeNode& n = tree.nodes[i];
        if (n.is_leaf) continue;
        os << "  n" << n.child0 << " -> n" << i << ";\n";
        if (n.child1 >= 0) os << "  n" << n.child1 << " -> n" << i << ";\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace cdnas

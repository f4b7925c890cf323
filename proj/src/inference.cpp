#include "sfxb/inference.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "sfxb/errors.hpp"

namespace sfxb {

PartialModel save_partial(const Forest &forest, const std::set<int> &owned_globals,
                          const std::map<int, std::uint32_t> &owner_of, std::uint32_t party_id,
                          bool is_active) {
    PartialModel pm;
    pm.party_id = party_id;
    pm.is_active = is_active;
    pm.learning_rate = forest.learning_rate;
    pm.base_score = forest.base_score;
    pm.tree_weights = forest.tree_weights;
    for (const Tree &tree : forest.trees) {
        PartialTree pt;
        for (const TreeNode &node : tree.nodes) {
            PartialNode out;
            out.node_id = node.node_id;
            if (node.is_leaf) {
                out.is_leaf = true;
                out.has_weight = is_active;
                if (is_active) out.weight = node.weight;
            } else {
                out.left = node.left;
                out.right = node.right;
                auto it = owner_of.find(node.feature);
                if (it == owner_of.end())
                    throw Error("unknown feature ownership for column " +
                                std::to_string(node.feature));
                out.owner = it->second;
                out.owned = owned_globals.count(node.feature) > 0;
                if (out.owned) {
                    out.feature = node.feature;
                    out.feature_name = node.feature_name;
                    out.threshold = node.threshold;
                }
            }
            pt.nodes.push_back(std::move(out));
        }
        pm.trees.push_back(std::move(pt));
    }
    return pm;
}

std::string serialize_partial(const PartialModel &pm) {
    std::ostringstream out;
    out << "sfxb_partial v1\n";
    out << "party " << pm.party_id << " role " << (pm.is_active ? "active" : "passive") << "\n";
    out << "learning_rate " << format_double(pm.learning_rate) << "\n";
    out << "base_score " << format_double(pm.base_score) << "\n";
    out << "trees " << pm.trees.size() << "\n";
    for (std::size_t t = 0; t < pm.trees.size(); ++t) {
        const PartialTree &tree = pm.trees[t];
        out << "tree " << t << " weight " << format_double(pm.tree_weights[t]) << " nodes "
            << tree.nodes.size() << "\n";
        for (const PartialNode &n : tree.nodes) {
            if (n.is_leaf) {
                out << "n " << n.node_id << " leaf w "
                    << (n.has_weight ? format_double(n.weight) : "nan") << "\n";
            } else if (n.owned) {
                out << "n " << n.node_id << " split f " << escape_name(n.feature_name) << " g "
                    << n.feature << " t " << format_double(n.threshold) << " l " << n.left << " r "
                    << n.right << "\n";
            } else {
                out << "n " << n.node_id << " split o " << n.owner << " t nan l " << n.left
                    << " r " << n.right << "\n";
            }
        }
    }
    out << "end\n";
    return out.str();
}

namespace {

std::vector<std::string> split_tokens(const std::string &line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_num(const std::string &tok) {
    const char *begin = tok.c_str();
    char *end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + tok.size()) throw ParseError("bad number '" + tok + "' in partial file");
    return v;
}

std::uint64_t parse_uint(const std::string &tok) {
    const char *begin = tok.c_str();
    char *end = nullptr;
    unsigned long long v = std::strtoull(begin, &end, 10);
    if (end != begin + tok.size() || tok.empty() || tok[0] == '-')
        throw ParseError("bad integer '" + tok + "' in partial file");
    return v;
}

struct LineReader {
    std::istringstream in;
    explicit LineReader(const std::string &text) : in(text) {}
    std::string next() {
        std::string line;
        if (!std::getline(in, line)) throw ParseError("unexpected end of partial file");
        return line;
    }
};

} // namespace

PartialModel parse_partial(const std::string &text) {
    LineReader lines(text);
    if (lines.next() != "sfxb_partial v1") throw ParseError("bad header line in partial file");

    PartialModel pm;
    {
        auto toks = split_tokens(lines.next());
        if (toks.size() != 4 || toks[0] != "party" || toks[2] != "role" ||
            (toks[3] != "active" && toks[3] != "passive"))
            throw ParseError("bad party line in partial file");
        pm.party_id = static_cast<std::uint32_t>(parse_uint(toks[1]));
        pm.is_active = toks[3] == "active";
    }
    {
        auto toks = split_tokens(lines.next());
        if (toks.size() != 2 || toks[0] != "learning_rate")
            throw ParseError("bad learning_rate line in partial file");
        pm.learning_rate = parse_num(toks[1]);
    }
    {
        auto toks = split_tokens(lines.next());
        if (toks.size() != 2 || toks[0] != "base_score")
            throw ParseError("bad base_score line in partial file");
        pm.base_score = parse_num(toks[1]);
    }
    std::uint64_t n_trees;
    {
        auto toks = split_tokens(lines.next());
        if (toks.size() != 2 || toks[0] != "trees")
            throw ParseError("bad trees line in partial file");
        n_trees = parse_uint(toks[1]);
    }
    for (std::uint64_t t = 0; t < n_trees; ++t) {
        auto toks = split_tokens(lines.next());
        if (toks.size() != 6 || toks[0] != "tree" || toks[2] != "weight" || toks[4] != "nodes")
            throw ParseError("bad tree line in partial file");
        if (parse_uint(toks[1]) != t) throw ParseError("tree index out of order in partial file");
        pm.tree_weights.push_back(parse_num(toks[3]));
        std::uint64_t n_nodes = parse_uint(toks[5]);
        PartialTree tree;
        for (std::uint64_t i = 0; i < n_nodes; ++i) {
            auto nt = split_tokens(lines.next());
            if (nt.size() < 4 || nt[0] != "n") throw ParseError("bad node line in partial file");
            PartialNode node;
            node.node_id = static_cast<std::uint32_t>(parse_uint(nt[1]));
            if (nt[2] == "leaf") {
                if (nt.size() != 5 || nt[3] != "w")
                    throw ParseError("bad leaf line in partial file");
                node.is_leaf = true;
                double w = parse_num(nt[4]);
                node.has_weight = !std::isnan(w);
                if (node.has_weight) node.weight = w;
            } else if (nt[2] == "split" && nt[3] == "f") {
                if (nt.size() != 13 || nt[5] != "g" || nt[7] != "t" || nt[9] != "l" ||
                    nt[11] != "r")
                    throw ParseError("bad owned split line in partial file");
                node.owned = true;
                node.feature_name = unescape_name(nt[4]);
                node.feature = static_cast<int>(parse_uint(nt[6]));
                node.threshold = parse_num(nt[8]);
                node.left = static_cast<std::uint32_t>(parse_uint(nt[10]));
                node.right = static_cast<std::uint32_t>(parse_uint(nt[12]));
            } else if (nt[2] == "split" && nt[3] == "o") {
                if (nt.size() != 11 || nt[5] != "t" || nt[6] != "nan" || nt[7] != "l" ||
                    nt[9] != "r")
                    throw ParseError("bad foreign split line in partial file");
                node.owner = static_cast<std::uint32_t>(parse_uint(nt[4]));
                node.left = static_cast<std::uint32_t>(parse_uint(nt[8]));
                node.right = static_cast<std::uint32_t>(parse_uint(nt[10]));
            } else {
                throw ParseError("unknown node kind in partial file");
            }
            tree.nodes.push_back(std::move(node));
        }
        for (const PartialNode &node : tree.nodes)
            if (!node.is_leaf && (node.left >= tree.nodes.size() || node.right >= tree.nodes.size()))
                throw ParseError("child id out of range in partial file");
        pm.trees.push_back(std::move(tree));
    }
    if (lines.next() != "end") throw ParseError("missing end marker in partial file");
    return pm;
}

namespace {

// Topology fields every party must agree on.
void check_consistent(const std::vector<PartialModel> &partials) {
    if (partials.empty()) throw Error("federated predict needs at least one partial model");
    const PartialModel &ref = partials[0];
    int active_count = 0;
    for (const PartialModel &pm : partials) {
        if (pm.is_active) active_count++;
        if (pm.trees.size() != ref.trees.size() || pm.tree_weights != ref.tree_weights ||
            pm.learning_rate != ref.learning_rate || pm.base_score != ref.base_score)
            throw Error("partial models disagree on forest shape");
        for (std::size_t t = 0; t < pm.trees.size(); ++t) {
            if (pm.trees[t].nodes.size() != ref.trees[t].nodes.size())
                throw Error("partial models disagree on forest shape");
            for (std::size_t i = 0; i < pm.trees[t].nodes.size(); ++i) {
                const PartialNode &a = pm.trees[t].nodes[i];
                const PartialNode &b = ref.trees[t].nodes[i];
                if (a.node_id != b.node_id || a.is_leaf != b.is_leaf ||
                    (!a.is_leaf && (a.left != b.left || a.right != b.right)))
                    throw Error("partial models disagree on forest shape");
            }
        }
    }
    if (active_count != 1) throw Error("federated predict needs exactly one active partial model");
}

} // namespace

std::vector<double> federated_predict_margins(const std::vector<PartialModel> &partials,
                                              const std::vector<PartyShard> &shards) {
    check_consistent(partials);
    const PartialModel *active = nullptr;
    for (const PartialModel &pm : partials)
        if (pm.is_active) active = &pm;

    std::vector<const PartyShard *> shard_of(partials.size(), nullptr);
    for (std::size_t p = 0; p < partials.size(); ++p) {
        for (const PartyShard &s : shards)
            if (static_cast<std::uint32_t>(s.party_id) == partials[p].party_id) shard_of[p] = &s;
        if (!shard_of[p])
            throw Error("no shard for party " + std::to_string(partials[p].party_id));
    }
    const std::size_t n_rows = shards[0].data.n_rows;
    for (const PartyShard &s : shards) {
        if (s.data.n_rows != n_rows) throw Error("shards disagree on row count");
        if (s.data.row_ids != shards[0].data.row_ids)
            throw Error("shards disagree on row ids");
    }

    const std::size_t n_trees = active->trees.size();
    // Each party resolves direction bits for the nodes it owns.
    // directions[t][node_id] -> per-row left bit, present iff some party owns it.
    std::vector<std::vector<std::vector<std::uint8_t>>> directions(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t)
        directions[t].resize(active->trees[t].nodes.size());

    for (std::size_t t = 0; t < n_trees; ++t) {
        for (std::size_t i = 0; i < active->trees[t].nodes.size(); ++i) {
            if (active->trees[t].nodes[i].is_leaf) continue;
            int owners = 0;
            for (std::size_t p = 0; p < partials.size(); ++p) {
                const PartialNode &node = partials[p].trees[t].nodes[i];
                if (!node.owned) continue;
                owners++;
                if (owners > 1)
                    throw Error("duplicate split ownership at node " + std::to_string(i));
                int ci = shard_of[p]->data.feature_index(node.feature_name);
                if (ci < 0)
                    throw Error("shard for party " + std::to_string(partials[p].party_id) +
                                " is missing feature '" + node.feature_name + "'");
                const std::vector<double> &col =
                    shard_of[p]->data.features[static_cast<std::size_t>(ci)].values;
                std::vector<std::uint8_t> bits(n_rows);
                for (std::size_t r = 0; r < n_rows; ++r)
                    bits[r] = col[r] < node.threshold ? 1 : 0;
                directions[t][i] = std::move(bits);
            }
            if (owners == 0) throw Error("uncovered split node " + std::to_string(i) +
                                         " in tree " + std::to_string(t));
        }
    }

    // The label holder composes root-to-leaf paths from the exchanged bits.
    std::vector<double> margins(n_rows);
    const double base = std::log(active->base_score / (1.0 - active->base_score));
    for (std::size_t r = 0; r < n_rows; ++r) {
        double m = base;
        for (std::size_t t = 0; t < n_trees; ++t) {
            const std::vector<PartialNode> &nodes = active->trees[t].nodes;
            const PartialNode *node = &nodes[0];
            while (!node->is_leaf) {
                const std::vector<std::uint8_t> &bits = directions[t][node->node_id];
                node = &nodes[bits[r] ? node->left : node->right];
            }
            if (!node->has_weight)
                throw Error("leaf weights unavailable: active partial model lacks them");
            m += active->learning_rate * active->tree_weights[t] * node->weight;
        }
        margins[r] = m;
    }
    return margins;
}

std::vector<double> federated_predict(const std::vector<PartialModel> &partials,
                                      const std::vector<PartyShard> &shards) {
    std::vector<double> out = federated_predict_margins(partials, shards);
    for (double &m : out) m = sigmoid(m);
    return out;
}

} // namespace sfxb

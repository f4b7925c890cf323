#include "sfxb/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sfxb/errors.hpp"
#include "sfxb/fixed_point.hpp"

namespace sfxb {

GHPair Histogram::feature_total(std::size_t fi) const {
    GHPair t;
    for (const GHPair &b : feats.at(fi)) t += b;
    return t;
}

void Histogram::add_slotwise(const Histogram &other) {
    if (n_bins != other.n_bins || feature_ids != other.feature_ids)
        throw Error("histogram shape mismatch in slotwise add");
    for (std::size_t f = 0; f < feats.size(); ++f)
        for (int b = 0; b < n_bins; ++b) feats[f][b] += other.feats[f][b];
}

Histogram concat_histograms(const std::vector<Histogram> &parts) {
    Histogram out;
    if (parts.empty()) return out;
    out.n_bins = parts[0].n_bins;
    std::vector<std::pair<int, std::pair<const Histogram *, std::size_t>>> order;
    for (const Histogram &p : parts) {
        if (p.n_bins != out.n_bins) throw Error("histogram bin-count mismatch in concat");
        for (std::size_t f = 0; f < p.feature_ids.size(); ++f)
            order.push_back({p.feature_ids[f], {&p, f}});
    }
    std::sort(order.begin(), order.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (order[i].first == order[i - 1].first)
            throw Error("duplicate feature id in histogram concat");
    for (const auto &[fid, src] : order) {
        out.feature_ids.push_back(fid);
        out.feats.push_back(src.first->feats[src.second]);
    }
    return out;
}

void TrainParams::validate() const {
    if (num_trees < 1) throw ConfigError("num_trees", "must be >= 1");
    if (max_depth < 1) throw ConfigError("max_depth", "must be >= 1");
    if (max_bin < 2 || max_bin > 65536) throw ConfigError("max_bin", "must be in [2, 65536]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate", "must be a positive finite value");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("lambda", "must be a non-negative finite value");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
        throw ConfigError("gamma", "must be a non-negative finite value");
    if (!(base_score > 0.0) || !(base_score < 1.0))
        throw ConfigError("base_score", "must lie strictly between 0 and 1");
    if (gh_scale_bits < 8 || gh_scale_bits > 52)
        throw ConfigError("gh_scale_bits", "must be in [8, 52]");
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

double Forest::base_margin() const { return std::log(base_score / (1.0 - base_score)); }

std::vector<GHPair> compute_gradients(std::span<const std::uint8_t> labels,
                                      std::span<const double> current_probabilities) {
    if (labels.size() != current_probabilities.size())
        throw Error("compute_gradients: label/probability size mismatch");
    std::vector<GHPair> gh(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double p = current_probabilities[i];
        gh[i].g = p - static_cast<double>(labels[i]);
        gh[i].h = p * (1.0 - p);
    }
    return gh;
}

void quantize_gradients(std::vector<GHPair> &gh, unsigned scale_bits) {
    for (GHPair &p : gh) {
        p.g = fixed_round(p.g, scale_bits);
        p.h = fixed_round(p.h, scale_bits);
    }
}

Histogram build_histogram(const std::vector<std::vector<std::uint16_t>> &bins,
                          const std::vector<int> &feature_ids,
                          std::span<const GHPair> gh,
                          std::span<const std::uint32_t> node_rows,
                          int n_bins) {
    if (bins.size() != feature_ids.size())
        throw Error("build_histogram: bin column/feature id count mismatch");
    Histogram h;
    h.n_bins = n_bins;
    h.feature_ids = feature_ids;
    h.feats.assign(bins.size(), std::vector<GHPair>(static_cast<std::size_t>(n_bins)));
    for (std::size_t f = 0; f < bins.size(); ++f) {
        const std::vector<std::uint16_t> &col = bins[f];
        std::vector<GHPair> &slots = h.feats[f];
        for (std::uint32_t r : node_rows) {
            std::uint16_t b = col[r];
            if (b >= static_cast<std::uint16_t>(n_bins))
                throw Error("build_histogram: bin index out of range");
            slots[b] += gh[r];
        }
    }
    return h;
}

namespace {
inline double gain_term(double G, double H, double lambda) {
    double d = H + lambda;
    return d > 0.0 ? G * G / d : 0.0;
}
} // namespace

std::optional<SplitDecision> find_best_split(const Histogram &histogram, double total_G,
                                             double total_H, const TrainParams &params) {
    const double parent = gain_term(total_G, total_H, params.lambda);
    SplitDecision best;
    best.gain = 0.0;
    bool found = false;
    for (std::size_t f = 0; f < histogram.feats.size(); ++f) {
        const std::vector<GHPair> &slots = histogram.feats[f];
        double GL = 0.0, HL = 0.0;
        for (int c = 0; c + 1 < histogram.n_bins; ++c) {
            GL += slots[c].g;
            HL += slots[c].h;
            double GR = total_G - GL;
            double HR = total_H - HL;
            double gain = 0.5 * (gain_term(GL, HL, params.lambda) +
                                 gain_term(GR, HR, params.lambda) - parent) -
                          params.gamma;
            if (gain > best.gain) {
                best.gain = gain;
                best.feature = histogram.feature_ids[f];
                best.bin = c;
                best.left = {GL, HL};
                best.right = {GR, HR};
                found = true;
            }
        }
    }
    if (!found) return std::nullopt;
    return best;
}

double leaf_weight(double G, double H, double lambda) {
    double d = H + lambda;
    if (!(d > 0.0)) throw Error("leaf_weight: H + lambda must be positive");
    return -G / d;
}

std::vector<std::uint32_t> route_left_rows(const std::vector<std::uint16_t> &bin_column,
                                           std::span<const std::uint32_t> node_rows,
                                           int cut_index) {
    std::vector<std::uint32_t> left;
    for (std::uint32_t r : node_rows)
        if (bin_column[r] <= static_cast<std::uint16_t>(cut_index)) left.push_back(r);
    return left;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
partition_rows(std::span<const std::uint32_t> node_rows,
               const std::vector<std::uint32_t> &left_rows) {
    std::vector<std::uint32_t> right;
    right.reserve(node_rows.size() - left_rows.size());
    std::size_t li = 0;
    for (std::uint32_t r : node_rows) {
        if (li < left_rows.size() && left_rows[li] == r)
            ++li;
        else
            right.push_back(r);
    }
    if (li != left_rows.size()) throw Error("partition_rows: left rows not a subset of node rows");
    return {left_rows, std::move(right)};
}

namespace {

struct NodeWork {
    int node_id;
    std::vector<std::uint32_t> rows;
    GHPair total;
};

} // namespace

std::pair<Tree, std::vector<double>> grow_tree(const std::vector<std::vector<std::uint16_t>> &bins,
                                               const std::vector<int> &feature_ids,
                                               const BinCuts &cuts,
                                               const std::vector<GHPair> &gh,
                                               const TrainParams &params) {
    const std::size_t n = gh.size();
    Tree tree;
    std::vector<double> row_value(n, 0.0);

    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    GHPair root_total;
    for (std::uint32_t r : all) root_total += gh[r];

    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].node_id = 0;
    std::vector<NodeWork> level;
    level.push_back(NodeWork{0, std::move(all), root_total});

    auto make_leaf = [&](NodeWork &w) {
        TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
        node.is_leaf = true;
        node.weight = leaf_weight(w.total.g, w.total.h, params.lambda);
        for (std::uint32_t r : w.rows) row_value[r] = node.weight;
    };

    for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
        std::vector<NodeWork> next;
        for (NodeWork &w : level) {
            Histogram hist = build_histogram(bins, feature_ids, gh, w.rows, params.max_bin);
            std::optional<SplitDecision> dec =
                find_best_split(hist, w.total.g, w.total.h, params);
            if (!dec) {
                make_leaf(w);
                continue;
            }
            std::size_t local =
                static_cast<std::size_t>(std::lower_bound(feature_ids.begin(), feature_ids.end(),
                                                          dec->feature) -
                                         feature_ids.begin());
            std::vector<std::uint32_t> left = route_left_rows(bins[local], w.rows, dec->bin);
            auto [lrows, rrows] = partition_rows(w.rows, left);

            int lid = static_cast<int>(tree.nodes.size());
            int rid = lid + 1;
            TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
            node.is_leaf = false;
            node.feature = dec->feature;
            node.feature_name = cuts.feature_names[static_cast<std::size_t>(local)];
            node.threshold = cuts.cuts[local][static_cast<std::size_t>(dec->bin)];
            node.left = lid;
            node.right = rid;
            tree.nodes.push_back(TreeNode{});
            tree.nodes.back().node_id = lid;
            tree.nodes.push_back(TreeNode{});
            tree.nodes.back().node_id = rid;
            next.push_back(NodeWork{lid, std::move(lrows), dec->left});
            next.push_back(NodeWork{rid, std::move(rrows), dec->right});
        }
        level = std::move(next);
    }
    for (NodeWork &w : level) make_leaf(w); // depth cap reached
    return {std::move(tree), std::move(row_value)};
}

Forest train_centralized(const DataMatrix &data, const TrainParams &params) {
    params.validate();
    if (!data.label) throw Error("train_centralized: dataset has no label column");
    BinCuts cuts = compute_all_cuts(data, params.max_bin);
    BinnedBlock binned = bin_all_columns(data, cuts);
    std::vector<int> feature_ids(data.features.size());
    std::iota(feature_ids.begin(), feature_ids.end(), 0);

    Forest forest;
    forest.learning_rate = params.learning_rate;
    forest.base_score = params.base_score;
    const double base = forest.base_margin();
    std::vector<double> margins(data.n_rows, base);
    std::vector<double> probs(data.n_rows);

    for (int t = 0; t < params.num_trees; ++t) {
        for (std::size_t i = 0; i < data.n_rows; ++i) probs[i] = sigmoid(margins[i]);
        std::vector<GHPair> gh = compute_gradients(*data.label, probs);
        quantize_gradients(gh, params.gh_scale_bits);
        auto [tree, row_value] = grow_tree(binned.bins, feature_ids, cuts, gh, params);
        forest.trees.push_back(std::move(tree));
        forest.tree_weights.push_back(1.0);
        for (std::size_t i = 0; i < data.n_rows; ++i)
            margins[i] += params.learning_rate * 1.0 * row_value[i];
    }
    return forest;
}

std::vector<double> predict_margins(const Forest &forest, const DataMatrix &data) {
    // Resolve each distinct feature name once.
    std::vector<const std::vector<double> *> columns; // by trained global id
    auto column_for = [&](const Tree &tree, const TreeNode &node) -> const std::vector<double> & {
        std::size_t idx = static_cast<std::size_t>(node.feature);
        if (idx < columns.size() && columns[idx]) return *columns[idx];
        int ci = data.feature_index(node.feature_name);
        if (ci < 0)
            throw Error("predict: dataset is missing feature '" + node.feature_name + "'");
        if (columns.size() <= idx) columns.resize(idx + 1, nullptr);
        columns[idx] = &data.features[static_cast<std::size_t>(ci)].values;
        (void)tree;
        return *columns[idx];
    };

    std::vector<double> margins(data.n_rows);
    const double base = forest.base_margin();
    for (std::size_t i = 0; i < data.n_rows; ++i) {
        double m = base;
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            const Tree &tree = forest.trees[t];
            const TreeNode *node = &tree.nodes[0];
            while (!node->is_leaf) {
                const std::vector<double> &col = column_for(tree, *node);
                node = &tree.nodes[static_cast<std::size_t>(
                    col[i] < node->threshold ? node->left : node->right)];
            }
            m += forest.learning_rate * forest.tree_weights[t] * node->weight;
        }
        margins[i] = m;
    }
    return margins;
}

std::vector<double> predict(const Forest &forest, const DataMatrix &data) {
    std::vector<double> margins = predict_margins(forest, data);
    for (double &m : margins) m = sigmoid(m);
    return margins;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string escape_name(const std::string &name) {
    static const char *hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : name) {
        if (c == '%' || c == ' ' || c < 0x21) {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

std::string unescape_name(const std::string &token) {
    std::string out;
    for (std::size_t i = 0; i < token.size(); ++i) {
        if (token[i] == '%') {
            if (i + 2 >= token.size()) throw ParseError("truncated escape in name token");
            auto nib = [](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                throw ParseError("bad hex digit in name token");
            };
            out.push_back(static_cast<char>(nib(token[i + 1]) * 16 + nib(token[i + 2])));
            i += 2;
        } else {
            out.push_back(token[i]);
        }
    }
    return out;
}

std::string serialize_forest(const Forest &forest) {
    std::ostringstream os;
    os << "sfxb_forest v1\n";
    os << "learning_rate " << format_double(forest.learning_rate) << "\n";
    os << "base_score " << format_double(forest.base_score) << "\n";
    os << "trees " << forest.trees.size() << "\n";
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const Tree &tree = forest.trees[t];
        os << "tree " << t << " weight " << format_double(forest.tree_weights[t]) << " nodes "
           << tree.nodes.size() << "\n";
        for (const TreeNode &n : tree.nodes) {
            if (n.is_leaf)
                os << "n " << n.node_id << " leaf w " << format_double(n.weight) << "\n";
            else
                os << "n " << n.node_id << " split f " << escape_name(n.feature_name) << " g "
                   << n.feature << " t " << format_double(n.threshold) << " l " << n.left << " r "
                   << n.right << "\n";
        }
    }
    os << "end\n";
    return os.str();
}

namespace {
std::vector<std::string> split_ws(const std::string &line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

double parse_num(const std::string &tok) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::invalid_argument &) {
        throw ParseError("expected a number, got '" + tok + "'");
    } catch (const std::out_of_range &) {
        throw ParseError("number out of range: '" + tok + "'");
    }
    if (used != tok.size()) throw ParseError("trailing characters in number '" + tok + "'");
    return v;
}

long parse_int(const std::string &tok) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::invalid_argument &) {
        throw ParseError("expected an integer, got '" + tok + "'");
    } catch (const std::out_of_range &) {
        throw ParseError("integer out of range: '" + tok + "'");
    }
    if (used != tok.size()) throw ParseError("trailing characters in integer '" + tok + "'");
    return v;
}
} // namespace

Forest parse_forest(const std::string &text) {
    std::istringstream is(text);
    std::string line;
    auto next_line = [&]() -> std::vector<std::string> {
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return split_ws(line);
        }
        throw ParseError("unexpected end of forest file");
    };

    std::vector<std::string> t = next_line();
    if (t.size() != 2 || t[0] != "sfxb_forest" || t[1] != "v1")
        throw ParseError("not a forest file (bad header line)");
    Forest forest;
    t = next_line();
    if (t.size() != 2 || t[0] != "learning_rate") throw ParseError("expected learning_rate line");
    forest.learning_rate = parse_num(t[1]);
    t = next_line();
    if (t.size() != 2 || t[0] != "base_score") throw ParseError("expected base_score line");
    forest.base_score = parse_num(t[1]);
    t = next_line();
    if (t.size() != 2 || t[0] != "trees") throw ParseError("expected trees line");
    long n_trees = parse_int(t[1]);
    if (n_trees < 0) throw ParseError("negative tree count");

    for (long ti = 0; ti < n_trees; ++ti) {
        t = next_line();
        if (t.size() != 6 || t[0] != "tree" || t[2] != "weight" || t[4] != "nodes")
            throw ParseError("expected tree header line");
        if (parse_int(t[1]) != ti) throw ParseError("tree index out of order");
        double w = parse_num(t[3]);
        long n_nodes = parse_int(t[5]);
        if (n_nodes < 1) throw ParseError("tree must have at least one node");
        Tree tree;
        tree.nodes.resize(static_cast<std::size_t>(n_nodes));
        for (long ni = 0; ni < n_nodes; ++ni) {
            t = next_line();
            if (t.size() < 3 || t[0] != "n") throw ParseError("expected node line");
            long id = parse_int(t[1]);
            if (id < 0 || id >= n_nodes) throw ParseError("node id out of range");
            TreeNode &node = tree.nodes[static_cast<std::size_t>(id)];
            node.node_id = static_cast<int>(id);
            if (t[2] == "leaf") {
                if (t.size() != 5 || t[3] != "w") throw ParseError("malformed leaf line");
                node.is_leaf = true;
                node.weight = parse_num(t[4]);
            } else if (t[2] == "split") {
                if (t.size() != 13 || t[3] != "f" || t[5] != "g" || t[7] != "t" || t[9] != "l" ||
                    t[11] != "r")
                    throw ParseError("malformed split line");
                node.is_leaf = false;
                node.feature_name = unescape_name(t[4]);
                node.feature = static_cast<int>(parse_int(t[6]));
                node.threshold = parse_num(t[8]);
                node.left = static_cast<int>(parse_int(t[10]));
                node.right = static_cast<int>(parse_int(t[12]));
                if (node.left < 0 || node.left >= n_nodes || node.right < 0 ||
                    node.right >= n_nodes)
                    throw ParseError("child id out of range");
            } else {
                throw ParseError("unknown node kind '" + t[2] + "'");
            }
        }
        forest.trees.push_back(std::move(tree));
        forest.tree_weights.push_back(w);
    }
    t = next_line();
    if (t.size() != 1 || t[0] != "end") throw ParseError("expected end line");
    return forest;
}

std::string forest_fingerprint(const Forest &forest) {
    std::string bytes = serialize_forest(forest);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double log_loss(std::span<const std::uint8_t> labels, std::span<const double> probs) {
    if (labels.size() != probs.size()) throw Error("log_loss: size mismatch");
    if (labels.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
        s += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return s / static_cast<double>(labels.size());
}

double accuracy(std::span<const std::uint8_t> labels, std::span<const double> probs) {
    if (labels.size() != probs.size()) throw Error("accuracy: size mismatch");
    if (labels.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if ((probs[i] >= 0.5 ? 1 : 0) == labels[i]) ++ok;
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

} // namespace sfxb

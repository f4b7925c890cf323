#include "sfxb/federation.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <numeric>
#include <set>

#include <json.hpp>

#include "sfxb/errors.hpp"

namespace sfxb {

const char *to_string(FedMode m) {
    switch (m) {
    case FedMode::horizontal: return "horizontal";
    case FedMode::vertical: return "vertical";
    case FedMode::cyclic: return "cyclic";
    case FedMode::bagging: return "bagging";
    }
    return "?";
}

PhaseTimes &PhaseTimes::operator+=(const PhaseTimes &o) {
    cuts += o.cuts;
    gradient += o.gradient;
    encrypt += o.encrypt;
    aggregate += o.aggregate;
    decrypt += o.decrypt;
    split += o.split;
    return *this;
}

void RoundTranscript::to_jsonl(std::ostream &out) const {
    for (const TranscriptEntry &e : entries) {
        nlohmann::json j{{"round", e.round},
                         {"sender", e.sender},
                         {"receiver", e.receiver},
                         {"kind", static_cast<int>(e.kind)},
                         {"n_bytes", e.bytes.size()},
                         {"counters",
                          {{"encryptions", e.sender_ops.encryptions},
                           {"ciphertext_additions", e.sender_ops.ciphertext_additions},
                           {"decryptions", e.sender_ops.decryptions},
                           {"bytes_transferred", e.sender_ops.bytes_transferred}}}};
        out << j.dump() << "\n";
    }
}

namespace {

struct Lap {
    std::chrono::steady_clock::time_point last = std::chrono::steady_clock::now();
    double tick() {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - last).count();
        last = now;
        return s;
    }
};

struct FedParty {
    std::string name;
    ProcRole role = ProcRole::peer;
    std::unique_ptr<EncryptionPlugin> plugin;
    OpCounters io; // bytes sent

    OpCounters ops() const {
        OpCounters t = plugin->counters();
        t.bytes_transferred += io.bytes_transferred;
        return t;
    }
};

std::unique_ptr<EncryptionPlugin> make_plugin(const PluginSpec &spec, const TrainParams &params,
                                              ProcRole role, std::uint64_t salt) {
    if (!spec.secure) return make_passthrough_plugin();
    if (spec.kp.pub.n == 0) throw Error("secure run requires a keypair");
    PaillierPluginConfig cfg = spec.cfg;
    cfg.scale_bits = params.gh_scale_bits;
    cfg.rng_seed = spec.cfg.rng_seed ^ (0x9E3779B97F4A7C15ull * (salt + 1));
    bool holds = role == ProcRole::active || role == ProcRole::peer;
    if (holds) return make_paillier_plugin(spec.kp, cfg);
    return make_paillier_plugin(spec.kp.pub, cfg);
}

// In-process transport honoring the processor-buffer contract: the receiver
// sees exactly the bytes the sender serialized, and every transfer lands in
// the transcript.
class Bus {
public:
    explicit Bus(RoundTranscript &t) : transcript_(t) {}
    std::uint32_t round = 0;

    ProcessorBuffer send(FedParty &from, const std::string &to, const ProcessorBuffer &buf) {
        std::string bytes = serialize_buffer(buf);
        from.io.bytes_transferred += bytes.size();
        transcript_.entries.push_back(
            TranscriptEntry{round, from.name, to, buf.kind, std::move(bytes), from.ops()});
        return parse_buffer(transcript_.entries.back().bytes);
    }

private:
    RoundTranscript &transcript_;
};

struct NodeWorkF {
    int node_id = 0;
    std::vector<std::uint32_t> rows;
    GHPair total;
};

double walk_tree_value(const Tree &tree, const DataMatrix &data, std::size_t row) {
    const TreeNode *node = &tree.nodes[0];
    while (!node->is_leaf) {
        int ci = data.feature_index(node->feature_name);
        if (ci < 0)
            throw Error("shard is missing feature '" + node->feature_name + "'");
        double v = data.features[static_cast<std::size_t>(ci)].values[row];
        node = &tree.nodes[static_cast<std::size_t>(v < node->threshold ? node->left : node->right)];
    }
    return node->weight;
}

void check_common_schema(const std::vector<PartyShard> &shards) {
    if (shards.empty()) throw Error("no parties");
    for (const PartyShard &s : shards) {
        if (!s.data.label) throw Error("every horizontal party needs the label column");
        if (s.data.n_rows == 0) throw Error("empty shard");
        if (s.data.features.size() != shards[0].data.features.size())
            throw Error("parties disagree on the feature schema");
        for (std::size_t f = 0; f < s.data.features.size(); ++f)
            if (s.data.features[f].name != shards[0].data.features[f].name)
                throw Error("parties disagree on the feature schema");
    }
    std::set<std::uint32_t> seen;
    for (const PartyShard &s : shards)
        for (std::uint32_t id : s.data.row_ids)
            if (!seen.insert(id).second) throw Error("shard overlap: row id appears twice");
}

OpCounters sum_ops(const std::vector<FedParty> &parties) {
    OpCounters t;
    for (const FedParty &p : parties) t += p.ops();
    return t;
}

void finish_result(FedResult &res, const std::vector<FedParty> &parties) {
    for (const FedParty &p : parties)
        res.parties.push_back(PartyReport{p.name, p.role, p.ops()});
    res.totals = sum_ops(parties);
}

} // namespace

// ---------------- horizontal histogram mode ----------------

FedResult run_horizontal_histogram(const std::vector<PartyShard> &shards,
                                   const TrainParams &params, const PluginSpec &plugin,
                                   const FedOptions &options) {
    params.validate();
    check_common_schema(shards);
    const std::size_t N = shards.size();
    const std::size_t J = shards[0].data.features.size();

    FedResult res;
    Bus bus(res.transcript);
    std::vector<FedParty> parties;
    for (std::size_t p = 0; p < N; ++p)
        parties.push_back(FedParty{"party" + std::to_string(shards[p].party_id), ProcRole::peer,
                                   make_plugin(plugin, params, ProcRole::peer, p), {}});
    parties.push_back(
        FedParty{"server", ProcRole::server, make_plugin(plugin, params, ProcRole::server, N), {}});
    FedParty &server = parties.back();

    Lap lap;

    // Quantile candidates travel to the server, merged cuts come back; every
    // party bins its local columns against the same global grid.
    std::vector<std::vector<std::vector<double>>> local_cands(N);
    for (std::size_t p = 0; p < N; ++p) {
        BinCuts own = compute_all_cuts(shards[p].data, params.max_bin);
        local_cands[p] = own.cuts;
        CutSyncPayload cs;
        cs.max_bin = static_cast<std::uint32_t>(params.max_bin);
        cs.has_values = true;
        for (std::size_t f = 0; f < J; ++f) {
            cs.feature_ids.push_back(static_cast<std::uint32_t>(f));
            cs.cuts.push_back(own.cuts[f]);
            cs.cut_counts.push_back(static_cast<std::uint32_t>(own.cuts[f].size()));
        }
        bus.send(parties[p], server.name, process_outbound(CallKind::allgather, cs, ProcRole::peer));
    }
    BinCuts merged;
    merged.max_bin = params.max_bin;
    for (std::size_t f = 0; f < J; ++f) {
        std::vector<std::vector<double>> lists;
        for (std::size_t p = 0; p < N; ++p) lists.push_back(local_cands[p][f]);
        merged.feature_names.push_back(shards[0].data.features[f].name);
        merged.cuts.push_back(merge_cut_candidates(lists, params.max_bin));
    }
    {
        CutSyncPayload cs;
        cs.max_bin = static_cast<std::uint32_t>(params.max_bin);
        cs.has_values = true;
        for (std::size_t f = 0; f < J; ++f) {
            cs.feature_ids.push_back(static_cast<std::uint32_t>(f));
            cs.cuts.push_back(merged.cuts[f]);
            cs.cut_counts.push_back(static_cast<std::uint32_t>(merged.cuts[f].size()));
        }
        ProcessorBuffer buf = process_outbound(CallKind::allgather, cs, ProcRole::server);
        for (std::size_t p = 0; p < N; ++p) bus.send(server, parties[p].name, buf);
    }

    std::vector<int> fids(J);
    std::iota(fids.begin(), fids.end(), 0);
    std::vector<BinnedBlock> bins(N);
    for (std::size_t p = 0; p < N; ++p) bins[p] = bin_all_columns(shards[p].data, merged);
    res.phases.cuts += lap.tick();

    // Per-party model state; all copies must stay byte-identical.
    std::vector<Forest> forests(N);
    std::vector<std::vector<double>> margins(N);
    for (std::size_t p = 0; p < N; ++p) {
        forests[p].learning_rate = params.learning_rate;
        forests[p].base_score = params.base_score;
        margins[p].assign(shards[p].data.n_rows, forests[p].base_margin());
    }

    OpCounters last_total = sum_ops(parties);
    for (int t = 0; t < params.num_trees; ++t) {
        bus.round = static_cast<std::uint32_t>(t);
        lap.tick();

        std::vector<std::vector<GHPair>> gh(N);
        for (std::size_t p = 0; p < N; ++p) {
            std::vector<double> probs(shards[p].data.n_rows);
            for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid(margins[p][i]);
            gh[p] = compute_gradients(*shards[p].data.label, probs);
            quantize_gradients(gh[p], params.gh_scale_bits);
        }
        res.phases.gradient += lap.tick();

        std::vector<Tree> trees(N);
        std::vector<std::vector<NodeWorkF>> levels(N);
        std::vector<std::vector<double>> row_value(N);
        for (std::size_t p = 0; p < N; ++p) {
            trees[p].nodes.push_back(TreeNode{});
            std::vector<std::uint32_t> all(shards[p].data.n_rows);
            std::iota(all.begin(), all.end(), 0u);
            levels[p].push_back(NodeWorkF{0, std::move(all), GHPair{}});
            row_value[p].assign(shards[p].data.n_rows, 0.0);
        }

        for (int depth = 0; depth < params.max_depth && !levels[0].empty(); ++depth) {
            const std::size_t n_nodes = levels[0].size();

            // each party: local histograms for the frontier, then encrypt
            auto build_one = [&](std::size_t p) {
                std::vector<std::pair<std::uint32_t, Histogram>> hists;
                for (const NodeWorkF &w : levels[p])
                    hists.emplace_back(static_cast<std::uint32_t>(w.node_id),
                                       build_histogram(bins[p].bins, fids, gh[p], w.rows,
                                                       params.max_bin));
                return parties[p].plugin->encrypt_histogram(hists);
            };
            std::vector<HistogramPayload> enc_parts(N);
            if (options.threaded) {
                std::vector<std::future<HistogramPayload>> futs;
                for (std::size_t p = 0; p < N; ++p)
                    futs.push_back(std::async(std::launch::async, build_one, p));
                for (std::size_t p = 0; p < N; ++p) enc_parts[p] = futs[p].get();
            } else {
                for (std::size_t p = 0; p < N; ++p) enc_parts[p] = build_one(p);
            }
            res.phases.encrypt += lap.tick();

            std::vector<HistogramPayload> at_server;
            for (std::size_t p = 0; p < N; ++p) {
                ProcessorBuffer buf =
                    process_outbound(CallKind::allreduce, enc_parts[p], ProcRole::peer);
                ProcessorBuffer recv = bus.send(parties[p], server.name, buf);
                at_server.push_back(std::get<HistogramPayload>(
                    process_inbound(recv, *server.plugin, ProcRole::server, false)));
            }
            HistogramPayload agg = server.plugin->add_histograms(at_server);
            ProcessorBuffer out = process_outbound(CallKind::allreduce, agg, ProcRole::server);
            res.phases.aggregate += lap.tick();

            std::vector<std::vector<std::pair<std::uint32_t, Histogram>>> plain(N);
            for (std::size_t p = 0; p < N; ++p) {
                ProcessorBuffer recv = bus.send(server, parties[p].name, out);
                Payload payload = process_inbound(recv, *parties[p].plugin, ProcRole::peer, false);
                plain[p] =
                    parties[p].plugin->decrypt_histogram(std::get<HistogramPayload>(payload));
            }
            res.phases.decrypt += lap.tick();

            // identical decisions at every party, each routing its own rows
            std::vector<std::vector<NodeWorkF>> next(N);
            for (std::size_t item = 0; item < n_nodes; ++item) {
                std::optional<SplitDecision> ref_dec;
                for (std::size_t p = 0; p < N; ++p) {
                    NodeWorkF &w = levels[p][item];
                    const Histogram &ghist = plain[p][item].second;
                    if (plain[p][item].first != static_cast<std::uint32_t>(w.node_id))
                        throw Error("internal: aggregated node order diverged");
                    if (depth == 0) w.total = ghist.feature_total(0);
                    std::optional<SplitDecision> dec =
                        find_best_split(ghist, w.total.g, w.total.h, params);
                    if (p == 0) {
                        ref_dec = dec;
                    } else if (dec.has_value() != ref_dec.has_value() ||
                               (dec && (dec->feature != ref_dec->feature ||
                                        dec->bin != ref_dec->bin))) {
                        throw Error("internal: parties diverged on a split decision");
                    }
                    Tree &tree = trees[p];
                    if (!dec) {
                        TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
                        node.is_leaf = true;
                        node.weight = leaf_weight(w.total.g, w.total.h, params.lambda);
                        for (std::uint32_t r : w.rows) row_value[p][r] = node.weight;
                        continue;
                    }
                    std::size_t local = static_cast<std::size_t>(dec->feature);
                    std::vector<std::uint32_t> left =
                        route_left_rows(bins[p].bins[local], w.rows, dec->bin);
                    auto [lrows, rrows] = partition_rows(w.rows, left);
                    int lid = static_cast<int>(tree.nodes.size());
                    int rid = lid + 1;
                    TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
                    node.is_leaf = false;
                    node.feature = dec->feature;
                    node.feature_name = merged.feature_names[local];
                    node.threshold = merged.cuts[local][static_cast<std::size_t>(dec->bin)];
                    node.left = lid;
                    node.right = rid;
                    tree.nodes.push_back(TreeNode{});
                    tree.nodes.back().node_id = lid;
                    tree.nodes.push_back(TreeNode{});
                    tree.nodes.back().node_id = rid;
                    next[p].push_back(NodeWorkF{lid, std::move(lrows), dec->left});
                    next[p].push_back(NodeWorkF{rid, std::move(rrows), dec->right});
                }
            }
            if (res.nodes_per_round.size() <= static_cast<std::size_t>(t))
                res.nodes_per_round.resize(static_cast<std::size_t>(t) + 1, 0);
            res.nodes_per_round[static_cast<std::size_t>(t)] +=
                static_cast<std::uint32_t>(n_nodes);
            for (std::size_t p = 0; p < N; ++p) levels[p] = std::move(next[p]);
            res.phases.split += lap.tick();
        }
        for (std::size_t p = 0; p < N; ++p) {
            for (NodeWorkF &w : levels[p]) {
                TreeNode &node = trees[p].nodes[static_cast<std::size_t>(w.node_id)];
                node.is_leaf = true;
                node.weight = leaf_weight(w.total.g, w.total.h, params.lambda);
                for (std::uint32_t r : w.rows) row_value[p][r] = node.weight;
            }
            levels[p].clear();
            forests[p].trees.push_back(trees[p]);
            forests[p].tree_weights.push_back(1.0);
            for (std::size_t i = 0; i < margins[p].size(); ++i)
                margins[p][i] += params.learning_rate * 1.0 * row_value[p][i];
        }
        res.phases.split += lap.tick();

        OpCounters now = sum_ops(parties);
        res.per_round.push_back(now - last_total);
        last_total = now;
    }

    std::string first = serialize_forest(forests[0]);
    for (std::size_t p = 1; p < N; ++p)
        if (serialize_forest(forests[p]) != first)
            throw Error("internal: party forests diverged");
    res.forest = std::move(forests[0]);
    res.rounds = static_cast<std::uint32_t>(params.num_trees);
    finish_result(res, parties);
    return res;
}

// ---------------- vertical histogram mode ----------------

FedResult run_vertical_histogram(const std::vector<PartyShard> &shards,
                                 const TrainParams &params, const PluginSpec &plugin,
                                 const FedOptions &options) {
    params.validate();
    if (shards.empty()) throw Error("no parties");
    std::size_t active_idx = shards.size();
    for (std::size_t p = 0; p < shards.size(); ++p) {
        if (shards[p].role == PartyRole::active) {
            if (active_idx != shards.size()) throw Error("multiple active parties");
            active_idx = p;
        } else if (shards[p].data.label) {
            throw Error("passive party holds the label column");
        }
    }
    if (active_idx == shards.size()) throw Error("no active party");
    if (!shards[active_idx].data.label) throw Error("active party lacks the label column");
    const std::size_t n = shards[active_idx].data.n_rows;
    for (const PartyShard &s : shards) {
        if (s.data.n_rows != n || s.data.row_ids != shards[active_idx].data.row_ids)
            throw Error("vertical shards must share identical row ids");
    }
    const std::size_t N = shards.size();

    FedResult res;
    Bus bus(res.transcript);
    std::vector<FedParty> parties;
    for (std::size_t p = 0; p < N; ++p) {
        ProcRole role = p == active_idx ? ProcRole::active : ProcRole::passive;
        parties.push_back(FedParty{"party" + std::to_string(shards[p].party_id), role,
                                   make_plugin(plugin, params, role, p), {}});
    }
    FedParty &active = parties[active_idx];

    Lap lap;

    // Every owner computes quantiles for its own columns over the full
    // population; only the bin counts are shared.
    std::vector<BinCuts> cuts(N);
    std::vector<BinnedBlock> bins(N);
    std::map<int, std::pair<std::size_t, std::size_t>> feature_home; // gid -> (party, local)
    for (std::size_t p = 0; p < N; ++p) {
        cuts[p] = compute_all_cuts(shards[p].data, params.max_bin);
        bins[p] = bin_all_columns(shards[p].data, cuts[p]);
        for (std::size_t f = 0; f < shards[p].owned_feature_globals.size(); ++f) {
            int gid = shards[p].owned_feature_globals[f];
            if (!feature_home.emplace(gid, std::make_pair(p, f)).second)
                throw Error("feature owned by two parties");
        }
        if (p != active_idx) {
            CutSyncPayload cs;
            cs.max_bin = static_cast<std::uint32_t>(params.max_bin);
            cs.has_values = false; // thresholds stay with the owner
            for (std::size_t f = 0; f < cuts[p].cuts.size(); ++f) {
                cs.feature_ids.push_back(
                    static_cast<std::uint32_t>(shards[p].owned_feature_globals[f]));
                cs.cut_counts.push_back(static_cast<std::uint32_t>(cuts[p].cuts[f].size()));
            }
            bus.send(parties[p], active.name,
                     process_outbound(CallKind::allgather, cs, ProcRole::passive));
        }
    }
    res.phases.cuts += lap.tick();

    Forest global;
    global.learning_rate = params.learning_rate;
    global.base_score = params.base_score;
    std::vector<double> margins(n, global.base_margin());

    OpCounters last_total = sum_ops(parties);
    for (int t = 0; t < params.num_trees; ++t) {
        bus.round = static_cast<std::uint32_t>(t);
        lap.tick();

        std::vector<double> probs(n);
        for (std::size_t i = 0; i < n; ++i) probs[i] = sigmoid(margins[i]);
        std::vector<GHPair> gh = compute_gradients(*shards[active_idx].data.label, probs);
        quantize_gradients(gh, params.gh_scale_bits);
        res.phases.gradient += lap.tick();

        // label holder encrypts and broadcasts the gradient pairs
        GhPayload gh_active = active.plugin->encrypt_gh(gh);
        res.phases.encrypt += lap.tick();
        std::vector<GhPayload> gh_at(N);
        gh_at[active_idx] = gh_active;
        {
            ProcessorBuffer buf =
                process_outbound(CallKind::allgather, gh_active, ProcRole::active);
            for (std::size_t p = 0; p < N; ++p) {
                if (p == active_idx) continue;
                ProcessorBuffer recv = bus.send(active, parties[p].name, buf);
                gh_at[p] = std::get<GhPayload>(
                    process_inbound(recv, *parties[p].plugin, ProcRole::passive, false));
            }
        }
        res.phases.aggregate += lap.tick();

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::vector<double> row_value(n, 0.0);
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0u);
        GHPair root_total;
        for (std::uint32_t r : all) root_total += gh[r];
        std::vector<NodeWorkF> level;
        level.push_back(NodeWorkF{0, std::move(all), root_total});

        for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
            std::vector<NodeRows> frontier;
            for (const NodeWorkF &w : level)
                frontier.push_back(NodeRows{static_cast<std::uint32_t>(w.node_id), w.rows});
            if (res.nodes_per_round.size() <= static_cast<std::size_t>(t))
                res.nodes_per_round.resize(static_cast<std::size_t>(t) + 1, 0);
            res.nodes_per_round[static_cast<std::size_t>(t)] +=
                static_cast<std::uint32_t>(frontier.size());

            // all parties (label holder included) accumulate over ciphertexts
            auto accumulate_one = [&](std::size_t p) {
                return parties[p].plugin->accumulate_rows(gh_at[p], bins[p].bins,
                                                          shards[p].owned_feature_globals,
                                                          frontier, params.max_bin);
            };
            std::vector<HistogramPayload> enc_parts(N);
            if (options.threaded) {
                std::vector<std::future<HistogramPayload>> futs;
                for (std::size_t p = 0; p < N; ++p)
                    futs.push_back(std::async(std::launch::async, accumulate_one, p));
                for (std::size_t p = 0; p < N; ++p) enc_parts[p] = futs[p].get();
            } else {
                for (std::size_t p = 0; p < N; ++p) enc_parts[p] = accumulate_one(p);
            }
            res.phases.aggregate += lap.tick();

            // feature owners ship their histograms to the label holder
            std::vector<std::vector<std::pair<std::uint32_t, Histogram>>> plain(N);
            for (std::size_t p = 0; p < N; ++p) {
                HistogramPayload at_active;
                if (p == active_idx) {
                    at_active = std::move(enc_parts[p]);
                } else {
                    ProcessorBuffer buf =
                        process_outbound(CallKind::allgather, enc_parts[p], ProcRole::passive);
                    ProcessorBuffer recv = bus.send(parties[p], active.name, buf);
                    at_active = std::get<HistogramPayload>(
                        process_inbound(recv, *active.plugin, ProcRole::active, false));
                }
                plain[p] = active.plugin->decrypt_histogram(at_active);
            }
            res.phases.decrypt += lap.tick();

            std::vector<NodeWorkF> next;
            std::vector<SplitSyncNode> level_splits;
            std::vector<std::pair<std::size_t, TreeSyncPayload>> level_routes; // (owner, routes)
            for (std::size_t item = 0; item < level.size(); ++item) {
                NodeWorkF &w = level[item];
                std::vector<Histogram> parts;
                for (std::size_t p = 0; p < N; ++p) {
                    if (plain[p][item].first != static_cast<std::uint32_t>(w.node_id))
                        throw Error("internal: histogram node order diverged");
                    parts.push_back(std::move(plain[p][item].second));
                }
                Histogram hist = concat_histograms(parts);
                std::optional<SplitDecision> dec =
                    find_best_split(hist, w.total.g, w.total.h, params);
                SplitSyncNode sync;
                sync.node_id = static_cast<std::uint32_t>(w.node_id);
                if (!dec) {
                    sync.is_split = false;
                    level_splits.push_back(sync);
                    TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
                    node.is_leaf = true;
                    node.weight = leaf_weight(w.total.g, w.total.h, params.lambda);
                    for (std::uint32_t r : w.rows) row_value[r] = node.weight;
                    continue;
                }
                auto [owner, local] = feature_home.at(dec->feature);
                sync.is_split = true;
                sync.owner = static_cast<std::uint32_t>(shards[owner].party_id);
                sync.feature = static_cast<std::uint32_t>(dec->feature);
                sync.cut_index = static_cast<std::uint32_t>(dec->bin);
                level_splits.push_back(sync);

                // the owner routes: left rows are broadcast, thresholds are not
                std::vector<std::uint32_t> left =
                    route_left_rows(bins[owner].bins[local], w.rows, dec->bin);
                TreeSyncPayload routes;
                routes.flavor = TreeSyncPayload::Flavor::node_routes;
                routes.node_id = static_cast<std::uint32_t>(w.node_id);
                routes.rows = left;
                level_routes.emplace_back(owner, std::move(routes));

                auto [lrows, rrows] = partition_rows(w.rows, left);
                int lid = static_cast<int>(tree.nodes.size());
                int rid = lid + 1;
                TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
                node.is_leaf = false;
                node.feature = dec->feature;
                node.feature_name = cuts[owner].feature_names[local];
                node.threshold = cuts[owner].cuts[local][static_cast<std::size_t>(dec->bin)];
                node.left = lid;
                node.right = rid;
                tree.nodes.push_back(TreeNode{});
                tree.nodes.back().node_id = lid;
                tree.nodes.push_back(TreeNode{});
                tree.nodes.back().node_id = rid;
                next.push_back(NodeWorkF{lid, std::move(lrows), dec->left});
                next.push_back(NodeWorkF{rid, std::move(rrows), dec->right});
            }

            // split decisions to everyone, then owner route broadcasts
            {
                TreeSyncPayload ts;
                ts.flavor = TreeSyncPayload::Flavor::split_decisions;
                ts.splits = level_splits;
                ProcessorBuffer buf = process_outbound(CallKind::allgather, ts, ProcRole::active);
                for (std::size_t p = 0; p < N; ++p)
                    if (p != active_idx) bus.send(active, parties[p].name, buf);
            }
            for (auto &[owner, routes] : level_routes) {
                ProcessorBuffer buf =
                    process_outbound(CallKind::allgather, routes, parties[owner].role);
                for (std::size_t p = 0; p < N; ++p)
                    if (p != owner) bus.send(parties[owner], parties[p].name, buf);
            }
            level = std::move(next);
            res.phases.split += lap.tick();
        }
        for (NodeWorkF &w : level) {
            TreeNode &node = tree.nodes[static_cast<std::size_t>(w.node_id)];
            node.is_leaf = true;
            node.weight = leaf_weight(w.total.g, w.total.h, params.lambda);
            for (std::uint32_t r : w.rows) row_value[r] = node.weight;
        }
        global.trees.push_back(std::move(tree));
        global.tree_weights.push_back(1.0);
        for (std::size_t i = 0; i < n; ++i)
            margins[i] += params.learning_rate * 1.0 * row_value[i];
        res.phases.split += lap.tick();

        OpCounters now = sum_ops(parties);
        res.per_round.push_back(now - last_total);
        last_total = now;
    }

    // each party keeps only what it is entitled to
    std::map<int, std::uint32_t> owner_of;
    for (const auto &[gid, home] : feature_home)
        owner_of[gid] = static_cast<std::uint32_t>(shards[home.first].party_id);
    for (std::size_t p = 0; p < N; ++p) {
        std::set<int> owned(shards[p].owned_feature_globals.begin(),
                            shards[p].owned_feature_globals.end());
        res.partials.push_back(save_partial(global, owned, owner_of,
                                            static_cast<std::uint32_t>(shards[p].party_id),
                                            p == active_idx));
    }
    res.forest = std::move(global);
    res.rounds = static_cast<std::uint32_t>(params.num_trees);
    finish_result(res, parties);
    return res;
}

// ---------------- tree modes: cyclic and bagging ----------------

namespace {

struct TreeModeParty {
    BinCuts cuts;
    BinnedBlock bins;
    std::vector<double> margins;
};

std::vector<TreeModeParty> setup_tree_mode(const std::vector<PartyShard> &shards,
                                           const TrainParams &params) {
    std::vector<TreeModeParty> out;
    for (const PartyShard &s : shards) {
        TreeModeParty tp;
        tp.cuts = compute_all_cuts(s.data, params.max_bin);
        tp.bins = bin_all_columns(s.data, tp.cuts);
        double base = std::log(params.base_score / (1.0 - params.base_score));
        tp.margins.assign(s.data.n_rows, base);
        out.push_back(std::move(tp));
    }
    return out;
}

// Apply trees [from, end) of the shared forest to one party's margins.
void apply_new_trees(const Forest &forest, std::size_t from, const PartyShard &shard,
                     std::vector<double> &margins) {
    for (std::size_t t = from; t < forest.trees.size(); ++t)
        for (std::size_t i = 0; i < shard.data.n_rows; ++i)
            margins[i] += forest.learning_rate * forest.tree_weights[t] *
                          walk_tree_value(forest.trees[t], shard.data, i);
}

} // namespace

FedResult run_cyclic(const std::vector<PartyShard> &shards, const TrainParams &params,
                     const FedOptions &options) {
    params.validate();
    check_common_schema(shards);
    if (options.trees_per_round < 1) throw Error("trees_per_round must be >= 1");
    const std::size_t N = shards.size();

    FedResult res;
    Bus bus(res.transcript);
    std::vector<FedParty> parties;
    for (std::size_t p = 0; p < N; ++p)
        parties.push_back(FedParty{"party" + std::to_string(shards[p].party_id), ProcRole::peer,
                                   make_passthrough_plugin(), {}});

    Lap lap;
    std::vector<TreeModeParty> state = setup_tree_mode(shards, params);
    res.phases.cuts += lap.tick();

    Forest global;
    global.learning_rate = params.learning_rate;
    global.base_score = params.base_score;
    std::vector<int> fids(shards[0].data.features.size());
    std::iota(fids.begin(), fids.end(), 0);

    OpCounters last_total = sum_ops(parties);
    std::uint32_t round = 0;
    while (global.trees.size() < static_cast<std::size_t>(params.num_trees)) {
        bus.round = round;
        const std::size_t owner = round % N;
        lap.tick();

        std::size_t quota = std::min<std::size_t>(
            options.trees_per_round,
            static_cast<std::size_t>(params.num_trees) - global.trees.size());
        for (std::size_t j = 0; j < quota; ++j) {
            std::vector<double> probs(shards[owner].data.n_rows);
            for (std::size_t i = 0; i < probs.size(); ++i)
                probs[i] = sigmoid(state[owner].margins[i]);
            std::vector<GHPair> gh = compute_gradients(*shards[owner].data.label, probs);
            quantize_gradients(gh, params.gh_scale_bits);
            res.phases.gradient += lap.tick();
            auto [tree, row_value] =
                grow_tree(state[owner].bins.bins, fids, state[owner].cuts, gh, params);
            global.trees.push_back(std::move(tree));
            global.tree_weights.push_back(1.0);
            for (std::size_t i = 0; i < shards[owner].data.n_rows; ++i)
                state[owner].margins[i] += params.learning_rate * 1.0 * row_value[i];
            res.phases.split += lap.tick();
        }

        // forward the updated model to everyone else
        TreeSyncPayload ts;
        ts.flavor = TreeSyncPayload::Flavor::forest_text;
        ts.forest_text = serialize_forest(global);
        ProcessorBuffer buf = process_outbound(CallKind::allgather, ts, ProcRole::peer);
        for (std::size_t p = 0; p < N; ++p) {
            if (p == owner) continue;
            ProcessorBuffer recv = bus.send(parties[owner], parties[p].name, buf);
            Payload inbound = process_inbound(recv, *parties[p].plugin, ProcRole::peer, false);
            const auto &payload = std::get<TreeSyncPayload>(inbound);
            Forest shared = parse_forest(payload.forest_text);
            apply_new_trees(shared, shared.trees.size() - quota, shards[p],
                            state[p].margins);
        }
        res.phases.aggregate += lap.tick();

        OpCounters now = sum_ops(parties);
        res.per_round.push_back(now - last_total);
        last_total = now;
        round++;
    }

    res.forest = std::move(global);
    res.rounds = round;
    finish_result(res, parties);
    return res;
}

FedResult run_bagging(const std::vector<PartyShard> &shards, const TrainParams &params,
                      const FedOptions &options) {
    params.validate();
    check_common_schema(shards);
    const std::size_t N = shards.size();

    FedResult res;
    Bus bus(res.transcript);
    std::vector<FedParty> parties;
    for (std::size_t p = 0; p < N; ++p)
        parties.push_back(FedParty{"party" + std::to_string(shards[p].party_id), ProcRole::peer,
                                   make_passthrough_plugin(), {}});
    parties.push_back(FedParty{"server", ProcRole::server, make_passthrough_plugin(), {}});
    FedParty &server = parties.back();

    Lap lap;
    std::vector<TreeModeParty> state = setup_tree_mode(shards, params);
    res.phases.cuts += lap.tick();

    Forest global;
    global.learning_rate = params.learning_rate;
    global.base_score = params.base_score;
    std::vector<int> fids(shards[0].data.features.size());
    std::iota(fids.begin(), fids.end(), 0);
    const double layer_weight = 1.0 / static_cast<double>(N);

    OpCounters last_total = sum_ops(parties);
    for (int round = 0; round < params.num_trees; ++round) {
        bus.round = static_cast<std::uint32_t>(round);
        lap.tick();

        // every party boosts one tree from the shared model
        auto grow_one = [&](std::size_t p) {
            std::vector<double> probs(shards[p].data.n_rows);
            for (std::size_t i = 0; i < probs.size(); ++i)
                probs[i] = sigmoid(state[p].margins[i]);
            std::vector<GHPair> gh = compute_gradients(*shards[p].data.label, probs);
            quantize_gradients(gh, params.gh_scale_bits);
            return grow_tree(state[p].bins.bins, fids, state[p].cuts, gh, params).first;
        };
        std::vector<Tree> submitted(N);
        if (options.threaded) {
            std::vector<std::future<Tree>> futs;
            for (std::size_t p = 0; p < N; ++p)
                futs.push_back(std::async(std::launch::async, grow_one, p));
            for (std::size_t p = 0; p < N; ++p) submitted[p] = futs[p].get();
        } else {
            for (std::size_t p = 0; p < N; ++p) submitted[p] = grow_one(p);
        }
        res.phases.gradient += lap.tick();

        // submissions travel as single-tree forests, appended in party order
        std::size_t before = global.trees.size();
        for (std::size_t p = 0; p < N; ++p) {
            Forest single;
            single.learning_rate = params.learning_rate;
            single.base_score = params.base_score;
            single.trees.push_back(submitted[p]);
            single.tree_weights.push_back(layer_weight);
            TreeSyncPayload ts;
            ts.flavor = TreeSyncPayload::Flavor::forest_text;
            ts.forest_text = serialize_forest(single);
            ProcessorBuffer recv = bus.send(
                parties[p], server.name,
                process_outbound(CallKind::allgather, ts, ProcRole::peer));
            Payload inbound = process_inbound(recv, *server.plugin, ProcRole::server, false);
            const auto &payload = std::get<TreeSyncPayload>(inbound);
            Forest parsed = parse_forest(payload.forest_text);
            global.trees.push_back(std::move(parsed.trees[0]));
            global.tree_weights.push_back(parsed.tree_weights[0]);
        }

        TreeSyncPayload ts;
        ts.flavor = TreeSyncPayload::Flavor::forest_text;
        ts.forest_text = serialize_forest(global);
        ProcessorBuffer buf = process_outbound(CallKind::allgather, ts, ProcRole::server);
        for (std::size_t p = 0; p < N; ++p) {
            ProcessorBuffer recv = bus.send(server, parties[p].name, buf);
            Payload inbound = process_inbound(recv, *parties[p].plugin, ProcRole::peer, false);
            const auto &payload = std::get<TreeSyncPayload>(inbound);
            Forest shared = parse_forest(payload.forest_text);
            apply_new_trees(shared, before, shards[p], state[p].margins);
        }
        res.phases.aggregate += lap.tick();

        OpCounters now = sum_ops(parties);
        res.per_round.push_back(now - last_total);
        last_total = now;
    }

    res.forest = std::move(global);
    res.rounds = static_cast<std::uint32_t>(params.num_trees);
    finish_result(res, parties);
    return res;
}

} // namespace sfxb

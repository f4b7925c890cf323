#include "sfxb/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "sfxb/errors.hpp"
#include "sfxb/he.hpp"

namespace sfxb {

using nlohmann::json;

namespace {

json counters_json(const OpCounters &c) {
    return json{{"encryptions", c.encryptions},
                {"ciphertext_additions", c.ciphertext_additions},
                {"decryptions", c.decryptions},
                {"bytes_transferred", c.bytes_transferred}};
}

OpCounters counters_from(const json &j) {
    OpCounters c;
    c.encryptions = j.at("encryptions").get<std::uint64_t>();
    c.ciphertext_additions = j.at("ciphertext_additions").get<std::uint64_t>();
    c.decryptions = j.at("decryptions").get<std::uint64_t>();
    c.bytes_transferred = j.at("bytes_transferred").get<std::uint64_t>();
    return c;
}

json phases_json(const PhaseTimes &p) {
    return json{{"cuts", p.cuts},         {"gradient", p.gradient}, {"encrypt", p.encrypt},
                {"aggregate", p.aggregate}, {"decrypt", p.decrypt},   {"split", p.split}};
}

PhaseTimes phases_from(const json &j) {
    PhaseTimes p;
    p.cuts = j.at("cuts").get<double>();
    p.gradient = j.at("gradient").get<double>();
    p.encrypt = j.at("encrypt").get<double>();
    p.aggregate = j.at("aggregate").get<double>();
    p.decrypt = j.at("decrypt").get<double>();
    p.split = j.at("split").get<double>();
    return p;
}

} // namespace

std::string report_to_json(const RunReport &r) {
    json j;
    j["mode"] = r.mode;
    j["plugin"] = r.plugin;
    j["params"] = {{"num_trees", r.params.num_trees},
                   {"max_depth", r.params.max_depth},
                   {"max_bin", r.params.max_bin},
                   {"learning_rate", r.params.learning_rate},
                   {"lambda", r.params.lambda},
                   {"gamma", r.params.gamma},
                   {"base_score", r.params.base_score},
                   {"gh_scale_bits", r.params.gh_scale_bits}};
    j["dataset"] = {{"rows", r.n_rows}, {"features", r.n_features}, {"parties", r.n_parties}};
    j["phases"] = phases_json(r.phases);
    j["counters"] = counters_json(r.counters);
    j["per_round"] = json::array();
    for (const OpCounters &c : r.per_round) j["per_round"].push_back(counters_json(c));
    j["nodes_per_round"] = r.nodes_per_round;
    j["fingerprint"] = r.fingerprint;
    j["metrics"] = {{"train_logloss", r.metrics.train_logloss},
                    {"train_accuracy", r.metrics.train_accuracy}};
    return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ParseError(std::string("bad report json: ") + e.what());
    }
    try {
        RunReport r;
        r.mode = j.at("mode").get<std::string>();
        r.plugin = j.at("plugin").get<std::string>();
        const json &p = j.at("params");
        r.params.num_trees = p.at("num_trees").get<int>();
        r.params.max_depth = p.at("max_depth").get<int>();
        r.params.max_bin = p.at("max_bin").get<int>();
        r.params.learning_rate = p.at("learning_rate").get<double>();
        r.params.lambda = p.at("lambda").get<double>();
        r.params.gamma = p.at("gamma").get<double>();
        r.params.base_score = p.at("base_score").get<double>();
        r.params.gh_scale_bits = p.at("gh_scale_bits").get<unsigned>();
        const json &d = j.at("dataset");
        r.n_rows = d.at("rows").get<std::uint32_t>();
        r.n_features = d.at("features").get<std::uint32_t>();
        r.n_parties = d.at("parties").get<std::uint32_t>();
        r.phases = phases_from(j.at("phases"));
        r.counters = counters_from(j.at("counters"));
        for (const json &c : j.at("per_round")) r.per_round.push_back(counters_from(c));
        r.nodes_per_round = j.at("nodes_per_round").get<std::vector<std::uint32_t>>();
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.metrics.train_logloss = j.at("metrics").at("train_logloss").get<double>();
        r.metrics.train_accuracy = j.at("metrics").at("train_accuracy").get<double>();
        return r;
    } catch (const json::exception &e) {
        throw ParseError(std::string("bad report json: ") + e.what());
    }
}

namespace {

PluginSpec plugin_spec_for(const RunConfig &cfg) {
    PluginSpec spec;
    if (cfg.security.plugin == PluginKind::passthrough) return spec;
    spec.secure = true;
    std::string dir = cfg.security.key_dir;
    if (const char *env = std::getenv("SFXB_KEY_DIR"); env && *env) dir = env;
    if (dir.empty())
        throw ConfigError("security.key_dir",
                          "paillier plugin needs a key directory (or SFXB_KEY_DIR)");
    spec.kp = parse_private_key(read_text_file(dir + "/" + cfg.security.key_name + ".priv"));
    return spec;
}

} // namespace

TrainOutput run_training(const RunConfig &cfg) {
    DataMatrix data = load_dataset(cfg.dataset);
    std::vector<PartyShard> shards = make_shards(data, cfg);
    PluginSpec spec = plugin_spec_for(cfg);
    FedOptions options;
    options.threaded = cfg.threaded;
    options.trees_per_round = cfg.mode.trees_per_round;

    TrainOutput out;
    switch (cfg.mode.mode) {
    case RunMode::centralized: {
        auto start = std::chrono::steady_clock::now();
        out.forest = train_centralized(data, cfg.train);
        out.report.phases.split =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        break;
    }
    case RunMode::horizontal: {
        FedResult res = run_horizontal_histogram(shards, cfg.train, spec, options);
        out.forest = std::move(res.forest);
        out.transcript = std::move(res.transcript);
        out.report.phases = res.phases;
        out.report.counters = res.totals;
        out.report.per_round = std::move(res.per_round);
        out.report.nodes_per_round = std::move(res.nodes_per_round);
        break;
    }
    case RunMode::vertical: {
        FedResult res = run_vertical_histogram(shards, cfg.train, spec, options);
        out.forest = std::move(res.forest);
        out.partials = std::move(res.partials);
        out.transcript = std::move(res.transcript);
        out.report.phases = res.phases;
        out.report.counters = res.totals;
        out.report.per_round = std::move(res.per_round);
        out.report.nodes_per_round = std::move(res.nodes_per_round);
        break;
    }
    case RunMode::cyclic: {
        FedResult res = run_cyclic(shards, cfg.train, options);
        out.forest = std::move(res.forest);
        out.transcript = std::move(res.transcript);
        out.report.phases = res.phases;
        out.report.counters = res.totals;
        out.report.per_round = std::move(res.per_round);
        break;
    }
    case RunMode::bagging: {
        FedResult res = run_bagging(shards, cfg.train, options);
        out.forest = std::move(res.forest);
        out.transcript = std::move(res.transcript);
        out.report.phases = res.phases;
        out.report.counters = res.totals;
        out.report.per_round = std::move(res.per_round);
        break;
    }
    }

    out.report.mode = to_string(cfg.mode.mode);
    out.report.plugin = cfg.security.plugin == PluginKind::paillier ? "paillier" : "passthrough";
    out.report.params = cfg.train;
    out.report.n_rows = static_cast<std::uint32_t>(data.n_rows);
    out.report.n_features = static_cast<std::uint32_t>(data.features.size());
    out.report.n_parties = static_cast<std::uint32_t>(shards.size());
    out.report.fingerprint = forest_fingerprint(out.forest);
    std::vector<double> probs = predict(out.forest, data);
    out.report.metrics.train_logloss = log_loss(*data.label, probs);
    out.report.metrics.train_accuracy = accuracy(*data.label, probs);
    return out;
}

std::vector<std::string> forest_diff(const Forest &a, const Forest &b, double leaf_tolerance) {
    std::vector<std::string> diff;
    auto emit = [&](const std::string &line) { diff.push_back(line); };

    if (a.learning_rate != b.learning_rate)
        emit("learning_rate: " + format_double(a.learning_rate) + " vs " +
             format_double(b.learning_rate));
    if (a.base_score != b.base_score)
        emit("base_score: " + format_double(a.base_score) + " vs " +
             format_double(b.base_score));
    if (a.trees.size() != b.trees.size()) {
        emit("tree count: " + std::to_string(a.trees.size()) + " vs " +
             std::to_string(b.trees.size()));
        return diff;
    }
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        std::string at = "tree " + std::to_string(t);
        if (a.tree_weights[t] != b.tree_weights[t])
            emit(at + " weight: " + format_double(a.tree_weights[t]) + " vs " +
                 format_double(b.tree_weights[t]));
        const Tree &ta = a.trees[t];
        const Tree &tb = b.trees[t];
        if (ta.nodes.size() != tb.nodes.size()) {
            emit(at + " node count: " + std::to_string(ta.nodes.size()) + " vs " +
                 std::to_string(tb.nodes.size()));
            continue;
        }
        for (std::size_t i = 0; i < ta.nodes.size(); ++i) {
            const TreeNode &na = ta.nodes[i];
            const TreeNode &nb = tb.nodes[i];
            std::string nat = at + " node " + std::to_string(i);
            if (na.is_leaf != nb.is_leaf) {
                emit(nat + ": leaf vs split");
                continue;
            }
            if (na.is_leaf) {
                if (std::abs(na.weight - nb.weight) > leaf_tolerance)
                    emit(nat + " leaf weight: " + format_double(na.weight) + " vs " +
                         format_double(nb.weight));
            } else {
                if (na.feature != nb.feature || na.feature_name != nb.feature_name)
                    emit(nat + " split feature: " + na.feature_name + " vs " + nb.feature_name);
                else if (na.threshold != nb.threshold)
                    emit(nat + " threshold: " + format_double(na.threshold) + " vs " +
                         format_double(nb.threshold));
                if (na.left != nb.left || na.right != nb.right)
                    emit(nat + " children: (" + std::to_string(na.left) + "," +
                         std::to_string(na.right) + ") vs (" + std::to_string(nb.left) + "," +
                         std::to_string(nb.right) + ")");
            }
        }
    }
    return diff;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

BenchRow bench_variant(const RunConfig &cfg, int repeats) {
    std::vector<PhaseTimes> samples;
    OpCounters counters;
    for (int i = 0; i < repeats; ++i) {
        TrainOutput out = run_training(cfg);
        samples.push_back(out.report.phases);
        counters = out.report.counters;
    }
    auto collect = [&](double PhaseTimes::*field) {
        std::vector<double> v;
        for (const PhaseTimes &s : samples) v.push_back(s.*field);
        return median_of(std::move(v));
    };
    BenchRow row;
    row.label = std::string(to_string(cfg.mode.mode)) + "/" +
                (cfg.security.plugin == PluginKind::paillier ? "paillier" : "passthrough");
    row.phases.cuts = collect(&PhaseTimes::cuts);
    row.phases.gradient = collect(&PhaseTimes::gradient);
    row.phases.encrypt = collect(&PhaseTimes::encrypt);
    row.phases.aggregate = collect(&PhaseTimes::aggregate);
    row.phases.decrypt = collect(&PhaseTimes::decrypt);
    row.phases.split = collect(&PhaseTimes::split);
    row.counters = counters;
    row.total_seconds = row.phases.total();
    return row;
}

} // namespace

BenchResult run_bench(const RunConfig &cfg, int repeats) {
    if (repeats < 1) throw Error("repeats must be >= 1");
    BenchResult out;
    out.rows.push_back(bench_variant(cfg, repeats));

    bool histogram_mode =
        cfg.mode.mode == RunMode::horizontal || cfg.mode.mode == RunMode::vertical;
    if (histogram_mode) {
        RunConfig twin = cfg;
        twin.security.plugin = cfg.security.plugin == PluginKind::paillier
                                   ? PluginKind::passthrough
                                   : PluginKind::paillier;
        out.rows.push_back(bench_variant(twin, repeats));
        double secure = 0, plain = 0;
        for (const BenchRow &row : out.rows) {
            if (row.label.ends_with("paillier")) secure = row.total_seconds;
            else plain = row.total_seconds;
        }
        if (plain > 0) out.overhead_ratio = secure / plain;
    }
    return out;
}

std::string bench_table(const BenchResult &b) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %9s %9s %9s %9s %9s %9s %9s %12s %12s %12s\n",
                  "run", "cuts", "gradient", "encrypt", "aggregate", "decrypt", "split",
                  "total", "enc_ops", "add_ops", "dec_ops");
    out << line;
    for (const BenchRow &r : b.rows) {
        std::snprintf(line, sizeof(line),
                      "%-24s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %12llu %12llu %12llu\n",
                      r.label.c_str(), r.phases.cuts, r.phases.gradient, r.phases.encrypt,
                      r.phases.aggregate, r.phases.decrypt, r.phases.split, r.total_seconds,
                      static_cast<unsigned long long>(r.counters.encryptions),
                      static_cast<unsigned long long>(r.counters.ciphertext_additions),
                      static_cast<unsigned long long>(r.counters.decryptions));
        out << line;
    }
    if (b.overhead_ratio > 0) {
        std::snprintf(line, sizeof(line), "encryption overhead ratio (secure/plain): %.2fx\n",
                      b.overhead_ratio);
        out << line;
    }
    return out.str();
}

std::string bench_to_json(const BenchResult &b) {
    json j;
    j["rows"] = json::array();
    for (const BenchRow &r : b.rows)
        j["rows"].push_back({{"label", r.label},
                             {"phases", phases_json(r.phases)},
                             {"counters", counters_json(r.counters)},
                             {"total_seconds", r.total_seconds}});
    j["overhead_ratio"] = b.overhead_ratio;
    return j.dump(2) + "\n";
}

} // namespace sfxb

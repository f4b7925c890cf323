#include "sfxb/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "sfxb/errors.hpp"

namespace sfxb {

const char *to_string(RunMode m) {
    switch (m) {
    case RunMode::centralized: return "centralized";
    case RunMode::horizontal: return "horizontal";
    case RunMode::vertical: return "vertical";
    case RunMode::cyclic: return "cyclic";
    case RunMode::bagging: return "bagging";
    }
    return "?";
}

namespace {

std::string trim(const std::string &s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long to_int(const std::string &field, const std::string &value) {
    try {
        std::size_t used = 0;
        long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception &) {
        throw ConfigError(field, "not an integer: '" + value + "'");
    }
}

double to_double(const std::string &field, const std::string &value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception &) {
        throw ConfigError(field, "not a number: '" + value + "'");
    }
}

bool to_bool(const std::string &field, const std::string &value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(field, "not a boolean: '" + value + "'");
}

} // namespace

RunConfig parse_run_config(const std::string &text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
            section = line.substr(1, line.size() - 2);
            if (section != "dataset" && section != "split" && section != "train" &&
                section != "mode" && section != "security")
                throw ConfigError(section, "unknown section");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        std::string field = section + "." + key;
        if (section.empty()) throw ConfigError(key, "key before any [section]");

        if (section == "dataset") {
            if (key == "kind") {
                if (value == "synthetic") cfg.dataset.kind = DataKind::synthetic;
                else if (value == "csv") cfg.dataset.kind = DataKind::csv;
                else throw ConfigError(field, "expected synthetic or csv");
            } else if (key == "rows") {
                long long n = to_int(field, value);
                if (n < 0) throw ConfigError(field, "need at least 2 rows");
                cfg.dataset.rows = static_cast<std::uint32_t>(n);
            }
            else if (key == "features") cfg.dataset.features = static_cast<int>(to_int(field, value));
            else if (key == "seed") cfg.dataset.seed = static_cast<std::uint32_t>(to_int(field, value));
            else if (key == "positive_rate") cfg.dataset.positive_rate = to_double(field, value);
            else if (key == "label_noise") cfg.dataset.label_noise = to_double(field, value);
            else if (key == "drift") cfg.dataset.drift = to_bool(field, value);
            else if (key == "path") cfg.dataset.path = value;
            else if (key == "label") cfg.dataset.label = value;
            else throw ConfigError(field, "unknown key");
        } else if (section == "split") {
            if (key == "parties") cfg.split.parties = static_cast<int>(to_int(field, value));
            else if (key == "active_party") cfg.split.active_party = static_cast<int>(to_int(field, value));
            else if (key == "scheme") {
                if (value == "alternating") cfg.split.scheme = VSplitScheme::alternating;
                else if (value == "contiguous") cfg.split.scheme = VSplitScheme::contiguous;
                else throw ConfigError(field, "expected alternating or contiguous");
            } else throw ConfigError(field, "unknown key");
        } else if (section == "train") {
            if (key == "num_trees") cfg.train.num_trees = static_cast<int>(to_int(field, value));
            else if (key == "max_depth") cfg.train.max_depth = static_cast<int>(to_int(field, value));
            else if (key == "max_bin") cfg.train.max_bin = static_cast<int>(to_int(field, value));
            else if (key == "learning_rate") cfg.train.learning_rate = to_double(field, value);
            else if (key == "lambda") cfg.train.lambda = to_double(field, value);
            else if (key == "gamma") cfg.train.gamma = to_double(field, value);
            else if (key == "base_score") cfg.train.base_score = to_double(field, value);
            else if (key == "gh_scale_bits") cfg.train.gh_scale_bits = static_cast<unsigned>(to_int(field, value));
            else if (key == "threads") cfg.threaded = to_bool(field, value);
            else throw ConfigError(field, "unknown key");
        } else if (section == "mode") {
            if (key == "mode") {
                if (value == "centralized") cfg.mode.mode = RunMode::centralized;
                else if (value == "horizontal") cfg.mode.mode = RunMode::horizontal;
                else if (value == "vertical") cfg.mode.mode = RunMode::vertical;
                else if (value == "cyclic") cfg.mode.mode = RunMode::cyclic;
                else if (value == "bagging") cfg.mode.mode = RunMode::bagging;
                else throw ConfigError(field, "unknown mode '" + value + "'");
            } else if (key == "trees_per_round")
                cfg.mode.trees_per_round = static_cast<int>(to_int(field, value));
            else throw ConfigError(field, "unknown key");
        } else if (section == "security") {
            if (key == "plugin") {
                if (value == "passthrough") cfg.security.plugin = PluginKind::passthrough;
                else if (value == "paillier") cfg.security.plugin = PluginKind::paillier;
                else throw ConfigError(field, "expected passthrough or paillier");
            } else if (key == "key_dir") cfg.security.key_dir = value;
            else if (key == "key_name") cfg.security.key_name = value;
            else throw ConfigError(field, "unknown key");
        }
    }
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (dataset.kind == DataKind::synthetic) {
        if (dataset.rows < 2) throw ConfigError("dataset.rows", "need at least 2 rows");
        if (dataset.rows > 1'000'000) throw ConfigError("dataset.rows", "more than 1000000 rows");
        if (dataset.features < 1) throw ConfigError("dataset.features", "need at least 1 feature");
        if (dataset.features > 10'000) throw ConfigError("dataset.features", "more than 10000 features");
        if (dataset.positive_rate <= 0.0 || dataset.positive_rate >= 1.0)
            throw ConfigError("dataset.positive_rate", "must be in (0, 1)");
        if (dataset.label_noise < 0.0 || dataset.label_noise > 0.5)
            throw ConfigError("dataset.label_noise", "must be in [0, 0.5]");
    } else if (dataset.path.empty()) {
        throw ConfigError("dataset.path", "csv datasets need a path");
    }
    if (split.parties < 1) throw ConfigError("split.parties", "need at least 1 party");
    if (mode.mode == RunMode::vertical &&
        (split.active_party < 1 || split.active_party > split.parties))
        throw ConfigError("split.active_party",
                          "must name one of the parties (1.." + std::to_string(split.parties) + ")");
    if (mode.trees_per_round < 1)
        throw ConfigError("mode.trees_per_round", "must be >= 1");
    try {
        train.validate();
    } catch (const Error &e) {
        throw ConfigError("train", e.what());
    }
    if (security.plugin == PluginKind::paillier && mode.mode == RunMode::centralized)
        throw ConfigError("security.plugin", "centralized training has no encryption boundary");
    if ((mode.mode == RunMode::cyclic || mode.mode == RunMode::bagging) &&
        security.plugin == PluginKind::paillier)
        throw ConfigError("security.plugin",
                          "tree-sharing modes exchange plaintext models; use passthrough");
}

RunConfig load_run_config(const std::string &path) {
    return parse_run_config(read_text_file(path));
}

DataMatrix synthesize(const DatasetConfig &cfg) {
    std::mt19937 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.5, 0.2);
    const std::size_t n = cfg.rows;
    const int J = cfg.features;

    DataMatrix m;
    m.n_rows = n;
    for (int f = 0; f < J; ++f) {
        Column col;
        col.name = "f" + std::to_string(f);
        col.values.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = f % 2 == 0 ? unit(rng) : gauss(rng);
            if (cfg.drift && f % 3 == 0)
                v += 0.8 * (static_cast<double>(i) / static_cast<double>(n) - 0.5);
            col.values.push_back(v);
        }
        m.features.push_back(std::move(col));
    }

    // hidden linear score; threshold at the requested positive rate
    std::vector<double> weight(static_cast<std::size_t>(J));
    std::normal_distribution<double> wdist(0.0, 1.0);
    for (double &w : weight) w = wdist(rng);
    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int f = 0; f < J; ++f)
            score[i] += weight[static_cast<std::size_t>(f)] *
                        m.features[static_cast<std::size_t>(f)].values[i];
    std::vector<double> sorted = score;
    std::size_t cut = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * (1.0 - cfg.positive_rate)));
    cut = std::min(cut, n - 1);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(cut), sorted.end());
    double threshold = sorted[cut];

    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool hot = score[i] >= threshold;
        if (unit(rng) < cfg.label_noise) hot = !hot;
        y[i] = hot ? 1 : 0;
    }
    m.label = std::move(y);
    m.label_name = "y";
    m.row_ids.resize(n);
    std::iota(m.row_ids.begin(), m.row_ids.end(), 0u);
    m.validate();
    return m;
}

DataMatrix load_dataset(const DatasetConfig &cfg) {
    if (cfg.kind == DataKind::synthetic) return synthesize(cfg);
    return load_csv(cfg.path, cfg.label);
}

std::vector<PartyShard> make_shards(const DataMatrix &data, const RunConfig &cfg) {
    const int P = cfg.split.parties;
    switch (cfg.mode.mode) {
    case RunMode::centralized: {
        PartyShard s;
        s.party_id = 0;
        s.role = PartyRole::peer;
        s.data = data;
        for (std::size_t g = 0; g < data.features.size(); ++g) {
            s.owned_feature_names.push_back(data.features[g].name);
            s.owned_feature_globals.push_back(static_cast<int>(g));
        }
        return {std::move(s)};
    }
    case RunMode::vertical: {
        if (static_cast<std::size_t>(P) > data.features.size())
            throw ConfigError("split.parties", "more parties than feature columns");
        std::map<int, std::set<std::string>> assign;
        for (int p = 1; p <= P; ++p) assign[p];
        const std::size_t J = data.features.size();
        for (std::size_t f = 0; f < J; ++f) {
            int p = cfg.split.scheme == VSplitScheme::alternating
                        ? static_cast<int>(f % static_cast<std::size_t>(P)) + 1
                        : static_cast<int>(f * static_cast<std::size_t>(P) / J) + 1;
            assign[p].insert(data.features[f].name);
        }
        return split_vertical(data, assign, cfg.split.active_party);
    }
    case RunMode::horizontal:
    case RunMode::cyclic:
    case RunMode::bagging:
        return split_horizontal(data, P);
    }
    throw Error("unreachable mode");
}

} // namespace sfxb

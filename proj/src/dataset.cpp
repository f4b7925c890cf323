#include "sfxb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sfxb/errors.hpp"

namespace sfxb {

const char *to_string(PartyRole r) {
    switch (r) {
    case PartyRole::active: return "active";
    case PartyRole::passive: return "passive";
    case PartyRole::peer: return "peer";
    }
    return "?";
}

int DataMatrix::feature_index(const std::string &name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return static_cast<int>(i);
    return -1;
}

void DataMatrix::validate() const {
    if (row_ids.size() != n_rows)
        throw Error("row_ids length " + std::to_string(row_ids.size()) +
                    " != n_rows " + std::to_string(n_rows));
    for (const auto &col : features) {
        if (col.values.size() != n_rows)
            throw Error("column '" + col.name + "' has length " +
                        std::to_string(col.values.size()) + ", expected " +
                        std::to_string(n_rows));
        for (std::size_t r = 0; r < col.values.size(); ++r)
            if (!std::isfinite(col.values[r]))
                throw Error("non-finite value at row " + std::to_string(r) +
                            ", column " + col.name);
    }
    if (label && label->size() != n_rows)
        throw Error("label length mismatch");
    std::set<std::uint32_t> seen(row_ids.begin(), row_ids.end());
    if (seen.size() != row_ids.size()) throw Error("duplicate row_ids");
}

namespace {

std::vector<std::string> split_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_cell(const std::string &cell, std::size_t row, const std::string &col) {
    std::string t = cell;
    // trim ASCII whitespace and a trailing CR from DOS line endings
    while (!t.empty() && (t.back() == '\r' || t.back() == ' ' || t.back() == '\t')) t.pop_back();
    std::size_t b = 0;
    while (b < t.size() && (t[b] == ' ' || t[b] == '\t')) ++b;
    t = t.substr(b);
    if (t.empty())
        throw Error("empty cell at row " + std::to_string(row) + ", column " + col);
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw Error("non-numeric cell '" + t + "' at row " + std::to_string(row) +
                    ", column " + col);
    if (!std::isfinite(v))
        throw Error("non-finite value at row " + std::to_string(row) + ", column " + col);
    return v;
}

} // namespace

std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

DataMatrix load_csv(const std::string &path, const std::string &label_column_name) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw Error("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_line(line);

    int label_col = -1;
    if (!label_column_name.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == label_column_name) label_col = static_cast<int>(i);
        if (label_col < 0)
            throw Error("unknown label column '" + label_column_name + "' in " + path);
    }

    DataMatrix m;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (static_cast<int>(i) != label_col) m.features.push_back({header[i], {}});
    if (label_col >= 0) {
        m.label.emplace();
        m.label_name = label_column_name;
    }

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw Error("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
        std::size_t f = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v = parse_cell(cells[i], row, header[i]);
            if (static_cast<int>(i) == label_col) {
                if (v != 0.0 && v != 1.0)
                    throw Error("label value " + cells[i] + " at row " + std::to_string(row) +
                                " not in {0,1}");
                m.label->push_back(static_cast<std::uint8_t>(v));
            } else {
                m.features[f++].values.push_back(v);
            }
        }
        ++row;
    }
    m.n_rows = row;
    m.row_ids.resize(row);
    for (std::size_t i = 0; i < row; ++i) m.row_ids[i] = static_cast<std::uint32_t>(i);
    m.validate();
    return m;
}

std::vector<PartyShard> split_vertical(const DataMatrix &data,
                                       const std::map<int, std::set<std::string>> &feature_assignment,
                                       int active_party) {
    if (!data.label) throw Error("split_vertical: input has no label");
    if (!feature_assignment.count(active_party))
        throw Error("split_vertical: active party " + std::to_string(active_party) +
                    " not in assignment");

    std::map<std::string, int> owner_of;
    for (const auto &[pid, names] : feature_assignment)
        for (const auto &name : names) {
            if (data.feature_index(name) < 0)
                throw Error("split_vertical: unknown feature '" + name + "'");
            if (owner_of.count(name))
                throw Error("split_vertical: feature '" + name + "' assigned to multiple parties");
            owner_of[name] = pid;
        }
    for (const auto &col : data.features)
        if (!owner_of.count(col.name))
            throw Error("split_vertical: feature '" + col.name + "' not assigned to any party");

    std::vector<PartyShard> shards;
    for (const auto &[pid, names] : feature_assignment) {
        PartyShard s;
        s.party_id = pid;
        s.role = (pid == active_party) ? PartyRole::active : PartyRole::passive;
        s.data.n_rows = data.n_rows;
        s.data.row_ids = data.row_ids;
        // keep the original column order within each shard
        for (std::size_t g = 0; g < data.features.size(); ++g) {
            if (names.count(data.features[g].name)) {
                s.data.features.push_back(data.features[g]);
                s.owned_feature_names.push_back(data.features[g].name);
                s.owned_feature_globals.push_back(static_cast<int>(g));
            }
        }
        if (pid == active_party) {
            s.data.label = data.label;
            s.data.label_name = data.label_name;
        }
        shards.push_back(std::move(s));
    }
    return shards;
}

std::vector<PartyShard> split_horizontal(const DataMatrix &data, int n_parties) {
    if (n_parties < 1) throw Error("split_horizontal: n_parties must be >= 1");
    if (static_cast<std::size_t>(n_parties) > data.n_rows)
        throw Error("split_horizontal: n_parties " + std::to_string(n_parties) +
                    " exceeds n_rows " + std::to_string(data.n_rows));

    std::size_t base = data.n_rows / n_parties;
    std::vector<PartyShard> shards;
    std::size_t start = 0;
    for (int p = 0; p < n_parties; ++p) {
        // remainder rows go to the last shard
        std::size_t count = (p == n_parties - 1) ? data.n_rows - start : base;
        PartyShard s;
        s.party_id = p;
        s.role = PartyRole::peer;
        s.data.n_rows = count;
        for (const auto &col : data.features) {
            Column c{col.name, std::vector<double>(col.values.begin() + start,
                                                   col.values.begin() + start + count)};
            s.data.features.push_back(std::move(c));
        }
        if (data.label) {
            s.data.label.emplace(data.label->begin() + start,
                                 data.label->begin() + start + count);
            s.data.label_name = data.label_name;
        }
        s.data.row_ids.assign(data.row_ids.begin() + start, data.row_ids.begin() + start + count);
        for (std::size_t g = 0; g < data.features.size(); ++g) {
            s.owned_feature_names.push_back(data.features[g].name);
            s.owned_feature_globals.push_back(static_cast<int>(g));
        }
        shards.push_back(std::move(s));
        start += count;
    }
    return shards;
}

std::vector<double> compute_cuts(const std::vector<double> &column_values, int max_bin) {
    if (column_values.empty()) throw Error("compute_cuts: empty column");
    if (max_bin < 2) throw Error("compute_cuts: max_bin must be >= 2");
    for (double v : column_values)
        if (!std::isfinite(v)) throw Error("compute_cuts: non-finite value");

    std::vector<double> sorted = column_values;
    std::sort(sorted.begin(), sorted.end());

    // unique values with cumulative row counts
    std::vector<double> uniq;
    std::vector<std::size_t> cum; // rows with value <= uniq[i]
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (uniq.empty() || sorted[i] != uniq.back()) {
            uniq.push_back(sorted[i]);
            cum.push_back(i + 1);
        } else {
            cum.back() = i + 1;
        }
    }
    if (uniq.size() < 2) return {};

    // candidate j = midpoint(uniq[j], uniq[j+1]) sits at rank cum[j] in the
    // sorted row distribution
    std::size_t n_cand = uniq.size() - 1;
    const double n = static_cast<double>(column_values.size());

    std::vector<double> cuts;
    for (int i = 1; i < max_bin; ++i) {
        double target = n * static_cast<double>(i) / static_cast<double>(max_bin);
        // nearest candidate rank; ties to the lower index
        auto it = std::lower_bound(cum.begin(), cum.begin() + n_cand, target);
        std::size_t best;
        if (it == cum.begin()) {
            best = 0;
        } else if (it == cum.begin() + n_cand) {
            best = n_cand - 1;
        } else {
            std::size_t hi = static_cast<std::size_t>(it - cum.begin());
            std::size_t lo = hi - 1;
            double d_lo = target - static_cast<double>(cum[lo]);
            double d_hi = static_cast<double>(cum[hi]) - target;
            best = (d_lo <= d_hi) ? lo : hi;
        }
        double cut = (uniq[best] + uniq[best + 1]) / 2.0;
        if (cuts.empty() || cut != cuts.back()) cuts.push_back(cut);
    }
    return cuts;
}

std::vector<double> merge_cut_candidates(const std::vector<std::vector<double>> &local_cut_lists,
                                         int max_bin) {
    if (max_bin < 2) throw Error("merge_cut_candidates: max_bin must be >= 2");
    std::vector<double> merged;
    for (const auto &list : local_cut_lists)
        merged.insert(merged.end(), list.begin(), list.end());
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());

    const std::size_t cap = static_cast<std::size_t>(max_bin - 1);
    if (merged.size() <= cap) return merged;

    // even stride over the union, keeping exactly cap elements
    std::vector<double> thinned;
    thinned.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        std::size_t idx = i * merged.size() / cap;
        thinned.push_back(merged[idx]);
    }
    thinned.erase(std::unique(thinned.begin(), thinned.end()), thinned.end());
    return thinned;
}

std::vector<std::uint16_t> bin_column(const std::vector<double> &values,
                                      const std::vector<double> &cuts) {
    std::vector<std::uint16_t> bins(values.size());
    for (std::size_t r = 0; r < values.size(); ++r) {
        // bin(v) = count of thresholds <= v
        auto it = std::upper_bound(cuts.begin(), cuts.end(), values[r]);
        bins[r] = static_cast<std::uint16_t>(it - cuts.begin());
    }
    return bins;
}

BinCuts compute_all_cuts(const DataMatrix &data, int max_bin) {
    BinCuts bc;
    bc.max_bin = max_bin;
    for (const auto &col : data.features) {
        bc.feature_names.push_back(col.name);
        bc.cuts.push_back(compute_cuts(col.values, max_bin));
    }
    return bc;
}

BinnedBlock bin_all_columns(const DataMatrix &data, const BinCuts &cuts) {
    BinnedBlock b;
    for (std::size_t f = 0; f < data.features.size(); ++f) {
        const auto &col = data.features[f];
        int ci = -1;
        for (std::size_t i = 0; i < cuts.feature_names.size(); ++i)
            if (cuts.feature_names[i] == col.name) ci = static_cast<int>(i);
        if (ci < 0) throw Error("bin_all_columns: no cuts for feature '" + col.name + "'");
        b.bins.push_back(bin_column(col.values, cuts.cuts[ci]));
    }
    return b;
}

} // namespace sfxb

#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sfxb {

struct Column {
    std::string name;
    std::vector<double> values;
};

// Dense feature table with an optional binary label. Row ids identify samples
// across shards; after a split they keep their original values.
struct DataMatrix {
    std::size_t n_rows = 0;
    std::vector<Column> features;
    std::optional<std::vector<std::uint8_t>> label; // values in {0,1}
    std::string label_name;
    std::vector<std::uint32_t> row_ids;

    std::size_t n_features() const { return features.size(); }
    int feature_index(const std::string &name) const; // -1 if absent
    void validate() const;
};

enum class PartyRole { active, passive, peer };

const char *to_string(PartyRole r);

struct PartyShard {
    int party_id = 0;
    PartyRole role = PartyRole::peer;
    DataMatrix data;
    std::vector<std::string> owned_feature_names;
    // Position of each owned feature in the original (joined) column order.
    // Aligned with data.features; global order is what makes federated split
    // finding reproduce the centralized feature scan.
    std::vector<int> owned_feature_globals;
};

// Per feature: strictly increasing thresholds, at most max_bin-1 of them.
// bin(v) = number of thresholds <= v, so bin indices live in [0, max_bin).
struct BinCuts {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> cuts; // aligned with feature_names
    int max_bin = 0;
};

// Binned view of a feature block. bins[f][r] is the bin index of row r for
// the f-th feature of the owning shard.
struct BinnedBlock {
    std::vector<std::vector<std::uint16_t>> bins;
};

DataMatrix load_csv(const std::string &path, const std::string &label_column_name);

// Whole-file text IO; throws Error on open/write failure.
std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &content);

std::vector<PartyShard> split_vertical(const DataMatrix &data,
                                       const std::map<int, std::set<std::string>> &feature_assignment,
                                       int active_party);

std::vector<PartyShard> split_horizontal(const DataMatrix &data, int n_parties);

std::vector<double> compute_cuts(const std::vector<double> &column_values, int max_bin);

std::vector<double> merge_cut_candidates(const std::vector<std::vector<double>> &local_cut_lists,
                                         int max_bin);

std::vector<std::uint16_t> bin_column(const std::vector<double> &values,
                                      const std::vector<double> &cuts);

// Cuts for every feature of a matrix, in column order.
BinCuts compute_all_cuts(const DataMatrix &data, int max_bin);

BinnedBlock bin_all_columns(const DataMatrix &data, const BinCuts &cuts);

} // namespace sfxb

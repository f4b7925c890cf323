#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfxb/dataset.hpp"

namespace sfxb {

struct GHPair {
    double g = 0.0; // first-order gradient
    double h = 0.0; // second-order gradient, >= 0 for logistic loss
    GHPair &operator+=(const GHPair &o) {
        g += o.g;
        h += o.h;
        return *this;
    }
    friend GHPair operator+(GHPair a, const GHPair &b) { return a += b; }
    friend bool operator==(const GHPair &a, const GHPair &b) { return a.g == b.g && a.h == b.h; }
};

// Per-feature, per-bin (G, H) sums for one tree node. Every feature vector
// has exactly n_bins slots; unused high bins stay zero. feature_ids are
// global column indices in ascending order — split finding scans them in
// that order, which is what makes federated and centralized decisions agree.
struct Histogram {
    int n_bins = 0;
    std::vector<int> feature_ids;
    std::vector<std::vector<GHPair>> feats;

    GHPair feature_total(std::size_t fi) const;
    void add_slotwise(const Histogram &other); // shapes must match
};

Histogram concat_histograms(const std::vector<Histogram> &parts);

struct SplitDecision {
    int feature = -1; // global feature index
    int bin = -1;     // cut index; threshold = cuts[feature][bin]
    double gain = 0.0;
    GHPair left, right; // child totals from the histogram prefix scan
};

struct TreeNode {
    int node_id = 0;
    bool is_leaf = false;
    // split fields
    int feature = -1;
    std::string feature_name;
    double threshold = 0.0;
    int left = -1, right = -1;
    // leaf field
    double weight = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes; // index == node_id, root at 0
};

struct Forest {
    std::vector<Tree> trees;
    std::vector<double> tree_weights; // per-tree multiplier, 1.0 unless bagging
    double learning_rate = 0.3;
    double base_score = 0.5;

    double base_margin() const;
};

struct TrainParams {
    int num_trees = 10;
    int max_depth = 5;
    int max_bin = 256;
    double learning_rate = 0.3;
    double lambda = 1.0; // L2
    double gamma = 0.0;  // min split gain
    double base_score = 0.5;
    // Fixed-point grid applied to per-sample gradients in every mode; keeps
    // plaintext and homomorphic accumulation bitwise interchangeable.
    unsigned gh_scale_bits = 40;

    void validate() const;
};

double sigmoid(double margin);

std::vector<GHPair> compute_gradients(std::span<const std::uint8_t> labels,
                                      std::span<const double> current_probabilities);

void quantize_gradients(std::vector<GHPair> &gh, unsigned scale_bits);

// Accumulate node rows into per-feature bins. `bins` holds one bin column per
// entry of `feature_ids` (global ids, ascending); gh is indexed by local row
// position, as are node_rows.
Histogram build_histogram(const std::vector<std::vector<std::uint16_t>> &bins,
                          const std::vector<int> &feature_ids,
                          std::span<const GHPair> gh,
                          std::span<const std::uint32_t> node_rows,
                          int n_bins);

std::optional<SplitDecision> find_best_split(const Histogram &histogram, double total_G,
                                             double total_H, const TrainParams &params);

double leaf_weight(double G, double H, double lambda);

// Rows of `node_rows` whose bin index is <= cut_index (equivalent to raw
// value < threshold), preserving ascending order.
std::vector<std::uint32_t> route_left_rows(const std::vector<std::uint16_t> &bin_column,
                                           std::span<const std::uint32_t> node_rows,
                                           int cut_index);

// Partition node_rows into (left, right) given the sorted left list.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
partition_rows(std::span<const std::uint32_t> node_rows,
               const std::vector<std::uint32_t> &left_rows);

// One boosting step: level-order growth over pre-binned columns. Returns the
// tree plus the fitted leaf value for every row (for margin updates).
std::pair<Tree, std::vector<double>> grow_tree(const std::vector<std::vector<std::uint16_t>> &bins,
                                               const std::vector<int> &feature_ids,
                                               const BinCuts &cuts, const std::vector<GHPair> &gh,
                                               const TrainParams &params);

Forest train_centralized(const DataMatrix &data, const TrainParams &params);

std::vector<double> predict(const Forest &forest, const DataMatrix &data);
std::vector<double> predict_margins(const Forest &forest, const DataMatrix &data);

// Stable text serialization; byte-identical for identical forests.
std::string serialize_forest(const Forest &forest);
Forest parse_forest(const std::string &text);

// FNV-1a over the canonical serialization, as a 16-hex-digit string.
std::string forest_fingerprint(const Forest &forest);

// Token escaping for names embedded in the text formats (space, %, control
// bytes become %XX).
std::string escape_name(const std::string &name);
std::string unescape_name(const std::string &token);
std::string format_double(double v); // shortest round-trip-stable form used in files

double log_loss(std::span<const std::uint8_t> labels, std::span<const double> probs);
double accuracy(std::span<const std::uint8_t> labels, std::span<const double> probs);

} // namespace sfxb

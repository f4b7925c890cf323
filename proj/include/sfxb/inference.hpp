#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sfxb/dataset.hpp"
#include "sfxb/gbdt.hpp"

namespace sfxb {

// One tree node as a single party sees it. Split nodes either materialize the
// threshold (the party owns the feature) or record only who does; leaf values
// exist only in the label holder's copy.
struct PartialNode {
    std::uint32_t node_id = 0;
    bool is_leaf = false;
    // split nodes
    bool owned = false;
    std::uint32_t owner = 0;
    int feature = -1;          // global column id, owned nodes only
    std::string feature_name;  // owned nodes only
    double threshold = 0.0;    // owned nodes only
    std::uint32_t left = 0, right = 0;
    // leaf nodes
    bool has_weight = false;
    double weight = 0.0;
};

struct PartialTree {
    std::vector<PartialNode> nodes;
};

struct PartialModel {
    std::uint32_t party_id = 0;
    bool is_active = false;
    double learning_rate = 0.3;
    double base_score = 0.5;
    std::vector<double> tree_weights;
    std::vector<PartialTree> trees;
};

// Mask a jointly-learned forest down to what one party is entitled to keep.
// owned_globals: global column ids this party holds; owner_of: global column
// id -> owning party for every feature the forest splits on.
PartialModel save_partial(const Forest &forest, const std::set<int> &owned_globals,
                          const std::map<int, std::uint32_t> &owner_of, std::uint32_t party_id,
                          bool is_active);

std::string serialize_partial(const PartialModel &pm);
PartialModel parse_partial(const std::string &text);

// Joint prediction over column-split shards: every party resolves directions
// for the split nodes it owns, the label holder stitches paths and sums leaf
// values. Bitwise equal to predict() on the unmasked forest.
std::vector<double> federated_predict_margins(const std::vector<PartialModel> &partials,
                                              const std::vector<PartyShard> &shards);
std::vector<double> federated_predict(const std::vector<PartialModel> &partials,
                                      const std::vector<PartyShard> &shards);

} // namespace sfxb

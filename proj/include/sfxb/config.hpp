#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "sfxb/dataset.hpp"
#include "sfxb/gbdt.hpp"

namespace sfxb {

enum class RunMode { centralized, horizontal, vertical, cyclic, bagging };
const char *to_string(RunMode m);

enum class DataKind { synthetic, csv };
enum class VSplitScheme { alternating, contiguous };
enum class PluginKind { passthrough, paillier };

// [dataset] — either a seeded generator or a CSV file on disk.
struct DatasetConfig {
    DataKind kind = DataKind::synthetic;
    // synthetic
    std::uint32_t rows = 600;
    int features = 8;
    std::uint32_t seed = 42;
    double positive_rate = 0.25; // fraud-like imbalance by default
    double label_noise = 0.02;   // fraction of labels flipped
    bool drift = false;          // row-index-dependent feature shift
    // csv
    std::string path;
    std::string label = "y";
};

// [split]
struct SplitConfig {
    int parties = 2;
    int active_party = 1; // vertical: which party id holds the label (ids 1..parties)
    VSplitScheme scheme = VSplitScheme::alternating;
};

// [mode]
struct ModeConfig {
    RunMode mode = RunMode::centralized;
    int trees_per_round = 1; // cyclic only
};

// [security]
struct SecurityConfig {
    PluginKind plugin = PluginKind::passthrough;
    std::string key_dir;          // SFXB_KEY_DIR env var wins when set
    std::string key_name = "key"; // <dir>/<name>.pub and <dir>/<name>.priv
};

struct RunConfig {
    DatasetConfig dataset;
    SplitConfig split;
    TrainParams train;
    ModeConfig mode;
    SecurityConfig security;
    bool threaded = false; // [train] threads = true/false

    void validate() const; // throws ConfigError with section.key labels
};

// Strict INI-style parser: [section] headers, key = value lines, # or ;
// comment lines. Unknown sections or keys are errors.
RunConfig parse_run_config(const std::string &text);
RunConfig load_run_config(const std::string &path);

// Seeded generator: J uniform/gaussian feature columns, labels from a hidden
// linear score thresholded at the requested positive rate, plus label noise.
// drift=true shifts every third feature with the row index so that contiguous
// row shards see different quantiles than the pooled data.
DataMatrix synthesize(const DatasetConfig &cfg);

DataMatrix load_dataset(const DatasetConfig &cfg);

// Mode-appropriate sharding of a loaded dataset. Vertical: column assignment
// by scheme, party ids 1..parties. Row modes: contiguous blocks, ids
// 0..parties-1. Centralized: single peer shard.
std::vector<PartyShard> make_shards(const DataMatrix &data, const RunConfig &cfg);

} // namespace sfxb

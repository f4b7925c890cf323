#pragma once
#include <string>
#include <vector>

#include "sfxb/config.hpp"
#include "sfxb/federation.hpp"

namespace sfxb {

struct RunMetrics {
    double train_logloss = 0.0;
    double train_accuracy = 0.0;
};

// Everything one training run reports besides its model artifacts.
struct RunReport {
    std::string mode;
    std::string plugin;
    TrainParams params;
    std::uint32_t n_rows = 0;
    std::uint32_t n_features = 0;
    std::uint32_t n_parties = 0;
    PhaseTimes phases;
    OpCounters counters;
    std::vector<OpCounters> per_round;
    std::vector<std::uint32_t> nodes_per_round;
    std::string fingerprint;
    RunMetrics metrics;
};

std::string report_to_json(const RunReport &r); // pretty-printed object
RunReport report_from_json(const std::string &text);

struct TrainOutput {
    Forest forest;
    std::vector<PartialModel> partials; // vertical only
    RoundTranscript transcript;
    RunReport report;
};

// Load or synthesize the dataset, shard it, dispatch the configured mode with
// the configured plugin, and evaluate on the training pool.
TrainOutput run_training(const RunConfig &cfg);

// Tree-by-tree structural comparison. Topology, split features, and
// thresholds must match exactly; leaf weights within leaf_tolerance.
// Returns human-readable difference lines; empty means equal.
std::vector<std::string> forest_diff(const Forest &a, const Forest &b, double leaf_tolerance);

struct BenchRow {
    std::string label; // "<mode>/<plugin>"
    PhaseTimes phases; // medians over repeats
    OpCounters counters;
    double total_seconds = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows; // configured plugin first, then its twin
    // secure total / passthrough total; 0 when only one plugin ran
    double overhead_ratio = 0.0;
};

// Run the config `repeats` times per plugin variant (the configured one and,
// for histogram modes, the other one) and report median phase times.
BenchResult run_bench(const RunConfig &cfg, int repeats);

std::string bench_table(const BenchResult &b); // aligned text table
std::string bench_to_json(const BenchResult &b);

} // namespace sfxb

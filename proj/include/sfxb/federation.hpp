#pragma once
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sfxb/counters.hpp"
#include "sfxb/dataset.hpp"
#include "sfxb/gbdt.hpp"
#include "sfxb/he.hpp"
#include "sfxb/inference.hpp"
#include "sfxb/secure_processor.hpp"

namespace sfxb {

enum class FedMode { horizontal, vertical, cyclic, bagging };
const char *to_string(FedMode m);

// Which processor plugin every party instantiates. Key material is handed out
// per role: only label holders (vertical active) and data owners (horizontal
// peers) receive the private half; relays get the public half.
struct PluginSpec {
    bool secure = false;       // false: passthrough
    PaillierKeypair kp;        // required when secure
    PaillierPluginConfig cfg;  // scale_bits is overridden by TrainParams
};

// Everything one endpoint hands another, as it crossed the wire.
struct TranscriptEntry {
    std::uint32_t round = 0;
    std::string sender, receiver;
    BufferKind kind = BufferKind::gh_pairs_plain;
    std::string bytes;        // the exact serialized buffer
    OpCounters sender_ops;    // sender's cumulative counters after this send
};

struct RoundTranscript {
    std::vector<TranscriptEntry> entries;
    void to_jsonl(std::ostream &out) const; // structural fields only, not payload bytes
};

struct PhaseTimes {
    double cuts = 0, gradient = 0, encrypt = 0, aggregate = 0, decrypt = 0, split = 0;
    PhaseTimes &operator+=(const PhaseTimes &o);
    double total() const { return cuts + gradient + encrypt + aggregate + decrypt + split; }
};

struct PartyReport {
    std::string name;
    ProcRole role = ProcRole::peer;
    OpCounters ops; // crypto ops + bytes sent
};

struct FedResult {
    Forest forest;                       // the jointly learned model (vertical: assembled view)
    std::vector<PartialModel> partials;  // vertical only: per-party saved models
    RoundTranscript transcript;
    PhaseTimes phases;
    std::vector<PartyReport> parties;
    OpCounters totals;                        // summed over parties
    std::vector<OpCounters> per_round;        // per-round deltas, summed over parties
    std::vector<std::uint32_t> nodes_per_round; // histogram-built frontier nodes
    std::uint32_t rounds = 0;
};

struct FedOptions {
    bool threaded = false;          // concurrent parties; artifacts must stay byte-identical
    unsigned trees_per_round = 1;   // cyclic only
};

// Histogram collaboration: row-split peers aggregate encrypted histograms
// through a blind server; everyone ends with the same forest.
FedResult run_horizontal_histogram(const std::vector<PartyShard> &shards,
                                   const TrainParams &params, const PluginSpec &plugin,
                                   const FedOptions &options = {});

// Histogram collaboration: column-split parties; the label holder broadcasts
// encrypted gradients, feature owners accumulate, split decisions come back
// as (owner, feature, cut-index). Produces per-party partial models.
FedResult run_vertical_histogram(const std::vector<PartyShard> &shards,
                                 const TrainParams &params, const PluginSpec &plugin,
                                 const FedOptions &options = {});

// Tree collaboration: parties take turns boosting on their own rows.
FedResult run_cyclic(const std::vector<PartyShard> &shards, const TrainParams &params,
                     const FedOptions &options = {});

// Tree collaboration: every round all parties boost from the shared model and
// the server appends all submitted trees, weighted 1/N.
FedResult run_bagging(const std::vector<PartyShard> &shards, const TrainParams &params,
                      const FedOptions &options = {});

} // namespace sfxb

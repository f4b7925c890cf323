#pragma once
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sfxb/counters.hpp"
#include "sfxb/gbdt.hpp"
#include "sfxb/he.hpp"

namespace sfxb {

// Who is handling a buffer. The server relays and aggregates but may never
// see plaintext gradients or hold private key material.
enum class ProcRole : std::uint8_t { active, passive, peer, server };
const char *to_string(ProcRole r);

enum class BufferKind : std::uint8_t {
    gh_pairs_plain = 1,
    gh_pairs_enc = 2,
    histogram_plain = 3,
    histogram_enc = 4,
    agg_result_plain = 5,
    agg_result_enc = 6,
    cut_sync = 7,
    tree_sync = 8,
};

enum class CallKind : std::uint8_t { allgather = 1, allreduce = 2 };

// ---- typed payloads ----

struct GhPayload {
    bool encrypted = false;
    std::vector<GHPair> plain;        // when !encrypted
    std::vector<Ciphertext> cts;      // interleaved Enc(g), Enc(h) when encrypted
    std::uint32_t n_samples = 0;
};

enum class HistLayout : std::uint8_t { enc_scalar = 0, enc_packed = 1, plain = 2 };

// One tree node's per-feature histogram in one of three layouts.
struct NodeHistogram {
    std::uint32_t node_id = 0;
    // plain layout
    Histogram plain;
    // encrypted layouts share the shape descriptors
    std::vector<int> feature_ids;
    int n_bins = 0;
    // enc_scalar: per feature, per bin, interleaved Enc(G), Enc(H)
    std::vector<Ciphertext> scalar_cts;
    // enc_packed: feature-major flattened G and H vectors of length J·K
    PackedVector packed_g, packed_h;
};

struct HistogramPayload {
    HistLayout layout = HistLayout::plain;
    std::vector<NodeHistogram> nodes;
};

struct CutSyncPayload {
    std::uint32_t max_bin = 0;
    bool has_values = false;
    std::vector<std::uint32_t> feature_ids;
    std::vector<std::vector<double>> cuts;   // when has_values
    std::vector<std::uint32_t> cut_counts;   // always present, aligned with feature_ids
};

struct SplitSyncNode {
    std::uint32_t node_id = 0;
    bool is_split = false;
    std::uint32_t owner = 0;     // split only
    std::uint32_t feature = 0;   // global feature id, split only
    std::uint32_t cut_index = 0; // split only
};

struct TreeSyncPayload {
    enum class Flavor : std::uint8_t {
        split_decisions = 1, // active → all: per-level node structure
        node_routes = 2,     // feature owner → all: rows going left
        forest_text = 3,     // whole serialized forest (tree-based modes)
        route_bitmap = 4,    // inference: per owned node, a row-direction bitmap
    };
    Flavor flavor = Flavor::split_decisions;
    std::vector<SplitSyncNode> splits;                  // flavor 1
    std::uint32_t node_id = 0;                          // flavor 2
    std::vector<std::uint32_t> rows;                    // flavor 2
    std::string forest_text;                            // flavor 3
    std::uint32_t n_rows = 0;                           // flavor 4
    std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> bitmaps; // flavor 4
};

using Payload = std::variant<GhPayload, HistogramPayload, CutSyncPayload, TreeSyncPayload>;

struct ProcessorBuffer {
    std::uint8_t version = 1;
    BufferKind kind = BufferKind::gh_pairs_plain;
    std::uint32_t header[3] = {0, 0, 0}; // [n_samples|n_features, n_bins, n_nodes]
    Payload payload;
};

// ---- plugin contract ----

struct NodeRows {
    std::uint32_t node_id = 0;
    std::vector<std::uint32_t> rows;
};

// Stateless between calls apart from key material and the shared counters.
class EncryptionPlugin {
public:
    virtual ~EncryptionPlugin() = default;
    virtual std::string name() const = 0;
    virtual bool is_passthrough() const = 0;
    virtual bool holds_private_key() const = 0;
    virtual std::uint64_t key_id() const = 0; // 0 when no key is involved

    // scalar path (vertical): per-sample gradient encryption ...
    virtual GhPayload encrypt_gh(std::span<const GHPair> gh) = 0;
    // ... and per-feature accumulation into per-node histograms
    virtual HistogramPayload accumulate_rows(const GhPayload &gh,
                                             const std::vector<std::vector<std::uint16_t>> &bins,
                                             const std::vector<int> &feature_ids,
                                             const std::vector<NodeRows> &nodes,
                                             int n_bins) = 0;

    // vector path (horizontal): whole-histogram encryption and slot-wise sums
    virtual HistogramPayload
    encrypt_histogram(const std::vector<std::pair<std::uint32_t, Histogram>> &node_hists) = 0;
    virtual HistogramPayload add_histograms(const std::vector<HistogramPayload> &parts) = 0;

    // recover plaintext histograms (requires key material for enc layouts)
    virtual std::vector<std::pair<std::uint32_t, Histogram>>
    decrypt_histogram(const HistogramPayload &payload) = 0;

    OpCounters &counters() { return counters_; }
    const OpCounters &counters() const { return counters_; }

protected:
    OpCounters counters_;
};

std::unique_ptr<EncryptionPlugin> make_passthrough_plugin();

struct PaillierPluginConfig {
    unsigned scale_bits = 40;
    PackedLayout packed; // modulus_bits filled from the key
    std::uint64_t rng_seed = 1;
};

// Holder of the public half only (passive parties, horizontal server-side
// shape checks); decryption requires the full keypair overload.
std::unique_ptr<EncryptionPlugin> make_paillier_plugin(const PaillierPublicKey &pk,
                                                       const PaillierPluginConfig &cfg);
std::unique_ptr<EncryptionPlugin> make_paillier_plugin(const PaillierKeypair &kp,
                                                       const PaillierPluginConfig &cfg);

// ---- processor boundary ----

// Serialize (and for non-passthrough plugins the payload arrives already
// encrypted) into the wire buffer for the transport layer.
ProcessorBuffer process_outbound(CallKind call, const Payload &payload, ProcRole role);

// Validate, deserialize, and optionally decrypt. Decryption of an encrypted
// kind demands an authorized role and private key material.
Payload process_inbound(const ProcessorBuffer &buffer, EncryptionPlugin &plugin, ProcRole role,
                        bool decrypt);

std::string serialize_buffer(const ProcessorBuffer &buffer);
ProcessorBuffer parse_buffer(const std::string &bytes);

} // namespace sfxb

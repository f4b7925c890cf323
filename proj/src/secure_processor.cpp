#include "sfxb/secure_processor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "sfxb/errors.hpp"

namespace sfxb {

const char *to_string(ProcRole r) {
    switch (r) {
    case ProcRole::active: return "active";
    case ProcRole::passive: return "passive";
    case ProcRole::peer: return "peer";
    case ProcRole::server: return "server";
    }
    return "?";
}

// ---------------- wire helpers ----------------

namespace {

constexpr char kMagic[4] = {'S', 'F', 'X', 'B'};
constexpr std::uint8_t kVersion = 1;

void put_u8(std::string &out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string &out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void put_ct(std::string &out, const Ciphertext &c) {
    std::size_t count = 0;
    std::vector<unsigned char> buf((mpz_sizeinbase(c.value.get_mpz_t(), 2) + 7) / 8);
    if (!buf.empty()) mpz_export(buf.data(), &count, 1, 1, 1, 0, c.value.get_mpz_t());
    put_u32(out, static_cast<std::uint32_t>(count));
    out.append(reinterpret_cast<const char *>(buf.data()), count);
}

void put_bytes(std::string &out, const std::string &bytes) {
    put_u32(out, static_cast<std::uint32_t>(bytes.size()));
    out += bytes;
}

struct WireReader {
    const std::string &bytes;
    std::size_t pos = 0;
    std::uint64_t key_id = 0; // stamped onto parsed ciphertexts by the caller

    std::uint8_t u8() {
        if (pos >= bytes.size()) throw ParseError("truncated buffer", pos);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return std::bit_cast<double>(v);
    }
    Ciphertext ct() {
        std::uint32_t len = u32();
        if (pos + len > bytes.size()) throw ParseError("truncated ciphertext entry", pos);
        Ciphertext c;
        if (len > 0) mpz_import(c.value.get_mpz_t(), len, 1, 1, 1, 0, bytes.data() + pos);
        c.key_id = key_id;
        pos += len;
        return c;
    }
    std::string blob() {
        std::uint32_t len = u32();
        if (pos + len > bytes.size()) throw ParseError("truncated byte block", pos);
        std::string s = bytes.substr(pos, len);
        pos += len;
        return s;
    }
    void done() const {
        if (pos != bytes.size()) throw ParseError("trailing bytes in buffer", pos);
    }
};

void put_packed(std::string &out, const PackedVector &v) {
    put_u32(out, v.logical_length);
    put_u32(out, v.addend_count);
    put_u32(out, v.slot_bits);
    put_u32(out, v.guard_bits);
    put_u32(out, v.scale_bits);
    put_u32(out, static_cast<std::uint32_t>(v.cts.size()));
    for (const Ciphertext &c : v.cts) put_ct(out, c);
}

PackedVector read_packed(WireReader &r) {
    PackedVector v;
    v.logical_length = r.u32();
    v.addend_count = r.u32();
    v.slot_bits = r.u32();
    v.guard_bits = r.u32();
    v.scale_bits = r.u32();
    std::uint32_t n = r.u32();
    v.cts.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) v.cts.push_back(r.ct());
    return v;
}

} // namespace

// ---------------- buffer (de)serialization ----------------

std::string serialize_buffer(const ProcessorBuffer &buffer) {
    std::string out;
    out.append(kMagic, 4);
    put_u8(out, buffer.version);
    put_u8(out, static_cast<std::uint8_t>(buffer.kind));
    for (std::uint32_t h : buffer.header) put_u32(out, h);

    switch (buffer.kind) {
    case BufferKind::gh_pairs_plain: {
        const auto &gh = std::get<GhPayload>(buffer.payload);
        for (const GHPair &p : gh.plain) {
            put_f64(out, p.g);
            put_f64(out, p.h);
        }
        break;
    }
    case BufferKind::gh_pairs_enc: {
        const auto &gh = std::get<GhPayload>(buffer.payload);
        for (const Ciphertext &c : gh.cts) put_ct(out, c);
        break;
    }
    case BufferKind::histogram_plain:
    case BufferKind::agg_result_plain: {
        const auto &hp = std::get<HistogramPayload>(buffer.payload);
        for (const NodeHistogram &node : hp.nodes) {
            put_u32(out, node.node_id);
            put_u32(out, static_cast<std::uint32_t>(node.plain.feature_ids.size()));
            for (std::size_t f = 0; f < node.plain.feature_ids.size(); ++f) {
                put_u32(out, static_cast<std::uint32_t>(node.plain.feature_ids[f]));
                for (const GHPair &b : node.plain.feats[f]) {
                    put_f64(out, b.g);
                    put_f64(out, b.h);
                }
            }
        }
        break;
    }
    case BufferKind::histogram_enc:
    case BufferKind::agg_result_enc: {
        const auto &hp = std::get<HistogramPayload>(buffer.payload);
        put_u8(out, static_cast<std::uint8_t>(hp.layout));
        for (const NodeHistogram &node : hp.nodes) {
            put_u32(out, node.node_id);
            put_u32(out, static_cast<std::uint32_t>(node.feature_ids.size()));
            for (int fid : node.feature_ids) put_u32(out, static_cast<std::uint32_t>(fid));
            if (hp.layout == HistLayout::enc_scalar) {
                for (const Ciphertext &c : node.scalar_cts) put_ct(out, c);
            } else {
                put_packed(out, node.packed_g);
                put_packed(out, node.packed_h);
            }
        }
        break;
    }
    case BufferKind::cut_sync: {
        const auto &cs = std::get<CutSyncPayload>(buffer.payload);
        put_u8(out, cs.has_values ? 1 : 0);
        for (std::size_t f = 0; f < cs.feature_ids.size(); ++f) {
            put_u32(out, cs.feature_ids[f]);
            put_u32(out, cs.cut_counts[f]);
            if (cs.has_values)
                for (double v : cs.cuts[f]) put_f64(out, v);
        }
        break;
    }
    case BufferKind::tree_sync: {
        const auto &ts = std::get<TreeSyncPayload>(buffer.payload);
        put_u8(out, static_cast<std::uint8_t>(ts.flavor));
        switch (ts.flavor) {
        case TreeSyncPayload::Flavor::split_decisions:
            put_u32(out, static_cast<std::uint32_t>(ts.splits.size()));
            for (const SplitSyncNode &s : ts.splits) {
                put_u32(out, s.node_id);
                put_u8(out, s.is_split ? 1 : 0);
                put_u32(out, s.owner);
                put_u32(out, s.feature);
                put_u32(out, s.cut_index);
            }
            break;
        case TreeSyncPayload::Flavor::node_routes:
            put_u32(out, ts.node_id);
            put_u32(out, static_cast<std::uint32_t>(ts.rows.size()));
            for (std::uint32_t r : ts.rows) put_u32(out, r);
            break;
        case TreeSyncPayload::Flavor::forest_text:
            put_bytes(out, ts.forest_text);
            break;
        case TreeSyncPayload::Flavor::route_bitmap:
            put_u32(out, ts.n_rows);
            put_u32(out, static_cast<std::uint32_t>(ts.bitmaps.size()));
            for (const auto &[node_id, bits] : ts.bitmaps) {
                put_u32(out, node_id);
                for (std::uint8_t b : bits) put_u8(out, b);
            }
            break;
        }
        break;
    }
    }
    return out;
}

ProcessorBuffer parse_buffer(const std::string &bytes) {
    WireReader r{bytes};
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("bad buffer magic", 0);
    r.pos = 4;
    ProcessorBuffer buffer;
    buffer.version = r.u8();
    if (buffer.version != kVersion) throw ParseError("unsupported buffer version", 4);
    std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 8) throw ParseError("unknown buffer kind", 5);
    buffer.kind = static_cast<BufferKind>(kind);
    for (std::uint32_t &h : buffer.header) h = r.u32();

    switch (buffer.kind) {
    case BufferKind::gh_pairs_plain: {
        GhPayload gh;
        gh.encrypted = false;
        gh.n_samples = buffer.header[0];
        gh.plain.reserve(gh.n_samples);
        for (std::uint32_t i = 0; i < gh.n_samples; ++i) {
            GHPair p;
            p.g = r.f64();
            p.h = r.f64();
            gh.plain.push_back(p);
        }
        buffer.payload = std::move(gh);
        break;
    }
    case BufferKind::gh_pairs_enc: {
        GhPayload gh;
        gh.encrypted = true;
        gh.n_samples = buffer.header[0];
        gh.cts.reserve(2 * gh.n_samples);
        for (std::uint32_t i = 0; i < 2 * gh.n_samples; ++i) gh.cts.push_back(r.ct());
        buffer.payload = std::move(gh);
        break;
    }
    case BufferKind::histogram_plain:
    case BufferKind::agg_result_plain: {
        HistogramPayload hp;
        hp.layout = HistLayout::plain;
        const std::uint32_t n_bins = buffer.header[1];
        for (std::uint32_t ni = 0; ni < buffer.header[2]; ++ni) {
            NodeHistogram node;
            node.node_id = r.u32();
            std::uint32_t n_feats = r.u32();
            node.plain.n_bins = static_cast<int>(n_bins);
            for (std::uint32_t f = 0; f < n_feats; ++f) {
                node.plain.feature_ids.push_back(static_cast<int>(r.u32()));
                std::vector<GHPair> slots(n_bins);
                for (std::uint32_t b = 0; b < n_bins; ++b) {
                    slots[b].g = r.f64();
                    slots[b].h = r.f64();
                }
                node.plain.feats.push_back(std::move(slots));
            }
            hp.nodes.push_back(std::move(node));
        }
        buffer.payload = std::move(hp);
        break;
    }
    case BufferKind::histogram_enc:
    case BufferKind::agg_result_enc: {
        HistogramPayload hp;
        std::uint8_t layout = r.u8();
        if (layout > 1) throw ParseError("unknown encrypted histogram layout", r.pos - 1);
        hp.layout = static_cast<HistLayout>(layout);
        const std::uint32_t n_bins = buffer.header[1];
        for (std::uint32_t ni = 0; ni < buffer.header[2]; ++ni) {
            NodeHistogram node;
            node.node_id = r.u32();
            node.n_bins = static_cast<int>(n_bins);
            std::uint32_t n_feats = r.u32();
            for (std::uint32_t f = 0; f < n_feats; ++f)
                node.feature_ids.push_back(static_cast<int>(r.u32()));
            if (hp.layout == HistLayout::enc_scalar) {
                node.scalar_cts.reserve(2ull * n_feats * n_bins);
                for (std::uint64_t i = 0; i < 2ull * n_feats * n_bins; ++i)
                    node.scalar_cts.push_back(r.ct());
            } else {
                node.packed_g = read_packed(r);
                node.packed_h = read_packed(r);
            }
            hp.nodes.push_back(std::move(node));
        }
        buffer.payload = std::move(hp);
        break;
    }
    case BufferKind::cut_sync: {
        CutSyncPayload cs;
        cs.max_bin = buffer.header[1];
        cs.has_values = r.u8() != 0;
        for (std::uint32_t f = 0; f < buffer.header[0]; ++f) {
            cs.feature_ids.push_back(r.u32());
            std::uint32_t n_cuts = r.u32();
            cs.cut_counts.push_back(n_cuts);
            if (cs.has_values) {
                std::vector<double> vals(n_cuts);
                for (std::uint32_t i = 0; i < n_cuts; ++i) vals[i] = r.f64();
                cs.cuts.push_back(std::move(vals));
            }
        }
        buffer.payload = std::move(cs);
        break;
    }
    case BufferKind::tree_sync: {
        TreeSyncPayload ts;
        std::uint8_t flavor = r.u8();
        if (flavor < 1 || flavor > 4) throw ParseError("unknown tree sync flavor", r.pos - 1);
        ts.flavor = static_cast<TreeSyncPayload::Flavor>(flavor);
        switch (ts.flavor) {
        case TreeSyncPayload::Flavor::split_decisions: {
            std::uint32_t count = r.u32();
            for (std::uint32_t i = 0; i < count; ++i) {
                SplitSyncNode s;
                s.node_id = r.u32();
                s.is_split = r.u8() != 0;
                s.owner = r.u32();
                s.feature = r.u32();
                s.cut_index = r.u32();
                ts.splits.push_back(s);
            }
            break;
        }
        case TreeSyncPayload::Flavor::node_routes: {
            ts.node_id = r.u32();
            std::uint32_t count = r.u32();
            ts.rows.reserve(count);
            for (std::uint32_t i = 0; i < count; ++i) ts.rows.push_back(r.u32());
            break;
        }
        case TreeSyncPayload::Flavor::forest_text:
            ts.forest_text = r.blob();
            break;
        case TreeSyncPayload::Flavor::route_bitmap: {
            ts.n_rows = r.u32();
            std::uint32_t entries = r.u32();
            std::size_t nbytes = (ts.n_rows + 7) / 8;
            for (std::uint32_t i = 0; i < entries; ++i) {
                std::uint32_t node_id = r.u32();
                std::vector<std::uint8_t> bits(nbytes);
                for (std::size_t b = 0; b < nbytes; ++b) bits[b] = r.u8();
                ts.bitmaps.emplace_back(node_id, std::move(bits));
            }
            break;
        }
        }
        buffer.payload = std::move(ts);
        break;
    }
    }
    r.done();
    return buffer;
}

// ---------------- processor boundary ----------------

ProcessorBuffer process_outbound(CallKind call, const Payload &payload, ProcRole role) {
    ProcessorBuffer buffer;
    if (const auto *gh = std::get_if<GhPayload>(&payload)) {
        if (call != CallKind::allgather)
            throw Error("payload/kind mismatch: gradient vectors travel via allgather");
        buffer.kind = gh->encrypted ? BufferKind::gh_pairs_enc : BufferKind::gh_pairs_plain;
        buffer.header[0] = gh->n_samples;
        if (gh->encrypted ? gh->cts.size() != 2ull * gh->n_samples
                          : gh->plain.size() != gh->n_samples)
            throw Error("payload/kind mismatch: gradient count disagrees with n_samples");
    } else if (const auto *hp = std::get_if<HistogramPayload>(&payload)) {
        bool enc = hp->layout != HistLayout::plain;
        bool agg = role == ProcRole::server;
        buffer.kind = agg ? (enc ? BufferKind::agg_result_enc : BufferKind::agg_result_plain)
                          : (enc ? BufferKind::histogram_enc : BufferKind::histogram_plain);
        if (!hp->nodes.empty()) {
            const NodeHistogram &first = hp->nodes.front();
            std::size_t n_feats =
                enc ? first.feature_ids.size() : first.plain.feature_ids.size();
            buffer.header[0] = static_cast<std::uint32_t>(n_feats);
            buffer.header[1] =
                static_cast<std::uint32_t>(enc ? first.n_bins : first.plain.n_bins);
        }
        buffer.header[2] = static_cast<std::uint32_t>(hp->nodes.size());
    } else if (const auto *cs = std::get_if<CutSyncPayload>(&payload)) {
        if (cs->feature_ids.size() != cs->cut_counts.size() ||
            (cs->has_values && cs->cuts.size() != cs->feature_ids.size()))
            throw Error("payload/kind mismatch: cut sync shape");
        buffer.kind = BufferKind::cut_sync;
        buffer.header[0] = static_cast<std::uint32_t>(cs->feature_ids.size());
        buffer.header[1] = cs->max_bin;
    } else if (const auto *ts = std::get_if<TreeSyncPayload>(&payload)) {
        buffer.kind = BufferKind::tree_sync;
        if (ts->flavor == TreeSyncPayload::Flavor::split_decisions)
            buffer.header[2] = static_cast<std::uint32_t>(ts->splits.size());
    } else {
        throw Error("payload/kind mismatch: unsupported payload");
    }
    buffer.payload = payload;
    return buffer;
}

namespace {

// Ciphertexts parsed off the wire carry no key tag; label them with the
// receiving plugin's key so local integrity checks keep working.
void stamp_key(Ciphertext &c, std::uint64_t kid) {
    if (c.key_id == 0) c.key_id = kid;
}

Payload stamp_payload(Payload payload, std::uint64_t kid) {
    if (kid == 0) return payload;
    if (auto *gh = std::get_if<GhPayload>(&payload)) {
        for (Ciphertext &c : gh->cts) stamp_key(c, kid);
    } else if (auto *hp = std::get_if<HistogramPayload>(&payload)) {
        for (NodeHistogram &node : hp->nodes) {
            for (Ciphertext &c : node.scalar_cts) stamp_key(c, kid);
            for (Ciphertext &c : node.packed_g.cts) stamp_key(c, kid);
            for (Ciphertext &c : node.packed_h.cts) stamp_key(c, kid);
        }
    }
    return payload;
}

} // namespace

Payload process_inbound(const ProcessorBuffer &buffer, EncryptionPlugin &plugin, ProcRole role,
                        bool decrypt) {
    bool enc_kind = buffer.kind == BufferKind::gh_pairs_enc ||
                    buffer.kind == BufferKind::histogram_enc ||
                    buffer.kind == BufferKind::agg_result_enc;
    if (decrypt && enc_kind) {
        if (role == ProcRole::server)
            throw AuthorizationError(
                "server role may not decrypt: aggregation must stay over ciphertexts");
        if (!plugin.holds_private_key())
            throw AuthorizationError("decrypt requested without private key material");
        if (buffer.kind == BufferKind::gh_pairs_enc)
            throw Error("gradient payloads are never decrypted in-protocol");
        Payload stamped = stamp_payload(buffer.payload, plugin.key_id());
        const auto &hp = std::get<HistogramPayload>(stamped);
        auto pairs = plugin.decrypt_histogram(hp);
        HistogramPayload out;
        out.layout = HistLayout::plain;
        for (auto &[node_id, hist] : pairs) {
            NodeHistogram node;
            node.node_id = node_id;
            node.plain = std::move(hist);
            out.nodes.push_back(std::move(node));
        }
        return out;
    }
    return stamp_payload(buffer.payload, plugin.key_id());
}

// ---------------- passthrough plugin ----------------

namespace {

class PassthroughPlugin final : public EncryptionPlugin {
public:
    std::string name() const override { return "passthrough"; }
    bool is_passthrough() const override { return true; }
    bool holds_private_key() const override { return true; } // nothing is hidden
    std::uint64_t key_id() const override { return 0; }

    GhPayload encrypt_gh(std::span<const GHPair> gh) override {
        GhPayload out;
        out.encrypted = false;
        out.n_samples = static_cast<std::uint32_t>(gh.size());
        out.plain.assign(gh.begin(), gh.end());
        return out;
    }

    HistogramPayload accumulate_rows(const GhPayload &gh,
                                     const std::vector<std::vector<std::uint16_t>> &bins,
                                     const std::vector<int> &feature_ids,
                                     const std::vector<NodeRows> &nodes,
                                     int n_bins) override {
        if (gh.encrypted) throw Error("passthrough accumulate expects plain gradients");
        for (const auto &col : bins)
            if (col.size() != gh.n_samples)
                throw Error("row-count mismatch between bins and gradients");
        HistogramPayload out;
        out.layout = HistLayout::plain;
        for (const NodeRows &node : nodes) {
            NodeHistogram nh;
            nh.node_id = node.node_id;
            nh.plain = build_histogram(bins, feature_ids, gh.plain, node.rows, n_bins);
            out.nodes.push_back(std::move(nh));
        }
        return out;
    }

    HistogramPayload
    encrypt_histogram(const std::vector<std::pair<std::uint32_t, Histogram>> &node_hists) override {
        HistogramPayload out;
        out.layout = HistLayout::plain;
        for (const auto &[node_id, hist] : node_hists) {
            NodeHistogram nh;
            nh.node_id = node_id;
            nh.plain = hist;
            out.nodes.push_back(std::move(nh));
        }
        return out;
    }

    HistogramPayload add_histograms(const std::vector<HistogramPayload> &parts) override {
        if (parts.empty()) throw Error("add_histograms: no inputs");
        HistogramPayload acc = parts[0];
        for (std::size_t p = 1; p < parts.size(); ++p) {
            const HistogramPayload &cur = parts[p];
            if (cur.layout != HistLayout::plain || acc.nodes.size() != cur.nodes.size())
                throw Error("add_histograms: shape mismatch");
            for (std::size_t i = 0; i < acc.nodes.size(); ++i) {
                if (acc.nodes[i].node_id != cur.nodes[i].node_id)
                    throw Error("add_histograms: node id mismatch");
                acc.nodes[i].plain.add_slotwise(cur.nodes[i].plain);
            }
        }
        return acc;
    }

    std::vector<std::pair<std::uint32_t, Histogram>>
    decrypt_histogram(const HistogramPayload &payload) override {
        if (payload.layout != HistLayout::plain)
            throw Error("passthrough cannot decrypt encrypted layouts");
        std::vector<std::pair<std::uint32_t, Histogram>> out;
        for (const NodeHistogram &node : payload.nodes) out.emplace_back(node.node_id, node.plain);
        return out;
    }
};

// ---------------- Paillier plugin ----------------

class PaillierPlugin final : public EncryptionPlugin {
public:
    PaillierPlugin(const PaillierPublicKey &pk, const PaillierPluginConfig &cfg)
        : pub_(pk), has_priv_(false), rng_(cfg.rng_seed), scale_bits_(cfg.scale_bits),
          layout_(cfg.packed) {
        layout_.modulus_bits = pub_.modulus_bits;
        layout_.scale_bits = cfg.scale_bits;
        // validated lazily: the scalar path never packs, and toy moduli
        // cannot host the default slot width
    }
    PaillierPlugin(const PaillierKeypair &kp, const PaillierPluginConfig &cfg)
        : PaillierPlugin(kp.pub, cfg) {
        priv_ = kp.priv;
        has_priv_ = true;
    }

    std::string name() const override { return "paillier"; }
    bool is_passthrough() const override { return false; }
    bool holds_private_key() const override { return has_priv_; }
    std::uint64_t key_id() const override { return pub_.key_id; }

    GhPayload encrypt_gh(std::span<const GHPair> gh) override {
        GhPayload out;
        out.encrypted = true;
        out.n_samples = static_cast<std::uint32_t>(gh.size());
        out.cts.reserve(2 * gh.size());
        for (const GHPair &p : gh) {
            out.cts.push_back(encrypt(pub_, encode_fixed(pub_, p.g, scale_bits_), rng_));
            out.cts.push_back(encrypt(pub_, encode_fixed(pub_, p.h, scale_bits_), rng_));
            counters_.encryptions += 2;
        }
        return out;
    }

    HistogramPayload accumulate_rows(const GhPayload &gh,
                                     const std::vector<std::vector<std::uint16_t>> &bins,
                                     const std::vector<int> &feature_ids,
                                     const std::vector<NodeRows> &nodes,
                                     int n_bins) override {
        if (!gh.encrypted) throw Error("paillier accumulate expects encrypted gradients");
        if (gh.cts.size() != 2ull * gh.n_samples)
            throw Error("row-count mismatch: ciphertext count is not 2·n_samples");
        for (const auto &col : bins)
            if (col.size() != gh.n_samples)
                throw Error("row-count mismatch between bins and gradients");
        HistogramPayload out;
        out.layout = HistLayout::enc_scalar;
        for (const NodeRows &node : nodes) {
            NodeHistogram nh;
            nh.node_id = node.node_id;
            nh.feature_ids = feature_ids;
            nh.n_bins = n_bins;
            nh.scalar_cts.assign(2ull * feature_ids.size() * n_bins, trivial_zero(pub_));
            for (std::size_t f = 0; f < feature_ids.size(); ++f) {
                const std::vector<std::uint16_t> &col = bins[f];
                for (std::uint32_t row : node.rows) {
                    std::uint16_t b = col[row];
                    if (b >= static_cast<std::uint16_t>(n_bins))
                        throw Error("bin index out of range in accumulate");
                    std::size_t base = 2 * (f * static_cast<std::size_t>(n_bins) + b);
                    fold_into(nh.scalar_cts[base], gh.cts[2 * row]);
                    fold_into(nh.scalar_cts[base + 1], gh.cts[2 * row + 1]);
                }
            }
            out.nodes.push_back(std::move(nh));
        }
        return out;
    }

    HistogramPayload
    encrypt_histogram(const std::vector<std::pair<std::uint32_t, Histogram>> &node_hists) override {
        layout_.validate();
        HistogramPayload out;
        out.layout = HistLayout::enc_packed;
        for (const auto &[node_id, hist] : node_hists) {
            NodeHistogram nh;
            nh.node_id = node_id;
            nh.feature_ids = hist.feature_ids;
            nh.n_bins = hist.n_bins;
            std::vector<double> gs, hs;
            gs.reserve(hist.feats.size() * hist.n_bins);
            hs.reserve(hist.feats.size() * hist.n_bins);
            for (const auto &slots : hist.feats)
                for (const GHPair &b : slots) {
                    gs.push_back(b.g);
                    hs.push_back(b.h);
                }
            nh.packed_g = pack_encrypt(pub_, layout_, gs, rng_);
            nh.packed_h = pack_encrypt(pub_, layout_, hs, rng_);
            counters_.encryptions += 2; // vector granularity
            out.nodes.push_back(std::move(nh));
        }
        return out;
    }

    HistogramPayload add_histograms(const std::vector<HistogramPayload> &parts) override {
        if (parts.empty()) throw Error("add_histograms: no inputs");
        HistogramPayload acc = parts[0];
        for (std::size_t p = 1; p < parts.size(); ++p) {
            const HistogramPayload &cur = parts[p];
            if (cur.layout != acc.layout || cur.nodes.size() != acc.nodes.size())
                throw Error("add_histograms: shape mismatch");
            for (std::size_t i = 0; i < acc.nodes.size(); ++i) {
                NodeHistogram &a = acc.nodes[i];
                const NodeHistogram &b = cur.nodes[i];
                if (a.node_id != b.node_id || a.feature_ids != b.feature_ids ||
                    a.n_bins != b.n_bins)
                    throw Error("add_histograms: shape mismatch");
                if (acc.layout == HistLayout::enc_packed) {
                    a.packed_g = add_packed(pub_, a.packed_g, b.packed_g);
                    a.packed_h = add_packed(pub_, a.packed_h, b.packed_h);
                    counters_.ciphertext_additions += 2; // vector granularity
                } else if (acc.layout == HistLayout::enc_scalar) {
                    if (a.scalar_cts.size() != b.scalar_cts.size())
                        throw Error("add_histograms: shape mismatch");
                    for (std::size_t s = 0; s < a.scalar_cts.size(); ++s)
                        fold_into(a.scalar_cts[s], b.scalar_cts[s]);
                } else {
                    throw Error("paillier add_histograms expects encrypted layouts");
                }
            }
        }
        return acc;
    }

    std::vector<std::pair<std::uint32_t, Histogram>>
    decrypt_histogram(const HistogramPayload &payload) override {
        if (!has_priv_)
            throw AuthorizationError("decrypt requested without private key material");
        std::vector<std::pair<std::uint32_t, Histogram>> out;
        for (const NodeHistogram &node : payload.nodes) {
            Histogram hist;
            hist.n_bins = node.n_bins;
            hist.feature_ids = node.feature_ids;
            if (payload.layout == HistLayout::enc_scalar) {
                hist.feats.assign(node.feature_ids.size(),
                                  std::vector<GHPair>(static_cast<std::size_t>(node.n_bins)));
                for (std::size_t f = 0; f < node.feature_ids.size(); ++f)
                    for (int b = 0; b < node.n_bins; ++b) {
                        std::size_t base = 2 * (f * static_cast<std::size_t>(node.n_bins) +
                                                static_cast<std::size_t>(b));
                        hist.feats[f][b].g = decrypt_slot(node.scalar_cts[base]);
                        hist.feats[f][b].h = decrypt_slot(node.scalar_cts[base + 1]);
                    }
            } else if (payload.layout == HistLayout::enc_packed) {
                std::vector<double> gs = unpack_decrypt(pub_, priv_, node.packed_g);
                std::vector<double> hs = unpack_decrypt(pub_, priv_, node.packed_h);
                counters_.decryptions += 2; // vector granularity
                std::size_t expect = node.feature_ids.size() * static_cast<std::size_t>(node.n_bins);
                if (gs.size() != expect || hs.size() != expect)
                    throw Error("decrypt_histogram: packed length mismatch");
                for (std::size_t f = 0; f < node.feature_ids.size(); ++f) {
                    std::vector<GHPair> slots(static_cast<std::size_t>(node.n_bins));
                    for (int b = 0; b < node.n_bins; ++b) {
                        std::size_t idx = f * static_cast<std::size_t>(node.n_bins) +
                                          static_cast<std::size_t>(b);
                        slots[static_cast<std::size_t>(b)] = {gs[idx], hs[idx]};
                    }
                    hist.feats.push_back(std::move(slots));
                }
            } else {
                throw Error("paillier decrypt expects encrypted layouts");
            }
            out.emplace_back(node.node_id, std::move(hist));
        }
        return out;
    }

private:
    // Accumulate rhs into lhs; the canonical zero absorbs without a counted
    // addition, so the per-feature count is rows − occupied bins.
    void fold_into(Ciphertext &lhs, const Ciphertext &rhs) {
        if (is_trivial_zero(rhs)) return;
        if (is_trivial_zero(lhs)) {
            lhs = rhs;
            return;
        }
        lhs = add_ciphertexts(pub_, lhs, rhs);
        counters_.ciphertext_additions += 1;
    }

    double decrypt_slot(const Ciphertext &c) {
        if (is_trivial_zero(c)) return 0.0;
        counters_.decryptions += 1;
        return decode_fixed(pub_, decrypt(pub_, priv_, c), scale_bits_);
    }

    PaillierPublicKey pub_;
    PaillierPrivateKey priv_;
    bool has_priv_;
    HeRng rng_;
    unsigned scale_bits_;
    PackedLayout layout_;
};

} // namespace

std::unique_ptr<EncryptionPlugin> make_passthrough_plugin() {
    return std::make_unique<PassthroughPlugin>();
}

std::unique_ptr<EncryptionPlugin> make_paillier_plugin(const PaillierPublicKey &pk,
                                                       const PaillierPluginConfig &cfg) {
    return std::make_unique<PaillierPlugin>(pk, cfg);
}

std::unique_ptr<EncryptionPlugin> make_paillier_plugin(const PaillierKeypair &kp,
                                                       const PaillierPluginConfig &cfg) {
    return std::make_unique<PaillierPlugin>(kp, cfg);
}

} // namespace sfxb

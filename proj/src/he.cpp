#include "sfxb/he.hpp"

#include <cmath>
#include <cstring>

#include "sfxb/errors.hpp"
#include "sfxb/fixed_point.hpp"

namespace sfxb {

HeRng::HeRng(std::uint64_t seed) : state_(gmp_randinit_mt) {
    mpz_class s;
    mpz_import(s.get_mpz_t(), 1, 1, sizeof seed, 0, 0, &seed);
    state_.seed(s);
}

mpz_class HeRng::bits(unsigned nbits) { return state_.get_z_bits(nbits); }

mpz_class HeRng::unit_below(const mpz_class &n) {
    if (n <= 2) throw Error("unit_below: modulus too small");
    for (;;) {
        mpz_class r = state_.get_z_range(n);
        if (r <= 1) continue;
        mpz_class g;
        mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), n.get_mpz_t());
        if (g == 1) return r;
    }
}

std::uint64_t key_id_of(const mpz_class &n) {
    std::string digits = n.get_str(16);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : digits) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

PaillierKeypair keypair_from_primes(const mpz_class &p, const mpz_class &q) {
    if (p == q) throw Error("keypair_from_primes: primes must be distinct");
    if (mpz_probab_prime_p(p.get_mpz_t(), 30) == 0 || mpz_probab_prime_p(q.get_mpz_t(), 30) == 0)
        throw Error("keypair_from_primes: inputs must be prime");
    PaillierKeypair kp;
    kp.pub.n = p * q;
    kp.pub.n2 = kp.pub.n * kp.pub.n;
    kp.pub.modulus_bits = static_cast<unsigned>(mpz_sizeinbase(kp.pub.n.get_mpz_t(), 2));
    kp.pub.key_id = key_id_of(kp.pub.n);
    kp.priv.p = p;
    kp.priv.q = q;
    mpz_class pm1 = p - 1, qm1 = q - 1;
    mpz_lcm(kp.priv.lambda.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());
    if (mpz_invert(kp.priv.mu.get_mpz_t(), kp.priv.lambda.get_mpz_t(), kp.pub.n.get_mpz_t()) == 0)
        throw Error("keypair_from_primes: lambda not invertible mod n");
    return kp;
}

PaillierKeypair keygen(unsigned modulus_bits, std::uint64_t seed) {
    if (modulus_bits != 512 && modulus_bits != 1024 && modulus_bits != 2048 &&
        modulus_bits != 3072)
        throw ConfigError("modulus_bits",
                          "allowed key sizes: 512 (tests only), 1024, 2048, 3072");
    HeRng rng(seed);
    const unsigned half = modulus_bits / 2;
    auto draw_prime = [&]() {
        mpz_class cand = rng.bits(half);
        // Top two bits forced so the product lands on exactly modulus_bits bits.
        mpz_setbit(cand.get_mpz_t(), half - 1);
        mpz_setbit(cand.get_mpz_t(), half - 2);
        mpz_class prime;
        mpz_nextprime(prime.get_mpz_t(), cand.get_mpz_t());
        return prime;
    };
    for (int attempt = 0; attempt < 64; ++attempt) {
        mpz_class p = draw_prime();
        mpz_class q = draw_prime();
        if (p == q) continue;
        if (mpz_sizeinbase(p.get_mpz_t(), 2) != half || mpz_sizeinbase(q.get_mpz_t(), 2) != half)
            continue; // nextprime overshot the top of the range
        PaillierKeypair kp = keypair_from_primes(p, q);
        if (kp.pub.modulus_bits != modulus_bits) continue;
        return kp;
    }
    throw Error("keygen: prime generation failed after bounded retries");
}

Ciphertext encrypt_with_r(const PaillierPublicKey &pk, const mpz_class &m, const mpz_class &r) {
    if (m < 0 || m >= pk.n) throw Error("encrypt: plaintext out of range [0, n)");
    if (r < 1 || r >= pk.n) throw Error("encrypt: blinding factor out of range");
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    if (g != 1) throw Error("encrypt: blinding factor not coprime to modulus");
    // (n+1)^m = 1 + m·n (mod n²)
    mpz_class c = (1 + m * pk.n) % pk.n2;
    mpz_class rn;
    mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n2.get_mpz_t());
    c = c * rn % pk.n2;
    return Ciphertext{std::move(c), pk.key_id};
}

Ciphertext encrypt(const PaillierPublicKey &pk, const mpz_class &m, HeRng &rng) {
    return encrypt_with_r(pk, m, rng.unit_below(pk.n));
}

mpz_class decrypt(const PaillierPublicKey &pk, const PaillierPrivateKey &sk, const Ciphertext &c) {
    if (c.key_id != pk.key_id) throw Error("decrypt: ciphertext key mismatch");
    if (c.value < 1 || c.value >= pk.n2) throw Error("decrypt: ciphertext out of range");
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), c.value.get_mpz_t(), pk.n.get_mpz_t());
    if (g != 1) throw Error("decrypt: ciphertext not coprime to modulus");
    mpz_class u;
    mpz_powm(u.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(), pk.n2.get_mpz_t());
    mpz_class ell = (u - 1) / pk.n;
    return ell * sk.mu % pk.n;
}

Ciphertext add_ciphertexts(const PaillierPublicKey &pk, const Ciphertext &a, const Ciphertext &b) {
    if (a.key_id != b.key_id || a.key_id != pk.key_id)
        throw Error("add_ciphertexts: key mismatch");
    return Ciphertext{a.value * b.value % pk.n2, pk.key_id};
}

Ciphertext trivial_zero(const PaillierPublicKey &pk) { return Ciphertext{mpz_class(1), pk.key_id}; }

mpz_class encode_fixed(const PaillierPublicKey &pk, double x, unsigned scale_bits) {
    if (!std::isfinite(x)) throw Error("encode_fixed: value must be finite");
    if (std::abs(x) >= std::ldexp(1.0, static_cast<int>(62 - scale_bits)))
        throw Error("encode_fixed: value too large for the fixed-point grid");
    std::int64_t q = fixed_encode_ll(x, scale_bits);
    mpz_class m(static_cast<long>(q));
    mpz_class mag = abs(m);
    if (2 * mag >= pk.n)
        throw Error("encode_fixed: |x|·2^scale_bits must stay below n/2");
    if (m < 0) m += pk.n;
    return m;
}

double decode_fixed(const PaillierPublicKey &pk, const mpz_class &raw, unsigned scale_bits) {
    if (raw < 0 || raw >= pk.n) throw Error("decode_fixed: raw value out of range");
    mpz_class v = raw;
    if (2 * v > pk.n) v -= pk.n;
    return std::ldexp(v.get_d(), -static_cast<int>(scale_bits));
}

unsigned PackedLayout::slots_per_ciphertext() const {
    if (slot_bits == 0) throw ConfigError("slot_bits", "must be positive");
    return (modulus_bits - 1) / slot_bits;
}

mpz_class PackedLayout::slot_bias() const {
    mpz_class b = 1;
    b <<= (slot_bits - guard_bits - 1);
    return b;
}

void PackedLayout::validate() const {
    if (slot_bits < 8) throw ConfigError("slot_bits", "must be >= 8");
    if (guard_bits + 2 > slot_bits)
        throw ConfigError("guard_bits", "must leave at least one magnitude bit per slot");
    if (scale_bits == 0 || scale_bits > 52)
        throw ConfigError("scale_bits", "must be in [1, 52]");
    if (slots_per_ciphertext() < 1)
        throw ConfigError("slot_bits", "too large for the modulus (zero slots per ciphertext)");
}

std::vector<mpz_class> pack_plain(const PackedLayout &layout, std::span<const double> values) {
    layout.validate();
    const unsigned k = layout.slots_per_ciphertext();
    const mpz_class bias = layout.slot_bias();
    std::vector<mpz_class> out;
    out.reserve((values.size() + k - 1) / k);
    for (std::size_t i = 0; i < values.size(); i += k) {
        mpz_class m = 0;
        std::size_t count = std::min<std::size_t>(k, values.size() - i);
        for (std::size_t s = 0; s < count; ++s) {
            double x = values[i + s];
            if (!std::isfinite(x)) throw Error("pack_vector: value must be finite");
            if (std::abs(x) >= std::ldexp(1.0, static_cast<int>(62 - layout.scale_bits)))
                throw Error("pack_vector: value too large for the fixed-point grid");
            mpz_class q(fixed_encode_ll(x, layout.scale_bits));
            if (abs(q) >= bias)
                throw Error("pack_vector: slot overflow at index " + std::to_string(i + s));
            mpz_class slot = q + bias;
            slot <<= static_cast<unsigned long>(s) * layout.slot_bits;
            m += slot;
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> unpack_plain(const PackedLayout &layout, std::span<const mpz_class> packed,
                                 std::size_t logical_length, std::uint32_t addend_count) {
    layout.validate();
    if (addend_count < 1) throw Error("unpack_vector: addend count must be >= 1");
    const unsigned k = layout.slots_per_ciphertext();
    if (packed.size() != (logical_length + k - 1) / k)
        throw Error("unpack_vector: ciphertext count does not match logical length");
    const mpz_class offset = layout.slot_bias() * addend_count;
    mpz_class mask = 1;
    mask <<= layout.slot_bits;
    mask -= 1;
    std::vector<double> out;
    out.reserve(logical_length);
    for (std::size_t i = 0; i < logical_length; ++i) {
        const mpz_class &m = packed[i / k];
        unsigned s = static_cast<unsigned>(i % k);
        mpz_class slot = (m >> (static_cast<unsigned long>(s) * layout.slot_bits)) & mask;
        slot -= offset;
        out.push_back(std::ldexp(slot.get_d(), -static_cast<int>(layout.scale_bits)));
    }
    return out;
}

PackedVector pack_encrypt(const PaillierPublicKey &pk, const PackedLayout &layout,
                          std::span<const double> values, HeRng &rng) {
    if (layout.modulus_bits != pk.modulus_bits)
        throw Error("pack_encrypt: layout modulus does not match key");
    std::vector<mpz_class> plain = pack_plain(layout, values);
    PackedVector v;
    v.logical_length = static_cast<std::uint32_t>(values.size());
    v.addend_count = 1;
    v.slot_bits = layout.slot_bits;
    v.guard_bits = layout.guard_bits;
    v.scale_bits = layout.scale_bits;
    v.cts.reserve(plain.size());
    for (const mpz_class &m : plain) v.cts.push_back(encrypt(pk, m, rng));
    return v;
}

PackedVector add_packed(const PaillierPublicKey &pk, const PackedVector &a,
                        const PackedVector &b) {
    if (a.logical_length != b.logical_length || a.slot_bits != b.slot_bits ||
        a.guard_bits != b.guard_bits || a.scale_bits != b.scale_bits ||
        a.cts.size() != b.cts.size())
        throw Error("add_packed: shape mismatch");
    std::uint64_t count = std::uint64_t(a.addend_count) + b.addend_count;
    if (count > (std::uint64_t(1) << a.guard_bits))
        throw Error("add_packed: addend capacity exceeded (guard bits)");
    PackedVector out;
    out.logical_length = a.logical_length;
    out.addend_count = static_cast<std::uint32_t>(count);
    out.slot_bits = a.slot_bits;
    out.guard_bits = a.guard_bits;
    out.scale_bits = a.scale_bits;
    out.cts.reserve(a.cts.size());
    for (std::size_t i = 0; i < a.cts.size(); ++i)
        out.cts.push_back(add_ciphertexts(pk, a.cts[i], b.cts[i]));
    return out;
}

std::vector<double> unpack_decrypt(const PaillierPublicKey &pk, const PaillierPrivateKey &sk,
                                   const PackedVector &v) {
    PackedLayout layout{pk.modulus_bits, v.slot_bits, v.guard_bits, v.scale_bits};
    std::vector<mpz_class> plain;
    plain.reserve(v.cts.size());
    for (const Ciphertext &c : v.cts) plain.push_back(decrypt(pk, sk, c));
    return unpack_plain(layout, plain, v.logical_length, v.addend_count);
}

// ---- key serialization ----

namespace {
constexpr unsigned char kKeyVersion = 1;

void put_u32_be(std::string &out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

void put_mpz(std::string &out, const mpz_class &v) {
    if (v < 0) throw Error("key serialization: negative field");
    std::size_t count = 0;
    std::vector<unsigned char> buf((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
    if (!buf.empty()) mpz_export(buf.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
    put_u32_be(out, static_cast<std::uint32_t>(count));
    out.append(reinterpret_cast<const char *>(buf.data()), count);
}

struct ByteReader {
    const std::string &bytes;
    std::size_t pos = 0;

    unsigned char u8() {
        if (pos >= bytes.size()) throw ParseError("truncated key file", pos);
        return static_cast<unsigned char>(bytes[pos++]);
    }
    std::uint32_t u32_be() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
        return v;
    }
    mpz_class big() {
        std::uint32_t len = u32_be();
        if (pos + len > bytes.size()) throw ParseError("truncated key file field", pos);
        mpz_class v = 0;
        if (len > 0)
            mpz_import(v.get_mpz_t(), len, 1, 1, 1, 0, bytes.data() + pos);
        pos += len;
        return v;
    }
    void done() const {
        if (pos != bytes.size()) throw ParseError("trailing bytes in key file", pos);
    }
};
} // namespace

std::string serialize_public_key(const PaillierPublicKey &pk) {
    std::string out;
    out.push_back(static_cast<char>(kKeyVersion));
    put_u32_be(out, pk.modulus_bits);
    put_mpz(out, pk.n);
    return out;
}

std::string serialize_private_key(const PaillierKeypair &kp) {
    std::string out;
    out.push_back(static_cast<char>(kKeyVersion));
    put_u32_be(out, kp.pub.modulus_bits);
    put_mpz(out, kp.pub.n);
    put_mpz(out, kp.priv.p);
    put_mpz(out, kp.priv.q);
    return out;
}

PaillierPublicKey parse_public_key(const std::string &bytes) {
    ByteReader r{bytes};
    if (r.u8() != kKeyVersion) throw ParseError("unsupported key file version", 0);
    std::uint32_t bits = r.u32_be();
    mpz_class n = r.big();
    r.done();
    PaillierPublicKey pk;
    pk.n = n;
    pk.n2 = n * n;
    pk.modulus_bits = bits;
    pk.key_id = key_id_of(n);
    if (mpz_sizeinbase(n.get_mpz_t(), 2) != bits)
        throw ParseError("key file modulus size does not match declared bits", 1);
    return pk;
}

PaillierKeypair parse_private_key(const std::string &bytes) {
    ByteReader r{bytes};
    if (r.u8() != kKeyVersion) throw ParseError("unsupported key file version", 0);
    std::uint32_t bits = r.u32_be();
    mpz_class n = r.big();
    mpz_class p = r.big();
    mpz_class q = r.big();
    r.done();
    if (p * q != n) throw ParseError("private key file inconsistent: p·q != n", 1);
    PaillierKeypair kp = keypair_from_primes(p, q);
    if (kp.pub.modulus_bits != bits)
        throw ParseError("key file modulus size does not match declared bits", 1);
    return kp;
}

} // namespace sfxb

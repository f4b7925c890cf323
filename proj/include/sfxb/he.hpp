#pragma once
#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sfxb {

struct PaillierPublicKey {
    mpz_class n;  // p·q
    mpz_class n2; // n², ciphertext modulus; generator is n+1 implicitly
    unsigned modulus_bits = 0;
    std::uint64_t key_id = 0;
};

struct PaillierPrivateKey {
    mpz_class p, q;
    mpz_class lambda; // lcm(p−1, q−1)
    mpz_class mu;     // lambda⁻¹ mod n
};

struct PaillierKeypair {
    PaillierPublicKey pub;
    PaillierPrivateKey priv;
};

struct Ciphertext {
    mpz_class value; // in [1, n²), coprime to n
    std::uint64_t key_id = 0;
};

// Deterministic randomness source for key generation and blinding factors.
class HeRng {
public:
    explicit HeRng(std::uint64_t seed);
    mpz_class bits(unsigned nbits);
    // uniform in (1, n) and coprime to n
    mpz_class unit_below(const mpz_class &n);

private:
    gmp_randclass state_;
};

std::uint64_t key_id_of(const mpz_class &n);

// Allowed sizes: 512 (tests only), 1024, 2048, 3072. Deterministic per seed.
PaillierKeypair keygen(unsigned modulus_bits, std::uint64_t seed);
// Test-scale constructor for hand-checkable arithmetic (tiny primes allowed).
PaillierKeypair keypair_from_primes(const mpz_class &p, const mpz_class &q);

Ciphertext encrypt(const PaillierPublicKey &pk, const mpz_class &m, HeRng &rng);
Ciphertext encrypt_with_r(const PaillierPublicKey &pk, const mpz_class &m, const mpz_class &r);
mpz_class decrypt(const PaillierPublicKey &pk, const PaillierPrivateKey &sk, const Ciphertext &c);
Ciphertext add_ciphertexts(const PaillierPublicKey &pk, const Ciphertext &a, const Ciphertext &b);

// The canonical zero ciphertext (value 1 = encryption of 0 with unit blinding);
// used to keep histogram shapes fixed without spending an encryption.
Ciphertext trivial_zero(const PaillierPublicKey &pk);
inline bool is_trivial_zero(const Ciphertext &c) { return c.value == 1; }

// Fixed-point scalars in Z_n: raw = round(x·2^scale) mod n, upper half negative.
mpz_class encode_fixed(const PaillierPublicKey &pk, double x, unsigned scale_bits);
double decode_fixed(const PaillierPublicKey &pk, const mpz_class &raw, unsigned scale_bits);

// ---- packed multi-slot vectors (vector interface for horizontal mode) ----

struct PackedLayout {
    unsigned modulus_bits = 2048;
    unsigned slot_bits = 128;
    unsigned guard_bits = 10; // supports up to 2^guard_bits slot-wise additions
    unsigned scale_bits = 40;

    unsigned slots_per_ciphertext() const; // floor((modulus_bits − 1)/slot_bits)
    mpz_class slot_bias() const;           // 2^(slot_bits − guard_bits − 1)
    void validate() const;
};

struct PackedVector {
    std::vector<Ciphertext> cts;
    std::uint32_t logical_length = 0;
    std::uint32_t addend_count = 1; // how many packed vectors were summed in
    unsigned slot_bits = 0;
    unsigned guard_bits = 0;
    unsigned scale_bits = 0;
};

// Plaintext packing layer (the encrypt/decrypt wrappers ride on these; tests
// exercise the no-carry guarantee here at integer level).
std::vector<mpz_class> pack_plain(const PackedLayout &layout, std::span<const double> values);
std::vector<double> unpack_plain(const PackedLayout &layout, std::span<const mpz_class> packed,
                                 std::size_t logical_length, std::uint32_t addend_count);

PackedVector pack_encrypt(const PaillierPublicKey &pk, const PackedLayout &layout,
                          std::span<const double> values, HeRng &rng);
PackedVector add_packed(const PaillierPublicKey &pk, const PackedVector &a,
                        const PackedVector &b);
std::vector<double> unpack_decrypt(const PaillierPublicKey &pk, const PaillierPrivateKey &sk,
                                   const PackedVector &v);

// Key files: version byte, u32 big-endian field sizes/lengths, big-endian
// magnitudes. Private file embeds the primes; lambda/mu are recomputed.
std::string serialize_public_key(const PaillierPublicKey &pk);
std::string serialize_private_key(const PaillierKeypair &kp);
PaillierPublicKey parse_public_key(const std::string &bytes);
PaillierKeypair parse_private_key(const std::string &bytes);

} // namespace sfxb

#pragma once
#include <cstdint>

namespace sfxb {

// Instrumented cost counters. Units follow the plugin granularity: scalar
// operations for the scalar (vertical) path, whole packed vectors for the
// vector (horizontal) path. Monotone non-decreasing within a run.
struct OpCounters {
    std::uint64_t encryptions = 0;
    std::uint64_t ciphertext_additions = 0;
    std::uint64_t decryptions = 0;
    std::uint64_t bytes_transferred = 0;

    OpCounters &operator+=(const OpCounters &o) {
        encryptions += o.encryptions;
        ciphertext_additions += o.ciphertext_additions;
        decryptions += o.decryptions;
        bytes_transferred += o.bytes_transferred;
        return *this;
    }
    friend OpCounters operator-(OpCounters a, const OpCounters &b) {
        return OpCounters{a.encryptions - b.encryptions,
                          a.ciphertext_additions - b.ciphertext_additions,
                          a.decryptions - b.decryptions,
                          a.bytes_transferred - b.bytes_transferred};
    }
    friend bool operator==(const OpCounters &a, const OpCounters &b) {
        return a.encryptions == b.encryptions &&
               a.ciphertext_additions == b.ciphertext_additions &&
               a.decryptions == b.decryptions && a.bytes_transferred == b.bytes_transferred;
    }
};

} // namespace sfxb

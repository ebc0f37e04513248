#pragma once

// Hashing and recoverable signatures. The chain parameters are fixed here:
// SHA-256 for all digests, ECDSA over secp256k1 with a recovery id and a
// derandomized nonce so signing is reproducible. Signatures are canonical
// (low-s); high-s signatures are rejected on recovery.

#include "abc/bytes.h"

namespace abc::crypto {

struct CryptoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidSeed : CryptoError {
    InvalidSeed() : CryptoError("seed reduces to the zero scalar") {}
};
struct RecoveryFailure : CryptoError {
    explicit RecoveryFailure(const std::string& what) : CryptoError(what) {}
};

Digest digest(const uint8_t* data, size_t len);
Digest digest(const Bytes& data);
Digest digest(std::string_view data);

using PublicKey = std::array<uint8_t, 33>;  // compressed SEC1 point
using SecretKey = std::array<uint8_t, 32>;

struct RecoverableSignature {
    std::array<uint8_t, 32> r{};
    std::array<uint8_t, 32> s{};
    uint8_t recovery_id = 0;  // in {0,1,2,3}

    bool operator==(const RecoverableSignature&) const = default;

    // 65-byte wire form r || s || recovery_id.
    std::array<uint8_t, 65> serialize() const;
    static RecoverableSignature deserialize(const uint8_t* p);
    bool is_zero() const;  // reserved all-zero signature (genesis)
};

struct KeyPair {
    PublicKey pub{};
    SecretKey sec{};
};

// Deterministic from seed (seed is reduced mod the group order).
KeyPair keygen(const std::array<uint8_t, 32>& seed);

RecoverableSignature sign(const SecretKey& sec, const Bytes& message);
PublicKey recover(const RecoverableSignature& sig, const Bytes& message);

Address address_of(const PublicKey& pk);

}  // namespace abc::crypto

#include "abc/crypto.h"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/obj_mac.h>

#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace abc::crypto {

Digest digest(const uint8_t* data, size_t len) {
    Digest out{};
    unsigned int outlen = 0;
    EVP_Digest(data, len, out.data(), &outlen, EVP_sha256(), nullptr);
    return out;
}

Digest digest(const Bytes& data) { return digest(data.data(), data.size()); }
Digest digest(std::string_view data) {
    return digest(reinterpret_cast<const uint8_t*>(data.data()), data.size());
}

std::array<uint8_t, 65> RecoverableSignature::serialize() const {
    std::array<uint8_t, 65> out{};
    std::memcpy(out.data(), r.data(), 32);
    std::memcpy(out.data() + 32, s.data(), 32);
    out[64] = recovery_id;
    return out;
}

RecoverableSignature RecoverableSignature::deserialize(const uint8_t* p) {
    RecoverableSignature sig;
    std::memcpy(sig.r.data(), p, 32);
    std::memcpy(sig.s.data(), p + 32, 32);
    sig.recovery_id = p[64];
    return sig;
}

bool RecoverableSignature::is_zero() const {
    for (auto b : r)
        if (b) return false;
    for (auto b : s)
        if (b) return false;
    return recovery_id == 0;
}

namespace {

struct BnDel {
    void operator()(BIGNUM* p) const { BN_free(p); }
};
struct PtDel {
    void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
struct CtxDel {
    void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
using Bn = std::unique_ptr<BIGNUM, BnDel>;
using Pt = std::unique_ptr<EC_POINT, PtDel>;
using Ctx = std::unique_ptr<BN_CTX, CtxDel>;

const EC_GROUP* group() {
    static EC_GROUP* g = EC_GROUP_new_by_curve_name(NID_secp256k1);
    return g;
}

const BIGNUM* order() {
    static BIGNUM* n = [] {
        BIGNUM* v = BN_new();
        Ctx ctx(BN_CTX_new());
        BN_copy(v, EC_GROUP_get0_order(group()));
        return v;
    }();
    return n;
}

const BIGNUM* half_order() {
    static BIGNUM* h = [] {
        BIGNUM* v = BN_new();
        BN_rshift1(v, order());
        return v;
    }();
    return h;
}

const BIGNUM* field_prime() {
    static BIGNUM* p = [] {
        BIGNUM* v = BN_new();
        Ctx ctx(BN_CTX_new());
        Bn a(BN_new()), b(BN_new());
        EC_GROUP_get_curve(group(), v, a.get(), b.get(), ctx.get());
        return v;
    }();
    return p;
}

Bn bn_from32(const uint8_t* p) { return Bn(BN_bin2bn(p, 32, nullptr)); }

void bn_to32(const BIGNUM* v, uint8_t* out) {
    BN_bn2binpad(v, out, 32);
}

PublicKey compress(const EC_POINT* pt, BN_CTX* ctx) {
    PublicKey out{};
    size_t len = EC_POINT_point2oct(group(), pt, POINT_CONVERSION_COMPRESSED,
                                    out.data(), out.size(), ctx);
    if (len != 33) throw CryptoError("point serialization failed");
    return out;
}

}  // namespace

KeyPair keygen(const std::array<uint8_t, 32>& seed) {
    Ctx ctx(BN_CTX_new());
    Bn sk = bn_from32(seed.data());
    BN_mod(sk.get(), sk.get(), order(), ctx.get());
    if (BN_is_zero(sk.get())) throw InvalidSeed();
    Pt pub(EC_POINT_new(group()));
    EC_POINT_mul(group(), pub.get(), sk.get(), nullptr, nullptr, ctx.get());
    KeyPair kp;
    bn_to32(sk.get(), kp.sec.data());
    kp.pub = compress(pub.get(), ctx.get());
    return kp;
}

RecoverableSignature sign(const SecretKey& sec, const Bytes& message) {
    Ctx ctx(BN_CTX_new());
    Digest z = digest(message);
    Bn zbn = bn_from32(z.data());
    Bn skbn = bn_from32(sec.data());
    if (BN_is_zero(skbn.get()) || BN_cmp(skbn.get(), order()) >= 0)
        throw CryptoError("invalid secret key");

    // Derandomized nonce: k = H(sec || H(msg) || counter) mod n, retried on
    // degenerate outcomes.
    for (uint32_t counter = 0;; ++counter) {
        Bytes seed;
        seed.insert(seed.end(), sec.begin(), sec.end());
        seed.insert(seed.end(), z.begin(), z.end());
        put_u32(seed, counter);
        Digest kd = digest(seed);
        Bn k = bn_from32(kd.data());
        BN_mod(k.get(), k.get(), order(), ctx.get());
        if (BN_is_zero(k.get())) continue;

        Pt R(EC_POINT_new(group()));
        EC_POINT_mul(group(), R.get(), k.get(), nullptr, nullptr, ctx.get());
        Bn rx(BN_new()), ry(BN_new());
        EC_POINT_get_affine_coordinates(group(), R.get(), rx.get(), ry.get(),
                                        ctx.get());
        uint8_t recid = 0;
        if (BN_cmp(rx.get(), order()) >= 0) recid |= 2;
        if (BN_is_odd(ry.get())) recid |= 1;

        Bn r(BN_new());
        BN_mod(r.get(), rx.get(), order(), ctx.get());
        if (BN_is_zero(r.get())) continue;

        // s = k^{-1} (z + r*sk) mod n
        Bn s(BN_new()), tmp(BN_new()), kinv(BN_new());
        BN_mod_mul(tmp.get(), r.get(), skbn.get(), order(), ctx.get());
        BN_mod_add(tmp.get(), tmp.get(), zbn.get(), order(), ctx.get());
        BN_mod_inverse(kinv.get(), k.get(), order(), ctx.get());
        BN_mod_mul(s.get(), kinv.get(), tmp.get(), order(), ctx.get());
        if (BN_is_zero(s.get())) continue;

        // Canonicalize to low-s; negating s mirrors R over the x axis.
        if (BN_cmp(s.get(), half_order()) > 0) {
            BN_sub(s.get(), order(), s.get());
            recid ^= 1;
        }

        RecoverableSignature sig;
        bn_to32(r.get(), sig.r.data());
        bn_to32(s.get(), sig.s.data());
        sig.recovery_id = recid;
        return sig;
    }
}

namespace {

PublicKey recover_uncached(const RecoverableSignature& sig, const Digest& z) {
    if (sig.recovery_id > 3) throw RecoveryFailure("recovery id out of range");
    Ctx ctx(BN_CTX_new());
    Bn r = bn_from32(sig.r.data());
    Bn s = bn_from32(sig.s.data());
    if (BN_is_zero(r.get()) || BN_cmp(r.get(), order()) >= 0)
        throw RecoveryFailure("r out of range");
    if (BN_is_zero(s.get()) || BN_cmp(s.get(), order()) >= 0)
        throw RecoveryFailure("s out of range");
    if (BN_cmp(s.get(), half_order()) > 0)
        throw RecoveryFailure("non-canonical high-s signature");

    // Candidate R has x = r + (recid >> 1) * n and the y parity in bit 0.
    Bn x(BN_new());
    BN_copy(x.get(), r.get());
    if (sig.recovery_id & 2) BN_add(x.get(), x.get(), order());
    if (BN_cmp(x.get(), field_prime()) >= 0)
        throw RecoveryFailure("x overflows the field");
    Pt R(EC_POINT_new(group()));
    if (EC_POINT_set_compressed_coordinates(group(), R.get(), x.get(),
                                            sig.recovery_id & 1,
                                            ctx.get()) != 1)
        throw RecoveryFailure("no curve point at recovered x");

    // Q = r^{-1} (s*R - z*G)
    Bn zbn = bn_from32(z.data());
    Bn rinv(BN_new()), u1(BN_new()), u2(BN_new());
    BN_mod_inverse(rinv.get(), r.get(), order(), ctx.get());
    BN_mod_mul(u2.get(), s.get(), rinv.get(), order(), ctx.get());
    BN_mod_mul(u1.get(), zbn.get(), rinv.get(), order(), ctx.get());
    BN_mod_sub(u1.get(), order(), u1.get(), order(), ctx.get());
    BN_mod(u1.get(), u1.get(), order(), ctx.get());
    Pt Q(EC_POINT_new(group()));
    EC_POINT_mul(group(), Q.get(), u1.get(), R.get(), u2.get(), ctx.get());
    if (EC_POINT_is_at_infinity(group(), Q.get()))
        throw RecoveryFailure("recovered point at infinity");
    return compress(Q.get(), ctx.get());
}

struct DigestHash {
    size_t operator()(const Digest& d) const {
        size_t h;
        std::memcpy(&h, d.data(), sizeof(h));
        return h;
    }
};

}  // namespace

PublicKey recover(const RecoverableSignature& sig, const Bytes& message) {
    // recover is pure, and the same (sig, message) pair is re-verified at
    // every gateway and by every audit pass; memoize successful results.
    static std::mutex mu;
    static std::unordered_map<Digest, PublicKey, DigestHash> cache;

    Digest z = digest(message);
    auto ser = sig.serialize();
    Bytes key_bytes(ser.begin(), ser.end());
    key_bytes.insert(key_bytes.end(), z.begin(), z.end());
    Digest key = digest(key_bytes);
    {
        std::lock_guard lk(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    PublicKey pk = recover_uncached(sig, z);
    {
        std::lock_guard lk(mu);
        if (cache.size() > (1u << 20)) cache.clear();
        cache.emplace(key, pk);
    }
    return pk;
}

Address address_of(const PublicKey& pk) {
    Digest d = digest(pk.data(), pk.size());
    Address a{};
    std::memcpy(a.data(), d.data() + 12, 20);
    return a;
}

}  // namespace abc::crypto

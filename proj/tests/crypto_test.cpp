#include <doctest.h>

#include <set>

#include "abc/crypto.h"
#include "test_util.h"

using namespace abc;
using namespace testutil;

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(hex(crypto::digest(std::string_view{})) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(hex(crypto::digest(std::string_view{"abc"})) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(hex(crypto::digest(std::string_view{
              "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"})) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("digest is deterministic") {
    Bytes data = to_bytes("some payload");
    CHECK(crypto::digest(data) == crypto::digest(data));
}

TEST_CASE("keygen is deterministic and rejects the zero scalar") {
    auto a = crypto::keygen(seed_bytes(42));
    auto b = crypto::keygen(seed_bytes(42));
    CHECK(a.pub == b.pub);
    CHECK(a.sec == b.sec);
    CHECK_THROWS_AS(crypto::keygen(std::array<uint8_t, 32>{}), crypto::InvalidSeed);
}

TEST_CASE("distinct seeds give distinct public keys") {
    std::set<crypto::PublicKey> keys;
    for (uint64_t i = 1; i <= 10'000; ++i)
        keys.insert(crypto::keygen(seed_bytes(i)).pub);
    CHECK(keys.size() == 10'000);
}

TEST_CASE("sign/recover round trip") {
    auto kp = key(7);
    Bytes msg = to_bytes("hello chain");
    auto sig = crypto::sign(kp.sec, msg);
    CHECK(crypto::recover(sig, msg) == kp.pub);
    CHECK(crypto::sign(kp.sec, msg) == sig);  // derandomized
    CHECK(crypto::recover(sig, msg) == crypto::recover(sig, msg));
}

TEST_CASE("recovery with a tampered message never yields the signer's key") {
    auto kp = key(9);
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        Bytes msg = random_bytes(rng, 64);
        auto sig = crypto::sign(kp.sec, msg);
        Bytes tampered = msg;
        tampered[rng() % tampered.size()] ^= uint8_t(1) << (rng() % 8);
        try {
            auto pk = crypto::recover(sig, tampered);
            CHECK(pk != kp.pub);
        } catch (const crypto::RecoveryFailure&) {
            // also acceptable
        }
    }
}

TEST_CASE("corrupted recovery ids never verify as the signer") {
    auto kp = key(11);
    Bytes msg = to_bytes("recovery id sweep");
    auto sig = crypto::sign(kp.sec, msg);
    for (uint8_t id = 0; id < 4; ++id) {
        if (id == sig.recovery_id) continue;
        auto bad = sig;
        bad.recovery_id = id;
        try {
            auto pk = crypto::recover(bad, msg);
            CHECK(pk != kp.pub);
        } catch (const crypto::RecoveryFailure&) {
        }
    }
}

TEST_CASE("signatures are canonical low-s and high-s is rejected") {
    // n and n/2 for secp256k1.
    const char* kOrder =
        "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141";
    Bytes order = hex_decode(kOrder);
    auto kp = key(13);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 20; ++i) {
        Bytes msg = random_bytes(rng, 32);
        auto sig = crypto::sign(kp.sec, msg);
        // Forge the high-s twin: s' = n - s. It must be rejected.
        auto twin = sig;
        uint16_t borrow = 0;
        for (int k = 31; k >= 0; --k) {
            int32_t d = int32_t(order[k]) - int32_t(sig.s[k]) - borrow;
            borrow = d < 0;
            twin.s[k] = static_cast<uint8_t>(d + (borrow ? 256 : 0));
        }
        twin.recovery_id ^= 1;
        CHECK_THROWS_AS(crypto::recover(twin, msg), crypto::RecoveryFailure);
    }
}

TEST_CASE("address derivation is stable") {
    auto kp = key(1);
    CHECK(crypto::address_of(kp.pub) == crypto::address_of(kp.pub));
    CHECK(crypto::address_of(kp.pub) != crypto::address_of(key(2).pub));
}

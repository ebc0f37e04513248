#include <doctest.h>

#include <set>

#include "abc/engine.h"
#include "abc/vm.h"
#include "oracle.h"
#include "test_util.h"

using namespace abc;
using namespace testutil;

namespace {

const engine::Engine::ConsensusFn kYes = [](const model::Transaction&) { return true; };
const engine::Engine::ConsensusFn kNo = [](const model::Transaction&) { return false; };

// Bitwise fingerprint of the chain plus every state node reachable from any
// root it references.
Bytes full_snapshot(const engine::Engine& eng) {
    Bytes snap = model::canonical_encode_chain(eng.chain());
    for (const auto& block : eng.chain().blocks) {
        std::vector<const model::CommittedTransaction*> cts;
        cts.push_back(&block.header.first_ct);
        for (const auto& ct : block.ledger) cts.push_back(&ct);
        for (const auto* ct : cts) {
            if (!ct->state_root) continue;
            for (const auto& rec :
                 eng.store().export_reachable(state::StateRoot{*ct->state_root}))
                snap.insert(snap.end(), rec.begin(), rec.end());
        }
    }
    return snap;
}

}  // namespace

TEST_CASE("mempool is FIFO and deduplicates") {
    engine::Mempool pool;
    auto t1 = create_pd_tx(key(1), to_bytes("a"));
    auto t2 = create_pd_tx(key(2), to_bytes("b"));
    CHECK(pool.submit(t1));
    CHECK(pool.submit(t2));
    CHECK_FALSE(pool.submit(t1));  // duplicate
    CHECK(pool.size() == 2);
    CHECK(*pool.poll() == t1);
    CHECK(*pool.poll() == t2);
    CHECK(pool.empty());
    CHECK_FALSE(pool.submit(t1));  // seen set persists across polls
}

TEST_CASE("block creation happy paths") {
    engine::Engine eng;
    auto k1 = key(10), k2 = key(11);

    eng.mempool().submit(create_pd_tx(k1, to_bytes("sensor")));
    auto ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::BlockAdded);
    CHECK(ev.block_index == 1);
    CHECK(model::get_block(eng.chain(), 1).header.owner == k1.pub);

    eng.mempool().submit(create_context_tx(k2, vm::assemble("PUSH1 3; PUSH1 0; SSTORE")));
    ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::BlockAdded);
    CHECK(ev.block_index == 2);
    const auto& cb = model::get_block(eng.chain(), 2);
    CHECK_FALSE(cb.header.owner.has_value());
    REQUIRE(cb.header.first_ct.state_root.has_value());
    CHECK(eng.store().knows({*cb.header.first_ct.state_root}));
}

TEST_CASE("duplicate owner and consensus refusal reject without mutation") {
    engine::Engine eng;
    auto k = key(12);
    eng.mempool().submit(create_pd_tx(k, to_bytes("one")));
    eng.step(kYes);
    auto before = full_snapshot(eng);

    eng.mempool().submit(create_pd_tx(k, to_bytes("two")));
    auto ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::TransactionRejected);
    CHECK(full_snapshot(eng) == before);

    eng.mempool().submit(create_pd_tx(key(13), to_bytes("three")));
    ev = eng.step(kNo);
    CHECK(ev.kind == engine::EventKind::TransactionRejected);
    CHECK(ev.detail == "consensus_refused");
    CHECK(full_snapshot(eng) == before);
}

TEST_CASE("appends enforce ownership, destination and pt") {
    engine::Engine eng;
    auto owner = key(14), stranger = key(15);
    eng.mempool().submit(create_pd_tx(owner, to_bytes("base")));
    eng.step(kYes);

    auto pt = model::pre_ct_hash(model::get_block(eng.chain(), 1));
    eng.mempool().submit(append_tx(stranger, to_bytes("x"), 1, pt));
    CHECK(eng.step(kYes).kind == engine::EventKind::TransactionRejected);

    eng.mempool().submit(append_tx(owner, to_bytes("x"), 7, pt));
    CHECK(eng.step(kYes).kind == engine::EventKind::TransactionRejected);

    Digest stale = pt;
    stale[3] ^= 1;
    eng.mempool().submit(append_tx(owner, to_bytes("x"), 1, stale));
    CHECK(eng.step(kYes).kind == engine::EventKind::TransactionRejected);

    eng.mempool().submit(append_tx(owner, to_bytes("x"), 1, pt));
    auto ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::TransactionAppended);
    CHECK(model::get_block(eng.chain(), 1).ledger.size() == 1);

    // Appending to genesis is never allowed, even for a signer.
    auto gpt = model::pre_ct_hash(model::get_block(eng.chain(), 0));
    eng.mempool().submit(append_tx(owner, to_bytes("x"), 0, gpt));
    CHECK(eng.step(kYes).kind == engine::EventKind::TransactionRejected);
}

TEST_CASE("context appends execute and roll the state root forward") {
    engine::Engine eng;
    auto k = key(16);
    eng.mempool().submit(create_context_tx(k, vm::assemble("PUSH1 5; PUSH1 1; SSTORE")));
    eng.step(kYes);

    auto pt = model::pre_ct_hash(model::get_block(eng.chain(), 1));
    eng.mempool().submit(append_tx(k, vm::assemble("PUSH1 1; SLOAD; PUSH1 2; SSTORE"),
                                   1, pt));
    auto ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::TransactionAppended);
    const auto& block = model::get_block(eng.chain(), 1);
    REQUIRE(block.ledger.size() == 1);
    REQUIRE(block.ledger[0].state_root.has_value());
    CHECK_FALSE(*block.ledger[0].state_root == *block.header.first_ct.state_root);

    // Anyone may call into a context block; there is no owner to enforce.
    auto other = key(17);
    eng.mempool().submit(append_tx(other, vm::assemble("PUSH1 1; SLOAD; RETURN1"), 1,
                                   model::pre_ct_hash(block)));
    CHECK(eng.step(kYes).kind == engine::EventKind::TransactionAppended);
}

TEST_CASE("every vm error kind leaves chain and state untouched") {
    engine::Engine eng;
    auto k = key(18);
    eng.mempool().submit(
        create_context_tx(k, vm::assemble("PUSH1 11; PUSH1 1; SSTORE")));
    eng.step(kYes);

    struct Case {
        Bytes code;
        vm::VmErrorKind kind;
    };
    std::vector<Case> cases = {
        {Bytes{0xfe}, vm::VmErrorKind::InvalidBytecode},
        {vm::assemble("PUSH1 0; JUMP"), vm::VmErrorKind::OutOfGas},
        {vm::assemble("POP"), vm::VmErrorKind::StackViolation},
        {vm::assemble("PUSH32 0x1234; CALL"), vm::VmErrorKind::CrossContextCall},
        {vm::assemble("PUSH1 1; PUSH1 9; SSTORE; REVERT"),
         vm::VmErrorKind::ExplicitRevert},
    };
    for (const auto& c : cases) {
        CAPTURE(vm::vm_error_name(c.kind));
        auto before = full_snapshot(eng);
        auto pt = model::pre_ct_hash(model::get_block(eng.chain(), 1));
        eng.mempool().submit(append_tx(k, c.code, 1, pt));
        auto ev = eng.step(kYes);
        CHECK(ev.kind == engine::EventKind::TransactionRejected);
        CHECK(ev.detail.find("vm_failure") != std::string::npos);
        CHECK(full_snapshot(eng) == before);
    }
}

TEST_CASE("adapter failure is atomic too") {
    engine::Engine eng;
    // An executor whose transport is broken: always AdapterFailure.
    eng.set_executor([](state::StateStore&, const std::optional<state::StateRoot>&,
                        const Bytes&, const Address&, uint64_t) -> vm::Outcome {
        return vm::VmError{vm::VmErrorKind::AdapterFailure, "pipe closed"};
    });
    auto before = full_snapshot(eng);
    eng.mempool().submit(create_context_tx(key(19), vm::assemble("HALT")));
    auto ev = eng.step(kYes);
    CHECK(ev.kind == engine::EventKind::TransactionRejected);
    CHECK(full_snapshot(eng) == before);
}

TEST_CASE("events carry digests and phase timings") {
    engine::Engine eng;
    std::vector<engine::EngineEvent> seen;
    eng.subscribe([&](const engine::EngineEvent& ev) { seen.push_back(ev); });
    auto tx = create_context_tx(key(20), vm::assemble("PUSH1 1; PUSH1 1; SSTORE"));
    eng.mempool().submit(tx);
    eng.step(kYes);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].tx_digest == crypto::digest(model::canonical_encode(tx)));
    CHECK(seen[0].gas_used == 2 * vm::kGasPerInstruction + vm::kGasStore);
    CHECK(seen[0].timings.vm_ns > 0);
}

TEST_CASE("preview matches apply without mutating the chain") {
    engine::Engine eng;
    auto k = key(21);
    auto tx = create_pd_tx(k, to_bytes("peek"));
    auto before = model::canonical_encode_chain(eng.chain());
    auto pv = eng.preview(tx);
    CHECK(pv.kind == engine::EventKind::BlockAdded);
    CHECK(model::canonical_encode_chain(eng.chain()) == before);
    auto ev = eng.apply_decided(tx);
    CHECK(ev.kind == pv.kind);
    CHECK(ev.block_index == pv.block_index);
    // Now the same creation previews as a rejection (duplicate owner).
    auto tx2 = create_pd_tx(k, to_bytes("again"));
    CHECK(eng.preview(tx2).kind == engine::EventKind::TransactionRejected);
}

TEST_CASE("appends to distinct blocks commute") {
    auto build = [](bool swapped) {
        engine::Engine eng;
        auto k1 = key(22), k2 = key(23);
        eng.apply_decided(create_pd_tx(k1, to_bytes("a")));
        eng.apply_decided(create_context_tx(k2, vm::assemble("PUSH1 1; PUSH1 1; SSTORE")));
        auto t1 = append_tx(k1, to_bytes("data"), 1,
                            model::pre_ct_hash(model::get_block(eng.chain(), 1)));
        auto t2 = append_tx(k2, vm::assemble("PUSH1 2; PUSH1 2; SSTORE"), 2,
                            model::pre_ct_hash(model::get_block(eng.chain(), 2)));
        if (swapped) {
            eng.apply_decided(t2);
            eng.apply_decided(t1);
        } else {
            eng.apply_decided(t1);
            eng.apply_decided(t2);
        }
        return model::canonical_encode_chain(eng.chain());
    };
    CHECK(build(false) == build(true));
}

TEST_CASE("engine matches the brute-force oracle on seeded workloads") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        CAPTURE(seed);
        CHECK(oracle::differential_ok(seed));
    }
}

TEST_CASE("step requires a transaction") {
    engine::Engine eng;
    CHECK_THROWS_AS(eng.step(kYes), std::logic_error);
}

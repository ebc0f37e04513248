#include <doctest.h>

#include <sstream>

#include "abc/sim.h"
#include "abc/workload.h"
#include "test_util.h"

using namespace abc;
using namespace testutil;

namespace {

// A lane: one context creation plus `calls` contract-style appends.
sim::Lane context_lane(uint64_t key_n, uint32_t gateway, int calls) {
    auto kp = key(key_n);
    sim::Lane lane;
    lane.gateway = gateway;
    sim::LaneTx create;
    create.tx = create_context_tx(kp, vm::assemble("PUSH1 1; PUSH1 0; SSTORE"));
    auto create_sig = create.tx.sig;
    lane.txs.push_back(std::move(create));
    for (int i = 0; i < calls; ++i) {
        sim::LaneTx call;
        call.tx = append_tx(kp, vm::assemble("PUSH1 " + std::to_string(i % 200) +
                                             "; PUSH1 0; SSTORE"),
                            0, Digest{});
        call.resolve_pt = true;
        call.signer = kp.sec;
        call.to_block_by_first_sig = create_sig;
        lane.txs.push_back(std::move(call));
    }
    return lane;
}

sim::Lane pd_lane(uint64_t key_n, uint32_t gateway, int appends) {
    auto kp = key(key_n);
    sim::Lane lane;
    lane.gateway = gateway;
    sim::LaneTx create;
    create.tx = create_pd_tx(kp, to_bytes("base"));
    lane.txs.push_back(std::move(create));
    std::mt19937_64 rng(key_n);
    for (int i = 0; i < appends; ++i) {
        sim::LaneTx ap;
        ap.tx = append_tx(kp, random_bytes(rng, 16), 0, Digest{});
        ap.resolve_pt = true;
        ap.signer = kp.sec;
        ap.to_block_by_owner = kp.pub;
        lane.txs.push_back(std::move(ap));
    }
    return lane;
}

void check_all_identical(sim::Cluster& cluster) {
    std::optional<Bytes> ref;
    for (uint32_t g = 0; g < cluster.size(); ++g) {
        if (!cluster.alive(g)) continue;
        auto enc = model::canonical_encode_chain(cluster.gateway_engine(g).chain());
        if (!ref)
            ref = enc;
        else
            CHECK(enc == *ref);
    }
}

}  // namespace

TEST_CASE("empty workload leaves ten identical genesis-only chains") {
    sim::Cluster cluster(10, {});
    auto trace = cluster.run();
    CHECK(trace.events.empty());
    for (uint32_t g = 0; g < 10; ++g)
        CHECK(cluster.gateway_engine(g).chain().size() == 1);
    check_all_identical(cluster);
}

TEST_CASE("four gateways decide a valid proposal everywhere") {
    sim::Cluster cluster(4, {});
    auto kp = key(300);
    auto tx = create_pd_tx(kp, to_bytes("hello"));
    Digest d = crypto::digest(model::canonical_encode(tx));
    sim::Lane lane;
    lane.txs.push_back({tx});
    cluster.add_lane(std::move(lane));
    cluster.run();
    for (uint32_t g = 0; g < 4; ++g) {
        CHECK(cluster.decision(g, d) == 1);
        CHECK(cluster.gateway_engine(g).chain().size() == 2);
    }
    CHECK(cluster.decided_accept(d));
    check_all_identical(cluster);
}

TEST_CASE("a duplicate-owner proposal is refused at every gateway") {
    sim::Cluster cluster(4, {});
    auto kp = key(301);
    auto first = create_pd_tx(kp, to_bytes("one"));
    auto second = create_pd_tx(kp, to_bytes("two"));
    Digest d2 = crypto::digest(model::canonical_encode(second));
    sim::Lane lane;
    lane.txs.push_back({first});
    lane.txs.push_back({second});
    cluster.add_lane(std::move(lane));
    auto trace = cluster.run();
    for (uint32_t g = 0; g < 4; ++g) CHECK(cluster.decision(g, d2) == 0);
    CHECK(cluster.decided_reject(d2));
    bool refused_in_trace = false;
    for (const auto& ev : trace.events)
        if (ev.primary && ev.tx_digest == d2)
            refused_in_trace = ev.detail.find("consensus_refused") != std::string::npos;
    CHECK(refused_in_trace);
    check_all_identical(cluster);
}

TEST_CASE("replication: context appends give every store the same root") {
    sim::Cluster cluster(4, {});
    cluster.add_lane(context_lane(310, 0, 3));
    cluster.run();
    check_all_identical(cluster);
    std::optional<Digest> root;
    for (uint32_t g = 0; g < 4; ++g) {
        const auto& block = model::get_block(cluster.gateway_engine(g).chain(), 1);
        REQUIRE(block.ledger.size() == 3);
        auto r = *block.ledger.back().state_root;
        CHECK(cluster.gateway_engine(g).store().knows({r}));
        if (!root)
            root = r;
        else
            CHECK(*root == r);
    }
}

TEST_CASE("a crashed follower does not stop progress") {
    sim::Cluster cluster(4, {});
    cluster.add_lane(pd_lane(320, 0, 5));
    cluster.crash_at(2, 8'000'000);  // view 0 leader is gateway 0
    auto trace = cluster.run();
    CHECK_FALSE(cluster.alive(2));
    size_t appended = 0;
    for (const auto& ev : trace.events)
        if (ev.primary && ev.kind == "transaction_appended") ++appended;
    CHECK(appended == 5);
    check_all_identical(cluster);
}

TEST_CASE("a crashed leader triggers a view change and the run completes") {
    sim::Cluster cluster(4, {});
    cluster.add_lane(pd_lane(321, 1, 4));
    cluster.crash_at(0, 7'500'000);  // the view-0 leader dies mid-run
    auto trace = cluster.run();
    size_t decided = 0;
    for (const auto& ev : trace.events)
        if (ev.primary && ev.kind != "transaction_rejected") ++decided;
    CHECK(decided == 5);  // creation + 4 appends
    check_all_identical(cluster);
}

TEST_CASE("a crashed entry gateway makes the client fail over") {
    sim::Cluster cluster(4, {});
    cluster.add_lane(pd_lane(322, 3, 3));
    cluster.crash_at(3, 6'000'000);
    auto trace = cluster.run();
    size_t decided = 0;
    for (const auto& ev : trace.events)
        if (ev.primary && ev.kind != "transaction_rejected") ++decided;
    CHECK(decided == 4);
    check_all_identical(cluster);
}

TEST_CASE("losing quorum deadlocks rather than diverging") {
    sim::NetConfig cfg;
    cfg.idle_limit_ns = 2'000'000'000;
    sim::Cluster cluster(4, cfg);
    cluster.add_lane(pd_lane(323, 0, 30));
    cluster.crash_at(1, 10'000'000);
    cluster.crash_at(2, 10'000'000);  // two of four dead: no 2f+1 possible
    CHECK_THROWS_AS(cluster.run(), sim::DeadlockError);
}

TEST_CASE("fixed seeds reproduce byte-identical traces") {
    auto run_once = [](uint64_t seed) {
        sim::NetConfig cfg;
        cfg.seed = seed;
        cfg.jitter_ns = 200'000;
        sim::Cluster cluster(4, cfg);
        cluster.add_lane(context_lane(330, 0, 4));
        cluster.add_lane(pd_lane(331, 1, 4));
        auto trace = cluster.run();
        std::ostringstream os;
        trace.export_jsonl(os, /*include_wall=*/false);
        return os.str();
    };
    CHECK(run_once(5) == run_once(5));
    CHECK(run_once(5) != run_once(6));  // jitter actually depends on the seed
}

TEST_CASE("message loss converges through retransmission") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        sim::NetConfig cfg;
        cfg.seed = seed;
        cfg.drop_rate = 0.1;
        sim::Cluster cluster(4, cfg);
        cluster.add_lane(pd_lane(340 + seed, seed % 4, 4));
        auto trace = cluster.run();
        size_t decided = 0;
        for (const auto& ev : trace.events)
            if (ev.primary && ev.kind != "transaction_rejected") ++decided;
        CHECK(decided == 5);
        check_all_identical(cluster);
    }
}

TEST_CASE("parallel context lanes overlap in simulated time") {
    // One lane of 12 sequential calls versus four lanes of 3: same work, and
    // the parallel arrangement must finish sooner on the simulated clock.
    auto total_time = [](std::vector<sim::Lane> lanes) {
        sim::Cluster cluster(4, {});
        for (auto& l : lanes) cluster.add_lane(std::move(l));
        return cluster.run().end_ns;
    };
    uint64_t sequential = total_time([] {
        std::vector<sim::Lane> v;
        v.push_back(context_lane(350, 0, 12));
        return v;
    }());
    uint64_t parallel = total_time([] {
        std::vector<sim::Lane> v;
        for (uint64_t i = 0; i < 4; ++i)
            v.push_back(context_lane(351 + i, static_cast<uint32_t>(i), 3));
        return v;
    }());
    CHECK(parallel < sequential);
}

TEST_CASE("primary trace events carry a coherent timeline") {
    sim::Cluster cluster(4, {});
    cluster.add_lane(context_lane(360, 2, 2));
    auto trace = cluster.run();
    size_t primaries = 0;
    for (const auto& ev : trace.events) {
        if (!ev.primary) continue;
        ++primaries;
        CHECK(ev.submit_ns <= ev.decided_ns);
        CHECK(ev.decided_ns <= ev.replicated_ns);
        CHECK(ev.decided_ns <= ev.executed_ns);
        CHECK(ev.executed_ns < ev.returned_ns);
        CHECK(ev.returned_ns <= trace.end_ns);
    }
    CHECK(primaries == 3);
}

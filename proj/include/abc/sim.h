#pragma once

// Replicated operation over a deterministic discrete-event network: N gateway
// nodes, each running its own engine replica, agree on every transaction with
// a PBFT-style three-phase protocol (crash faults only) before applying it.
// All protocol timing lives on a simulated clock driven by a seeded RNG, so a
// run is a pure function of its inputs; wall-clock execution times are
// measured on the side and never influence the simulation.

#include <iosfwd>
#include <memory>
#include <random>

#include "abc/engine.h"

namespace abc::sim {

struct NetConfig {
    uint64_t latency_ns = 1'000'000;  // fixed one-way message latency
    uint64_t jitter_ns = 0;           // extra uniform [0, jitter_ns] per message
    double drop_rate = 0.0;           // probability a protocol message is lost
    uint64_t retransmit_ns = 20'000'000;   // client/gateway rebroadcast period
    uint64_t view_timeout_ns = 60'000'000;  // silence before a view change vote
    uint64_t ns_per_gas = 500'000;    // nominal execution charge on the sim clock
    uint64_t idle_limit_ns = 30'000'000'000;  // no decision for this long = deadlock
    uint64_t seed = 0;
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};
struct DeadlockError : std::runtime_error {
    explicit DeadlockError(const std::string& what) : std::runtime_error(what) {}
};

// One record per engine application (or consensus refusal) per gateway. The
// entry gateway's record (primary = true) additionally carries the per-phase
// simulated timestamps used for metric derivation.
struct TraceEvent {
    uint64_t time_ns = 0;   // when this gateway applied / recorded the decision
    uint32_t gateway = 0;
    bool primary = false;
    std::string kind;       // engine event name
    uint64_t block_index = 0;
    model::OpCode opcode = model::OpCode::Append;
    std::string detail;
    Digest tx_digest{};
    uint64_t gas_used = 0;

    // Primary-only simulated timeline of the transaction.
    uint64_t submit_ns = 0;      // client handed the tx to its gateway
    uint64_t decided_ns = 0;     // quorum reached at the entry gateway
    uint64_t replicated_ns = 0;  // last surviving gateway applied it
    uint64_t executed_ns = 0;    // per-block execution lane finished
    uint64_t returned_ns = 0;    // result delivered back to the client

    engine::PhaseTimings wall;  // measured wall time at the entry gateway
};

struct RunTrace {
    std::vector<TraceEvent> events;
    uint64_t end_ns = 0;

    // One JSON object per line. Wall columns can be suppressed so that
    // fixed-seed traces compare byte-for-byte.
    void export_jsonl(std::ostream& out, bool include_wall = true) const;
};

// A sequential submitter (one simulated device). Transactions go out one at a
// time: the next is submitted only once the previous result came back. For
// appends, to_block and pt can be left as placeholders: they are resolved
// against the entry gateway's chain at submission time (block indices are
// only assigned by decision order, so a device cannot know them up front).
// Resolution changes the signed bytes, so it requires the signing key. A
// StalePt rejection is retried once the same way.
struct LaneTx {
    model::Transaction tx;
    bool resolve_pt = false;
    std::optional<crypto::SecretKey> signer;
    // Locate the destination block by its first committed signature (context
    // blocks created earlier in this lane) or by its owner key (pure data).
    std::optional<crypto::RecoverableSignature> to_block_by_first_sig;
    std::optional<crypto::PublicKey> to_block_by_owner;
};

struct Lane {
    uint32_t gateway = 0;  // entry gateway
    uint64_t start_ns = 0;
    std::vector<LaneTx> txs;
};

class Cluster {
public:
    Cluster(uint32_t gateways, NetConfig cfg);
    ~Cluster();
    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    uint32_t size() const;
    engine::Engine& gateway_engine(uint32_t i);
    bool alive(uint32_t i) const;

    void add_lane(Lane lane);
    void crash_at(uint32_t gateway, uint64_t time_ns);

    // Drives the event loop until every lane has finished and the network is
    // quiet. Throws DeadlockError if decisions stop arriving and
    // DivergenceError if surviving replicas disagree.
    RunTrace run();

    // Post-run checks / queries.
    void check_convergence() const;  // throws DivergenceError on mismatch
    bool decided_accept(const Digest& tx_digest) const;
    bool decided_reject(const Digest& tx_digest) const;
    // Per-gateway decision: 1 accepted, 0 refused, -1 unknown there.
    int decision(uint32_t gateway, const Digest& tx_digest) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace abc::sim

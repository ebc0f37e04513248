#pragma once

// State-transition core: mempool, block creation, transaction commitment and
// the main dispatch loop. One engine instance owns one chain replica and one
// state store; gateways replicate by applying the same decided transactions.

#include <deque>
#include <unordered_set>

#include "abc/model.h"
#include "abc/state_store.h"
#include "abc/vm.h"

namespace abc::engine {

struct Mempool {
    std::deque<model::Transaction> pending;
    std::unordered_set<Digest, state::DigestHash> seen;

    // Duplicate submissions (same canonical encoding) are no-ops.
    bool submit(const model::Transaction& tx);
    std::optional<model::Transaction> poll();
    bool empty() const { return pending.empty(); }
    size_t size() const { return pending.size(); }
};

enum class EventKind { BlockAdded, TransactionAppended, TransactionRejected };

enum class RejectReason {
    DuplicateOwner,
    StalePt,
    NotOwner,
    VmFailure,
    BadDestination,
    BadShape,
    BadSignature,
    ConsensusRefused,
};

struct Rejection {
    RejectReason reason;
    std::string detail;
    std::optional<vm::VmError> vm_error;
};

struct PhaseTimings {
    uint64_t consensus_ns = 0;
    uint64_t vm_ns = 0;
    uint64_t apply_ns = 0;
};

struct EngineEvent {
    EventKind kind;
    uint64_t block_index = 0;  // created or targeted block, when applicable
    model::OpCode opcode = model::OpCode::Append;
    std::string detail;
    PhaseTimings timings;
    Digest tx_digest{};
    uint64_t gas_used = 0;
};

const char* event_kind_name(EventKind kind);
const char* reject_reason_name(RejectReason reason);

// --- Pure application primitives (Algorithm 2 branches) -------------------
// All mutate in place on success and leave everything untouched on rejection.

std::optional<Rejection> new_pd_block(model::Blockchain& chain,
                                      const model::Transaction& tx);

std::optional<Rejection> new_c_block(model::Blockchain& chain,
                                     const model::Transaction& tx,
                                     state::StateStore& store,
                                     const vm::Executor& exec, uint64_t gas_limit,
                                     uint64_t* gas_used = nullptr);

std::optional<Rejection> commit_to_context(model::Block& block,
                                           const model::Transaction& tx,
                                           state::StateStore& store,
                                           const vm::Executor& exec,
                                           uint64_t gas_limit,
                                           uint64_t* gas_used = nullptr);

std::optional<Rejection> commit_to_pd(model::Block& block,
                                      const model::Transaction& tx);

// Dispatches an Append transaction to its destination block. Throws
// model::BlockNotFound when to_block is beyond the chain.
std::optional<Rejection> append_t(model::Blockchain& chain,
                                  const model::Transaction& tx,
                                  state::StateStore& store, const vm::Executor& exec,
                                  uint64_t gas_limit, uint64_t* gas_used = nullptr);

// --------------------------------------------------------------------------

class Engine {
public:
    using ConsensusFn = std::function<bool(const model::Transaction&)>;
    using EventSink = std::function<void(const EngineEvent&)>;

    Engine() : chain_(model::Blockchain::with_genesis()) {}

    model::Blockchain& chain() { return chain_; }
    const model::Blockchain& chain() const { return chain_; }
    state::StateStore& store() { return store_; }
    const state::StateStore& store() const { return store_; }
    Mempool& mempool() { return mempool_; }

    void set_executor(vm::Executor exec) { exec_ = std::move(exec); }
    void set_gas_limit(uint64_t limit) { gas_limit_ = limit; }
    uint64_t gas_limit() const { return gas_limit_; }
    void subscribe(EventSink sink) { sinks_.push_back(std::move(sink)); }

    bool owner_exists(const crypto::PublicKey& pk) const {
        return chain_.owner_index.count(pk) != 0;
    }

    // One Algorithm-2 iteration: poll, guard, consensus, apply. Requires a
    // non-empty mempool. Every poll produces exactly one event.
    EngineEvent step(const ConsensusFn& consensus);

    // Applies an already-decided transaction (the replication path): same
    // guards and dispatch as step, with consensus skipped.
    EngineEvent apply_decided(const model::Transaction& tx);

    // Validates a transaction by running the full dispatch against a scratch
    // copy of the chain. The chain is untouched; the store may learn extra
    // roots (it is content addressed, so that is harmless). This is what a
    // gateway votes with during consensus.
    EngineEvent preview(const model::Transaction& tx);

private:
    EngineEvent dispatch(const model::Transaction& tx, const ConsensusFn* consensus);
    void emit(const EngineEvent& ev);

    model::Blockchain chain_;
    state::StateStore store_;
    Mempool mempool_;
    vm::Executor exec_ = vm::reference_executor();
    uint64_t gas_limit_ = 5'000'000;
    std::vector<EventSink> sinks_;
};

}  // namespace abc::engine

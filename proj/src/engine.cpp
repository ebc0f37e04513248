#include "abc/engine.h"

#include <chrono>

namespace abc::engine {

using model::Block;
using model::Blockchain;
using model::CommittedTransaction;
using model::OpCode;
using model::Transaction;

namespace {

uint64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::optional<crypto::PublicKey> recover_signer(const Transaction& tx) {
    try {
        return crypto::recover(tx.sig, tx.signing_payload());
    } catch (const crypto::RecoveryFailure&) {
        return std::nullopt;
    }
}

}  // namespace

bool Mempool::submit(const Transaction& tx) {
    Digest d = crypto::digest(model::canonical_encode(tx));
    if (!seen.insert(d).second) return false;
    pending.push_back(tx);
    return true;
}

std::optional<Transaction> Mempool::poll() {
    if (pending.empty()) return std::nullopt;
    Transaction tx = std::move(pending.front());
    pending.pop_front();
    return tx;
}

std::optional<Rejection> new_pd_block(Blockchain& chain, const Transaction& tx) {
    if (tx.opcode != OpCode::NewPureDataBlock || tx.to_block)
        return Rejection{RejectReason::BadShape, "not a pure-data block creation"};
    auto signer = recover_signer(tx);
    if (!signer) return Rejection{RejectReason::BadSignature, "signature does not recover"};
    if (chain.owner_index.count(*signer))
        return Rejection{RejectReason::DuplicateOwner,
                         "signer already owns block " +
                             std::to_string(chain.owner_index.at(*signer))};

    Block block;
    block.header.parent_hash = model::header_hash(model::last_block(chain).header);
    block.header.index = model::last_block(chain).header.index + 1;
    block.header.owner = *signer;
    block.header.first_ct = CommittedTransaction{tx.data, tx.sig, tx.pt, std::nullopt};
    chain.owner_index.emplace(*signer, block.header.index);
    chain.blocks.push_back(std::move(block));
    return std::nullopt;
}

std::optional<Rejection> new_c_block(Blockchain& chain, const Transaction& tx,
                                     state::StateStore& store, const vm::Executor& exec,
                                     uint64_t gas_limit, uint64_t* gas_used) {
    if (tx.opcode != OpCode::NewContextBlock || tx.to_block)
        return Rejection{RejectReason::BadShape, "not a context block creation"};
    auto signer = recover_signer(tx);
    if (!signer) return Rejection{RejectReason::BadSignature, "signature does not recover"};

    // A new context starts from the empty state.
    vm::Outcome out = exec(store, std::nullopt, tx.data,
                           crypto::address_of(*signer), gas_limit);
    if (auto* err = std::get_if<vm::VmError>(&out))
        return Rejection{RejectReason::VmFailure, err->detail, *err};
    const auto& res = std::get<vm::ExecutionResult>(out);
    if (gas_used) *gas_used = res.gas_used;

    Block block;
    block.header.parent_hash = model::header_hash(model::last_block(chain).header);
    block.header.index = model::last_block(chain).header.index + 1;
    block.header.owner = std::nullopt;
    block.header.first_ct =
        CommittedTransaction{tx.data, tx.sig, tx.pt, res.new_root.root};
    chain.blocks.push_back(std::move(block));
    return std::nullopt;
}

std::optional<Rejection> commit_to_context(Block& block, const Transaction& tx,
                                           state::StateStore& store,
                                           const vm::Executor& exec,
                                           uint64_t gas_limit, uint64_t* gas_used) {
    if (tx.pt != model::pre_ct_hash(block))
        return Rejection{RejectReason::StalePt,
                         "pt does not match the block's last committed transaction"};
    const auto& last = model::last_ct(block);
    if (!last.state_root)
        return Rejection{RejectReason::BadShape, "context block without a state root"};
    auto signer = recover_signer(tx);
    if (!signer) return Rejection{RejectReason::BadSignature, "signature does not recover"};

    vm::Outcome out = exec(store, state::StateRoot{*last.state_root}, tx.data,
                           crypto::address_of(*signer), gas_limit);
    if (auto* err = std::get_if<vm::VmError>(&out))
        return Rejection{RejectReason::VmFailure, err->detail, *err};
    const auto& res = std::get<vm::ExecutionResult>(out);
    if (gas_used) *gas_used = res.gas_used;

    block.ledger.push_back(
        CommittedTransaction{tx.data, tx.sig, tx.pt, res.new_root.root});
    return std::nullopt;
}

std::optional<Rejection> commit_to_pd(Block& block, const Transaction& tx) {
    auto signer = recover_signer(tx);
    if (!signer) return Rejection{RejectReason::BadSignature, "signature does not recover"};
    if (!block.header.owner || *block.header.owner != *signer)
        return Rejection{RejectReason::NotOwner, "signer does not own the block"};
    if (tx.pt != model::pre_ct_hash(block))
        return Rejection{RejectReason::StalePt,
                         "pt does not match the block's last committed transaction"};
    block.ledger.push_back(
        CommittedTransaction{tx.data, tx.sig, tx.pt, std::nullopt});
    return std::nullopt;
}

std::optional<Rejection> append_t(Blockchain& chain, const Transaction& tx,
                                  state::StateStore& store, const vm::Executor& exec,
                                  uint64_t gas_limit, uint64_t* gas_used) {
    if (tx.opcode != OpCode::Append || !tx.to_block)
        return Rejection{RejectReason::BadShape, "not an append transaction"};
    Block& block = model::get_block_mut(chain, *tx.to_block);
    if (block.header.index == 0)
        return Rejection{RejectReason::BadDestination, "cannot append to genesis"};
    if (model::has_context(block))
        return commit_to_context(block, tx, store, exec, gas_limit, gas_used);
    auto signer = recover_signer(tx);
    if (signer && block.header.owner && *block.header.owner == *signer)
        return commit_to_pd(block, tx);
    return Rejection{RejectReason::NotOwner,
                     "append to a pure data block by a non-owner"};
}

namespace {

enum class Branch { Append, NewContext, NewPureData, None };

// Algorithm-2 guards decide which application runs, before consensus.
Branch select_branch(const Blockchain& chain, const Transaction& tx) {
    if (tx.opcode == OpCode::Append && tx.to_block &&
        *tx.to_block < chain.blocks.size())
        return Branch::Append;
    if (tx.opcode == OpCode::NewContextBlock && !tx.to_block)
        return Branch::NewContext;
    if (tx.opcode == OpCode::NewPureDataBlock && !tx.to_block) {
        auto signer = recover_signer(tx);
        if (signer && !chain.owner_index.count(*signer)) return Branch::NewPureData;
    }
    return Branch::None;
}

void apply_branch(Branch branch, Blockchain& chain, state::StateStore& store,
                  const vm::Executor& exec, uint64_t gas_limit, const Transaction& tx,
                  EngineEvent& ev) {
    uint64_t t0 = now_ns();
    std::optional<Rejection> rejection;
    uint64_t gas = 0;
    switch (branch) {
        case Branch::Append: {
            ev.block_index = *tx.to_block;
            try {
                rejection = append_t(chain, tx, store, exec, gas_limit, &gas);
            } catch (const model::BlockNotFound& e) {
                rejection = Rejection{RejectReason::BadDestination, e.what()};
            }
            if (!rejection) ev.kind = EventKind::TransactionAppended;
            break;
        }
        case Branch::NewContext:
            rejection = new_c_block(chain, tx, store, exec, gas_limit, &gas);
            if (!rejection) {
                ev.kind = EventKind::BlockAdded;
                ev.block_index = chain.blocks.back().header.index;
            }
            break;
        case Branch::NewPureData:
            rejection = new_pd_block(chain, tx);
            if (!rejection) {
                ev.kind = EventKind::BlockAdded;
                ev.block_index = chain.blocks.back().header.index;
            }
            break;
        case Branch::None:
            break;
    }
    uint64_t elapsed = now_ns() - t0;
    ev.gas_used = gas;
    if (branch != Branch::NewPureData && gas > 0) {
        ev.timings.vm_ns = elapsed;  // dominated by execution
    } else {
        ev.timings.apply_ns = elapsed;
    }

    if (rejection) {
        ev.kind = EventKind::TransactionRejected;
        ev.detail = std::string(reject_reason_name(rejection->reason)) + ": " +
                    rejection->detail;
    }
}

}  // namespace

EngineEvent Engine::dispatch(const Transaction& tx, const ConsensusFn* consensus) {
    EngineEvent ev;
    ev.opcode = tx.opcode;
    ev.tx_digest = crypto::digest(model::canonical_encode(tx));

    Branch branch = select_branch(chain_, tx);
    if (branch == Branch::None) {
        ev.kind = EventKind::TransactionRejected;
        ev.detail = "no dispatch branch accepts this transaction";
        return ev;
    }

    if (consensus) {
        uint64_t t0 = now_ns();
        bool decided = (*consensus)(tx);
        ev.timings.consensus_ns = now_ns() - t0;
        if (!decided) {
            ev.kind = EventKind::TransactionRejected;
            ev.detail = reject_reason_name(RejectReason::ConsensusRefused);
            return ev;
        }
    }

    apply_branch(branch, chain_, store_, exec_, gas_limit_, tx, ev);
    return ev;
}

EngineEvent Engine::preview(const Transaction& tx) {
    EngineEvent ev;
    ev.opcode = tx.opcode;
    ev.tx_digest = crypto::digest(model::canonical_encode(tx));

    Blockchain scratch = chain_;
    Branch branch = select_branch(scratch, tx);
    if (branch == Branch::None) {
        ev.kind = EventKind::TransactionRejected;
        ev.detail = "no dispatch branch accepts this transaction";
        return ev;
    }
    apply_branch(branch, scratch, store_, exec_, gas_limit_, tx, ev);
    return ev;
}

void Engine::emit(const EngineEvent& ev) {
    for (const auto& sink : sinks_) sink(ev);
}

EngineEvent Engine::step(const ConsensusFn& consensus) {
    auto tx = mempool_.poll();
    if (!tx) throw std::logic_error("step requires a non-empty mempool");
    EngineEvent ev = dispatch(*tx, &consensus);
    emit(ev);
    return ev;
}

EngineEvent Engine::apply_decided(const Transaction& tx) {
    EngineEvent ev = dispatch(tx, nullptr);
    emit(ev);
    return ev;
}

const char* event_kind_name(EventKind kind) {
    switch (kind) {
        case EventKind::BlockAdded: return "block_added";
        case EventKind::TransactionAppended: return "transaction_appended";
        case EventKind::TransactionRejected: return "transaction_rejected";
    }
    return "unknown";
}

const char* reject_reason_name(RejectReason reason) {
    switch (reason) {
        case RejectReason::DuplicateOwner: return "duplicate_owner";
        case RejectReason::StalePt: return "stale_pt";
        case RejectReason::NotOwner: return "not_owner";
        case RejectReason::VmFailure: return "vm_failure";
        case RejectReason::BadDestination: return "bad_destination";
        case RejectReason::BadShape: return "bad_shape";
        case RejectReason::BadSignature: return "bad_signature";
        case RejectReason::ConsensusRefused: return "consensus_refused";
    }
    return "unknown";
}

}  // namespace abc::engine

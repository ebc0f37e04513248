#pragma once

// Blockchain data model: blocks whose ledgers keep growing after insertion.
// A block is either a pure data block (owned by one device key) or a context
// block (no owner; every committed transaction carries a state root).

#include <functional>
#include <map>

#include "abc/bytes.h"
#include "abc/crypto.h"

namespace abc::model {

enum class OpCode : uint8_t {
    NewPureDataBlock = 1,
    NewContextBlock = 2,
    Append = 3,
};

struct BlockNotFound : std::runtime_error {
    explicit BlockNotFound(uint64_t index)
        : std::runtime_error("no block at index " + std::to_string(index)) {}
};
struct GenesisQuery : std::runtime_error {
    GenesisQuery() : std::runtime_error("has_context is undefined on genesis") {}
};

struct Transaction {
    Bytes data;
    std::optional<uint64_t> to_block;  // absent for block-creating opcodes
    crypto::RecoverableSignature sig;  // over signing_payload()
    Digest pt{};
    OpCode opcode = OpCode::Append;

    bool operator==(const Transaction&) const = default;

    // The bytes covered by sig: (data, to_block, pt, opcode). Commit-time
    // fields are derived server-side and are not signed.
    Bytes signing_payload() const;
};

struct CommittedTransaction {
    Bytes data;
    crypto::RecoverableSignature sig;
    Digest pt{};
    std::optional<Digest> state_root;  // present iff the block has a context

    bool operator==(const CommittedTransaction&) const = default;
};

struct BlockHeader {
    Digest parent_hash{};
    uint64_t index = 0;
    std::optional<crypto::PublicKey> owner;  // absent => context block
    CommittedTransaction first_ct;

    bool operator==(const BlockHeader&) const = default;
};

struct Block {
    BlockHeader header;
    std::vector<CommittedTransaction> ledger;

    bool operator==(const Block&) const = default;
};

struct Blockchain {
    std::vector<Block> blocks;
    std::map<crypto::PublicKey, uint64_t> owner_index;

    static Blockchain with_genesis();
    const Block& genesis() const { return blocks.front(); }
    size_t size() const { return blocks.size(); }

    bool operator==(const Blockchain& o) const { return blocks == o.blocks; }
};

// Canonical encoding: fields in declaration order, each as a 4-byte
// big-endian length prefix plus raw bytes; optional fields add a leading
// presence byte. Injective by construction and bit-exact across builds.
Bytes canonical_encode(const Transaction& tx);
Bytes canonical_encode(const CommittedTransaction& ct);
Bytes canonical_encode(const BlockHeader& header);
Bytes canonical_encode_chain(const Blockchain& chain);

Digest header_hash(const BlockHeader& header);
Digest ct_hash(const CommittedTransaction& ct);

const Block& last_block(const Blockchain& chain);
const Block& get_block(const Blockchain& chain, uint64_t index);
Block& get_block_mut(Blockchain& chain, uint64_t index);
bool has_context(const Block& block);  // throws GenesisQuery on index 0
Digest pre_ct_hash(const Block& block);
const CommittedTransaction& last_ct(const Block& block);

struct Violation {
    uint64_t block_index = 0;
    std::optional<size_t> ledger_entry;
    std::string what;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Audits every structural invariant: header linkage, index monotonicity,
// owner uniqueness, per-block pt hash links, signature recovery of every
// committed transaction, and state-root presence rules. When root_known is
// supplied, every present state root must also be recognized by it (the
// tail entry's root is not covered by any hash link, so only the state
// store can vouch for it).
using RootKnownFn = std::function<bool(const Digest&)>;
ValidationReport validate_chain(const Blockchain& chain,
                                const RootKnownFn& root_known = nullptr);

// Rebuilds the exact bytes a committed transaction's signature covers, from
// its position in the chain (the position fixes opcode and to_block).
Bytes committed_signing_payload(const Block& block, const CommittedTransaction& ct,
                                bool is_first_ct);

}  // namespace abc::model

#include "abc/model.h"

namespace abc::model {

namespace {

void enc_bytes(Bytes& out, const uint8_t* p, size_t n) {
    put_u32(out, static_cast<uint32_t>(n));
    out.insert(out.end(), p, p + n);
}

void enc_bytes(Bytes& out, const Bytes& b) { enc_bytes(out, b.data(), b.size()); }

template <size_t N>
void enc_fixed(Bytes& out, const std::array<uint8_t, N>& a) {
    enc_bytes(out, a.data(), N);
}

void enc_u64_field(Bytes& out, uint64_t v) {
    put_u32(out, 8);
    put_u64(out, v);
}

void enc_opt_u64(Bytes& out, const std::optional<uint64_t>& v) {
    out.push_back(v ? 1 : 0);
    if (v) enc_u64_field(out, *v);
}

void enc_opt_digest(Bytes& out, const std::optional<Digest>& v) {
    out.push_back(v ? 1 : 0);
    if (v) enc_fixed(out, *v);
}

void enc_sig(Bytes& out, const crypto::RecoverableSignature& sig) {
    enc_fixed(out, sig.serialize());
}

}  // namespace

Bytes Transaction::signing_payload() const {
    Bytes out;
    enc_bytes(out, data);
    enc_opt_u64(out, to_block);
    enc_fixed(out, pt);
    put_u32(out, 1);
    out.push_back(static_cast<uint8_t>(opcode));
    return out;
}

Bytes canonical_encode(const Transaction& tx) {
    Bytes out;
    enc_bytes(out, tx.data);
    enc_opt_u64(out, tx.to_block);
    enc_sig(out, tx.sig);
    enc_fixed(out, tx.pt);
    put_u32(out, 1);
    out.push_back(static_cast<uint8_t>(tx.opcode));
    return out;
}

Bytes canonical_encode(const CommittedTransaction& ct) {
    Bytes out;
    enc_bytes(out, ct.data);
    enc_sig(out, ct.sig);
    enc_fixed(out, ct.pt);
    enc_opt_digest(out, ct.state_root);
    return out;
}

Bytes canonical_encode(const BlockHeader& header) {
    Bytes out;
    enc_fixed(out, header.parent_hash);
    enc_u64_field(out, header.index);
    out.push_back(header.owner ? 1 : 0);
    if (header.owner) enc_fixed(out, *header.owner);
    enc_bytes(out, canonical_encode(header.first_ct));
    return out;
}

Bytes canonical_encode_chain(const Blockchain& chain) {
    Bytes out;
    put_u64(out, chain.blocks.size());
    for (const auto& b : chain.blocks) {
        enc_bytes(out, canonical_encode(b.header));
        put_u64(out, b.ledger.size());
        for (const auto& ct : b.ledger) enc_bytes(out, canonical_encode(ct));
    }
    return out;
}

Digest header_hash(const BlockHeader& header) {
    return crypto::digest(canonical_encode(header));
}

Digest ct_hash(const CommittedTransaction& ct) {
    return crypto::digest(canonical_encode(ct));
}

Blockchain Blockchain::with_genesis() {
    Blockchain chain;
    Block genesis;
    genesis.header.parent_hash = zero_digest();
    genesis.header.index = 0;
    genesis.header.owner = std::nullopt;
    genesis.header.first_ct = CommittedTransaction{};  // all-zero reserved ct
    chain.blocks.push_back(std::move(genesis));
    return chain;
}

const Block& last_block(const Blockchain& chain) { return chain.blocks.back(); }

const Block& get_block(const Blockchain& chain, uint64_t index) {
    if (index >= chain.blocks.size()) throw BlockNotFound(index);
    return chain.blocks[index];
}

Block& get_block_mut(Blockchain& chain, uint64_t index) {
    if (index >= chain.blocks.size()) throw BlockNotFound(index);
    return chain.blocks[index];
}

bool has_context(const Block& block) {
    if (block.header.index == 0) throw GenesisQuery();
    return !block.header.owner.has_value();
}

Digest pre_ct_hash(const Block& block) {
    if (block.ledger.empty()) return header_hash(block.header);
    return ct_hash(block.ledger.back());
}

const CommittedTransaction& last_ct(const Block& block) {
    if (block.ledger.empty()) return block.header.first_ct;
    return block.ledger.back();
}

Bytes committed_signing_payload(const Block& block, const CommittedTransaction& ct,
                                bool is_first_ct) {
    Transaction shadow;
    shadow.data = ct.data;
    shadow.pt = ct.pt;
    if (is_first_ct) {
        shadow.to_block = std::nullopt;
        shadow.opcode = block.header.owner ? OpCode::NewPureDataBlock
                                           : OpCode::NewContextBlock;
    } else {
        shadow.to_block = block.header.index;
        shadow.opcode = OpCode::Append;
    }
    return shadow.signing_payload();
}

namespace {

void check_ct_signature(const Block& block, const CommittedTransaction& ct,
                        bool is_first, std::optional<size_t> entry,
                        ValidationReport& report) {
    try {
        auto pk = crypto::recover(ct.sig, committed_signing_payload(block, ct, is_first));
        if (!is_first && block.header.owner && pk != *block.header.owner) {
            report.violations.push_back(
                {block.header.index, entry, "signer is not the block owner"});
        }
        if (is_first && block.header.owner && pk != *block.header.owner) {
            report.violations.push_back(
                {block.header.index, entry, "first transaction signer differs from owner"});
        }
    } catch (const crypto::RecoveryFailure& e) {
        report.violations.push_back(
            {block.header.index, entry, std::string("signature recovery failed: ") + e.what()});
    }
}

}  // namespace

ValidationReport validate_chain(const Blockchain& chain,
                                const RootKnownFn& root_known) {
    ValidationReport report;
    if (chain.blocks.empty()) {
        report.violations.push_back({0, std::nullopt, "empty chain (no genesis)"});
        return report;
    }

    const Block& genesis = chain.blocks.front();
    if (genesis.header.index != 0)
        report.violations.push_back({0, std::nullopt, "genesis index is not 0"});
    if (genesis.header.parent_hash != zero_digest())
        report.violations.push_back({0, std::nullopt, "genesis parent hash is not zero"});
    if (genesis.header.owner)
        report.violations.push_back({0, std::nullopt, "genesis must not carry an owner"});

    std::map<crypto::PublicKey, uint64_t> owners;
    for (size_t i = 0; i < chain.blocks.size(); ++i) {
        const Block& b = chain.blocks[i];
        if (b.header.index != i)
            report.violations.push_back({b.header.index, std::nullopt,
                                         "index does not match chain position " + std::to_string(i)});
        if (i > 0) {
            Digest expect = header_hash(chain.blocks[i - 1].header);
            if (b.header.parent_hash != expect)
                report.violations.push_back(
                    {b.header.index, std::nullopt, "parent hash does not match previous header"});
        }
        if (b.header.owner) {
            auto [it, fresh] = owners.emplace(*b.header.owner, b.header.index);
            if (!fresh)
                report.violations.push_back(
                    {b.header.index, std::nullopt,
                     "owner key already used by block " + std::to_string(it->second)});
        }

        bool is_genesis = i == 0;
        bool context = !b.header.owner && !is_genesis;

        if (!is_genesis) {
            // State-root presence: context blocks carry one everywhere, pure
            // data blocks never do.
            auto check_root = [&](const CommittedTransaction& ct, std::optional<size_t> entry) {
                if (context && !ct.state_root)
                    report.violations.push_back(
                        {b.header.index, entry, "context entry missing state root"});
                if (!context && ct.state_root)
                    report.violations.push_back(
                        {b.header.index, entry, "pure data entry carries a state root"});
                if (ct.state_root && root_known && !root_known(*ct.state_root))
                    report.violations.push_back(
                        {b.header.index, entry, "state root unknown to the state store"});
            };
            check_root(b.header.first_ct, std::nullopt);
            check_ct_signature(b, b.header.first_ct, true, std::nullopt, report);

            Digest link = header_hash(b.header);
            for (size_t k = 0; k < b.ledger.size(); ++k) {
                const auto& ct = b.ledger[k];
                if (ct.pt != link)
                    report.violations.push_back(
                        {b.header.index, k, "pt does not chain to the previous entry"});
                check_root(ct, k);
                check_ct_signature(b, ct, false, k, report);
                link = ct_hash(ct);
            }
        } else if (!b.ledger.empty()) {
            report.violations.push_back({0, std::nullopt, "genesis ledger must be empty"});
        }
    }
    return report;
}

}  // namespace abc::model

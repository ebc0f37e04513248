#pragma once

// Content-addressed per-context state. Accounts live in a sparse binary
// Merkle tree of depth 256 keyed by digest(address); every edit produces a
// fresh root and never touches nodes reachable from older roots, so a root
// digest is an immutable snapshot reference. Equal mappings hash to equal
// roots regardless of insertion order.

#include <cstring>
#include <iosfwd>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "abc/bytes.h"

namespace abc::state {

struct UnknownRoot : std::runtime_error {
    UnknownRoot() : std::runtime_error("state root is not registered in this store") {}
};
struct CorruptNode : std::runtime_error {
    explicit CorruptNode(const std::string& what) : std::runtime_error(what) {}
};

struct StateRoot {
    Digest root{};
    bool operator==(const StateRoot&) const = default;
};

struct Account {
    Address address{};
    Bytes code;
    std::map<Word, Word> storage;  // all-zero values are stripped (zero = absent)

    bool is_empty() const;  // empty account == deletion
    bool operator==(const Account&) const = default;
};

struct DigestHash {
    size_t operator()(const Digest& d) const {
        size_t h;
        std::memcpy(&h, d.data(), sizeof(h));
        return h;
    }
};

class StateStore {
public:
    StateStore();

    StateRoot empty_root() const { return {defaults_[0]}; }
    bool knows(const StateRoot& r) const { return known_roots_.count(r.root) != 0; }

    std::optional<Account> get_account(const StateRoot& root, const Address& addr) const;
    StateRoot put_account(const StateRoot& root, const Account& account);

    static Digest root_of(const StateRoot& r) { return r.root; }

    // Applies a batch of account writes; only the final root is registered.
    StateRoot apply(const StateRoot& base, const std::vector<Account>& edits);

    // Node records reachable from a root, deterministic preorder, deduplicated.
    std::vector<Bytes> export_reachable(const StateRoot& root) const;

    // Ingests foreign node records (content addressed, so safe to merge) and
    // registers the root once its whole subtree is present and well formed.
    void import_root(const Digest& root, const std::vector<Bytes>& records);

    size_t node_count() const { return records_.size(); }
    size_t known_root_count() const { return known_roots_.size(); }
    std::vector<Digest> known_roots() const;

    void save_snapshot(std::ostream& out) const;
    static StateStore load_snapshot(std::istream& in);

    static Bytes encode_account(const Account& a);
    static Account decode_account(const Address& addr, const uint8_t* p, size_t len);

private:
    Digest store_record(Bytes record);
    const Bytes& record_of(const Digest& h) const;
    StateRoot put_unchecked(const StateRoot& root, const Account& account);
    bool subtree_complete(const Digest& node, int level) const;

    std::array<Digest, 257> defaults_{};  // defaults_[k] = hash of an empty depth-k subtree
    std::unordered_map<Digest, Bytes, DigestHash> records_;
    std::unordered_set<Digest, DigestHash> known_roots_;
    std::unordered_set<Digest, DigestHash> default_hashes_;
};

}  // namespace abc::state

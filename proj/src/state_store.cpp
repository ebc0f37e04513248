#include "abc/state_store.h"

#include <cstring>
#include <istream>
#include <ostream>

#include "abc/crypto.h"

namespace abc::state {

namespace {

constexpr uint8_t kTagLeaf = 0x00;
constexpr uint8_t kTagInternal = 0x01;
constexpr uint8_t kTagEmpty = 0x02;  // never stored, only hashed

constexpr int kDepth = 256;

// Bit k (MSB first) of the 256-bit path.
inline int path_bit(const Digest& path, int k) {
    return (path[k / 8] >> (7 - k % 8)) & 1;
}

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | p[3];
}

}  // namespace

bool Account::is_empty() const { return code.empty() && storage.empty(); }

Bytes StateStore::encode_account(const Account& a) {
    Bytes out;
    put_u32(out, static_cast<uint32_t>(a.code.size()));
    out.insert(out.end(), a.code.begin(), a.code.end());
    uint32_t n = 0;
    for (const auto& [k, v] : a.storage)
        if (v != Word{}) ++n;
    put_u32(out, n);
    for (const auto& [k, v] : a.storage) {
        if (v == Word{}) continue;  // zero value means absent
        out.insert(out.end(), k.begin(), k.end());
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

Account StateStore::decode_account(const Address& addr, const uint8_t* p, size_t len) {
    Account a;
    a.address = addr;
    if (len < 8) throw CorruptNode("truncated account payload");
    uint32_t code_len = get_u32(p);
    if (len < 8 + size_t(code_len)) throw CorruptNode("truncated account code");
    a.code.assign(p + 4, p + 4 + code_len);
    const uint8_t* q = p + 4 + code_len;
    uint32_t n = get_u32(q);
    q += 4;
    if (size_t(q - p) + size_t(n) * 64 != len) throw CorruptNode("bad storage length");
    for (uint32_t i = 0; i < n; ++i) {
        Word k, v;
        std::memcpy(k.data(), q, 32);
        std::memcpy(v.data(), q + 32, 32);
        q += 64;
        if (v == Word{}) throw CorruptNode("explicit zero storage value");
        a.storage.emplace(k, v);
    }
    return a;
}

StateStore::StateStore() {
    defaults_[kDepth] = crypto::digest(&kTagEmpty, 1);
    for (int k = kDepth - 1; k >= 0; --k) {
        Bytes rec;
        rec.push_back(kTagInternal);
        rec.insert(rec.end(), defaults_[k + 1].begin(), defaults_[k + 1].end());
        rec.insert(rec.end(), defaults_[k + 1].begin(), defaults_[k + 1].end());
        defaults_[k] = crypto::digest(rec);
    }
    for (const auto& d : defaults_) default_hashes_.insert(d);
    known_roots_.insert(defaults_[0]);
}

Digest StateStore::store_record(Bytes record) {
    Digest h = crypto::digest(record);
    records_.emplace(h, std::move(record));
    return h;
}

const Bytes& StateStore::record_of(const Digest& h) const {
    auto it = records_.find(h);
    if (it == records_.end()) throw CorruptNode("dangling node reference");
    return it->second;
}

std::optional<Account> StateStore::get_account(const StateRoot& root,
                                               const Address& addr) const {
    if (!knows(root)) throw UnknownRoot();
    Digest path = crypto::digest(addr.data(), addr.size());
    Digest cur = root.root;
    for (int level = 0; level < kDepth; ++level) {
        if (cur == defaults_[level]) return std::nullopt;
        const Bytes& rec = record_of(cur);
        if (rec.size() != 65 || rec[0] != kTagInternal)
            throw CorruptNode("expected internal node");
        const uint8_t* child = rec.data() + 1 + (path_bit(path, level) ? 32 : 0);
        std::memcpy(cur.data(), child, 32);
    }
    if (cur == defaults_[kDepth]) return std::nullopt;
    const Bytes& leaf = record_of(cur);
    if (leaf.size() < 21 || leaf[0] != kTagLeaf) throw CorruptNode("expected leaf node");
    Address stored;
    std::memcpy(stored.data(), leaf.data() + 1, 20);
    if (stored != addr) throw CorruptNode("leaf address mismatch");
    return decode_account(addr, leaf.data() + 21, leaf.size() - 21);
}

StateRoot StateStore::put_unchecked(const StateRoot& root, const Account& account) {
    Digest path = crypto::digest(account.address.data(), account.address.size());

    // Collect the sibling hash at every level on the way down.
    std::array<Digest, kDepth> siblings;
    Digest cur = root.root;
    for (int level = 0; level < kDepth; ++level) {
        if (cur == defaults_[level]) {
            for (int k = level; k < kDepth; ++k) siblings[k] = defaults_[k + 1];
            cur = defaults_[kDepth];
            break;
        }
        const Bytes& rec = record_of(cur);
        if (rec.size() != 65 || rec[0] != kTagInternal)
            throw CorruptNode("expected internal node");
        int bit = path_bit(path, level);
        std::memcpy(siblings[level].data(), rec.data() + 1 + (bit ? 0 : 32), 32);
        std::memcpy(cur.data(), rec.data() + 1 + (bit ? 32 : 0), 32);
        if (level == kDepth - 1) break;
    }

    Digest node;
    if (account.is_empty()) {
        node = defaults_[kDepth];
    } else {
        Bytes leaf;
        leaf.push_back(kTagLeaf);
        leaf.insert(leaf.end(), account.address.begin(), account.address.end());
        Bytes payload = encode_account(account);
        leaf.insert(leaf.end(), payload.begin(), payload.end());
        node = store_record(std::move(leaf));
    }

    for (int level = kDepth - 1; level >= 0; --level) {
        int bit = path_bit(path, level);
        Bytes rec;
        rec.push_back(kTagInternal);
        const Digest& left = bit ? siblings[level] : node;
        const Digest& right = bit ? node : siblings[level];
        rec.insert(rec.end(), left.begin(), left.end());
        rec.insert(rec.end(), right.begin(), right.end());
        if (left == defaults_[level + 1] && right == defaults_[level + 1]) {
            node = defaults_[level];  // collapsed empty subtree, keep canonical
        } else {
            node = store_record(std::move(rec));
        }
    }
    return {node};
}

StateRoot StateStore::put_account(const StateRoot& root, const Account& account) {
    if (!knows(root)) throw UnknownRoot();
    StateRoot out = put_unchecked(root, account);
    known_roots_.insert(out.root);
    return out;
}

StateRoot StateStore::apply(const StateRoot& base, const std::vector<Account>& edits) {
    if (!knows(base)) throw UnknownRoot();
    StateRoot cur = base;
    for (const auto& a : edits) cur = put_unchecked(cur, a);
    known_roots_.insert(cur.root);
    return cur;
}

std::vector<Bytes> StateStore::export_reachable(const StateRoot& root) const {
    if (!knows(root)) throw UnknownRoot();
    std::vector<Bytes> out;
    std::unordered_set<Digest, DigestHash> seen;
    std::vector<Digest> stack{root.root};
    while (!stack.empty()) {
        Digest h = stack.back();
        stack.pop_back();
        if (default_hashes_.count(h) || !seen.insert(h).second) continue;
        const Bytes& rec = record_of(h);
        out.push_back(rec);
        if (rec[0] == kTagInternal) {
            Digest l, r;
            std::memcpy(l.data(), rec.data() + 1, 32);
            std::memcpy(r.data(), rec.data() + 33, 32);
            stack.push_back(r);
            stack.push_back(l);
        }
    }
    return out;
}

bool StateStore::subtree_complete(const Digest& node, int level) const {
    if (default_hashes_.count(node)) return true;
    auto it = records_.find(node);
    if (it == records_.end()) return false;
    const Bytes& rec = it->second;
    if (level < kDepth) {
        if (rec.size() != 65 || rec[0] != kTagInternal) return false;
        Digest l, r;
        std::memcpy(l.data(), rec.data() + 1, 32);
        std::memcpy(r.data(), rec.data() + 33, 32);
        return subtree_complete(l, level + 1) && subtree_complete(r, level + 1);
    }
    return rec.size() >= 21 && rec[0] == kTagLeaf;
}

void StateStore::import_root(const Digest& root, const std::vector<Bytes>& records) {
    for (const auto& rec : records) {
        if (rec.empty() || (rec[0] != kTagLeaf && rec[0] != kTagInternal))
            throw CorruptNode("unknown record tag");
        Digest h = crypto::digest(rec);
        records_.emplace(h, rec);
    }
    if (!subtree_complete(root, 0)) throw CorruptNode("imported root has dangling nodes");
    known_roots_.insert(root);
}

std::vector<Digest> StateStore::known_roots() const {
    return {known_roots_.begin(), known_roots_.end()};
}

static const char kSnapshotMagic[8] = {'A', 'B', 'C', 'S', 'N', 'A', 'P', '1'};

void StateStore::save_snapshot(std::ostream& out) const {
    out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
    Bytes head;
    put_u64(head, known_roots_.size());
    out.write(reinterpret_cast<const char*>(head.data()), head.size());
    // Sort for byte-stable snapshots.
    std::vector<Digest> roots(known_roots_.begin(), known_roots_.end());
    std::sort(roots.begin(), roots.end());
    for (const auto& r : roots) out.write(reinterpret_cast<const char*>(r.data()), 32);

    std::vector<const Bytes*> recs;
    std::vector<Digest> keys;
    keys.reserve(records_.size());
    for (const auto& [h, _] : records_) keys.push_back(h);
    std::sort(keys.begin(), keys.end());
    Bytes cnt;
    put_u64(cnt, keys.size());
    out.write(reinterpret_cast<const char*>(cnt.data()), cnt.size());
    for (const auto& h : keys) {
        const Bytes& rec = records_.at(h);
        Bytes len;
        put_u32(len, static_cast<uint32_t>(rec.size()));
        out.write(reinterpret_cast<const char*>(len.data()), len.size());
        out.write(reinterpret_cast<const char*>(rec.data()), rec.size());
    }
}

StateStore StateStore::load_snapshot(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kSnapshotMagic, 8) != 0)
        throw CorruptNode("bad snapshot magic");
    auto read_u64 = [&in]() {
        uint8_t buf[8];
        in.read(reinterpret_cast<char*>(buf), 8);
        if (!in) throw CorruptNode("truncated snapshot");
        return get_u64(buf);
    };
    StateStore store;
    uint64_t nroots = read_u64();
    std::vector<Digest> roots(nroots);
    for (auto& r : roots) {
        in.read(reinterpret_cast<char*>(r.data()), 32);
        if (!in) throw CorruptNode("truncated snapshot");
    }
    uint64_t nrecs = read_u64();
    for (uint64_t i = 0; i < nrecs; ++i) {
        uint8_t lenbuf[4];
        in.read(reinterpret_cast<char*>(lenbuf), 4);
        if (!in) throw CorruptNode("truncated snapshot");
        uint32_t len = get_u32(lenbuf);
        Bytes rec(len);
        in.read(reinterpret_cast<char*>(rec.data()), len);
        if (!in) throw CorruptNode("truncated snapshot");
        store.store_record(std::move(rec));
    }
    for (const auto& r : roots) {
        if (!store.subtree_complete(r, 0)) throw CorruptNode("snapshot root incomplete");
        store.known_roots_.insert(r);
    }
    return store;
}

}  // namespace abc::state

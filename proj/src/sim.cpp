#include "abc/sim.h"

#include <json.hpp>
#include <map>
#include <memory>
#include <queue>
#include <set>

namespace abc::sim {

using model::Transaction;

namespace {

enum class MsgType { Request, PrePrepare, Prepare, Commit, ViewChange, SyncReq, SyncResp };

struct DecidedRecord {
    uint64_t seq = 0;
    Transaction tx;
    bool accept = true;
    std::string detail;
};

struct Msg {
    MsgType type;
    uint32_t from = 0;
    uint64_t view = 0;
    uint64_t seq = 0;
    Transaction tx;
    Digest digest{};
    bool accept = true;
    std::string detail;
    // ViewChange payload: the sender's progress and any pre-prepared but
    // undecided instance it knows of.
    uint64_t last_decided = 0;
    bool has_pp = false;
    uint64_t pp_view = 0;
    Transaction pp_tx;
    // SyncResp payload.
    std::vector<DecidedRecord> records;
};

struct Instance {
    uint64_t pp_view = 0;
    bool have_pp = false;
    Transaction tx;
    Digest digest{};
    bool sent_prepare = false;
    bool sent_commit = false;
    bool my_accept = true;
    std::string my_detail;
    std::map<uint32_t, Msg> prepares;
    std::map<uint32_t, Msg> commits;
};

struct DecisionInfo {
    bool accept = true;
    std::string detail;
    std::string kind;
    uint64_t block_index = 0;
    uint64_t gas_used = 0;
    uint64_t time_ns = 0;
    engine::PhaseTimings wall;
};

struct Replica {
    uint32_t id = 0;
    engine::Engine engine;
    bool alive = true;
    uint64_t view = 0;
    uint64_t last_decided = 0;  // consensus sequence numbers start at 1

    std::map<uint64_t, Instance> instances;  // keyed by sequence
    std::deque<Transaction> pending;         // leader proposal queue
    std::set<Digest> pending_digests;
    std::map<Digest, DecisionInfo> decided;
    std::vector<DecidedRecord> decided_log;  // in sequence order, for catch-up

    std::map<Digest, uint32_t> outstanding;       // client requests awaiting reply
    std::map<Digest, Transaction> known_requests;  // undecided requests seen

    bool viewchange_pending = false;
    uint64_t viewchange_target = 0;
    std::map<uint64_t, std::map<uint32_t, Msg>> viewchanges;  // target view -> votes
    uint64_t view_timer_gen = 0;
    bool syncing = false;
};

struct LaneState {
    Lane lane;
    size_t next_idx = 0;
    uint32_t cur_gateway = 0;
    int pt_retries = 0;
    bool waiting = false;
    Digest waiting_digest{};
    uint64_t submit_time = 0;
    uint64_t timer_gen = 0;
    bool done = false;
};

}  // namespace

struct Cluster::Impl {
    NetConfig cfg;
    uint32_t n;
    uint64_t quorum;  // 2f+1 with n = 3f+1
    std::mt19937_64 rng;

    std::vector<Replica> replicas;
    std::vector<LaneState> lanes;
    std::vector<std::pair<uint64_t, uint32_t>> crashes;

    // Event queue keyed by (time, insertion order) for full determinism.
    struct Event {
        uint64_t time;
        uint64_t order;
        std::function<void()> fn;
        bool operator>(const Event& o) const {
            return std::tie(time, order) > std::tie(o.time, o.order);
        }
    };
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
    uint64_t now = 0;
    uint64_t next_order = 0;
    uint64_t last_progress = 0;

    RunTrace trace;
    std::map<Digest, std::map<uint32_t, uint64_t>> decide_times;  // digest -> gw -> t
    std::map<uint64_t, uint64_t> lane_clock;  // block index -> busy-until (sim ns)
    bool ran = false;

    Impl(uint32_t gateways, NetConfig c) : cfg(c), n(gateways), rng(c.seed) {
        uint64_t f = (n >= 4) ? (n - 1) / 3 : 0;
        quorum = 2 * f + 1;
        replicas.resize(n);
        for (uint32_t i = 0; i < n; ++i) replicas[i].id = i;
    }

    uint32_t leader_of(uint64_t view) const { return static_cast<uint32_t>(view % n); }

    void schedule(uint64_t at, std::function<void()> fn) {
        queue.push(Event{std::max(at, now), next_order++, std::move(fn)});
    }

    uint64_t hop_delay() {
        uint64_t d = cfg.latency_ns;
        if (cfg.jitter_ns)
            d += std::uniform_int_distribution<uint64_t>(0, cfg.jitter_ns)(rng);
        return d;
    }

    bool dropped() {
        if (cfg.drop_rate <= 0.0) return false;
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.drop_rate;
    }

    void send(uint32_t from, uint32_t to, std::shared_ptr<const Msg> m) {
        if (to >= n || !replicas[to].alive) return;
        uint64_t delay = 0;
        if (from != to) {
            if (dropped()) return;
            delay = hop_delay();
        }
        schedule(now + delay, [this, to, m] { on_msg(to, *m); });
    }

    void broadcast(uint32_t from, Msg m) {
        auto shared = std::make_shared<const Msg>(std::move(m));
        for (uint32_t i = 0; i < n; ++i) send(from, i, shared);
    }

    // ---- client lanes ------------------------------------------------------

    uint64_t client_timeout() const {
        return 3 * cfg.view_timeout_ns + 10 * cfg.latency_ns;
    }

    void pick_alive_gateway(LaneState& ls) {
        for (uint32_t i = 0; i < n; ++i) {
            if (replicas[ls.cur_gateway].alive) return;
            ls.cur_gateway = (ls.cur_gateway + 1) % n;
        }
    }

    std::optional<Transaction> build_tx(LaneState& ls) {
        const LaneTx& spec = ls.lane.txs[ls.next_idx];
        Transaction tx = spec.tx;
        const auto& chain = replicas[ls.cur_gateway].engine.chain();
        bool resigned = false;
        if (spec.to_block_by_first_sig) {
            tx.to_block.reset();
            for (const auto& b : chain.blocks)
                if (b.header.first_ct.sig == *spec.to_block_by_first_sig) {
                    tx.to_block = b.header.index;
                    break;
                }
            if (!tx.to_block) return std::nullopt;
            resigned = true;
        } else if (spec.to_block_by_owner) {
            auto it = chain.owner_index.find(*spec.to_block_by_owner);
            if (it == chain.owner_index.end()) return std::nullopt;
            tx.to_block = it->second;
            resigned = true;
        }
        if (spec.resolve_pt) {
            if (!tx.to_block || *tx.to_block >= chain.blocks.size())
                return std::nullopt;
            tx.pt = model::pre_ct_hash(model::get_block(chain, *tx.to_block));
            resigned = true;
        }
        if (resigned) {
            if (!spec.signer) return std::nullopt;
            tx.sig = crypto::sign(*spec.signer, tx.signing_payload());
        }
        return tx;
    }

    void submit_next(uint32_t lane_id) {
        LaneState& ls = lanes[lane_id];
        if (ls.done || ls.waiting) return;
        if (ls.next_idx >= ls.lane.txs.size()) {
            ls.done = true;
            return;
        }
        pick_alive_gateway(ls);
        auto tx = build_tx(ls);
        if (!tx) {
            // The destination block is not visible at this gateway yet (it can
            // lag right after a failover); retry shortly.
            uint64_t gen = ++ls.timer_gen;
            schedule(now + cfg.retransmit_ns, [this, lane_id, gen] {
                if (lanes[lane_id].timer_gen == gen) submit_next(lane_id);
            });
            return;
        }
        ls.waiting = true;
        ls.pt_retries = 0;
        ls.waiting_digest = crypto::digest(model::canonical_encode(*tx));
        ls.submit_time = now;
        deliver_request(lane_id, *tx);
    }

    void deliver_request(uint32_t lane_id, Transaction tx) {
        LaneState& ls = lanes[lane_id];
        uint32_t gw = ls.cur_gateway;
        Digest digest = crypto::digest(model::canonical_encode(tx));
        schedule(now + hop_delay(), [this, gw, lane_id, tx, digest] {
            on_client_request(gw, lane_id, tx, digest);
        });
        arm_client_timer(lane_id, tx);
    }

    void arm_client_timer(uint32_t lane_id, Transaction tx) {
        LaneState& ls = lanes[lane_id];
        uint64_t gen = ++ls.timer_gen;
        schedule(now + client_timeout(), [this, lane_id, gen, tx] {
            LaneState& l = lanes[lane_id];
            if (l.timer_gen != gen || !l.waiting) return;
            // No answer: fail over to the next gateway with the same bytes
            // (the digest must stay stable so decision dedupe protects us).
            l.cur_gateway = (l.cur_gateway + 1) % n;
            pick_alive_gateway(l);
            deliver_request(lane_id, tx);
        });
    }

    void client_response(uint32_t lane_id, const Digest& digest, uint32_t gateway,
                         const DecisionInfo& info, uint64_t executed_ns) {
        LaneState& ls = lanes[lane_id];
        if (!ls.waiting || !(ls.waiting_digest == digest)) return;
        ls.waiting = false;
        ++ls.timer_gen;  // cancels the failover timer
        last_progress = now;

        // One StalePt retry per transaction: re-resolve and re-sign.
        if (!info.accept && info.detail.find("stale_pt") != std::string::npos &&
            ls.pt_retries == 0) {
            ls.pt_retries = 1;
            auto tx = build_tx(ls);
            if (tx) {
                ls.waiting = true;
                ls.waiting_digest = crypto::digest(model::canonical_encode(*tx));
                ls.submit_time = now;
                deliver_request(lane_id, *tx);
                return;
            }
        }

        TraceEvent ev;
        ev.time_ns = info.time_ns;
        ev.gateway = gateway;
        ev.primary = true;
        ev.kind = info.kind;
        ev.block_index = info.block_index;
        ev.opcode = ls.lane.txs[ls.next_idx].tx.opcode;
        ev.detail = info.detail;
        ev.tx_digest = digest;
        ev.gas_used = info.gas_used;
        ev.submit_ns = ls.submit_time;
        ev.decided_ns = info.time_ns;
        ev.executed_ns = executed_ns;
        ev.returned_ns = now;
        ev.wall = info.wall;
        trace.events.push_back(std::move(ev));

        ++ls.next_idx;
        submit_next(lane_id);
    }

    // ---- replica protocol --------------------------------------------------

    void on_client_request(uint32_t gw, uint32_t lane_id, const Transaction& tx,
                           const Digest& digest) {
        Replica& r = replicas[gw];
        if (!r.alive) return;
        auto it = r.decided.find(digest);
        if (it != r.decided.end()) {
            // Already settled (a failover re-ask): answer straight away.
            respond_to_client(gw, lane_id, digest, it->second);
            return;
        }
        r.outstanding[digest] = lane_id;
        gateway_rebroadcast(gw, tx, digest);
    }

    void gateway_rebroadcast(uint32_t gw, const Transaction& tx, const Digest& digest) {
        Replica& r = replicas[gw];
        if (!r.alive || !r.outstanding.count(digest)) return;
        Msg m;
        m.type = MsgType::Request;
        m.from = gw;
        m.tx = tx;
        m.digest = digest;
        broadcast(gw, std::move(m));
        schedule(now + cfg.retransmit_ns, [this, gw, tx, digest] {
            if (replicas[gw].alive && replicas[gw].outstanding.count(digest) &&
                !replicas[gw].decided.count(digest))
                gateway_rebroadcast(gw, tx, digest);
        });
    }

    void respond_to_client(uint32_t gw, uint32_t lane_id, const Digest& digest,
                           const DecisionInfo& info) {
        replicas[gw].outstanding.erase(digest);
        uint64_t executed_ns = info.time_ns;
        if (info.accept && info.gas_used > 0) {
            // Per-block execution lane: contract runs for the same block are
            // serialized; different blocks overlap freely.
            uint64_t& busy = lane_clock[info.block_index];
            uint64_t start = std::max(info.time_ns, busy);
            executed_ns = start + info.gas_used * cfg.ns_per_gas;
            busy = executed_ns;
        }
        uint64_t at = std::max(executed_ns, now) + hop_delay();
        DecisionInfo copy = info;
        schedule(at, [this, lane_id, digest, gw, copy, executed_ns] {
            client_response(lane_id, digest, gw, copy, executed_ns);
        });
    }

    void on_msg(uint32_t to, const Msg& m) {
        Replica& r = replicas[to];
        if (!r.alive) return;
        switch (m.type) {
            case MsgType::Request: on_request(r, m); break;
            case MsgType::PrePrepare: on_preprepare(r, m); break;
            case MsgType::Prepare: on_prepare(r, m); break;
            case MsgType::Commit: on_commit(r, m); break;
            case MsgType::ViewChange: on_viewchange(r, m); break;
            case MsgType::SyncReq: on_syncreq(r, m); break;
            case MsgType::SyncResp: on_syncresp(r, m); break;
        }
    }

    void on_request(Replica& r, const Msg& m) {
        if (r.decided.count(m.digest)) {
            notify_if_outstanding(r, m.digest);
            return;
        }
        if (!r.known_requests.count(m.digest)) {
            r.known_requests.emplace(m.digest, m.tx);
            arm_view_timer(r);
        }
        if (leader_of(r.view) == r.id && !r.pending_digests.count(m.digest)) {
            r.pending.push_back(m.tx);
            r.pending_digests.insert(m.digest);
            try_propose(r);
        }
    }

    void adopt_view(Replica& r, uint64_t view) {
        if (view <= r.view) return;
        r.view = view;
        r.viewchange_pending = false;
        // Tallies for superseded views can never complete; drop them.
        r.viewchanges.erase(r.viewchanges.begin(), r.viewchanges.lower_bound(view));
        // Undecided tallies from the old view are stale.
        auto it = r.instances.find(r.last_decided + 1);
        if (it != r.instances.end() && it->second.pp_view < view) {
            Instance& inst = it->second;
            inst.sent_prepare = inst.sent_commit = false;
            inst.prepares.clear();
            inst.commits.clear();
        }
        arm_view_timer(r);
        // A leader adopting a view does not propose here: complete_viewchange
        // (or retransmitted requests) drives that, after any needed catch-up.
    }

    void try_propose(Replica& r) {
        if (!r.alive || leader_of(r.view) != r.id || r.syncing) return;
        uint64_t seq = r.last_decided + 1;
        auto it = r.instances.find(seq);
        if (it != r.instances.end() && it->second.have_pp &&
            it->second.pp_view == r.view)
            return;  // an instance is already in flight in this view
        Transaction tx;
        bool found = false;
        if (it != r.instances.end() && it->second.have_pp) {
            tx = it->second.tx;  // re-propose the inherited pre-prepare
            found = true;
        }
        while (!found && !r.pending.empty()) {
            tx = std::move(r.pending.front());
            r.pending.pop_front();
            Digest d = crypto::digest(model::canonical_encode(tx));
            r.pending_digests.erase(d);
            if (!r.decided.count(d)) found = true;
        }
        if (!found) return;

        Msg m;
        m.type = MsgType::PrePrepare;
        m.from = r.id;
        m.view = r.view;
        m.seq = seq;
        m.tx = std::move(tx);
        m.digest = crypto::digest(model::canonical_encode(m.tx));
        broadcast(r.id, std::move(m));
    }

    void on_preprepare(Replica& r, const Msg& m) {
        if (m.view < r.view) return;
        adopt_view(r, m.view);
        if (m.seq <= r.last_decided) return;
        if (m.seq > r.last_decided + 1) {
            // We are behind; stash the pre-prepare and catch up from the sender.
            Instance& inst = r.instances[m.seq];
            if (!inst.have_pp || inst.pp_view <= m.view) {
                inst.have_pp = true;
                inst.pp_view = m.view;
                inst.tx = m.tx;
                inst.digest = m.digest;
            }
            request_sync(r, m.from);
            return;
        }
        Instance& inst = r.instances[m.seq];
        if (inst.have_pp && inst.pp_view == m.view && !(inst.digest == m.digest))
            return;  // cannot happen with crash faults; ignore defensively
        if (!inst.have_pp || inst.pp_view < m.view ||
            !(inst.digest == m.digest)) {
            inst.have_pp = true;
            inst.pp_view = m.view;
            inst.tx = m.tx;
            inst.digest = m.digest;
            inst.sent_prepare = inst.sent_commit = false;
        }
        vote(r, m.seq);
    }

    void vote(Replica& r, uint64_t seq) {
        Instance& inst = r.instances[seq];
        if (!inst.have_pp || inst.sent_prepare || seq != r.last_decided + 1) return;
        engine::EngineEvent ev = r.engine.preview(inst.tx);
        inst.my_accept = ev.kind != engine::EventKind::TransactionRejected;
        inst.my_detail = ev.detail;
        inst.sent_prepare = true;

        Msg m;
        m.type = MsgType::Prepare;
        m.from = r.id;
        m.view = r.view;
        m.seq = seq;
        m.tx = inst.tx;
        m.digest = inst.digest;
        m.accept = inst.my_accept;
        m.detail = inst.my_detail;
        broadcast(r.id, std::move(m));
    }

    template <typename Tally>
    std::optional<std::pair<bool, std::string>> matching_quorum(const Replica& r,
                                                                const Instance& inst,
                                                                const Tally& tally) {
        size_t yes = 0, no = 0;
        std::string no_detail;
        for (const auto& [from, msg] : tally) {
            if (msg.view != r.view || !(msg.digest == inst.digest)) continue;
            if (msg.accept) {
                ++yes;
            } else {
                ++no;
                no_detail = msg.detail;
            }
        }
        if (yes >= quorum) return std::make_pair(true, std::string());
        if (no >= quorum) return std::make_pair(false, no_detail);
        return std::nullopt;
    }

    void on_prepare(Replica& r, const Msg& m) {
        if (m.view < r.view) return;
        adopt_view(r, m.view);
        if (m.seq <= r.last_decided) return;
        Instance& inst = r.instances[m.seq];
        if (!inst.have_pp) {
            inst.have_pp = true;
            inst.pp_view = m.view;
            inst.tx = m.tx;
            inst.digest = m.digest;
        }
        inst.prepares[m.from] = m;
        if (m.seq != r.last_decided + 1) return;
        vote(r, m.seq);
        if (inst.sent_commit) return;
        if (auto verdict = matching_quorum(r, inst, inst.prepares)) {
            inst.sent_commit = true;
            Msg c;
            c.type = MsgType::Commit;
            c.from = r.id;
            c.view = r.view;
            c.seq = m.seq;
            c.tx = inst.tx;
            c.digest = inst.digest;
            c.accept = verdict->first;
            c.detail = verdict->second;
            broadcast(r.id, std::move(c));
        }
    }

    void on_commit(Replica& r, const Msg& m) {
        if (m.view < r.view) return;
        adopt_view(r, m.view);
        if (m.seq <= r.last_decided) return;
        Instance& inst = r.instances[m.seq];
        if (!inst.have_pp) {
            inst.have_pp = true;
            inst.pp_view = m.view;
            inst.tx = m.tx;
            inst.digest = m.digest;
        }
        inst.commits[m.from] = m;
        maybe_decide(r);
    }

    void maybe_decide(Replica& r) {
        uint64_t seq = r.last_decided + 1;
        auto it = r.instances.find(seq);
        if (it == r.instances.end() || !it->second.have_pp) return;
        auto verdict = matching_quorum(r, it->second, it->second.commits);
        if (!verdict) return;
        Transaction tx = it->second.tx;
        decide(r, seq, tx, verdict->first, verdict->second);
    }

    void decide(Replica& r, uint64_t seq, const Transaction& tx, bool accept,
                const std::string& reject_detail) {
        Digest digest = crypto::digest(model::canonical_encode(tx));
        DecisionInfo info;
        info.accept = accept;
        info.time_ns = now;
        if (accept) {
            engine::EngineEvent ev = r.engine.apply_decided(tx);
            if (ev.kind == engine::EventKind::TransactionRejected)
                throw DivergenceError(
                    "gateway " + std::to_string(r.id) +
                    " cannot apply a quorum-accepted transaction: " + ev.detail);
            info.kind = engine::event_kind_name(ev.kind);
            info.block_index = ev.block_index;
            info.gas_used = ev.gas_used;
            info.wall = ev.timings;
        } else {
            info.kind = engine::event_kind_name(engine::EventKind::TransactionRejected);
            info.detail = "consensus_refused: " + reject_detail;
        }

        r.last_decided = seq;
        r.instances.erase(seq);
        r.decided.emplace(digest, info);
        r.decided_log.push_back({seq, tx, accept, reject_detail});
        r.known_requests.erase(digest);
        decide_times[digest][r.id] = now;
        last_progress = now;

        TraceEvent ev;
        ev.time_ns = now;
        ev.gateway = r.id;
        ev.kind = info.kind;
        ev.block_index = info.block_index;
        ev.opcode = tx.opcode;
        ev.detail = info.detail;
        ev.tx_digest = digest;
        ev.gas_used = info.gas_used;
        ev.wall = info.wall;
        trace.events.push_back(std::move(ev));

        notify_if_outstanding(r, digest);
        arm_view_timer(r);
        maybe_decide(r);  // later instances may already hold commit quorums
        if (leader_of(r.view) == r.id) try_propose(r);
        // A buffered pre-prepare for the next sequence can now be voted on.
        auto next = r.instances.find(r.last_decided + 1);
        if (next != r.instances.end() && next->second.have_pp) vote(r, r.last_decided + 1);
    }

    void notify_if_outstanding(Replica& r, const Digest& digest) {
        auto out = r.outstanding.find(digest);
        if (out == r.outstanding.end()) return;
        uint32_t lane_id = out->second;
        respond_to_client(r.id, lane_id, digest, r.decided.at(digest));
    }

    // ---- view changes and catch-up ----------------------------------------

    void arm_view_timer(Replica& r) {
        uint64_t gen = ++r.view_timer_gen;
        if (r.known_requests.empty() && !r.viewchange_pending) return;
        uint32_t id = r.id;
        schedule(now + cfg.view_timeout_ns, [this, id, gen] {
            Replica& rr = replicas[id];
            if (!rr.alive || rr.view_timer_gen != gen) return;
            if (rr.known_requests.empty()) return;  // all answered meanwhile
            uint64_t target =
                (rr.viewchange_pending ? rr.viewchange_target : rr.view) + 1;
            start_viewchange(rr, target);
            // We may simply have missed the decision (lost commits leave a
            // replica behind with nobody else complaining): also ask a peer,
            // rotating through them, for anything already decided.
            if (n > 1) request_sync(rr, (id + 1 + gen % (n - 1)) % n);
            arm_view_timer(rr);
        });
    }

    void start_viewchange(Replica& r, uint64_t target) {
        r.viewchange_pending = true;
        r.viewchange_target = target;
        Msg m;
        m.type = MsgType::ViewChange;
        m.from = r.id;
        m.view = target;
        m.last_decided = r.last_decided;
        auto it = r.instances.find(r.last_decided + 1);
        if (it != r.instances.end() && it->second.have_pp) {
            m.has_pp = true;
            m.seq = r.last_decided + 1;
            m.pp_view = it->second.pp_view;
            m.pp_tx = it->second.tx;
        }
        broadcast(r.id, std::move(m));
    }

    void on_viewchange(Replica& r, const Msg& m) {
        if (m.view <= r.view) return;
        r.viewchanges[m.view][m.from] = m;
        auto& votes = r.viewchanges[m.view];
        // Join once enough peers complain, so the quorum can form.
        uint64_t f = (n >= 4) ? (n - 1) / 3 : 0;
        if (votes.size() >= f + 1 &&
            (!r.viewchange_pending || r.viewchange_target < m.view))
            start_viewchange(r, m.view);
        if (votes.size() >= quorum) complete_viewchange(r, m.view);
    }

    void complete_viewchange(Replica& r, uint64_t view) {
        auto votes = r.viewchanges[view];  // copy: adopt_view may mutate state
        adopt_view(r, view);
        if (leader_of(view) != r.id) return;

        // Inherit the best-known pre-prepare and catch up with the most
        // advanced member of the quorum before proposing anything new.
        uint64_t max_ld = r.last_decided;
        uint32_t ahead = r.id;
        for (const auto& [from, vc] : votes) {
            if (vc.last_decided > max_ld) {
                max_ld = vc.last_decided;
                ahead = from;
            }
        }
        if (max_ld > r.last_decided) {
            request_sync(r, ahead);
            return;  // lead_new_view resumes once synced
        }
        inherit_preprepare(r, votes);
        try_propose(r);
    }

    void inherit_preprepare(Replica& r, const std::map<uint32_t, Msg>& votes) {
        uint64_t seq = r.last_decided + 1;
        const Msg* best = nullptr;
        for (const auto& [from, vc] : votes)
            if (vc.has_pp && vc.seq == seq && (!best || vc.pp_view > best->pp_view))
                best = &vc;
        if (!best) return;
        Instance& inst = r.instances[seq];
        if (!inst.have_pp || inst.pp_view <= best->pp_view) {
            inst.have_pp = true;
            inst.pp_view = best->pp_view;
            inst.tx = best->pp_tx;
            inst.digest = crypto::digest(model::canonical_encode(best->pp_tx));
            inst.sent_prepare = inst.sent_commit = false;
            inst.prepares.clear();
            inst.commits.clear();
        }
    }

    void lead_new_view(Replica& r) {
        auto it = r.viewchanges.find(r.view);
        if (it != r.viewchanges.end()) inherit_preprepare(r, it->second);
        try_propose(r);
    }

    void request_sync(Replica& r, uint32_t from) {
        if (r.syncing) return;
        r.syncing = true;
        Msg m;
        m.type = MsgType::SyncReq;
        m.from = r.id;
        m.last_decided = r.last_decided;
        send(r.id, from, std::make_shared<const Msg>(std::move(m)));
        // Clear the flag after a while so a lost reply does not wedge us.
        uint32_t id = r.id;
        schedule(now + cfg.retransmit_ns, [this, id] { replicas[id].syncing = false; });
    }

    void on_syncreq(Replica& r, const Msg& m) {
        Msg resp;
        resp.type = MsgType::SyncResp;
        resp.from = r.id;
        for (const auto& rec : r.decided_log)
            if (rec.seq > m.last_decided) resp.records.push_back(rec);
        send(r.id, m.from, std::make_shared<const Msg>(std::move(resp)));
    }

    void on_syncresp(Replica& r, const Msg& m) {
        r.syncing = false;
        for (const auto& rec : m.records) {
            if (rec.seq != r.last_decided + 1) continue;
            Digest d = crypto::digest(model::canonical_encode(rec.tx));
            if (r.decided.count(d)) continue;
            decide(r, rec.seq, rec.tx, rec.accept, rec.detail);
        }
        if (leader_of(r.view) == r.id) lead_new_view(r);
    }

    // ---- run loop ----------------------------------------------------------

    bool all_lanes_done() const {
        for (const auto& ls : lanes)
            if (!ls.done) return false;
        return true;
    }

    void run_loop() {
        while (!queue.empty()) {
            Event ev = queue.top();
            queue.pop();
            if (ev.time > last_progress + cfg.idle_limit_ns && !all_lanes_done())
                throw DeadlockError("no consensus progress for " +
                                    std::to_string(cfg.idle_limit_ns) + " ns of simulated time");
            now = ev.time;
            ev.fn();
        }
        if (!all_lanes_done())
            throw DeadlockError("event queue drained with unfinished lanes");
        trace.end_ns = now;
    }
};

Cluster::Cluster(uint32_t gateways, NetConfig cfg)
    : impl_(std::make_unique<Impl>(gateways, cfg)) {}
Cluster::~Cluster() = default;

uint32_t Cluster::size() const { return impl_->n; }
engine::Engine& Cluster::gateway_engine(uint32_t i) { return impl_->replicas.at(i).engine; }
bool Cluster::alive(uint32_t i) const { return impl_->replicas.at(i).alive; }

void Cluster::add_lane(Lane lane) {
    LaneState ls;
    ls.cur_gateway = lane.gateway % impl_->n;
    ls.lane = std::move(lane);
    impl_->lanes.push_back(std::move(ls));
}

void Cluster::crash_at(uint32_t gateway, uint64_t time_ns) {
    impl_->crashes.emplace_back(time_ns, gateway % impl_->n);
}

RunTrace Cluster::run() {
    Impl& s = *impl_;
    if (s.ran) throw std::logic_error("a cluster can only run once");
    s.ran = true;
    for (auto [t, gw] : s.crashes)
        s.schedule(t, [&s, gw = gw] { s.replicas[gw].alive = false; });
    for (uint32_t i = 0; i < s.lanes.size(); ++i)
        s.schedule(s.lanes[i].lane.start_ns, [&s, i] { s.submit_next(i); });
    s.run_loop();

    // Backfill replication completion times now that every gateway has applied.
    for (auto& ev : s.trace.events) {
        if (!ev.primary) continue;
        uint64_t last = ev.decided_ns;
        for (auto [gw, t] : s.decide_times[ev.tx_digest])
            last = std::max(last, t);
        ev.replicated_ns = last;
    }
    check_convergence();
    return s.trace;
}

void Cluster::check_convergence() const {
    const Impl& s = *impl_;
    std::optional<Bytes> reference;
    uint32_t ref_id = 0;
    for (const auto& r : s.replicas) {
        if (!r.alive) continue;
        Bytes enc = model::canonical_encode_chain(r.engine.chain());
        if (!reference) {
            reference = std::move(enc);
            ref_id = r.id;
        } else if (enc != *reference) {
            throw DivergenceError("gateway " + std::to_string(r.id) +
                                  " chain differs from gateway " +
                                  std::to_string(ref_id));
        }
    }
}

bool Cluster::decided_accept(const Digest& d) const {
    for (const auto& r : impl_->replicas) {
        auto it = r.decided.find(d);
        if (it != r.decided.end() && it->second.accept) return true;
    }
    return false;
}

bool Cluster::decided_reject(const Digest& d) const {
    for (const auto& r : impl_->replicas) {
        auto it = r.decided.find(d);
        if (it != r.decided.end() && !it->second.accept) return true;
    }
    return false;
}

int Cluster::decision(uint32_t gateway, const Digest& d) const {
    const auto& r = impl_->replicas.at(gateway);
    auto it = r.decided.find(d);
    if (it == r.decided.end()) return -1;
    return it->second.accept ? 1 : 0;
}

void RunTrace::export_jsonl(std::ostream& out, bool include_wall) const {
    for (const auto& ev : events) {
        nlohmann::json j;
        j["time_ns"] = ev.time_ns;
        j["gateway"] = ev.gateway;
        j["primary"] = ev.primary;
        j["kind"] = ev.kind;
        j["block_index"] = ev.block_index;
        j["opcode"] = static_cast<int>(ev.opcode);
        j["detail"] = ev.detail;
        j["tx"] = hex(ev.tx_digest);
        j["gas_used"] = ev.gas_used;
        if (ev.primary) {
            j["submit_ns"] = ev.submit_ns;
            j["decided_ns"] = ev.decided_ns;
            j["replicated_ns"] = ev.replicated_ns;
            j["executed_ns"] = ev.executed_ns;
            j["returned_ns"] = ev.returned_ns;
        }
        if (include_wall) {
            j["wall_consensus_ns"] = ev.wall.consensus_ns;
            j["wall_vm_ns"] = ev.wall.vm_ns;
            j["wall_apply_ns"] = ev.wall.apply_ns;
        }
        out << j.dump() << "\n";
    }
}

}  // namespace abc::sim

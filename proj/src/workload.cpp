#include "abc/workload.h"

#include <cmath>

#include "abc/vm.h"

namespace abc::workload {

namespace {

std::array<uint8_t, 32> derive_seed(uint64_t seed, std::string_view role, uint64_t n) {
    Bytes material;
    put_u64(material, seed);
    material.insert(material.end(), role.begin(), role.end());
    put_u64(material, n);
    return crypto::digest(material);
}

Bytes seeded_bytes(std::mt19937_64& rng, size_t len) {
    Bytes out(len);
    for (auto& b : out) b = static_cast<uint8_t>(rng());
    return out;
}

model::Transaction unsigned_tx(Bytes data, std::optional<uint64_t> to_block,
                               model::OpCode opcode) {
    model::Transaction tx;
    tx.data = std::move(data);
    tx.to_block = to_block;
    tx.opcode = opcode;
    return tx;
}

}  // namespace

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::A: return "A";
        case Scenario::B: return "B";
        case Scenario::C: return "C";
        case Scenario::D: return "D";
    }
    return "?";
}

std::optional<Scenario> scenario_from_name(std::string_view name) {
    if (name == "A" || name == "a") return Scenario::A;
    if (name == "B" || name == "b") return Scenario::B;
    if (name == "C" || name == "c") return Scenario::C;
    if (name == "D" || name == "d") return Scenario::D;
    return std::nullopt;
}

WorkloadSpec spec_for(Scenario s, double scale, uint32_t gateways, uint64_t seed) {
    WorkloadSpec spec;
    spec.scenario = s;
    spec.gateways = gateways;
    spec.seed = seed;
    uint32_t total_calls =
        std::max<uint32_t>(1, static_cast<uint32_t>(std::llround(1000.0 * scale)));
    bool parallel = s == Scenario::C || s == Scenario::D;
    bool loaded = s == Scenario::B || s == Scenario::D;
    spec.contexts = parallel ? 10 : 1;
    spec.calls_per_context = std::max<uint32_t>(1, total_calls / spec.contexts);
    if (loaded) {
        spec.load_devices =
            std::max<uint32_t>(1, static_cast<uint32_t>(std::llround(50.0 * scale)));
        spec.load_tx_per_device = 100;
    }
    return spec;
}

Bytes gps_contract_body() {
    // Entry stack (top last): x2 x1 y2 y1. Computes (y1-y2)^2 + (x1-x2)^2,
    // stores it at key 0 and leaves it on the stack for the caller.
    return vm::assemble(
        "SUB"              // dy = y1 - y2
        "; DUP 0; MUL"     // dy^2
        "; SWAP 1"         // bring x2 up: [dy^2, x1, x2]
        "; SUB"            // x2 - x1 (sign-safe under squaring)
        "; DUP 0; MUL"     // dx^2
        "; ADD"            // dx^2 + dy^2
        "; DUP 0; PUSH1 0; SSTORE"
        "; RETURN1");
}

Bytes gps_deploy_code() {
    Bytes code{vm::CREATE};
    Bytes body = gps_contract_body();
    code.insert(code.end(), body.begin(), body.end());
    return code;
}

Bytes gps_call_code(const Address& contract, uint64_t x1, uint64_t y1, uint64_t x2,
                    uint64_t y2) {
    Bytes code;
    auto push_word = [&](const Word& w) {
        code.push_back(vm::PUSH32);
        code.insert(code.end(), w.begin(), w.end());
    };
    push_word(vm::word_from_u64(x2));
    push_word(vm::word_from_u64(x1));
    push_word(vm::word_from_u64(y2));
    push_word(vm::word_from_u64(y1));
    push_word(vm::word_from_address(contract));
    code.push_back(vm::CALL);
    code.push_back(vm::RETURN1);
    return code;
}

Address gps_contract_address(const Address& creator) {
    Bytes preimage(creator.begin(), creator.end());
    put_u64(preimage, 0);  // first creation in the context
    Digest d = crypto::digest(preimage);
    Address a{};
    std::copy(d.begin() + 12, d.end(), a.begin());
    return a;
}

std::vector<sim::Lane> gen_contract_calls(const WorkloadSpec& spec) {
    std::vector<sim::Lane> lanes;
    for (uint32_t c = 0; c < spec.contexts; ++c) {
        auto kp = crypto::keygen(derive_seed(spec.seed, "contract-device", c));
        auto walk = derive_seed(spec.seed, "walk", c);
        uint64_t walk_seed = 0;
        for (int i = 0; i < 8; ++i) walk_seed = walk_seed << 8 | walk[i];
        std::mt19937_64 rng(walk_seed);
        Address contract = gps_contract_address(crypto::address_of(kp.pub));

        sim::Lane lane;
        lane.gateway = c % spec.gateways;

        sim::LaneTx create;
        create.tx = unsigned_tx(gps_deploy_code(), std::nullopt,
                                model::OpCode::NewContextBlock);
        create.tx.sig = crypto::sign(kp.sec, create.tx.signing_payload());
        crypto::RecoverableSignature create_sig = create.tx.sig;
        lane.txs.push_back(std::move(create));

        // Coordinate random walk in fixed-point micro-degrees.
        uint64_t x = 180'000'000 + rng() % 1'000'000;
        uint64_t y = 90'000'000 + rng() % 1'000'000;
        for (uint32_t i = 0; i < spec.calls_per_context; ++i) {
            uint64_t tx_ = 180'000'000 + rng() % 10'000'000;
            uint64_t ty = 90'000'000 + rng() % 10'000'000;
            sim::LaneTx call;
            call.tx = unsigned_tx(gps_call_code(contract, x, y, tx_, ty), 0,
                                  model::OpCode::Append);
            call.resolve_pt = true;
            call.signer = kp.sec;
            call.to_block_by_first_sig = create_sig;
            lane.txs.push_back(std::move(call));
            x += rng() % 20'000;
            y += rng() % 20'000;
        }
        lanes.push_back(std::move(lane));
    }
    return lanes;
}

std::vector<sim::Lane> gen_normal_load(const WorkloadSpec& spec) {
    std::vector<sim::Lane> lanes;
    for (uint32_t g = 0; g < spec.gateways; ++g) {
        for (uint32_t d = 0; d < spec.load_devices; ++d) {
            uint64_t device_id = static_cast<uint64_t>(g) * spec.load_devices + d;
            auto kp = crypto::keygen(derive_seed(spec.seed, "load-device", device_id));
            std::mt19937_64 rng(spec.seed * 2654435761u + device_id + 1);

            sim::Lane lane;
            lane.gateway = g;

            sim::LaneTx create;
            create.tx = unsigned_tx(seeded_bytes(rng, 128), std::nullopt,
                                    model::OpCode::NewPureDataBlock);
            create.tx.sig = crypto::sign(kp.sec, create.tx.signing_payload());
            lane.txs.push_back(std::move(create));

            for (uint32_t i = 0; i < spec.load_tx_per_device; ++i) {
                sim::LaneTx append;
                append.tx = unsigned_tx(seeded_bytes(rng, 128), 0, model::OpCode::Append);
                append.resolve_pt = true;
                append.signer = kp.sec;
                append.to_block_by_owner = kp.pub;
                lane.txs.push_back(std::move(append));
            }
            lanes.push_back(std::move(lane));
        }
    }
    return lanes;
}

std::vector<sim::Lane> build_lanes(const WorkloadSpec& spec) {
    auto lanes = gen_contract_calls(spec);
    auto load = gen_normal_load(spec);
    lanes.insert(lanes.end(), std::make_move_iterator(load.begin()),
                 std::make_move_iterator(load.end()));
    return lanes;
}

}  // namespace abc::workload

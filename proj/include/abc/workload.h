#pragma once

// Device simulation: builds the benchmark transaction schedules. Two kinds of
// traffic exist: GPS-distance smart-contract calls against context blocks,
// and "normal" load — pure data blocks receiving random appends. Everything
// is a pure function of the seed, so schedules are reproducible.

#include "abc/sim.h"

namespace abc::workload {

enum class Scenario { A, B, C, D };

const char* scenario_name(Scenario s);
std::optional<Scenario> scenario_from_name(std::string_view name);

struct WorkloadSpec {
    Scenario scenario = Scenario::A;
    uint32_t gateways = 10;
    uint32_t contexts = 1;            // A/B: 1, C/D: one per parallel lane
    uint32_t calls_per_context = 0;   // contract calls after each deployment
    uint32_t load_devices = 0;        // per gateway (B/D only)
    uint32_t load_tx_per_device = 0;  // appends per load device
    uint64_t seed = 0;
};

// The benchmark shapes at a given scale. Scale 1.0 is 1,000 total calls and
// 50 load devices x 100 appends per gateway; the default desk scale is 0.3.
WorkloadSpec spec_for(Scenario s, double scale, uint32_t gateways, uint64_t seed);

struct DeviceSim {
    crypto::KeyPair keypair;
    std::optional<uint64_t> home_block;
    uint64_t rng_seed = 0;
};

// GPS-distance contract fixture. Coordinates are fixed-point degrees scaled
// by 10^6. The contract pops two coordinate pairs, stores the squared
// euclidean distance at storage key 0 and returns it. Squaring makes the
// wrapping subtraction sign-safe: (-d)^2 == d^2 mod 2^256.
Bytes gps_contract_body();
Bytes gps_deploy_code();  // CREATE followed by the body
Bytes gps_call_code(const Address& contract, uint64_t x1, uint64_t y1, uint64_t x2,
                    uint64_t y2);

// The address the deployment transaction assigns to the contract, given the
// creating device's address (first creation in a fresh context).
Address gps_contract_address(const Address& creator);

// One lane per context: a NewContextBlock deploying the contract, then the
// calls with a seeded coordinate random walk. Lane k is pinned to gateway
// k mod gateways.
std::vector<sim::Lane> gen_contract_calls(const WorkloadSpec& spec);

// Normal load: per gateway, load_devices lanes of one NewPureDataBlock plus
// load_tx_per_device appends of 128 seeded random bytes.
std::vector<sim::Lane> gen_normal_load(const WorkloadSpec& spec);

// Full schedule for the given shape's scenario (contract lanes + load lanes).
std::vector<sim::Lane> build_lanes(const WorkloadSpec& spec);

}  // namespace abc::workload

#include <doctest.h>

#include <json.hpp>

#include "abc/adapter.h"
#include "test_util.h"

using namespace abc;
using namespace testutil;
using nlohmann::json;

namespace {

// In-process transport that runs the serving side directly.
struct Loopback : adapter::Channel {
    std::string exchange(const std::string& line) override {
        last_request = line;
        return adapter::serve_request(line);
    }
    std::string last_request;
};

// Transport that rewrites the genuine response before handing it back.
struct Tamper : adapter::Channel {
    std::function<std::string(std::string)> rewrite;
    std::string exchange(const std::string& line) override {
        return rewrite(adapter::serve_request(line));
    }
};

Address caller_addr(uint64_t n = 1) { return crypto::address_of(key(n).pub); }

}  // namespace

TEST_CASE("loopback run matches the built-in machine on random programs") {
    Loopback chan;
    std::mt19937_64 rng(123);
    for (int i = 0; i < 100; ++i) {
        Bytes code;
        if (i % 3 == 0) {
            code = random_bytes(rng, 1 + rng() % 48);
        } else {
            // Mostly well-formed programs so the success path gets exercised.
            uint64_t v = rng() % 200, k = rng() % 8;
            code = vm::assemble("PUSH1 " + std::to_string(v) + "; PUSH1 " +
                                std::to_string(k) + "; SSTORE; PUSH1 " +
                                std::to_string(k) + "; SLOAD; RETURN1");
        }
        auto caller = caller_addr(1 + rng() % 4);

        state::StateStore local, remote;
        auto want = vm::execute(local, std::nullopt, code, caller, 10'000);
        auto got = adapter::execute_external(chan, remote, std::nullopt, code, caller,
                                             10'000);
        REQUIRE(want.index() == got.index());
        if (auto* w = std::get_if<vm::ExecutionResult>(&want)) {
            auto& g = std::get<vm::ExecutionResult>(got);
            CHECK(w->new_root == g.new_root);
            CHECK(w->return_data == g.return_data);
            CHECK(w->gas_used == g.gas_used);
            CHECK(remote.knows(g.new_root));
            // The transferred node set reconstructs identical account bytes.
            CHECK(remote.get_account(g.new_root, caller) ==
                  local.get_account(w->new_root, caller));
        } else {
            CHECK(std::get<vm::VmError>(want).kind == std::get<vm::VmError>(got).kind);
        }
    }
}

TEST_CASE("state travels with the request and round trips") {
    Loopback chan;
    state::StateStore store;
    auto caller = caller_addr(6);
    auto seeded = adapter::execute_external(
        chan, store, std::nullopt, vm::assemble("PUSH1 55; PUSH1 3; SSTORE"), caller,
        1000);
    auto root = std::get<vm::ExecutionResult>(seeded).new_root;

    auto read = adapter::execute_external(chan, store, root,
                                          vm::assemble("PUSH1 3; SLOAD; RETURN1"),
                                          caller, 1000);
    auto& r = std::get<vm::ExecutionResult>(read);
    REQUIRE(r.return_data.size() == 32);
    CHECK(r.return_data[31] == 55);
    CHECK(r.new_root == root);  // a pure read leaves the root unchanged

    // The request really carried the prior root and its node records.
    auto req = json::parse(chan.last_request);
    CHECK(req.at("state_root").get<std::string>() == hex(root.root));
    CHECK_FALSE(req.at("state_nodes").empty());
}

TEST_CASE("machine errors are relayed with their kind intact") {
    Loopback chan;
    state::StateStore store;
    auto check_kind = [&](const Bytes& code, vm::VmErrorKind kind) {
        auto out = adapter::execute_external(chan, store, std::nullopt, code,
                                             caller_addr(), 1000);
        REQUIRE(std::holds_alternative<vm::VmError>(out));
        CHECK(std::get<vm::VmError>(out).kind == kind);
    };
    check_kind(vm::assemble("REVERT"), vm::VmErrorKind::ExplicitRevert);
    check_kind(vm::assemble("POP"), vm::VmErrorKind::StackViolation);
    check_kind(Bytes{0xfe}, vm::VmErrorKind::InvalidBytecode);
    check_kind(vm::assemble("PUSH1 0; JUMP"), vm::VmErrorKind::OutOfGas);
}

TEST_CASE("malformed responses become adapter failures") {
    state::StateStore store;
    auto code = vm::assemble("PUSH1 1; RETURN1");
    auto run_with = [&](std::function<std::string(std::string)> rewrite) {
        Tamper chan;
        chan.rewrite = std::move(rewrite);
        auto out = adapter::execute_external(chan, store, std::nullopt, code,
                                             caller_addr(), 1000);
        REQUIRE(std::holds_alternative<vm::VmError>(out));
        return std::get<vm::VmError>(out).kind;
    };

    // Not JSON at all.
    CHECK(run_with([](std::string) { return std::string("garbage"); }) ==
          vm::VmErrorKind::AdapterFailure);

    // Wrong id echoed back.
    CHECK(run_with([](std::string line) {
              auto j = json::parse(line);
              j["id"] = j["id"].get<uint64_t>() + 1;
              return j.dump();
          }) == vm::VmErrorKind::AdapterFailure);

    // Required field missing from an ok response.
    CHECK(run_with([](std::string line) {
              auto j = json::parse(line);
              j.erase("new_root");
              return j.dump();
          }) == vm::VmErrorKind::AdapterFailure);

    // Unknown status string.
    CHECK(run_with([](std::string line) {
              auto j = json::parse(line);
              j["status"] = "maybe";
              return j.dump();
          }) == vm::VmErrorKind::AdapterFailure);

    // Unknown error kind name.
    CHECK(run_with([](std::string line) {
              auto j = json::parse(line);
              j["status"] = "error";
              j["error_kind"] = "spontaneous_combustion";
              return j.dump();
          }) == vm::VmErrorKind::AdapterFailure);

    // Claimed root whose node records were dropped (needs a program that
    // actually writes, so the root is not the trivially known empty one).
    {
        Tamper chan;
        chan.rewrite = [](std::string line) {
            auto j = json::parse(line);
            j["new_nodes"] = json::array();
            return j.dump();
        };
        auto out = adapter::execute_external(chan, store, std::nullopt,
                                             vm::assemble("PUSH1 8; PUSH1 0; SSTORE"),
                                             caller_addr(), 1000);
        REQUIRE(std::holds_alternative<vm::VmError>(out));
        CHECK(std::get<vm::VmError>(out).kind == vm::VmErrorKind::AdapterFailure);
    }

    // Gas accounting above the supplied limit.
    CHECK(run_with([](std::string line) {
              auto j = json::parse(line);
              j["gas_used"] = 999'999;
              return j.dump();
          }) == vm::VmErrorKind::AdapterFailure);

    // A throwing transport is also an adapter failure, not a crash.
    struct Broken : adapter::Channel {
        std::string exchange(const std::string&) override {
            throw std::runtime_error("pipe closed");
        }
    } broken;
    auto out = adapter::execute_external(broken, store, std::nullopt, code,
                                         caller_addr(), 1000);
    CHECK(std::get<vm::VmError>(out).kind == vm::VmErrorKind::AdapterFailure);

    // Nothing was ever registered in the local store by the failed runs.
    CHECK(store.known_root_count() == 1);
}

TEST_CASE("the engine behaves identically behind the adapter") {
    auto consensus = [](const model::Transaction&) { return true; };
    auto build = [&](engine::Engine& eng) {
        auto k = key(40);
        eng.mempool().submit(
            create_context_tx(k, vm::assemble("PUSH1 31; PUSH1 2; SSTORE")));
        eng.step(consensus);
        auto pt = model::pre_ct_hash(model::get_block(eng.chain(), 1));
        eng.mempool().submit(
            append_tx(k, vm::assemble("PUSH1 2; SLOAD; RETURN1"), 1, pt));
        eng.step(consensus);
    };

    engine::Engine native;
    build(native);

    engine::Engine remote;
    remote.set_executor(adapter::external_executor(std::make_shared<Loopback>()));
    build(remote);

    CHECK(model::canonical_encode_chain(native.chain()) ==
          model::canonical_encode_chain(remote.chain()));
}

#pragma once

// Wire adapter for plugging an external EVM-compatible engine behind the
// same contract as the built-in machine. One newline-delimited JSON request
// per exchange; the state travels as content-addressed node records so the
// remote side needs no storage of its own.

#include <memory>

#include "abc/vm.h"

namespace abc::adapter {

// Transport abstraction: sends one serialized request line, returns the
// response line (without the trailing newline). Implementations may wrap a
// pipe, a socket, or an in-process stub.
class Channel {
public:
    virtual ~Channel() = default;
    virtual std::string exchange(const std::string& request_line) = 0;
};

std::string encode_request(uint64_t id, const state::StateStore& store,
                           const std::optional<state::StateRoot>& state,
                           const Bytes& code, const Address& caller,
                           uint64_t gas_limit);

// Serves one request line against a local store/executor; used by external
// engine processes and by the loopback stub in tests.
std::string serve_request(const std::string& request_line);

// Same contract as vm::execute, through the channel. Any transport error,
// schema deviation, or id mismatch yields AdapterFailure.
vm::Outcome execute_external(Channel& channel, state::StateStore& store,
                             const std::optional<state::StateRoot>& state,
                             const Bytes& code, const Address& caller,
                             uint64_t gas_limit);

vm::Executor external_executor(std::shared_ptr<Channel> channel);

}  // namespace abc::adapter

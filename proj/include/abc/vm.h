#pragma once

// Deterministic stack machine executing transaction bytecode against a
// context's state snapshot. All arithmetic is on 32-byte unsigned words with
// wraparound; every instruction burns gas so execution always terminates.

#include <functional>
#include <variant>

#include "abc/bytes.h"
#include "abc/state_store.h"

namespace abc::vm {

// One-byte opcodes, operands inline after the opcode byte.
enum Op : uint8_t {
    HALT = 0x00,
    PUSH1 = 0x01,   // 1-byte immediate
    PUSH32 = 0x02,  // 32-byte immediate
    POP = 0x03,
    DUP = 0x04,   // 1-byte immediate n: copy the n-th word from the top (0 = top)
    SWAP = 0x05,  // 1-byte immediate n: swap top with the (n+1)-th word
    ADD = 0x10,
    SUB = 0x11,  // pops a, b; pushes a - b (a was on top)
    MUL = 0x12,
    DIV = 0x13,  // division by zero yields 0
    LT = 0x14,
    EQ = 0x15,
    JUMP = 0x20,
    JUMPI = 0x21,
    SLOAD = 0x30,
    SSTORE = 0x31,
    CALLER = 0x32,
    CREATE = 0x40,  // deploys the remainder of the current code, pushes address
    CALL = 0x41,    // pops address; runs callee code on the shared stack
    RETURN1 = 0x50,
    RETURNN = 0x51,  // pops count, then that many words
    REVERT = 0x5f,
};

struct ExecutionResult {
    state::StateRoot new_root;
    Bytes return_data;
    uint64_t gas_used = 0;
};

enum class VmErrorKind {
    InvalidBytecode,
    OutOfGas,
    StackViolation,
    CrossContextCall,
    ExplicitRevert,
    AdapterFailure,
};

struct VmError {
    VmErrorKind kind;
    std::string detail;
};

const char* vm_error_name(VmErrorKind kind);
std::optional<VmErrorKind> vm_error_from_name(std::string_view name);

using Outcome = std::variant<ExecutionResult, VmError>;

// Runs code against the snapshot (absent state = the empty root). On success
// the resulting root is registered in the store; on error nothing is written.
Outcome execute(state::StateStore& store, const std::optional<state::StateRoot>& state,
                const Bytes& code, const Address& caller, uint64_t gas_limit);

// Signature shared by the built-in machine and the external adapter so the
// engine can treat them interchangeably.
using Executor =
    std::function<Outcome(state::StateStore&, const std::optional<state::StateRoot>&,
                          const Bytes&, const Address&, uint64_t)>;

Executor reference_executor();

struct ParseError : std::runtime_error {
    ParseError(int line, int column, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ":" +
                             std::to_string(column) + ": " + what),
          line(line),
          column(column) {}
    int line;
    int column;
};

// Mnemonic assembler for test fixtures and workload programs. Instructions
// are separated by ';' or newlines; '#' starts a comment.
Bytes assemble(const std::string& source);
std::string disassemble(const Bytes& code);

// Word <-> integer helpers (big-endian).
Word word_from_u64(uint64_t v);
uint64_t word_to_u64(const Word& w);  // truncating
Word word_from_address(const Address& a);

constexpr uint64_t kGasPerInstruction = 1;
constexpr uint64_t kGasStore = 20;  // SSTORE and CREATE
constexpr size_t kStackLimit = 1024;
constexpr size_t kCallDepthLimit = 64;

}  // namespace abc::vm

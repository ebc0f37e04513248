#include "abc/vm.h"

#include <boost/multiprecision/cpp_int.hpp>
#include <cstring>
#include <map>
#include <set>

#include "abc/crypto.h"

namespace abc::vm {

using u256 = boost::multiprecision::uint256_t;

namespace {

Word to_word(const u256& v) {
    Word w{};
    u256 x = v;
    for (int i = 31; i >= 0; --i) {
        w[i] = static_cast<uint8_t>(x & 0xff);
        x >>= 8;
    }
    return w;
}

u256 from_word(const Word& w) {
    u256 v = 0;
    for (auto b : w) {
        v <<= 8;
        v |= b;
    }
    return v;
}

Address low20(const u256& v) {
    Word w = to_word(v);
    Address a{};
    std::memcpy(a.data(), w.data() + 12, 20);
    return a;
}

// Reserved account holding the per-context contract creation counter at
// storage key zero.
const Address kMetaAddress{};

struct Interp {
    state::StateStore& store;
    state::StateRoot base;
    Address origin;
    uint64_t gas_limit;
    uint64_t gas_used = 0;
    std::vector<u256> stack;
    Bytes return_data;
    std::map<Address, std::optional<state::Account>> accounts;
    std::set<Address> dirty;

    std::optional<state::Account>& load(const Address& a) {
        auto it = accounts.find(a);
        if (it == accounts.end())
            it = accounts.emplace(a, store.get_account(base, a)).first;
        return it->second;
    }

    state::Account& load_or_create(const Address& a) {
        auto& slot = load(a);
        if (!slot) {
            slot = state::Account{};
            slot->address = a;
        }
        return *slot;
    }

    std::optional<VmError> run(Bytes code, const Address& self, int depth);
};

std::optional<VmError> Interp::run(Bytes code, const Address& self, int depth) {
    size_t pc = 0;
    auto need = [&](size_t n) { return stack.size() >= n; };
    auto pop = [&]() {
        u256 v = stack.back();
        stack.pop_back();
        return v;
    };

    while (pc < code.size()) {
        uint8_t op = code[pc++];
        gas_used += (op == SSTORE || op == CREATE) ? kGasStore : kGasPerInstruction;
        if (gas_used > gas_limit) return VmError{VmErrorKind::OutOfGas, "gas limit exceeded"};

        switch (op) {
            case HALT:
                return std::nullopt;
            case PUSH1: {
                if (pc >= code.size())
                    return VmError{VmErrorKind::InvalidBytecode, "truncated PUSH1"};
                if (stack.size() >= kStackLimit)
                    return VmError{VmErrorKind::StackViolation, "stack overflow"};
                stack.push_back(u256(code[pc++]));
                break;
            }
            case PUSH32: {
                if (pc + 32 > code.size())
                    return VmError{VmErrorKind::InvalidBytecode, "truncated PUSH32"};
                if (stack.size() >= kStackLimit)
                    return VmError{VmErrorKind::StackViolation, "stack overflow"};
                Word w;
                std::memcpy(w.data(), code.data() + pc, 32);
                pc += 32;
                stack.push_back(from_word(w));
                break;
            }
            case POP:
                if (!need(1)) return VmError{VmErrorKind::StackViolation, "pop on empty stack"};
                stack.pop_back();
                break;
            case DUP: {
                if (pc >= code.size())
                    return VmError{VmErrorKind::InvalidBytecode, "truncated DUP"};
                size_t n = code[pc++];
                if (!need(n + 1))
                    return VmError{VmErrorKind::StackViolation, "DUP beyond stack depth"};
                if (stack.size() >= kStackLimit)
                    return VmError{VmErrorKind::StackViolation, "stack overflow"};
                stack.push_back(stack[stack.size() - 1 - n]);
                break;
            }
            case SWAP: {
                if (pc >= code.size())
                    return VmError{VmErrorKind::InvalidBytecode, "truncated SWAP"};
                size_t n = code[pc++];
                if (!need(n + 2))
                    return VmError{VmErrorKind::StackViolation, "SWAP beyond stack depth"};
                std::swap(stack.back(), stack[stack.size() - 2 - n]);
                break;
            }
            case ADD:
            case SUB:
            case MUL:
            case DIV:
            case LT:
            case EQ: {
                if (!need(2)) return VmError{VmErrorKind::StackViolation, "binary op underflow"};
                u256 a = pop(), b = pop();
                u256 r;
                switch (op) {
                    case ADD: r = a + b; break;
                    case SUB: r = a - b; break;
                    case MUL: r = a * b; break;
                    case DIV: r = b == 0 ? u256(0) : a / b; break;
                    case LT: r = a < b ? 1 : 0; break;
                    default: r = a == b ? 1 : 0; break;
                }
                stack.push_back(r);
                break;
            }
            case JUMP:
            case JUMPI: {
                if (!need(op == JUMP ? 1u : 2u))
                    return VmError{VmErrorKind::StackViolation, "jump underflow"};
                u256 dest = pop();
                bool taken = true;
                if (op == JUMPI) taken = pop() != 0;
                if (taken) {
                    if (dest >= code.size())
                        return VmError{VmErrorKind::InvalidBytecode, "jump out of code"};
                    pc = static_cast<size_t>(dest);
                }
                break;
            }
            case SLOAD: {
                if (!need(1)) return VmError{VmErrorKind::StackViolation, "SLOAD underflow"};
                Word key = to_word(pop());
                auto& acct = load(self);
                u256 value = 0;
                if (acct) {
                    auto it = acct->storage.find(key);
                    if (it != acct->storage.end()) value = from_word(it->second);
                }
                stack.push_back(value);
                break;
            }
            case SSTORE: {
                if (!need(2)) return VmError{VmErrorKind::StackViolation, "SSTORE underflow"};
                Word key = to_word(pop());
                Word value = to_word(pop());
                auto& acct = load_or_create(self);
                if (value == Word{})
                    acct.storage.erase(key);
                else
                    acct.storage[key] = value;
                dirty.insert(self);
                break;
            }
            case CALLER:
                if (stack.size() >= kStackLimit)
                    return VmError{VmErrorKind::StackViolation, "stack overflow"};
                stack.push_back(from_word(word_from_address(origin)));
                break;
            case CREATE: {
                auto& meta = load_or_create(kMetaAddress);
                uint64_t counter = 0;
                auto it = meta.storage.find(Word{});
                if (it != meta.storage.end()) counter = word_to_u64(it->second);

                Bytes preimage(self.begin(), self.end());
                put_u64(preimage, counter);
                Digest d = crypto::digest(preimage);
                Address created{};
                std::memcpy(created.data(), d.data() + 12, 20);

                auto& acct = load_or_create(created);
                acct.code.assign(code.begin() + pc, code.end());
                dirty.insert(created);
                meta.storage[Word{}] = word_from_u64(counter + 1);
                dirty.insert(kMetaAddress);

                if (stack.size() >= kStackLimit)
                    return VmError{VmErrorKind::StackViolation, "stack overflow"};
                stack.push_back(from_word(word_from_address(created)));
                return std::nullopt;  // the remainder now lives as contract code
            }
            case CALL: {
                if (!need(1)) return VmError{VmErrorKind::StackViolation, "CALL underflow"};
                Address callee = low20(pop());
                auto& acct = load(callee);
                if (!acct)
                    return VmError{VmErrorKind::CrossContextCall,
                                   "call target absent from this context: 0x" + hex(callee)};
                if (depth + 1 >= static_cast<int>(kCallDepthLimit))
                    return VmError{VmErrorKind::StackViolation, "call depth limit"};
                Bytes callee_code = acct->code;
                if (auto err = run(std::move(callee_code), callee, depth + 1)) return err;
                break;
            }
            case RETURN1: {
                if (!need(1)) return VmError{VmErrorKind::StackViolation, "RETURN1 underflow"};
                if (depth == 0) {
                    Word w = to_word(pop());
                    return_data.assign(w.begin(), w.end());
                }
                // In a subframe the value simply stays on the shared stack.
                return std::nullopt;
            }
            case RETURNN: {
                if (!need(1)) return VmError{VmErrorKind::StackViolation, "RETURNN underflow"};
                u256 count = pop();
                if (count > kStackLimit || !need(static_cast<size_t>(count)))
                    return VmError{VmErrorKind::StackViolation, "RETURNN beyond stack"};
                if (depth == 0) {
                    size_t n = static_cast<size_t>(count);
                    return_data.clear();
                    for (size_t i = 0; i < n; ++i) {
                        Word w = to_word(pop());
                        return_data.insert(return_data.end(), w.begin(), w.end());
                    }
                }
                return std::nullopt;
            }
            case REVERT:
                return VmError{VmErrorKind::ExplicitRevert, "REVERT executed"};
            default:
                return VmError{VmErrorKind::InvalidBytecode,
                               "unknown opcode 0x" + hex_encode(&op, 1)};
        }
    }
    return std::nullopt;  // running off the end is a clean halt
}

}  // namespace

Outcome execute(state::StateStore& store, const std::optional<state::StateRoot>& state,
                const Bytes& code, const Address& caller, uint64_t gas_limit) {
    if (gas_limit == 0) return VmError{VmErrorKind::OutOfGas, "zero gas limit"};
    state::StateRoot base = state ? *state : store.empty_root();
    if (!store.knows(base)) throw state::UnknownRoot();

    Interp interp{store, base, caller, gas_limit};
    // Top-level bytecode runs in the submitting device's scratch account.
    if (auto err = interp.run(code, caller, 0)) return *err;

    std::vector<state::Account> edits;
    for (const auto& addr : interp.dirty) {
        const auto& slot = interp.accounts.at(addr);
        if (slot) {
            edits.push_back(*slot);
        } else {
            state::Account del;
            del.address = addr;
            edits.push_back(del);
        }
    }
    ExecutionResult result;
    result.new_root = interp.store.apply(base, edits);
    result.return_data = std::move(interp.return_data);
    result.gas_used = interp.gas_used;
    return result;
}

Executor reference_executor() {
    return [](state::StateStore& store, const std::optional<state::StateRoot>& state,
              const Bytes& code, const Address& caller, uint64_t gas_limit) {
        return execute(store, state, code, caller, gas_limit);
    };
}

const char* vm_error_name(VmErrorKind kind) {
    switch (kind) {
        case VmErrorKind::InvalidBytecode: return "invalid_bytecode";
        case VmErrorKind::OutOfGas: return "out_of_gas";
        case VmErrorKind::StackViolation: return "stack_violation";
        case VmErrorKind::CrossContextCall: return "cross_context_call";
        case VmErrorKind::ExplicitRevert: return "explicit_revert";
        case VmErrorKind::AdapterFailure: return "adapter_failure";
    }
    return "unknown";
}

std::optional<VmErrorKind> vm_error_from_name(std::string_view name) {
    for (auto kind : {VmErrorKind::InvalidBytecode, VmErrorKind::OutOfGas,
                      VmErrorKind::StackViolation, VmErrorKind::CrossContextCall,
                      VmErrorKind::ExplicitRevert, VmErrorKind::AdapterFailure}) {
        if (name == vm_error_name(kind)) return kind;
    }
    return std::nullopt;
}

Word word_from_u64(uint64_t v) {
    Word w{};
    for (int i = 31; i >= 24; --i) {
        w[i] = static_cast<uint8_t>(v & 0xff);
        v >>= 8;
    }
    return w;
}

uint64_t word_to_u64(const Word& w) {
    uint64_t v = 0;
    for (int i = 24; i < 32; ++i) v = v << 8 | w[i];
    return v;
}

Word word_from_address(const Address& a) {
    Word w{};
    std::memcpy(w.data() + 12, a.data(), 20);
    return w;
}

}  // namespace abc::vm

#include <boost/multiprecision/cpp_int.hpp>
#include <cstring>
#include <sstream>

#include "abc/vm.h"

namespace abc::vm {

using u256 = boost::multiprecision::uint256_t;

namespace {

struct OpInfo {
    const char* name;
    uint8_t op;
    int operand_bytes;  // 0, 1 or 32
    bool operand_optional;
};

const OpInfo kOps[] = {
    {"HALT", HALT, 0, false},      {"PUSH1", PUSH1, 1, false},
    {"PUSH32", PUSH32, 32, false}, {"POP", POP, 0, false},
    {"DUP", DUP, 1, true},         {"SWAP", SWAP, 1, true},
    {"ADD", ADD, 0, false},        {"SUB", SUB, 0, false},
    {"MUL", MUL, 0, false},        {"DIV", DIV, 0, false},
    {"LT", LT, 0, false},          {"EQ", EQ, 0, false},
    {"JUMP", JUMP, 0, false},      {"JUMPI", JUMPI, 0, false},
    {"SLOAD", SLOAD, 0, false},    {"SSTORE", SSTORE, 0, false},
    {"CALLER", CALLER, 0, false},  {"CREATE", CREATE, 0, false},
    {"CALL", CALL, 0, false},      {"RETURN1", RETURN1, 0, false},
    {"RETURNN", RETURNN, 0, false},{"REVERT", REVERT, 0, false},
};

const OpInfo* find_op(const std::string& name) {
    for (const auto& info : kOps)
        if (name == info.name) return &info;
    return nullptr;
}

const OpInfo* find_op(uint8_t op) {
    for (const auto& info : kOps)
        if (op == info.op) return &info;
    return nullptr;
}

u256 parse_number(const std::string& tok, int line, int col) {
    try {
        if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X'))
            return u256(tok);
        for (char c : tok)
            if (!isdigit(static_cast<unsigned char>(c)))
                throw std::runtime_error("not a number");
        return u256(tok);
    } catch (const std::exception&) {
        throw ParseError(line, col, "malformed operand '" + tok + "'");
    }
}

}  // namespace

Bytes assemble(const std::string& source) {
    Bytes out;
    std::istringstream lines(source);
    std::string raw;
    int line_no = 0;
    while (std::getline(lines, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw.resize(hash);
        size_t pos = 0;
        while (pos < raw.size()) {
            size_t end = raw.find(';', pos);
            if (end == std::string::npos) end = raw.size();
            std::string stmt = raw.substr(pos, end - pos);

            // Tokenize the statement.
            std::istringstream ts(stmt);
            std::string mnemonic, operand, extra;
            ts >> mnemonic >> operand >> extra;
            int col = static_cast<int>(pos) + 1;
            if (!mnemonic.empty()) {
                const OpInfo* info = find_op(mnemonic);
                if (!info)
                    throw ParseError(line_no, col, "unknown mnemonic '" + mnemonic + "'");
                if (!extra.empty())
                    throw ParseError(line_no, col, "trailing token '" + extra + "'");
                out.push_back(info->op);
                if (info->operand_bytes == 0) {
                    if (!operand.empty())
                        throw ParseError(line_no, col,
                                         mnemonic + " takes no operand");
                } else if (operand.empty()) {
                    if (!info->operand_optional)
                        throw ParseError(line_no, col, mnemonic + " needs an operand");
                    out.push_back(0);
                } else {
                    u256 v = parse_number(operand, line_no, col);
                    if (info->operand_bytes == 1) {
                        if (v > 255)
                            throw ParseError(line_no, col, "operand exceeds one byte");
                        out.push_back(static_cast<uint8_t>(v));
                    } else {
                        Word w{};
                        u256 x = v;
                        for (int i = 31; i >= 0; --i) {
                            w[i] = static_cast<uint8_t>(x & 0xff);
                            x >>= 8;
                        }
                        out.insert(out.end(), w.begin(), w.end());
                    }
                }
            }
            pos = end + 1;
        }
    }
    return out;
}

std::string disassemble(const Bytes& code) {
    std::ostringstream out;
    size_t pc = 0;
    bool first = true;
    while (pc < code.size()) {
        const OpInfo* info = find_op(code[pc]);
        if (!info) {
            out << (first ? "" : "\n") << "# unknown opcode 0x" << hex_encode(&code[pc], 1);
            break;
        }
        ++pc;
        if (!first) out << "\n";
        first = false;
        out << info->name;
        if (info->operand_bytes == 1) {
            if (pc >= code.size()) {
                out << " # truncated";
                break;
            }
            out << " " << static_cast<int>(code[pc++]);
        } else if (info->operand_bytes == 32) {
            if (pc + 32 > code.size()) {
                out << " # truncated";
                break;
            }
            u256 v = 0;
            for (int i = 0; i < 32; ++i) v = v << 8 | code[pc + i];
            pc += 32;
            out << " 0x" << std::hex << v << std::dec;
        }
    }
    return out.str();
}

}  // namespace abc::vm

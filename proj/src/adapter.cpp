#include "abc/adapter.h"

#include <atomic>
#include <json.hpp>

namespace abc::adapter {

using nlohmann::json;
using vm::VmError;
using vm::VmErrorKind;

std::string encode_request(uint64_t id, const state::StateStore& store,
                           const std::optional<state::StateRoot>& state,
                           const Bytes& code, const Address& caller,
                           uint64_t gas_limit) {
    json req;
    req["id"] = id;
    if (state) {
        req["state_root"] = hex(state->root);
        json nodes = json::array();
        for (const auto& rec : store.export_reachable(*state))
            nodes.push_back(hex_encode(rec.data(), rec.size()));
        req["state_nodes"] = std::move(nodes);
    } else {
        req["state_root"] = nullptr;
        req["state_nodes"] = json::array();
    }
    req["bytecode"] = hex_encode(code.data(), code.size());
    req["caller"] = hex(caller);
    req["gas_limit"] = gas_limit;
    return req.dump();
}

std::string serve_request(const std::string& request_line) {
    json resp;
    uint64_t id = 0;
    try {
        json req = json::parse(request_line);
        id = req.at("id").get<uint64_t>();
        resp["id"] = id;

        state::StateStore store;
        std::optional<state::StateRoot> root;
        if (!req.at("state_root").is_null()) {
            Digest r = to_fixed<32>(hex_decode(req.at("state_root").get<std::string>()));
            std::vector<Bytes> nodes;
            for (const auto& n : req.at("state_nodes"))
                nodes.push_back(hex_decode(n.get<std::string>()));
            store.import_root(r, nodes);
            root = state::StateRoot{r};
        }
        Bytes code = hex_decode(req.at("bytecode").get<std::string>());
        Address caller = to_fixed<20>(hex_decode(req.at("caller").get<std::string>()));
        uint64_t gas_limit = req.at("gas_limit").get<uint64_t>();

        vm::Outcome out = vm::execute(store, root, code, caller, gas_limit);
        if (auto* err = std::get_if<VmError>(&out)) {
            resp["status"] = "error";
            resp["error_kind"] = vm::vm_error_name(err->kind);
        } else {
            const auto& res = std::get<vm::ExecutionResult>(out);
            resp["status"] = "ok";
            resp["new_root"] = hex(res.new_root.root);
            json nodes = json::array();
            for (const auto& rec : store.export_reachable(res.new_root))
                nodes.push_back(hex_encode(rec.data(), rec.size()));
            resp["new_nodes"] = std::move(nodes);
            resp["return_data"] = hex_encode(res.return_data.data(), res.return_data.size());
            resp["gas_used"] = res.gas_used;
        }
    } catch (const std::exception& e) {
        resp["id"] = id;
        resp["status"] = "error";
        resp["error_kind"] = vm::vm_error_name(VmErrorKind::InvalidBytecode);
        resp["detail"] = e.what();
    }
    return resp.dump();
}

vm::Outcome execute_external(Channel& channel, state::StateStore& store,
                             const std::optional<state::StateRoot>& state,
                             const Bytes& code, const Address& caller,
                             uint64_t gas_limit) {
    static std::atomic<uint64_t> next_id{1};
    uint64_t id = next_id.fetch_add(1);
    std::string reply;
    try {
        reply = channel.exchange(
            encode_request(id, store, state, code, caller, gas_limit));
    } catch (const std::exception& e) {
        return VmError{VmErrorKind::AdapterFailure,
                       std::string("transport error: ") + e.what()};
    }

    try {
        json resp = json::parse(reply);
        if (resp.at("id").get<uint64_t>() != id)
            return VmError{VmErrorKind::AdapterFailure, "response id mismatch"};
        std::string status = resp.at("status").get<std::string>();
        if (status == "error") {
            auto kind = vm::vm_error_from_name(resp.at("error_kind").get<std::string>());
            if (!kind)
                return VmError{VmErrorKind::AdapterFailure, "unknown error kind"};
            return VmError{*kind, resp.value("detail", std::string("reported by adapter"))};
        }
        if (status != "ok")
            return VmError{VmErrorKind::AdapterFailure, "unknown status '" + status + "'"};

        Digest new_root = to_fixed<32>(hex_decode(resp.at("new_root").get<std::string>()));
        std::vector<Bytes> nodes;
        for (const auto& n : resp.at("new_nodes"))
            nodes.push_back(hex_decode(n.get<std::string>()));
        store.import_root(new_root, nodes);

        vm::ExecutionResult result;
        result.new_root = state::StateRoot{new_root};
        result.return_data = hex_decode(resp.at("return_data").get<std::string>());
        result.gas_used = resp.at("gas_used").get<uint64_t>();
        if (result.gas_used > gas_limit)
            return VmError{VmErrorKind::AdapterFailure, "gas_used above the supplied limit"};
        return result;
    } catch (const std::exception& e) {
        return VmError{VmErrorKind::AdapterFailure,
                       std::string("malformed response: ") + e.what()};
    }
}

vm::Executor external_executor(std::shared_ptr<Channel> channel) {
    return [channel](state::StateStore& store,
                     const std::optional<state::StateRoot>& state, const Bytes& code,
                     const Address& caller, uint64_t gas_limit) {
        return execute_external(*channel, store, state, code, caller, gas_limit);
    };
}

}  // namespace abc::adapter

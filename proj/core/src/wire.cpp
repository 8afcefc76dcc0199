#include "latsched/wire.hpp"

#include "latsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace latsched::wire {

using nlohmann::json;

std::string encode(const Message& message) {
    json j;
    if (const auto* r = std::get_if<Report>(&message)) {
        j["type"] = "report";
        j["app"] = r->app;
        j["perf"] = r->perf;
        j["t"] = r->t;
    } else if (const auto* v = std::get_if<Violation>(&message)) {
        j["type"] = "violation";
        j["app"] = v->app;
        j["ratio"] = v->ratio;
        j["t"] = v->t;
    } else {
        const auto& c = std::get<Command>(message);
        j["type"] = "command";
        j["action"] = json::parse(c.action_json);
    }
    return j.dump();
}

Message decode(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("wire: malformed JSON: ") + e.what());
    }
    if (!j.contains("type") || !j["type"].is_string())
        throw config_error("wire: message missing 'type'");
    const std::string type = j["type"];

    auto require = [&](const char* key) {
        if (!j.contains(key))
            throw config_error("wire: '" + type + "' message missing '" + key + "'");
    };

    if (type == "report") {
        require("app");
        require("perf");
        require("t");
        return Report{j["app"].get<AppId>(), j["perf"].get<double>(), j["t"].get<double>()};
    }
    if (type == "violation") {
        require("app");
        require("ratio");
        require("t");
        return Violation{j["app"].get<AppId>(), j["ratio"].get<double>(), j["t"].get<double>()};
    }
    if (type == "command") {
        require("action");
        return Command{j["action"].dump()};
    }
    throw config_error("wire: unknown message type '" + type + "'");
}

std::vector<Message> decode_stream(const std::string& buffer) {
    std::vector<Message> out;
    std::istringstream is(buffer);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(decode(line));
    }
    return out;
}

} // namespace latsched::wire

#pragma once

#include "latsched/simworld.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace latsched::wire {

/// Master <-> agent protocol: newline-delimited JSON messages over a stream
/// socket when agents run out-of-process; in-process agents use the same
/// schema. Required keys per message type:
///   {"type":"report","app":<id>,"perf":<double>,"t":<sim-seconds>}
///   {"type":"violation","app":<id>,"ratio":<double>,"t":<sim-seconds>}
///   {"type":"command","action":<object>}

struct Report {
    AppId app = 0;
    double perf = 0.0;
    double t = 0.0;
};

struct Violation {
    AppId app = 0;
    double ratio = 0.0;
    double t = 0.0;
};

struct Command {
    std::string action_json; // serialized action object, schema owned by runtime
};

using Message = std::variant<Report, Violation, Command>;

/// Single-line JSON encoding (no trailing newline).
std::string encode(const Message& message);

/// Parses one line. Throws config_error on unknown type or missing keys.
Message decode(const std::string& line);

/// Splits a buffer of newline-delimited messages; ignores blank lines.
std::vector<Message> decode_stream(const std::string& buffer);

} // namespace latsched::wire

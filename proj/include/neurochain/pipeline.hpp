#pragma once

#include "neurochain/controller.hpp"
#include "neurochain/spike.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace neurochain {

// Scenario documents:
//
//   # comment
//   var data = out            default for ${data}, overridable by the caller
//   box <id> <kind> key=value ...
//   link <src>.<port> -> <dst>.<port>
//
// Kinds and ports (s = spike blocks, y = sampled signal):
//   CsvReader        out:s               file, channels, duration_s
//   ChannelSelector  in:s  out:s         channels (all | comma list with a-b ranges)
//   DecoderBox       in:s  out:y         params, initial_mm
//   Adder            a:y b:y  out:y
//   Printer          in:y                file, label
//   NetClient        in:y                addr, timeout_ms, poll
//   TraceSink        index:y thumb:y     file

struct BoxSpec {
    std::string id;
    std::string kind;
    std::map<std::string, std::string> settings;
};

struct LinkSpec {
    std::string from_box, from_port;
    std::string to_box, to_port;
};

class ScenarioGraph {
public:
    /// Validates kinds, ports, port types, single producers and acyclicity.
    /// Throws ConfigError (ParseError for malformed lines).
    static ScenarioGraph parse(std::istream& in, const std::map<std::string, std::string>& vars = {});

    const std::vector<BoxSpec>& boxes() const { return boxes_; }
    const std::vector<LinkSpec>& links() const { return links_; }
    /// Box indices in execution order: by depth from the sources, then id.
    const std::vector<std::size_t>& order() const { return order_; }
    const BoxSpec& box(const std::string& id) const;

private:
    std::vector<BoxSpec> boxes_;
    std::vector<LinkSpec> links_;
    std::vector<std::size_t> order_;
};

ScenarioGraph load_scenario(const std::string& path, const std::map<std::string, std::string>& vars = {});

struct RunOptions {
    std::int64_t chunk_ms = 20;
    double rate_hz = 500.0;
    /// Real clock: ticks are paced to wall time.
    bool virtual_clock = true;
    /// Overrides every reader's duration.
    std::optional<double> duration_s;
    /// Called after every tick with the tick's end time in ms.
    std::function<void(std::int64_t)> on_tick;
    /// Printers without a `file` setting write here; null silences them.
    std::ostream* printer_out = nullptr;
};

struct RunReport {
    std::size_t chunks = 0;
    double wall_s = 0.0;
    /// Samples seen by each sink input, keyed "box" or "box.port".
    std::map<std::string, std::vector<double>> traces;
    std::size_t targets_sent = 0;
    std::size_t targets_dropped = 0;
    /// Requested vs polled aperture, one record per chunk per NetClient with
    /// `poll` enabled (the first such box).
    std::vector<TraceRecord> client_trace;
};

/// Executes the graph tick by tick. Box failures are rethrown as
/// PipelineError with the box id.
RunReport run(const ScenarioGraph& graph, const RunOptions& options = {});

}  // namespace neurochain
